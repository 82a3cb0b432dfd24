"""
Application configuration settings.

Manages environment variables and configuration defaults for the federated
coherence toolkit.
"""
from functools import lru_cache

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application Settings
    APP_NAME: str = "fedcoh"
    DEBUG: bool = False
    LOG_LEVEL: str = "WARNING"
    LOG_FORMAT: str = "text"

    # Randomness
    FEDCOH_SEED: int = 0

    # Topology latencies (ns)
    LAT_SOFT_NS: float = 25.8
    LAT_NUMA_NS: float = 106.6
    LAT_CROSS_NUMA_NS: float = 184.9
    LAT_DISAGG_NS: float = 200.0

    # Checker bounds (events per location history)
    CHECKER_EVENT_BOUND: int = 20
    AXIOMATIC_EVENT_BOUND: int = 10
    LITMUS_EVENT_BOUND: int = 256

    # Overhead model
    SLOPE_WITHIN_NUMA: float = 0.87
    SLOPE_CROSS_NUMA: float = 1.19
    DERIVATIVE_PER_LATENCY: float = 0.011125
    OVERHEAD_BASE: float = 1.0

    # Contention simulator
    SIM_LOCAL_COST_NS: float = 1.0
    SIM_DURATION_NS: float = 200_000.0

    # Scheduling
    SCHEDULER_MAX_STEPS: int = 5_000_000
    EXECUTOR_POLL_SECONDS: float = 0.0005

    # Queue
    QUEUE_CAPACITY: int = 64

    class Config:
        """Pydantic configuration."""
        case_sensitive = True
        env_file = ".env"
        env_file_encoding = "utf-8"
        extra = "ignore"  # Ignore extra fields


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Returns:
        Settings: Application settings
    """
    return Settings()
