"""Configuration package for the federated coherence toolkit."""
from fedcoh.config.settings import Settings, get_settings

__all__ = ["Settings", "get_settings"]
