"""
Unit tests for the command-line interface.

Tests cover:
- check: verdict lines, location filters, exit codes
- litmus: report lines and unknown cases
- bench: analytic and simulated CSV curves, parameter files
- queue-demo: report line and argument checks
- Usage and error reporting on stderr
"""
import io
import json

import pytest

from fedcoh.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from fedcoh.services.memcore import mem_new
from fedcoh.services.trace_io import write_trace

pytestmark = [pytest.mark.unit, pytest.mark.cli]


def run_cli(*argv):
    """Run main and return (exit code, stdout text, stderr text)."""
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def stale_trace(two_nodes, trace_path):
    """Trace where p1 keeps reading a stale x and y is published properly."""
    m = mem_new(two_nodes, {"x": 0, "y": 0})
    m.read("p1", "x")
    m.write("p0", "x", 1)
    m.flush_line("p0", "x")
    m.write("p0", "y", 2)
    m.flush_line("p0", "y")
    m.order_after("p1", m.last_seq("p0"))
    m.read("p1", "x")
    m.flush_line("p1", "y")
    m.read("p1", "y")
    return write_trace(m.take_trace(), trace_path)


@pytest.fixture
def short_simulation(monkeypatch):
    """Shorten simulated runs."""
    from fedcoh.config.settings import get_settings

    monkeypatch.setenv("SIM_DURATION_NS", "20000")
    get_settings.cache_clear()


class TestCheck:
    """Test the check command."""

    def test_federated_accepts(self, stale_trace):
        """Test every location is accepted under federated coherence."""
        code, out, _ = run_cli("check", "--trace", str(stale_trace), "--model", "federated")
        assert code == EXIT_OK
        docs = [json.loads(line) for line in out.splitlines()]
        assert [d["location"] for d in docs] == ["x", "y"]
        assert all(d["accepted"] for d in docs)

    def test_full_rejects_stale_location(self, stale_trace):
        """Test full coherence rejects x and accepts y."""
        code, out, _ = run_cli("check", "--trace", str(stale_trace), "--model", "full")
        assert code == EXIT_FAILED
        x, y = [json.loads(line) for line in out.splitlines()]
        assert not x["accepted"] and x["rule"] == "last-write"
        assert y["accepted"]

    def test_location_filter(self, stale_trace):
        """Test --location restricts the output."""
        code, out, _ = run_cli("check", "--trace", str(stale_trace), "--model", "full", "--location", "y")
        assert code == EXIT_OK
        assert json.loads(out)["location"] == "y"

    def test_unknown_location(self, stale_trace):
        """Test asking for a location without events is a usage error."""
        code, out, err = run_cli("check", "--trace", str(stale_trace), "--model", "full", "--location", "z")
        assert code == EXIT_USAGE
        assert out == ""
        assert json.loads(err)["error"] == "UsageError"

    def test_bound_exceeded(self, stale_trace):
        """Test a bound below the history size fails the check without a verdict."""
        code, out, err = run_cli("check", "--trace", str(stale_trace), "--model", "weak", "--bound", "1")
        assert code == EXIT_FAILED
        assert out == ""
        assert json.loads(err)["error"] == "HistoryBoundExceededError"

    def test_bound_exceeded_is_not_usage_error(self, stale_trace):
        """Test the same trace and model pass under a bound that fits."""
        code, _, _ = run_cli("check", "--trace", str(stale_trace), "--model", "weak", "--bound", "20")
        assert code == EXIT_OK

    def test_malformed_trace(self, trace_path):
        """Test malformed trace files are reported."""
        trace_path.write_text('{"seq": "zero"}\n')
        code, _, err = run_cli("check", "--trace", str(trace_path), "--model", "full")
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "TraceFormatError"

    def test_missing_trace(self, tmp_path):
        """Test a missing file is reported."""
        code, _, err = run_cli("check", "--trace", str(tmp_path / "nope.jsonl"), "--model", "full")
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "FileNotFoundError"

    def test_unknown_model(self, stale_trace):
        """Test unknown models are usage errors."""
        code, _, _ = run_cli("check", "--trace", str(stale_trace), "--model", "sequential")
        assert code == EXIT_USAGE


class TestLitmus:
    """Test the litmus command."""

    def test_single_case(self):
        """Test one report line per case."""
        code, out, _ = run_cli("litmus", "--name", "L2", "--seed", "4", "--runs", "2")
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["case"] == "L2" and doc["pass"] == 2
        assert doc["verdicts"]["full"] == "reject"

    def test_unknown_case(self):
        """Test unknown case names are reported."""
        code, _, err = run_cli("litmus", "--name", "L42")
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "UnknownLitmusCaseError"

    def test_runs_positive(self):
        """Test --runs must be at least 1."""
        code, _, _ = run_cli("litmus", "--name", "L1", "--runs", "0")
        assert code == EXIT_USAGE


class TestBench:
    """Test the bench command."""

    def test_model_default(self):
        """Test the default analytic curve has 256 rows."""
        code, out, _ = run_cli("bench", "--mode", "model")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[0] == "cores,overhead"
        assert len(lines) == 257
        assert float(lines[-1].split(",")[1]) == pytest.approx(263.81)

    def test_model_to_file(self, csv_path):
        """Test --out writes the CSV file instead of stdout."""
        code, out, _ = run_cli("bench", "--cores", "384", "--lat-disagg", "800", "--out", str(csv_path))
        assert code == EXIT_OK
        assert out == ""
        last = csv_path.read_text().splitlines()[-1]
        assert last.startswith("384,")
        assert float(last.split(",")[1]) > 1000

    def test_model_params_file(self, tmp_path):
        """Test model parameters load from JSON."""
        params = tmp_path / "model.json"
        params.write_text('{"base": 2.0}')
        code, out, _ = run_cli("bench", "--cores", "2", "--params", str(params))
        assert code == EXIT_OK
        assert out.splitlines()[1] == "1,2.0"

    def test_bad_params_file(self, tmp_path):
        """Test invalid parameter files are reported."""
        params = tmp_path / "model.json"
        params.write_text('{"base": 0}')
        code, _, err = run_cli("bench", "--params", str(params))
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "BenchParameterError"

    def test_sim_mode(self, short_simulation):
        """Test simulated curves over soft-NUMA domains."""
        code, out, _ = run_cli("bench", "--mode", "sim", "--cores", "2", "--domains", "1")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[1] == "1,1.0"
        assert len(lines) == 3

    def test_sim_params_file(self, tmp_path):
        """Test a contention parameter file drives the simulation."""
        params = tmp_path / "sim.json"
        params.write_text('{"placement": ["p0", "p8"], "duration_ns": 20000}')
        code, out, _ = run_cli("bench", "--mode", "sim", "--params", str(params))
        assert code == EXIT_OK
        assert len(out.splitlines()) == 3


class TestQueueDemo:
    """Test the queue-demo command."""

    def test_small_run(self):
        """Test a small run delivers exactly once."""
        code, out, _ = run_cli("queue-demo", "--producers", "2", "--consumers", "2", "--items", "20",
                               "--capacity", "4", "--seed", "1")
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["exactly_once"] is True
        assert doc["delivered"] == 20

    @pytest.mark.parametrize("flag", ["--producers", "--consumers", "--items", "--capacity"])
    def test_counts_positive(self, flag):
        """Test counts must be at least 1."""
        code, _, err = run_cli("queue-demo", flag, "0")
        assert code == EXIT_USAGE
        assert flag in json.loads(err)["message"]


class TestUsage:
    """Test general usage handling."""

    def test_command_required(self):
        """Test a subcommand is required."""
        code, _, err = run_cli()
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "UsageError"

    def test_version(self, capsys):
        """Test --version prints the package version."""
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0
        assert "fedcoh" in capsys.readouterr().out
