"""
Unit tests for the overhead model and contention simulator.

Tests cover:
- Analytic overhead curves, node growth and latency sweeps
- Slope-per-latency fitting
- Parameter documents
- Domain placements and simulated contention ratios
- CSV output and parsing
"""
import pytest

from fedcoh.exceptions import BenchParameterError, UnknownProcessorError
from fedcoh.services.bench import (
    ContentionParams,
    OverheadModel,
    contention_curve,
    curve_to_csv,
    derivative_fit,
    emit_curve_csv,
    latency_sweep,
    model_overhead,
    overhead_at,
    parse_curve_csv,
    placement_for_domains,
    sim_curve,
    sim_overhead,
    simulate_contention,
)
from fedcoh.services.topology import build_topology

pytestmark = [pytest.mark.unit, pytest.mark.bench]

SHORT_RUN_NS = 20_000.0
LONG_RUN_NS = 1_000_000.0


@pytest.fixture
def node_shape():
    """One node: 2 NUMA domains of 128 cores."""
    return build_topology(1, 2, 1, 128)


@pytest.fixture
def model():
    """Default overhead model."""
    return OverheadModel.default()


@pytest.fixture
def soft_node():
    """One NUMA domain split into 8 soft-NUMA domains of 8 cores."""
    return build_topology(1, 1, 8, 8)


class TestOverheadModel:
    """Test the analytic model."""

    def test_single_node_full(self, model, node_shape):
        """Test 256 cores on one node land near 244."""
        value = overhead_at(model, node_shape, 256)
        assert value == pytest.approx(1 + 127 * 0.87 + 128 * 1.19)
        assert abs(value - 244) <= 0.1 * 244

    def test_curve_starts_at_base_and_grows(self, model, node_shape):
        """Test the curve is nondecreasing from the base."""
        curve = model_overhead(model, node_shape, 256)
        assert curve.points[0] == (1, 1.0)
        assert curve.overhead_at(2) == pytest.approx(1.87)
        assert curve.cores == list(range(1, 257))
        assert all(b >= a for a, b in zip(curve.overheads, curve.overheads[1:]))

    def test_cross_node_cores(self, model, node_shape):
        """Test 384 cores at 800 ns grow a second node and exceed 1000."""
        curve = model_overhead(model, node_shape, 384, lat_disagg=800.0)
        assert curve.shape == (2, 2, 1, 128)
        assert curve.points[-1][1] == pytest.approx(263.81 + 128 * 0.011125 * 800)
        assert curve.points[-1][1] > 1000

    def test_latency_sweep_ordered(self, model, node_shape):
        """Test higher latency means higher overhead past one node."""
        curves = latency_sweep(model, node_shape, 300, [200.0, 400.0, 800.0])
        finals = [c.points[-1][1] for c in curves]
        assert finals == sorted(finals)
        assert [c.lat_disagg for c in curves] == [200.0, 400.0, 800.0]

    @pytest.mark.parametrize("cores,lat", [(0, None), (4, 0.0), (4, -1.0)])
    def test_invalid_arguments(self, model, node_shape, cores, lat):
        """Test core counts and latencies are validated."""
        with pytest.raises(BenchParameterError):
            model_overhead(model, node_shape, cores, lat)

    def test_missing_point(self, model, node_shape):
        """Test asking a curve for an absent core count fails."""
        with pytest.raises(BenchParameterError):
            model_overhead(model, node_shape, 4).overhead_at(5)


class TestDerivativeFit:
    """Test the slope-per-latency fit."""

    def test_measured_slopes(self):
        """Test the fit reproduces the slope at 200 ns."""
        k = derivative_fit([(200, 2.2), (400, 4.5), (800, 8.9)])
        assert k == pytest.approx(9360 / 840000)
        assert 2.1 <= k * 200 <= 2.3

    def test_empty(self):
        """Test at least one point is needed."""
        with pytest.raises(BenchParameterError):
            derivative_fit([])

    def test_non_positive_latency(self):
        """Test latencies must be positive."""
        with pytest.raises(BenchParameterError):
            derivative_fit([(0, 1.0), (100, 1.1)])


class TestParameterDocuments:
    """Test JSON parameter loading."""

    def test_defaults_from_settings(self, settings, model):
        """Test the default model mirrors settings."""
        assert model.slope_within_numa == settings.SLOPE_WITHIN_NUMA
        assert model.derivative_per_latency == settings.DERIVATIVE_PER_LATENCY

    def test_partial_model_document(self):
        """Test omitted fields keep their defaults."""
        m = OverheadModel.from_json('{"slope_cross_numa": 2.0}')
        assert m.slope_cross_numa == 2.0
        assert m.slope_within_numa == pytest.approx(0.87)

    @pytest.mark.parametrize("text", ['{"slope_cross_numa": -1}', '{"sockets": 2}', "{oops"])
    def test_bad_model_document(self, text):
        """Test malformed or invalid documents raise BenchParameterError."""
        with pytest.raises(BenchParameterError):
            OverheadModel.from_json(text)

    def test_model_values_positive(self):
        """Test direct construction validates values."""
        with pytest.raises(BenchParameterError):
            OverheadModel(0.87, 1.19, 0.0, 1.0)

    def test_contention_document(self):
        """Test contention parameters load from JSON."""
        params = ContentionParams.from_json('{"placement": ["p0", "p1"], "duration_ns": 5000, "seed": 3}')
        assert params.placement == ["p0", "p1"]
        assert params.duration_ns == 5000
        assert params.seed == 3

    @pytest.mark.parametrize("text", ['{"placement": []}', '{"seed": 1}', "[]"])
    def test_bad_contention_document(self, text):
        """Test contention documents need a placement."""
        with pytest.raises(BenchParameterError):
            ContentionParams.from_json(text)

    def test_contention_values(self):
        """Test empty placements and non-positive costs are rejected."""
        with pytest.raises(BenchParameterError):
            ContentionParams(placement=[])
        with pytest.raises(BenchParameterError):
            ContentionParams(placement=["p0"], local_cost_ns=0.0)


class TestPlacement:
    """Test spreading cores over domains."""

    def test_round_robin_soft(self, soft_node):
        """Test cores alternate between soft-NUMA domains."""
        assert placement_for_domains(soft_node, 4, 2) == ["p0", "p8", "p1", "p9"]

    def test_round_robin_numa(self):
        """Test NUMA-level spreading."""
        t = build_topology(1, 2, 1, 4)
        assert placement_for_domains(t, 3, 2, level="numa") == ["p0", "p4", "p1"]

    @pytest.mark.parametrize("cores,domains,level", [(4, 9, "soft"), (4, 0, "soft"), (17, 2, "soft"),
                                                     (4, 1, "socket")])
    def test_invalid(self, soft_node, cores, domains, level):
        """Test impossible placements raise."""
        with pytest.raises(BenchParameterError):
            placement_for_domains(soft_node, cores, domains, level)


class TestContention:
    """Test the contention simulator."""

    def test_single_core_no_overhead(self, soft_node):
        """Test one core sees no contention."""
        params = ContentionParams(placement=["p0"], duration_ns=SHORT_RUN_NS)
        assert sim_overhead(params, soft_node) == 1.0

    def test_two_cores_one_domain(self, soft_node):
        """Test two cores pay the soft-NUMA transfer on about half the increments."""
        params = ContentionParams(placement=["p0", "p1"], duration_ns=LONG_RUN_NS)
        expected = 2.0 + soft_node.lat_soft
        assert sim_overhead(params, soft_node) == pytest.approx(expected, rel=0.05)

    def test_two_cores_approach_closed_form(self, soft_node):
        """Test a transfer much dearer than the increment approaches (L+c)/c."""
        params = ContentionParams(placement=["p0", "p1"], duration_ns=LONG_RUN_NS,
                                  transfer_cost=lambda a, b: 100.0)
        assert sim_overhead(params, soft_node) == pytest.approx(101.0, rel=0.05)

    def test_transfer_paid_while_holding(self, soft_node):
        """Test transfers are serialized with the increments instead of overlapping."""
        params = ContentionParams(placement=placement_for_domains(soft_node, 8, 1), duration_ns=SHORT_RUN_NS,
                                  transfer_cost=lambda a, b: 50.0)
        result = simulate_contention(params, soft_node)
        assert result.shared_ops < SHORT_RUN_NS / 40.0
        assert result.transfers <= result.shared_ops + 1

    def test_monotone_in_latency(self, soft_node):
        """Test raising every transfer latency never lowers the ratio."""
        placement = placement_for_domains(soft_node, 4, 2)
        ratios = [
            sim_overhead(ContentionParams(placement, duration_ns=SHORT_RUN_NS, seed=3,
                                          transfer_cost=lambda a, b, lat=lat: lat), soft_node)
            for lat in (0.0, 5.0, 20.0, 80.0)
        ]
        assert ratios == sorted(ratios)
        assert ratios[0] < ratios[-1]

    def test_more_soft_domains_cost_more(self, soft_node):
        """Test eight cores over 1, 2, 4 and 8 soft-NUMA domains cost strictly more each step."""
        ratios = [
            sim_overhead(ContentionParams(placement_for_domains(soft_node, 8, d), duration_ns=200_000.0),
                         soft_node)
            for d in (1, 2, 4, 8)
        ]
        assert all(a < b for a, b in zip(ratios, ratios[1:]))

    def test_free_transfers(self, soft_node):
        """Test with free transfers the ratio is the core count."""
        params = ContentionParams(placement=["p0", "p1"], duration_ns=SHORT_RUN_NS,
                                  transfer_cost=lambda a, b: 0.0)
        result = simulate_contention(params, soft_node)
        assert result.ratio == pytest.approx(2.0, rel=0.05)
        assert result.transfers > 0

    def test_spread_costs_more(self):
        """Test spreading over NUMA domains costs more than over soft domains."""
        t = build_topology(1, 2, 2, 4)
        soft = ContentionParams(placement_for_domains(t, 8, 2, "soft"), duration_ns=SHORT_RUN_NS)
        numa = ContentionParams(placement_for_domains(t, 8, 2, "numa"), duration_ns=SHORT_RUN_NS)
        assert sim_overhead(numa, t) > sim_overhead(soft, t)

    def test_deterministic(self, soft_node):
        """Test equal seeds give equal results."""
        params = ContentionParams(placement_for_domains(soft_node, 4, 4), duration_ns=SHORT_RUN_NS,
                                  seed=5)
        assert simulate_contention(params, soft_node) == simulate_contention(params, soft_node)

    def test_unknown_processor(self, soft_node):
        """Test placements must use known processors."""
        with pytest.raises(UnknownProcessorError):
            sim_overhead(ContentionParams(placement=["p99"]), soft_node)

    def test_curve_per_prefix(self, soft_node):
        """Test the curve has one point per placement prefix."""
        params = ContentionParams(placement_for_domains(soft_node, 3, 3), duration_ns=SHORT_RUN_NS)
        curve = contention_curve(params, soft_node)
        assert curve.cores == [1, 2, 3]
        assert curve.overheads[0] == 1.0

    def test_sim_curve(self, soft_node):
        """Test sim_curve builds the placement itself."""
        curve = sim_curve(soft_node, 2, 1, duration_ns=SHORT_RUN_NS)
        assert curve.cores == [1, 2]
        assert curve.overheads[1] > 10


class TestCsv:
    """Test curve CSV files."""

    def test_text_layout(self, model, node_shape):
        """Test the header and the first row."""
        lines = curve_to_csv(model_overhead(model, node_shape, 3)).splitlines()
        assert lines[0] == "cores,overhead"
        assert lines[1] == "1,1.0"
        assert len(lines) == 4

    def test_file_round_trip(self, model, node_shape, csv_path):
        """Test a written file parses back to the same points."""
        curve = model_overhead(model, node_shape, 10)
        emit_curve_csv(curve, csv_path)
        assert parse_curve_csv(csv_path).points == curve.points

    @pytest.mark.parametrize("text", ["n,overhead\n1,1.0\n", "cores,overhead\n1,abc\n", "cores,overhead\n1\n"])
    def test_malformed(self, text):
        """Test bad headers and rows raise."""
        with pytest.raises(BenchParameterError):
            parse_curve_csv(text)
