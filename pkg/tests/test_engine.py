import logging
import math

import numpy as np
import pytest

from fracising import (
    Algorithm,
    ControlKind,
    ErrorCode,
    FisFieldWithClusterError,
    FisGeometryMismatchError,
    FisInvalidArgValueError,
    FisIoError,
    FisSizeCapError,
    MagnetizationConvention,
)
from fracising.engine import (
    ClassicalPointBuilder,
    EngineOptions,
    GridPoint,
    RunSpec,
    acceptance_probability,
    block_bounds,
    bond_probability,
    campaign,
    cluster_update,
    derive_seed,
    metropolis_sweep,
    metropolis_transition_matrix,
    run,
)
from fracising.kernels import KernelRng
from fracising.lattice import (
    Geometry,
    SpinConfiguration,
    boltzmann_distribution,
    exact_enumeration,
)
from fracising.records import RecordStore, read_manifest
from fracising.stats import estimate_observables


def _spec(model, geometry, beta, **kwargs):
    options = dict(n_measure=2000, n_equil=200, seed=17)
    options.update(kwargs)
    return RunSpec(model=model, geometry=geometry, beta=beta, **options)


def _within(estimate, exact, n_sigma=4.0):
    return abs(estimate.value - exact) <= n_sigma * estimate.stderr + 1e-12


class TestProbabilities:
    def test_acceptance(self):
        assert acceptance_probability(0.5, 0.0) == 1.0
        assert acceptance_probability(0.5, -3.0) == 1.0
        assert acceptance_probability(0.5, 4.0) == pytest.approx(math.exp(-2))

    def test_bond(self):
        assert bond_probability(0.5, 1.0, 1.0) == pytest.approx(1 - math.exp(-1))
        assert bond_probability(1e-9, 1.0, 1.0) == pytest.approx(2e-9)
        assert bond_probability(1.0, 1.0, 0.0) == 0.0


class TestDetailedBalance:
    @pytest.mark.parametrize("q", (0.5, 1.0))
    def test_transition_matrix(self, make_chain, q):
        model = make_chain(q, 3, h=0.15)
        geometry = Geometry.chain(3)
        beta = 0.8
        transition = metropolis_transition_matrix(model, geometry, beta)
        weights = boltzmann_distribution(model, geometry, beta)
        assert transition.shape == (8, 8)
        np.testing.assert_allclose(transition.sum(axis=1), 1.0, atol=1e-12)
        flow = weights[:, None] * transition
        np.testing.assert_allclose(flow, flow.T, atol=1e-12)
        np.testing.assert_allclose(weights @ transition, weights, atol=1e-12)

    def test_size_cap(self, make_chain):
        with pytest.raises(FisSizeCapError):
            metropolis_transition_matrix(make_chain(1.0, 7), Geometry.chain(7), 1.0)


class TestUpdates:
    def test_sweep_updates_in_place(self, make_chain):
        model = make_chain(0.75, 16)
        config = SpinConfiguration.uniform(Geometry.chain(16))
        accepted = metropolis_sweep(config, model, 0.01, KernelRng(1))
        assert accepted > 0
        assert np.sum(config.spins < 0) > 0

    def test_cluster_flips_connected_spins(self, make_chain):
        model = make_chain(2.0, 8)
        config = SpinConfiguration.uniform(Geometry.chain(8))
        size = cluster_update(config, model, 50.0, KernelRng(2))
        assert size == 8
        assert np.all(config.spins == -1)

    def test_cluster_rejects_field(self, make_chain):
        model = make_chain(1.0, 8, h=0.2)
        with pytest.raises(FisFieldWithClusterError):
            cluster_update(SpinConfiguration.uniform(Geometry.chain(8)), model, 1.0, KernelRng(0))


class TestRun:
    def test_spec_validation(self, make_chain):
        model = make_chain(1.0, 8)
        with pytest.raises(FisInvalidArgValueError):
            _spec(model, Geometry.chain(8), 0.0)
        with pytest.raises(FisInvalidArgValueError):
            _spec(model, Geometry.chain(8), 1.0, thin=0)
        with pytest.raises(FisGeometryMismatchError):
            _spec(model, Geometry.chain(10), 1.0)

    def test_deterministic(self, make_chain):
        spec = _spec(make_chain(0.75, 12), Geometry.chain(12), 0.6, n_measure=500)
        a, b = run(spec), run(spec)
        np.testing.assert_array_equal(a.observables, b.observables)
        np.testing.assert_array_equal(a.correlation_blocks, b.correlation_blocks)
        np.testing.assert_array_equal(a.final_config.spins, b.final_config.spins)
        assert a.metadata == b.metadata

    def test_seed_changes_stream(self, make_chain):
        model = make_chain(0.75, 12)
        a = run(_spec(model, Geometry.chain(12), 0.6, n_measure=200, seed=1))
        b = run(_spec(model, Geometry.chain(12), 0.6, n_measure=200, seed=2))
        assert not np.array_equal(a.observables, b.observables)

    def test_record_layout(self, make_chain):
        spec = _spec(make_chain(1.0, 10), Geometry.chain(10), 0.5, n_measure=300, thin=3)
        record = run(spec)
        assert len(record) == 300
        np.testing.assert_array_equal(record.sweeps, 200 + 3 * np.arange(1, 301))
        assert record.correlation_blocks.shape == (64, 6)
        np.testing.assert_allclose(record.correlations[0], 1.0)
        assert record.metadata["algorithm"] == "mixed"
        assert 0 <= record.metadata["acceptance_rate"] <= 1
        assert record.metadata["mean_cluster_size"] >= 1

    def test_initial_configuration(self, make_chain):
        model = make_chain(1.0, 10)
        initial = SpinConfiguration.uniform(Geometry.chain(10), -1)
        spec = _spec(model, Geometry.chain(10), 30.0, n_measure=100, algorithm=Algorithm.METROPOLIS)
        record = run(spec, initial)
        np.testing.assert_array_equal(record.m, -1.0)
        np.testing.assert_array_equal(initial.spins, -1)

    def test_adaptive_equilibration(self, make_chain):
        spec = _spec(make_chain(1.0, 8), Geometry.chain(8), 0.5, n_measure=100, n_equil=None)
        record = run(spec)
        assert record.metadata["n_equil"] >= 2000
        assert record.sweeps[0] == record.metadata["n_equil"] + 1

    def test_field_downgrades_mixed_schedule(self, make_chain, caplog):
        spec = _spec(make_chain(1.0, 8, h=0.1), Geometry.chain(8), 0.5, n_measure=100)
        with caplog.at_level(logging.WARNING, logger="fracising"):
            record = run(spec)
        assert record.metadata["algorithm"] == "metropolis"
        assert "mean_cluster_size" not in record.metadata
        assert "Cluster updates disabled" in caplog.text

    def test_field_with_cluster_only(self, make_chain):
        spec = _spec(
            make_chain(1.0, 8, h=0.1), Geometry.chain(8), 0.5, algorithm=Algorithm.CLUSTER
        )
        with pytest.raises(FisFieldWithClusterError):
            run(spec)

    def test_infinite_temperature(self, make_chain):
        L = 16
        spec = _spec(
            make_chain(1.0, L), Geometry.chain(L), 1e-3, n_measure=20000, algorithm=Algorithm.CLUSTER
        )
        estimates = estimate_observables(run(spec), magnetization=MagnetizationConvention.SIGNED)
        assert _within(estimates["M"], 0.0)
        assert _within(estimates["m2"], 1 / L)

    def test_ordered_limit(self, make_chain):
        spec = _spec(make_chain(1.0, 8), Geometry.chain(8), 20.0, n_measure=2000, n_equil=2000)
        estimates = estimate_observables(run(spec))
        assert estimates["U"].value == pytest.approx(2 / 3, abs=1e-9)
        assert estimates["M"].value == pytest.approx(1.0)


class TestExactness:
    @pytest.mark.parametrize("q", (0.5, 1.0))
    @pytest.mark.parametrize("algorithm", (Algorithm.METROPOLIS, Algorithm.MIXED))
    def test_chain_matches_enumeration(self, make_chain, q, algorithm):
        L, beta = 10, 0.5
        model = make_chain(q, L)
        geometry = Geometry.chain(L)
        exact = exact_enumeration(model, geometry, beta)
        spec = _spec(model, geometry, beta, n_measure=20000, n_equil=1000, algorithm=algorithm)
        estimates = estimate_observables(run(spec))
        assert _within(estimates["E"], exact.energy)
        assert _within(estimates["m2"], exact.m2)
        assert _within(estimates["m4"], exact.m4)
        assert _within(estimates["U"], exact.binder)
        assert _within(estimates["M"], exact.abs_m)
        for g, expected in zip(estimates.correlations, exact.connected_correlations):
            assert _within(g, expected)

    def test_grid_matches_enumeration(self, make_grid):
        model = make_grid(1.0, 4, ktau=0.3)
        geometry = Geometry.grid(4, 4)
        beta = 0.4
        exact = exact_enumeration(model, geometry, beta)
        spec = _spec(model, geometry, beta, n_measure=20000, n_equil=1000)
        estimates = estimate_observables(run(spec))
        assert _within(estimates["E"], exact.energy)
        assert _within(estimates["m2"], exact.m2)
        assert _within(estimates["chi"], exact.susceptibility)
        assert _within(estimates["C"], exact.specific_heat)


def _builder(**kwargs):
    return ClassicalPointBuilder(EngineOptions(n_measure=200, n_equil=50, correlation_blocks=20), **kwargs)


def _points(sizes=(8, 10), temperatures=(1.0, 1.5, 2.0), q=0.75):
    return [GridPoint(q, L, ControlKind.TEMPERATURE, T) for L in sizes for T in temperatures]


class TestGridPoint:
    def test_name(self):
        point = GridPoint(0.75, 16, ControlKind.TEMPERATURE, 1.5)
        assert point.name.startswith("point-")
        assert len(point.name) == len("point-") + 12
        assert point.name == GridPoint(0.75, 16, "temperature", 1.5).name

    def test_seed_derivation(self):
        a = GridPoint(0.75, 16, ControlKind.TEMPERATURE, 1.5)
        b = GridPoint(0.75, 16, ControlKind.TEMPERATURE, 1.6)
        assert derive_seed(1, a) == derive_seed(1, a)
        assert derive_seed(1, a) != derive_seed(1, b)
        assert derive_seed(1, a) != derive_seed(2, a)
        assert 0 <= derive_seed(1, a) < 2**64


class TestBlockBounds:
    def test_uneven_split(self):
        assert block_bounds(10, 3) == [(0, 4), (4, 7), (7, 10)]

    def test_more_blocks_than_measurements(self):
        assert block_bounds(2, 5) == [(0, 1), (1, 2)]


class TestCampaign:
    def test_empty_grid(self):
        with pytest.raises(FisInvalidArgValueError):
            campaign([], _builder(), 1)

    def test_single_point_is_a_run(self):
        point = _points(sizes=(8,), temperatures=(1.2,))[0]
        builder = _builder()
        result = campaign([point], builder, 5)
        direct = run(builder(point, derive_seed(5, point)))
        np.testing.assert_array_equal(result.records[point].observables, direct.observables)

    def test_order_independent(self):
        points = _points()
        forward = campaign(points, _builder(), 3)
        backward = campaign(points[::-1], _builder(), 3)
        assert set(forward.records) == set(points)
        for point in points:
            np.testing.assert_array_equal(
                forward.records[point].observables, backward.records[point].observables
            )

    def test_failures_are_isolated(self):
        points = _points()
        broken = points[2]
        builder = _builder()

        def flaky(point, seed):
            if point == broken:
                raise FisInvalidArgValueError(ErrorCode.INVALID_ARG_VALUE, "broken point")
            return builder(point, seed)

        result = campaign(points, flaky, 3)
        assert not result.succeeded
        assert set(result.failures) == {broken}
        assert len(result.records) == len(points) - 1

    def test_store_receives_every_record(self, tmp_path):
        points = _points()
        store = RecordStore(tmp_path, {"test": True}, "0")
        campaign(points, _builder(), 3, store=store)
        records = sorted((tmp_path / "records").glob("*.records.csv"))
        assert len(records) == len(points)
        assert (tmp_path / "manifest.json").exists()

    def test_write_failures_are_isolated(self, tmp_path):
        points = _points()
        unwritable = points[1]

        class FlakyStore(RecordStore):
            def write_record(self, point, record):
                if point == unwritable:
                    raise FisIoError(ErrorCode.RECORD_FORMAT, "disk full")
                super().write_record(point, record)

        result = campaign(points, _builder(), 3, store=FlakyStore(tmp_path, {"test": True}, "0"))
        assert set(result.failures) == {unwritable}
        assert len(result.records) == len(points)
        assert len(list((tmp_path / "records").glob("*.records.csv"))) == len(points) - 1
        entries = {e["name"]: e for e in read_manifest(tmp_path)["points"]}
        assert entries[unwritable.name]["status"] == "failed"
        assert "disk full" in entries[unwritable.name]["error"]

    def test_field_scan_needs_temperature(self):
        point = GridPoint(0.75, 8, ControlKind.FIELD, 0.1)
        with pytest.raises(FisInvalidArgValueError):
            _builder()(point, 1)
        spec = _builder(temperature=1.5)(point, 1)
        assert spec.model.h == 0.1
        assert spec.beta == pytest.approx(1 / 1.5)

    def test_grid_builder(self):
        point = GridPoint(2.0, 6, ControlKind.TEMPERATURE, 2.3)
        spec = _builder(kind="grid")(point, 1)
        assert spec.geometry == Geometry.grid(6, 6)
        assert spec.model.ktau == spec.model.j0


@pytest.mark.slow
class TestSamplerAgreement:
    @pytest.mark.parametrize("L", (8, 16))
    @pytest.mark.parametrize("q", (0.5, 1.0))
    def test_cluster_and_metropolis_agree(self, make_chain, L, q):
        model = make_chain(q, L)
        geometry = Geometry.chain(L)
        beta = 0.6
        results = {}
        for algorithm in (Algorithm.CLUSTER, Algorithm.METROPOLIS):
            spec = _spec(model, geometry, beta, n_measure=100000, n_equil=5000, algorithm=algorithm)
            results[algorithm] = estimate_observables(run(spec))
        for name in ("m2", "E"):
            a, b = results[Algorithm.CLUSTER][name], results[Algorithm.METROPOLIS][name]
            assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)
