import numpy as np
import pytest

from fracising import (
    BinderConvention,
    FisInsufficientSamplesError,
    FisInvalidArgValueError,
    FisTooFewBlocksError,
    MagnetizationConvention,
)
from fracising.engine import MeasurementRecord, RunSpec, run
from fracising.lattice import Geometry, exact_enumeration
from fracising.stats import (
    autocorrelation_time,
    block_means,
    bootstrap,
    estimate_observables,
)


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = noise[0] / np.sqrt(1 - phi**2)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + noise[i]
    return x


def _record(m, n_sites=16, beta=1.0, energy=None, seed=0, correlation_blocks=None):
    """Record with the given magnetisation stream and optional energies."""
    m = np.asarray(m, dtype=np.float64)
    energy = np.zeros_like(m) if energy is None else np.asarray(energy, dtype=np.float64)
    observables = np.column_stack([energy, m, np.abs(m), m**2, m**4])
    return MeasurementRecord(
        geometry=Geometry.chain(n_sites),
        beta=beta,
        sweeps=np.arange(1, m.size + 1),
        observables=observables,
        seed=seed,
        correlation_blocks=correlation_blocks,
    )


class TestAutocorrelationTime:
    def test_iid(self):
        tau = autocorrelation_time(np.random.default_rng(1).standard_normal(100000))
        assert tau.tau == pytest.approx(0.5, abs=0.1)
        assert tau.flagged is None

    def test_ar1(self):
        tau = autocorrelation_time(_ar1(0.9, 400000, 2))
        assert tau.tau == pytest.approx(9.5, rel=0.2)
        assert tau.n_effective == pytest.approx(400000 / (2 * tau.tau))

    def test_constant_series_is_flagged(self):
        tau = autocorrelation_time(np.full(1000, 0.25))
        assert tau.tau == 0.5
        assert tau.flagged == "zero variance"

    def test_too_short(self):
        with pytest.raises(FisInsufficientSamplesError):
            autocorrelation_time(np.zeros(99))

    def test_ordered_stream_has_no_plateau(self, caplog):
        tau = autocorrelation_time(np.arange(4096, dtype=float))
        assert tau.flagged == "no plateau"
        assert tau.tau > 10
        assert "no plateau" in caplog.text


class TestBootstrap:
    def test_standard_error_of_mean(self):
        data = np.random.default_rng(3).standard_normal(10000)
        _, stderr = bootstrap(block_means(data, 100), lambda x: x, rng=np.random.default_rng(4))
        assert stderr == pytest.approx(0.01, rel=0.2)

    def test_constant_data(self):
        value, stderr = bootstrap(np.full(50, 2.0), lambda x: x)
        assert value == 2.0
        assert stderr == 0.0

    def test_vector_estimator(self):
        blocks = np.column_stack([np.ones(30), np.arange(30.0)])
        value, stderr = bootstrap(blocks, lambda x: x * 2, rng=np.random.default_rng(0))
        np.testing.assert_allclose(value, [2.0, 29.0])
        assert stderr[0] == 0.0 and stderr[1] > 0

    def test_too_few_blocks(self):
        with pytest.raises(FisTooFewBlocksError):
            bootstrap(np.ones(19), lambda x: x)

    def test_error_shrinks_with_more_data(self):
        rng = np.random.default_rng(5)
        small = rng.standard_normal(20000)
        large = rng.standard_normal(40000)
        errors = [
            bootstrap(block_means(d, 1000), lambda x: x, 1000, np.random.default_rng(6))[1]
            for d in (small, large)
        ]
        assert errors[0] / errors[1] == pytest.approx(np.sqrt(2), rel=0.2)

    def test_block_means(self):
        np.testing.assert_allclose(block_means(np.arange(10.0), 3), [1.0, 4.0, 7.0])
        with pytest.raises(FisTooFewBlocksError):
            block_means(np.arange(3.0), 5)


class TestEstimateObservables:
    def test_gaussian_binder_vanishes(self):
        m = np.random.default_rng(7).standard_normal(200000) * 0.1
        estimates = estimate_observables(_record(m))
        assert estimates["U"].value == pytest.approx(0.0, abs=0.02)

    def test_literal_binder_convention(self):
        m = np.random.default_rng(8).choice([-0.5, 0.5], size=5000)
        squared = estimate_observables(_record(m))
        literal = estimate_observables(_record(m), binder=BinderConvention.LITERAL)
        assert squared["U"].value == pytest.approx(2 / 3)
        assert literal["U"].value == pytest.approx(1 - 0.0625 / 0.75)

    def test_susceptibility_and_magnetization(self):
        m = np.random.default_rng(9).choice([-0.5, 0.5], size=5000)
        estimates = estimate_observables(_record(m, n_sites=16))
        assert estimates["M"].value == pytest.approx(0.5)
        assert estimates["chi"].value == pytest.approx(0.0, abs=1e-12)
        signed = estimate_observables(_record(m), magnetization=MagnetizationConvention.SIGNED)
        assert abs(signed["M"].value) < 4 * signed["M"].stderr + 1e-12
        assert signed["chi"].value == pytest.approx(16 * (0.25 - signed["M"].value ** 2))

    def test_specific_heat(self):
        rng = np.random.default_rng(10)
        energy = rng.standard_normal(20000) * 4.0
        m = rng.standard_normal(20000)
        estimates = estimate_observables(_record(m, n_sites=16, beta=0.5, energy=energy))
        assert estimates["C"].value == pytest.approx(0.25 * 16 / 16, rel=0.05)
        assert estimates["E"].value == pytest.approx(energy.mean())

    def test_too_few_measurements(self):
        with pytest.raises(FisInsufficientSamplesError):
            estimate_observables(_record(np.zeros(50)))

    def test_ordered_stream_is_still_estimated(self):
        m = np.linspace(-0.5, 0.5, 4096)
        estimates = estimate_observables(_record(m))
        assert estimates["M"].value == pytest.approx(np.abs(m).mean(), rel=1e-3)

    def test_rows_and_correlations(self, make_chain):
        spec = RunSpec(make_chain(1.0, 8), Geometry.chain(8), 0.4, n_measure=2048, n_equil=200, seed=2)
        estimates = estimate_observables(run(spec))
        names = [row[0] for row in estimates.rows()]
        assert names[:7] == ["M", "chi", "C", "U", "E", "m2", "m4"]
        assert names[7:] == [f"G({r})" for r in range(5)]
        g = estimates.correlations
        assert g[0].value == pytest.approx(1.0, abs=0.02)
        assert all(abs(e.value) <= 1 for e in g)

    def test_too_few_correlation_blocks(self):
        m = np.random.default_rng(11).standard_normal(2000) * 0.1
        with pytest.raises(FisTooFewBlocksError):
            estimate_observables(_record(m, correlation_blocks=np.ones((10, 9))))

    def test_run_needs_enough_correlation_blocks(self, make_chain):
        with pytest.raises(FisInvalidArgValueError):
            RunSpec(make_chain(0.75, 8), Geometry.chain(8), 0.8, n_measure=400, correlation_blocks=10)


@pytest.mark.slow
def test_binder_error_bars_cover_enumeration(make_chain):
    L, beta = 10, 0.5
    model = make_chain(1.0, L)
    exact = exact_enumeration(model, Geometry.chain(L), beta).binder
    covered = 0
    for seed in range(100):
        spec = RunSpec(model, Geometry.chain(L), beta, n_measure=4000, n_equil=500, seed=seed)
        u = estimate_observables(run(spec))["U"]
        covered += abs(u.value - exact) <= 2 * u.stderr
    assert covered >= 90
