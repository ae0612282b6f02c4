import math

import numpy as np
import pytest

from fracising import (
    FisGeometryMismatchError,
    FisInvalidArgValueError,
    FisInvalidSpinError,
    FisOrderRangeError,
    FisRecordFormatError,
    FisSizeCapError,
)
from fracising.couplings import build_table, periodic_table
from fracising.kernels import KernelRng
from fracising.lattice import (
    ClassicalModel,
    Geometry,
    SpinConfiguration,
    boltzmann_distribution,
    coupling_matrix,
    energy,
    enumeration_energies,
    exact_enumeration,
    flip_cost,
    local_field,
)


def _quadratic_energy(model, config):
    spins = config.spins.astype(np.float64)
    matrix = coupling_matrix(model, config.geometry)
    return -0.5 * spins @ matrix @ spins + model.h * spins.sum()


class TestGeometry:
    def test_chain(self):
        geometry = Geometry.chain(8)
        assert geometry.n_sites == 8
        assert geometry.shape == (1, 8)

    def test_grid(self):
        assert Geometry.grid(4, 6).shape == (6, 4)

    def test_invalid(self):
        with pytest.raises(FisInvalidArgValueError):
            Geometry.chain(0)
        with pytest.raises(FisInvalidArgValueError):
            Geometry.grid(4, 1)


class TestSpinConfiguration:
    def test_rejects_bad_spins(self):
        with pytest.raises(FisInvalidSpinError):
            SpinConfiguration(Geometry.chain(3), [1, 0, -1])

    def test_rejects_wrong_size(self):
        with pytest.raises(FisGeometryMismatchError):
            SpinConfiguration(Geometry.chain(3), [1, 1])

    def test_random_is_deterministic(self):
        geometry = Geometry.grid(5, 4)
        a = SpinConfiguration.random(geometry, KernelRng(11))
        b = SpinConfiguration.random(geometry, KernelRng(11))
        np.testing.assert_array_equal(a.spins, b.spins)
        assert set(np.unique(a.spins)) <= {-1, 1}

    def test_shift_moves_spins(self):
        config = SpinConfiguration(Geometry.chain(4), [1, -1, -1, 1])
        np.testing.assert_array_equal(config.shifted(1).spins, [1, 1, -1, -1])

    def test_checkpoint_bytes(self):
        config = SpinConfiguration.random(Geometry.grid(6, 4), KernelRng(3))
        data = config.to_bytes(0.75, 2**63 + 5, 1200)
        restored = SpinConfiguration.from_bytes(data)
        np.testing.assert_array_equal(restored.config.spins, config.spins)
        assert restored.config.geometry == config.geometry
        assert (restored.q, restored.seed, restored.sweep) == (0.75, 2**63 + 5, 1200)
        assert restored.manifest_hash == ""

    def test_checkpoint_manifest_hash(self):
        digest = "ab" * 32
        config = SpinConfiguration.uniform(Geometry.chain(5))
        restored = SpinConfiguration.from_bytes(config.to_bytes(1.0, 7, 3, digest))
        assert restored.manifest_hash == digest
        np.testing.assert_array_equal(restored.config.spins, config.spins)

    def test_checkpoint_magic(self):
        data = SpinConfiguration.uniform(Geometry.chain(4)).to_bytes(1.0, 1, 1)
        with pytest.raises(FisRecordFormatError):
            SpinConfiguration.from_bytes(b"XXXX" + data[4:])
        with pytest.raises(FisRecordFormatError):
            SpinConfiguration.from_bytes(data[:10])


class TestModel:
    def test_simulation_bound(self):
        with pytest.raises(FisOrderRangeError):
            ClassicalModel(periodic_table(build_table(2.5, 4), 4))

    def test_j0_positive(self, make_chain):
        with pytest.raises(FisInvalidArgValueError):
            make_chain(1.0, 4, j0=0.0)

    def test_geometry_mismatch(self, make_chain):
        model = make_chain(1.0, 4)
        with pytest.raises(FisGeometryMismatchError):
            energy(model, SpinConfiguration.uniform(Geometry.chain(6)))
        with pytest.raises(FisGeometryMismatchError):
            energy(model, SpinConfiguration.uniform(Geometry.grid(4, 2)))


class TestEnergy:
    def test_nearest_neighbour_examples(self, nearest_neighbour_chain):
        model, geometry = nearest_neighbour_chain
        up = SpinConfiguration.uniform(geometry)
        alternating = SpinConfiguration(geometry, [1, -1, 1, -1])
        assert energy(model, up) == pytest.approx(-4.0)
        assert energy(model, alternating) == pytest.approx(4.0)
        assert energy(model.with_field(0.5), up) == pytest.approx(-2.0)

    def test_flip_symmetry(self, make_chain):
        model = make_chain(0.75, 12)
        config = SpinConfiguration.random(Geometry.chain(12), KernelRng(5))
        assert energy(model, config.flipped()) == pytest.approx(energy(model, config), abs=1e-12)

    def test_translation_invariance(self, make_grid):
        model = make_grid(0.75, 6, ktau=0.4)
        config = SpinConfiguration.random(Geometry.grid(6, 4), KernelRng(9))
        reference = energy(model, config)
        for dx, dtau in ((1, 0), (5, 0), (0, 1), (2, 3)):
            assert energy(model, config.shifted(dx, dtau)) == pytest.approx(reference, abs=1e-12)

    @pytest.mark.parametrize("ltau", (2, 3, 4))
    def test_kernel_matches_quadratic_form(self, make_grid, ltau):
        model = make_grid(1.0, 5, ktau=0.3, h=0.2)
        config = SpinConfiguration.random(Geometry.grid(5, ltau), KernelRng(ltau))
        assert energy(model, config) == pytest.approx(_quadratic_energy(model, config), abs=1e-12)


class TestLocalField:
    def test_nearest_neighbour_examples(self, nearest_neighbour_chain):
        model, geometry = nearest_neighbour_chain
        up = SpinConfiguration.uniform(geometry)
        assert local_field(model, up, 0) == pytest.approx(2.0)
        assert flip_cost(model, up, 0) == pytest.approx(4.0)
        down = SpinConfiguration(geometry, [1, -1, 1, 1])
        assert flip_cost(model, down, 1) == pytest.approx(-4.0)

    def test_field_equal_to_local_field(self, nearest_neighbour_chain):
        model, geometry = nearest_neighbour_chain
        assert flip_cost(model.with_field(2.0), SpinConfiguration.uniform(geometry), 2) == 0.0

    @pytest.mark.parametrize("site", (0, 7, 13, 23))
    def test_flip_cost_is_energy_difference(self, make_grid, site):
        model = make_grid(0.6, 6, ktau=0.25, h=-0.3)
        config = SpinConfiguration.random(Geometry.grid(6, 4), KernelRng(21))
        flipped = config.copy()
        flipped.spins[site] *= -1
        expected = energy(model, flipped) - energy(model, config)
        assert flip_cost(model, config, site) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("kind", ("chain", "grid"))
    def test_random_configurations(self, make_chain, make_grid, kind):
        if kind == "chain":
            model, geometry = make_chain(0.75, 12, h=0.3), Geometry.chain(12)
        else:
            model, geometry = make_grid(1.2, 6, ktau=0.35, h=-0.4), Geometry.grid(6, 4)
        matrix = coupling_matrix(model, geometry)
        sites = np.random.default_rng(31).integers(0, geometry.n_sites, size=500)
        for seed, site in enumerate(sites):
            config = SpinConfiguration.random(geometry, KernelRng(1000 + seed))
            spins = config.spins.astype(np.float64)
            assert local_field(model, config, int(site)) == pytest.approx(matrix[site] @ spins, abs=1e-10)
            flipped = config.copy()
            flipped.spins[site] *= -1
            expected = energy(model, flipped) - energy(model, config)
            assert flip_cost(model, config, int(site)) == pytest.approx(expected, abs=1e-10)

    def test_site_range(self, nearest_neighbour_chain):
        model, geometry = nearest_neighbour_chain
        with pytest.raises(FisInvalidArgValueError):
            local_field(model, SpinConfiguration.uniform(geometry), 4)


class TestExactEnumeration:
    def test_single_spin(self, make_chain):
        beta, h = 0.7, 0.3
        exact = exact_enumeration(make_chain(2.0, 1, h=h), Geometry.chain(1), beta)
        assert exact.partition_function == pytest.approx(2 * math.cosh(beta * h))
        assert exact.m == pytest.approx(-math.tanh(beta * h))

    def test_two_site_ring(self, make_chain):
        beta = 0.4
        exact = exact_enumeration(make_chain(2.0, 2), Geometry.chain(2), beta)
        expected = 2 * math.exp(2 * beta) + 2 * math.exp(-2 * beta)
        assert exact.partition_function == pytest.approx(expected)

    def test_normalisation(self, make_grid):
        model = make_grid(0.8, 3, ktau=0.5, h=0.1)
        weights = boltzmann_distribution(model, Geometry.grid(3, 4), 0.6)
        assert weights.sum() == pytest.approx(1.0)

    def test_matches_kernel_energies(self, make_chain):
        model = make_chain(0.75, 4, h=0.2)
        geometry = Geometry.chain(4)
        beta = 0.9
        energies = enumeration_energies(model, geometry)
        for index in range(16):
            spins = [-1 if (index >> n) & 1 else 1 for n in range(4)]
            config = SpinConfiguration(geometry, spins)
            assert energies[index] == pytest.approx(energy(model, config), abs=1e-12)
        weights = np.exp(-beta * energies)
        exact = exact_enumeration(model, geometry, beta)
        assert exact.energy == pytest.approx(weights @ energies / weights.sum())
        assert exact.log_z == pytest.approx(math.log(weights.sum()))

    def test_correlations(self, make_chain):
        exact = exact_enumeration(make_chain(1.0, 6), Geometry.chain(6), 0.5)
        assert exact.correlations[0] == pytest.approx(1.0)
        assert exact.m == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.diff(exact.connected_correlations) < 0)
        assert 0 < exact.binder < 2 / 3

    def test_size_cap(self, make_chain):
        with pytest.raises(FisSizeCapError):
            exact_enumeration(make_chain(1.0, 25), Geometry.chain(25), 1.0)
