import math

import numpy as np
import pytest

from fracising import (
    FisCouplingOverflowError,
    FisDomainError,
    FisInvalidArgValueError,
    FisNonPositiveCouplingError,
    FisOrderRangeError,
)
from fracising.couplings import (
    MAX_TABLE_SIZE,
    asymptotic_amplitude,
    asymptotic_exponent,
    build_table,
    coupling,
    exact_tail_sum,
    generalized_binomial,
    momentum_coupling,
    momentum_curve,
    periodic_table,
    reflection_coupling,
    residual_subleading,
    spectral_residual,
    sum_rule_residual,
    validate_order,
)

ORDERS = (0.25, 0.5, 1.0, 1.5, 2.0)


class TestGeneralizedBinomial:
    def test_integer_identity(self):
        assert generalized_binomial(2, 2) == pytest.approx(1.0, abs=1e-15)

    def test_half_integer_argument(self):
        assert generalized_binomial(1, 1.5) == pytest.approx(4 / (3 * math.pi), rel=1e-12)

    def test_above_upper_index_is_exact_zero(self):
        assert generalized_binomial(2, 3) == 0.0

    def test_negative_lower_index_is_exact_zero(self):
        assert generalized_binomial(2, -1) == 0.0

    def test_sign_tracking(self):
        # C(0.5, 2.25) = Γ(1.5) / (Γ(3.25) Γ(-0.75)) < 0
        expected = math.gamma(1.5) / (math.gamma(3.25) * math.gamma(-0.75))
        assert generalized_binomial(0.5, 2.25) == pytest.approx(expected, rel=1e-12)
        assert expected < 0

    def test_domain(self):
        with pytest.raises(FisDomainError):
            generalized_binomial(-1.5, 0.5)


class TestCoupling:
    def test_nearest_neighbour_limit(self):
        assert coupling(2, 1) == pytest.approx(1.0)
        assert coupling(2, 2) == 0.0

    def test_q_one(self):
        assert coupling(1, 1) == pytest.approx(4 / (3 * math.pi), rel=1e-12)
        assert coupling(1, 2) == pytest.approx(4 / (15 * math.pi), rel=1e-12)

    def test_distance_must_be_positive(self):
        with pytest.raises(FisInvalidArgValueError):
            coupling(1, 0)

    def test_order_must_be_positive(self):
        with pytest.raises(FisOrderRangeError):
            coupling(0, 1)

    def test_simulation_bound(self):
        assert validate_order(2.0, simulation=True) == 2.0
        with pytest.raises(FisOrderRangeError):
            validate_order(2.5, simulation=True)

    @pytest.mark.parametrize("q", (0.25, 0.5, 0.75, 1.0, 1.5, 1.99))
    def test_positive_below_two(self, q):
        table = build_table(q, 5000)
        assert np.all(table.values > 0)


class TestBuildTable:
    def test_nearest_neighbour_table(self):
        np.testing.assert_array_equal(build_table(2, 5).values, [1, 0, 0, 0, 0])

    def test_q_one(self):
        np.testing.assert_allclose(
            build_table(1, 2).values, [4 / (3 * math.pi), 4 / (15 * math.pi)], rtol=1e-12
        )

    def test_central_coefficient(self):
        assert build_table(0.5, 1).central == pytest.approx(1.078702, rel=1e-6)

    @pytest.mark.parametrize("q", (0.25, 0.5, 1.0, 1.5))
    def test_recurrence_matches_gamma_evaluation(self, q):
        table = build_table(q, 1000)
        r = np.array([1, 2, 3, 10, 57, 100, 333, 1000])
        direct = np.array([coupling(q, int(d)) for d in r])
        np.testing.assert_allclose(table.values[r - 1], direct, rtol=1e-10)

    @pytest.mark.parametrize("q", (0.3, 1.0, 1.7))
    def test_recurrence_matches_reflection_form_far_out(self, q):
        table = build_table(q, 100000)
        r = np.array([1, 10, 1000, 54321, 100000])
        np.testing.assert_allclose(
            table.values[r - 1], reflection_coupling(q, r), rtol=1e-10
        )

    def test_table_is_read_only(self):
        table = build_table(1, 10)
        with pytest.raises(ValueError):
            table.values[0] = 0.0

    def test_extend_and_head(self):
        table = build_table(0.5, 10)
        assert table.extend(5) is table
        np.testing.assert_allclose(table.head(20), build_table(0.5, 20).values)

    def test_lookup(self):
        table = build_table(1, 4)
        assert table[2] == pytest.approx(4 / (15 * math.pi))
        with pytest.raises(IndexError):
            table[5]

    def test_empty_table(self):
        with pytest.raises(FisInvalidArgValueError):
            build_table(1, 0)

    def test_overflow(self):
        with pytest.raises(FisCouplingOverflowError):
            build_table(1, MAX_TABLE_SIZE + 1)


class TestTail:
    def test_amplitude(self):
        assert asymptotic_amplitude(1) == pytest.approx(1 / math.pi)
        assert asymptotic_amplitude(2) == 0.0

    @pytest.mark.parametrize("q", (0.5, 1.0, 1.5))
    def test_exact_tail_against_direct_sum(self, q):
        table = build_table(q, 200000)
        direct = math.fsum(table.values[100:])
        remainder = exact_tail_sum(q, 200000)
        assert exact_tail_sum(q, 100) == pytest.approx(direct + remainder, rel=1e-10)

    @pytest.mark.parametrize("q", ORDERS)
    def test_sum_rule(self, q):
        assert abs(sum_rule_residual(build_table(q, 1000))) < 1e-8

    def test_reflection_form_needs_odd_order(self):
        with pytest.raises(FisDomainError):
            reflection_coupling(2.0, 3)


class TestPeriodicTable:
    def test_nearest_neighbour_ring(self):
        periodic = periodic_table(build_table(2, 8), 8)
        np.testing.assert_array_equal(periodic.values, [1, 0, 0, 0])
        assert periodic.tail_bound == 0.0

    def test_two_site_ring_doubles_the_bond(self):
        periodic = periodic_table(build_table(2, 2), 2)
        assert periodic[1] == pytest.approx(2.0)

    def test_image_sum_against_brute_force(self):
        q, L = 1.0, 8
        periodic = periodic_table(build_table(q, L), L, 1e-10)
        n = np.arange(-10**6, 10**6 + 1)
        distances = np.abs(1 + L * n)
        brute = math.fsum(reflection_coupling(q, distances))
        # images beyond |n| = 10^6 contribute about 1e-8
        assert periodic[1] == pytest.approx(brute, abs=1e-7)
        assert periodic.tail_bound <= 1e-10

    def test_minimum_image_lookup(self):
        periodic = periodic_table(build_table(0.75, 10), 10)
        assert periodic[3] == periodic[7] == periodic[-3] == periodic[13]
        with pytest.raises(IndexError):
            periodic[10]

    def test_kernel_array(self):
        periodic = periodic_table(build_table(0.75, 6), 6)
        couplings = periodic.kernel_array()
        assert couplings[0] == 0.0
        np.testing.assert_array_equal(couplings[1:], periodic.values[[0, 1, 2, 1, 0]])

    def test_tolerance_must_be_positive(self):
        with pytest.raises(FisInvalidArgValueError):
            periodic_table(build_table(1, 4), 4, 0.0)

    @pytest.mark.parametrize("q", ORDERS)
    def test_spectral_identity(self, q):
        periodic = periodic_table(build_table(q, 64), 64)
        assert np.max(np.abs(spectral_residual(periodic))) < 1e-8


class TestMomentumCoupling:
    def test_examples(self):
        assert momentum_coupling(2, math.pi) == pytest.approx(4.0)
        assert momentum_coupling(1, math.pi / 3) == pytest.approx(1.0)
        assert momentum_coupling(0.5, math.pi) == pytest.approx(math.sqrt(2))

    def test_even_and_vanishing_at_zero(self):
        k = np.linspace(0, math.pi, 17)
        np.testing.assert_allclose(momentum_coupling(0.75, k), momentum_coupling(0.75, -k))
        assert momentum_coupling(0.75, 0.0) == 0.0

    def test_curve_peaks_at_zone_edge(self):
        k, values = momentum_curve(2.0)
        assert values.max() == pytest.approx(4.0)
        assert abs(k[np.argmax(values)]) == pytest.approx(math.pi)

    def test_outside_zone(self):
        with pytest.raises(FisInvalidArgValueError):
            momentum_coupling(1, 4.0)


class TestAsymptotics:
    @pytest.mark.parametrize("q", (1.0, 0.5))
    def test_leading_exponent(self, q):
        table = build_table(q, 10000)
        assert asymptotic_exponent(table, 100, 10000) == pytest.approx(-(1 + q), abs=0.02)

    @pytest.mark.parametrize("q", (1.0, 0.5))
    def test_subleading_exponent(self, q):
        residual = residual_subleading(build_table(q, 5000), 100, 5000)
        assert residual.slope == pytest.approx(-(3 + q), abs=0.2)
        assert residual.amplitude == pytest.approx(asymptotic_amplitude(q), rel=1e-6)

    def test_nearest_neighbour_has_no_tail(self):
        table = build_table(2, 10000)
        with pytest.raises(FisNonPositiveCouplingError):
            asymptotic_exponent(table, 100, 10000)
        with pytest.raises(FisNonPositiveCouplingError):
            residual_subleading(table, 100, 5000)

    def test_window_must_be_asymptotic(self):
        with pytest.raises(FisInvalidArgValueError):
            asymptotic_exponent(build_table(1, 100), 5, 100)
