"""
Fractional long-range couplings J(r) = (-1)^(r+1) C(q, q/2 + r), their image
sums on periodic lattices and their momentum-space form |2 sin(k/2)|^q.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import special

from .enums import ErrorCode
from .errors import (
    FisCouplingOverflowError,
    FisDomainError,
    FisInvalidArgValueError,
    FisNonPositiveCouplingError,
    FisOrderRangeError,
    FisTailToleranceError,
)

logger = logging.getLogger("fracising")

MAX_SIMULATED_ORDER = 2.0
MAX_TABLE_SIZE = 2**31 - 1
MAX_IMAGE_RANGE = 10**7
DEFAULT_TAIL_TOLERANCE = 1e-12
MIN_ASYMPTOTIC_DISTANCE = 10


def validate_order(q: float, simulation: bool = False) -> float:
    q = float(q)
    if not q > 0 or not math.isfinite(q):
        raise FisOrderRangeError(
            ErrorCode.ORDER_RANGE, f"Fractional order must be positive, got q={q}"
        )
    if simulation and q > MAX_SIMULATED_ORDER:
        raise FisOrderRangeError(
            ErrorCode.ORDER_RANGE,
            f"Simulation requires 0 < q <= {MAX_SIMULATED_ORDER:g}, got q={q}",
        )
    return q


def _is_pole(z: float) -> bool:
    return z <= 0 and z == math.floor(z)


def _is_even_integer(q: float) -> bool:
    return q == math.floor(q) and int(q) % 2 == 0


def generalized_binomial(q: float, x: float) -> float:
    """
    Generalized binomial coefficient Γ(q+1) / (Γ(x+1) Γ(q-x+1)).

    Evaluated in log space with the signs of the Gamma factors tracked
    separately. A pole in either denominator factor gives an exact zero.

    Raises:
        FisDomainError: if ``q + 1`` is not a valid Gamma argument.
    """
    q = float(q)
    x = float(x)
    if not q > -1:
        raise FisDomainError(
            ErrorCode.DOMAIN_ERROR, f"Generalized binomial requires q > -1, got q={q}"
        )
    if _is_pole(x + 1) or _is_pole(q - x + 1):
        return 0.0
    log_value = special.gammaln(q + 1) - special.gammaln(x + 1) - special.gammaln(q - x + 1)
    sign = special.gammasgn(q + 1) * special.gammasgn(x + 1) * special.gammasgn(q - x + 1)
    return float(sign * np.exp(log_value))


def coupling(q: float, r: int) -> float:
    q = validate_order(q)
    if r < 1:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Coupling distance must be >= 1, got r={r}"
        )
    sign = 1.0 if r % 2 == 1 else -1.0
    return sign * generalized_binomial(q, q / 2 + r)


def asymptotic_amplitude(q: float) -> float:
    """Leading amplitude A of J(r) ~ A r^-(1+q); zero for even integer q."""
    q = validate_order(q)
    if _is_even_integer(q):
        return 0.0
    return float(special.gamma(q + 1) * math.sin(math.pi * q / 2) / math.pi)


def reflection_coupling(q: float, r: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
    """
    J(r) = A Γ(r - q/2) / Γ(r + 1 + q/2), accurate at large r.

    Undefined for even integer q, where the amplitude vanishes and the
    couplings have finite range.
    """
    q = validate_order(q)
    if _is_even_integer(q):
        raise FisDomainError(
            ErrorCode.DOMAIN_ERROR, f"Reflection form is undefined for even integer q={q:g}"
        )
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 1):
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, "Coupling distance must be >= 1"
        )
    value = asymptotic_amplitude(q) / special.poch(r - q / 2, 1 + q)
    return float(value) if value.ndim == 0 else value


def exact_tail_sum(q: float, r_cut: int) -> float:
    """Σ_{r > r_cut} J(r), from the telescoping form of the Gamma ratio."""
    q = validate_order(q)
    if _is_even_integer(q):
        # Finite range: J(r) = 0 for r > q/2
        return float(sum(coupling(q, r) for r in range(r_cut + 1, int(q // 2) + 1)))
    return float(asymptotic_amplitude(q) / q / special.poch(r_cut + 1 - q / 2, q))


@dataclass(frozen=True)
class CouplingTable:
    q: float
    r_max: int
    values: np.ndarray = field(repr=False)
    central: float

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return self.r_max

    def __getitem__(self, r: int) -> float:
        if not 1 <= r <= self.r_max:
            raise IndexError(f"Distance {r} outside table range [1, {self.r_max}]")
        return float(self.values[r - 1])

    @property
    def distances(self) -> np.ndarray:
        return np.arange(1, self.r_max + 1, dtype=np.int64)

    @property
    def amplitude(self) -> float:
        return asymptotic_amplitude(self.q)

    def extend(self, r_max: int) -> "CouplingTable":
        """Table of the same order covering at least ``r_max`` distances."""
        if r_max <= self.r_max:
            return self
        return build_table(self.q, r_max)

    def head(self, r_max: int) -> np.ndarray:
        return self.extend(r_max).values[:r_max]


def build_table(q: float, r_max: int) -> CouplingTable:
    """
    Couplings J(1..r_max) by the ratio recurrence
    J(r+1) = J(r) (r - q/2) / (r + 1 + q/2), seeded at J(1).

    Raises:
        FisCouplingOverflowError: if ``r_max`` exceeds the indexable range.
    """
    q = validate_order(q)
    if q > MAX_SIMULATED_ORDER:
        logger.warning(
            f"Generating couplings for q={q:g} > {MAX_SIMULATED_ORDER:g}: the "
            f"power-law tail is antiferromagnetic and cannot be simulated"
        )
    r_max = int(r_max)
    if r_max < 1:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Table size must be >= 1, got r_max={r_max}"
        )
    if r_max > MAX_TABLE_SIZE:
        raise FisCouplingOverflowError(
            ErrorCode.COUPLING_OVERFLOW,
            f"Table size r_max={r_max} exceeds the representable range {MAX_TABLE_SIZE}",
        )

    r = np.arange(1, r_max, dtype=np.float64)
    ratios = np.empty(r_max, dtype=np.float64)
    ratios[0] = coupling(q, 1)
    ratios[1:] = (r - q / 2) / (r + 1 + q / 2)
    values = np.cumprod(ratios)
    return CouplingTable(
        q=q, r_max=r_max, values=values, central=generalized_binomial(q, q / 2)
    )


@dataclass(frozen=True)
class PeriodicCouplingTable:
    """
    Image-summed couplings J_L(r) = Σ_n J(|r + nL|) for r = 1..L//2.

    ``self_image`` is the sum over the images of a site onto itself,
    Σ_{n != 0} J(|nL|). ``tail_bound`` is the largest certified truncation
    error of any entry.
    """

    base: CouplingTable = field(repr=False)
    L: int
    values: np.ndarray = field(repr=False)
    tail_tolerance: float
    tail_bound: float
    self_image: float
    image_range: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def q(self) -> float:
        return self.base.q

    def __getitem__(self, r: int) -> float:
        """Coupling at lattice separation ``r`` under the minimum-image rule."""
        d = r % self.L
        d = min(d, self.L - d)
        if d == 0:
            raise IndexError("A site does not couple to itself")
        return float(self.values[d - 1])

    def kernel_array(self) -> np.ndarray:
        """couplings[d] = J_L(min(d, L - d)) for d in [0, L), couplings[0] = 0."""
        couplings = np.zeros(self.L, dtype=np.float64)
        if self.L > 1:
            d = np.arange(1, self.L)
            couplings[1:] = self.values[np.minimum(d, self.L - d) - 1]
        return couplings


def _residue_tails(q: float, amplitude: float, L: int, r_cut: int, correction: float):
    residues = np.arange(L)
    first = r_cut + np.where(residues == 0, L, residues).astype(np.float64)
    estimate = amplitude / (L * q) * (first - L / 2) ** (-q)
    bound = (L / 24) * abs(amplitude) * (1 + q) * (first - 1.5 * L) ** (-(2 + q))
    bound += correction * (first - L / 2) ** (-(2 + q)) / (L * (2 + q))
    return estimate, bound


def periodic_table(
    table: CouplingTable, L: int, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
) -> PeriodicCouplingTable:
    """
    Fold the couplings onto a ring of ``L`` sites.

    Distances up to ``N * L`` are summed directly, grouped by residue modulo
    ``L``; the remainder of each residue class is replaced by the integral of
    the leading power law, with an error bound covering the midpoint rule and
    the subleading r^-(3+q) correction. ``N`` doubles until every entry's
    bound is within ``tail_tolerance``.

    Raises:
        FisTailToleranceError: if the tolerance is not met within
            ``MAX_IMAGE_RANGE`` distances.
    """
    L = int(L)
    if L < 1:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Lattice size must be >= 1, got L={L}"
        )
    if not tail_tolerance > 0:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE,
            f"Tail tolerance must be positive, got {tail_tolerance}",
        )
    q = table.q
    amplitude = asymptotic_amplitude(q)
    n_images = max(4, math.ceil(1024 / L))

    while True:
        r_cut = n_images * L
        if r_cut > MAX_IMAGE_RANGE:
            raise FisTailToleranceError(
                ErrorCode.TAIL_TOLERANCE,
                f"Image sum for q={q:g}, L={L} did not reach tolerance "
                f"{tail_tolerance:g} within {MAX_IMAGE_RANGE} distances",
            )
        values = table.head(r_cut)
        r = np.arange(1, r_cut + 1)
        fold = np.bincount(r % L, weights=values, minlength=L)

        if amplitude == 0.0:
            tails = np.zeros(L)
            bounds = np.zeros(L)
            break

        window = r[r_cut // 2 - 1 :].astype(np.float64)
        relative = values[r_cut // 2 - 1 :] * window ** (1 + q) / amplitude - 1
        correction = 2 * abs(amplitude) * float(np.max(np.abs(relative) * window**2))
        tails, bounds = _residue_tails(q, amplitude, L, r_cut, correction)
        pair_bounds = bounds + bounds[(-np.arange(L)) % L]
        if float(np.max(pair_bounds)) <= tail_tolerance:
            break
        n_images *= 2

    summed = fold + tails
    pair_bounds = bounds + bounds[(-np.arange(L)) % L]
    half = np.arange(1, L // 2 + 1)
    periodic = summed[half] + summed[L - half]
    logger.debug(
        f"Periodic table q={q:g} L={L}: {r_cut} distances summed, "
        f"tail bound {float(np.max(pair_bounds)):.3g}"
    )
    return PeriodicCouplingTable(
        base=table,
        L=L,
        values=periodic,
        tail_tolerance=tail_tolerance,
        tail_bound=float(np.max(pair_bounds)),
        self_image=float(2 * summed[0]),
        image_range=r_cut,
    )


def momentum_coupling(q: float, k: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    q = validate_order(q)
    k = np.asarray(k, dtype=np.float64)
    if np.any(np.abs(k) > math.pi * (1 + 1e-12)):
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, "Momentum must lie in the first Brillouin zone"
        )
    value = np.abs(2 * np.sin(k / 2)) ** q
    return float(value) if value.ndim == 0 else value


def momentum_curve(q: float, n_points: int = 513):
    """Sampled |2 sin(k/2)|^q over [-π, π], for plotting."""
    k = np.linspace(-math.pi, math.pi, n_points)
    return k, momentum_coupling(q, k)


def spectral_residual(periodic: PeriodicCouplingTable) -> np.ndarray:
    """
    C(q, q/2) - Σ_{n != 0} J(|n|) cos(k n) - |2 sin(k/2)|^q on the lattice
    momenta k_m = 2πm/L, using the image-summed couplings.
    """
    L = periodic.L
    m = np.arange(L)
    k = 2 * math.pi * m / L
    k = np.where(k > math.pi, k - 2 * math.pi, k)
    couplings = periodic.kernel_array()
    d = np.arange(L)
    spectrum = np.cos(np.outer(k, d)) @ couplings
    return periodic.base.central - periodic.self_image - spectrum - momentum_coupling(
        periodic.q, k
    )


def sum_rule_residual(table: CouplingTable, r_cut: Optional[int] = None) -> float:
    """Relative violation of 2 Σ_{r>=1} J(r) = C(q, q/2), with the exact tail."""
    r_cut = table.r_max if r_cut is None else int(r_cut)
    direct = math.fsum(table.head(r_cut))
    total = 2 * (direct + exact_tail_sum(table.q, r_cut))
    return (total - table.central) / table.central


def _fit_window(table: CouplingTable, r_lo: int, r_hi: int):
    if r_lo < MIN_ASYMPTOTIC_DISTANCE:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE,
            f"Asymptotic fits need r_lo >= {MIN_ASYMPTOTIC_DISTANCE}, got {r_lo}",
        )
    if not r_lo < r_hi:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Empty fit window [{r_lo}, {r_hi}]"
        )
    table = table.extend(r_hi)
    r = np.arange(r_lo, r_hi + 1, dtype=np.float64)
    values = table.values[r_lo - 1 : r_hi]
    if np.any(values <= 0):
        raise FisNonPositiveCouplingError(
            ErrorCode.NON_POSITIVE_COUPLING,
            f"Non-positive coupling in fit window [{r_lo}, {r_hi}] for q={table.q:g}",
        )
    return r, values


def asymptotic_exponent(table: CouplingTable, r_lo: int, r_hi: int) -> float:
    """Least-squares slope of log J(r) against log r on [r_lo, r_hi]."""
    r, values = _fit_window(table, r_lo, r_hi)
    slope, _ = np.polyfit(np.log(r), np.log(values), 1)
    return float(slope)


@dataclass(frozen=True)
class SubleadingResidual:
    r: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    amplitude: float
    slope: float


def residual_subleading(table: CouplingTable, r_lo: int, r_hi: int) -> SubleadingResidual:
    """
    Residual J(r) - A r^-(1+q) after fitting the leading amplitude A.

    A is the intercept of J(r) r^(1+q) fitted as a quadratic in (r_lo/r)^2;
    the returned slope is the log-log slope of |residual|.
    """
    r, values = _fit_window(table, r_lo, r_hi)
    q = table.q
    scaled = values * r ** (1 + q)
    x = (r_lo / r) ** 2
    amplitude = float(np.polyfit(x, scaled, 2)[-1])
    residual = values - amplitude * r ** (-(1 + q))
    magnitude = np.abs(residual)
    if np.any(magnitude == 0):
        raise FisNonPositiveCouplingError(
            ErrorCode.NON_POSITIVE_COUPLING,
            f"Residual vanishes inside [{r_lo}, {r_hi}] for q={q:g}",
        )
    slope, _ = np.polyfit(np.log(r), np.log(magnitude), 1)
    return SubleadingResidual(r=r, residual=residual, amplitude=amplitude, slope=float(slope))
