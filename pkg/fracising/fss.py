"""
Finite-size-scaling analysis: pseudo-critical points, thermodynamic
extrapolation, Binder crossings, data collapse, peak-height exponents, η, δ,
the Q-FSS exponent κ and the Hausdorff dimension H_D = 2 - η.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .enums import BinderConvention, ErrorCode, FieldScalingForm, MagnetizationConvention
from .errors import (
    FisAnalysisError,
    FisCollapseError,
    FisFitConvergenceError,
    FisInsufficientSizesError,
    FisInvalidArgValueError,
    FisNoCrossoverError,
    FisPeakAtEdgeError,
    FisWindowTooSmallError,
)
from .stats import ObservableSet

logger = logging.getLogger("fracising")

MIN_CONTROL_POINTS = 5
MIN_SIZES = 3
PEAK_FIT_POINTS = 7
CLASSICAL_HAUSDORFF_SLOPE = 1.0
QUANTUM_HAUSDORFF_SLOPE = 0.75
_PENALTY = 1e12


@dataclass(frozen=True)
class ScalingCurve:
    """One observable against the control parameter for a single size."""

    L: int
    control: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        control = np.asarray(self.control, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        errors = (
            np.zeros_like(values)
            if self.errors is None
            else np.asarray(self.errors, dtype=np.float64)
        )
        if not control.shape == values.shape == errors.shape or control.ndim != 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "Control, values and errors must be equal-length 1D"
            )
        if control.size < MIN_CONTROL_POINTS:
            raise FisInsufficientSizesError(
                ErrorCode.INSUFFICIENT_SIZES,
                f"A scaling curve needs >= {MIN_CONTROL_POINTS} control points, "
                f"got {control.size} for L={self.L}",
            )
        if np.any(errors < 0):
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "Standard errors must be non-negative"
            )
        order = np.argsort(control, kind="stable")
        object.__setattr__(self, "control", control[order])
        object.__setattr__(self, "values", values[order])
        object.__setattr__(self, "errors", errors[order])

    def at(self, control: float) -> Tuple[float, float]:
        """Linear interpolation of value and error."""
        if not self.control[0] <= control <= self.control[-1]:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"{control} outside the scanned window of L={self.L}",
            )
        k = int(np.clip(np.searchsorted(self.control, control) - 1, 0, self.control.size - 2))
        width = self.control[k + 1] - self.control[k]
        t = (control - self.control[k]) / width if width > 0 else 0.0
        value = (1 - t) * self.values[k] + t * self.values[k + 1]
        error = math.hypot((1 - t) * self.errors[k], t * self.errors[k + 1])
        return float(value), float(error)


@dataclass(frozen=True)
class ExponentEstimate:
    name: str
    value: float
    stderr: float
    window: Optional[Tuple[float, float]] = None
    quality: Optional[float] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "window": None if self.window is None else list(self.window),
            "quality": self.quality,
            **self.diagnostics,
        }


def _weighted_linear_fit(x, y, sigma=None):
    """Least squares y = A p with covariance; absolute if ``sigma`` is given."""
    design = np.column_stack(x)
    y = np.asarray(y, dtype=np.float64)
    if sigma is not None and np.all(np.asarray(sigma) > 0):
        w = 1.0 / np.asarray(sigma, dtype=np.float64)
        params, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
        cov = np.linalg.pinv((design * w[:, None]).T @ (design * w[:, None]))
        chi2 = float(np.sum(((design @ params - y) * w) ** 2))
    else:
        params, *_ = np.linalg.lstsq(design, y, rcond=None)
        residual = design @ params - y
        chi2 = float(residual @ residual)
        dof = max(y.size - design.shape[1], 1)
        cov = np.linalg.pinv(design.T @ design) * chi2 / dof
    return params, cov, chi2


@dataclass(frozen=True)
class PeakEstimate:
    L: int
    location: float
    height: float
    stderr: float
    height_stderr: float


def locate_peak(
    curve: ScalingCurve,
    n_fit: int = PEAK_FIT_POINTS,
    n_bootstrap: int = 200,
    rng: Optional[np.random.Generator] = None,
) -> PeakEstimate:
    """
    Vertex of a weighted parabola through the ``n_fit`` (5 to 7) points
    around the maximum.

    Raises:
        FisPeakAtEdgeError: if the maximum is not interior to the scan.
    """
    n_fit = min(max(n_fit, 5), 7, curve.control.size)
    top = int(np.argmax(curve.values))
    if top == 0 or top == curve.values.size - 1:
        raise FisPeakAtEdgeError(
            ErrorCode.PEAK_AT_EDGE,
            f"{curve.name or 'Curve'} of L={curve.L} peaks at the edge of the scan "
            f"({curve.control[top]:g}); widen the control window",
        )
    lo = int(np.clip(top - n_fit // 2, 0, curve.control.size - n_fit))
    window = slice(lo, lo + n_fit)
    x = curve.control[window]
    y = curve.values[window]
    err = curve.errors[window]
    weighted = bool(np.all(err > 0))

    def vertex(values):
        a, b, c = np.polyfit(x, values, 2, w=1 / err if weighted else None)
        if not a < 0:
            return None
        return -b / (2 * a), c - b * b / (4 * a)

    fitted = vertex(y)
    if fitted is None:
        raise FisFitConvergenceError(
            ErrorCode.FIT_CONVERGENCE,
            f"No maximum in the parabola around the peak of L={curve.L}",
        )
    location, height = fitted
    if not x[0] <= location <= x[-1]:
        raise FisPeakAtEdgeError(
            ErrorCode.PEAK_AT_EDGE,
            f"Fitted peak {location:g} of L={curve.L} lies outside the fit window",
        )

    stderr = height_stderr = 0.0
    if weighted and n_bootstrap > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        samples = [vertex(y + err * rng.standard_normal(y.size)) for _ in range(n_bootstrap)]
        samples = np.array([s for s in samples if s is not None])
        if len(samples) > 1:
            stderr, height_stderr = samples.std(axis=0, ddof=1)
    return PeakEstimate(curve.L, float(location), float(height), float(stderr), float(height_stderr))


@dataclass(frozen=True)
class TcExtrapolation:
    tc: float
    tc_stderr: float
    inv_nu: float
    inv_nu_stderr: float
    amplitude: float
    residuals: np.ndarray = field(repr=False)


def _shift_projection(L, t, sigma, inv_nu):
    design = np.column_stack([np.ones_like(L), L ** (-inv_nu)])
    w = 1.0 / sigma
    params, *_ = np.linalg.lstsq(design * w[:, None], t * w, rcond=None)
    residual = (design @ params - t) * w
    return params, float(residual @ residual)


def _fit_shift(L, t, sigma, inv_nu_bounds):
    best = optimize.minimize_scalar(
        lambda w: _shift_projection(L, t, sigma, w)[1],
        bounds=inv_nu_bounds,
        method="bounded",
        options={"xatol": 1e-12},
    )
    inv_nu = float(best.x)
    (tc, amplitude), _ = _shift_projection(L, t, sigma, inv_nu)
    return tc, amplitude, inv_nu


def extrapolate_tc(
    sizes: Sequence[int],
    locations: Sequence[float],
    stderrs: Optional[Sequence[float]] = None,
    n_bootstrap: int = 200,
    rng: Optional[np.random.Generator] = None,
    inv_nu_bounds: Tuple[float, float] = (0.05, 5.0),
) -> TcExtrapolation:
    """
    Fit T*(L) = T_c + a L^(-1/ν). The shift exponent is profiled first with
    (T_c, a) solved linearly, then all three are refined jointly; errors come
    from resampling the pseudo-critical points.

    Raises:
        FisInsufficientSizesError: for fewer than three sizes.
        FisFitConvergenceError: if the joint refinement fails.
    """
    L = np.asarray(sizes, dtype=np.float64)
    t = np.asarray(locations, dtype=np.float64)
    if L.size < MIN_SIZES:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES,
            f"Extrapolating T_c needs >= {MIN_SIZES} sizes, got {L.size}",
        )
    sigma_given = stderrs is not None and np.all(np.asarray(stderrs) > 0)
    sigma = np.asarray(stderrs, dtype=np.float64) if sigma_given else np.ones_like(t)

    tc, amplitude, inv_nu = _fit_shift(L, t, sigma, inv_nu_bounds)

    def model(size, tc_, a_, w_):
        return tc_ + a_ * size ** (-w_)

    def chi2(params):
        return float(np.sum(((t - model(L, *params)) / sigma) ** 2))

    if min(inv_nu - inv_nu_bounds[0], inv_nu_bounds[1] - inv_nu) < 1e-6:
        raise FisFitConvergenceError(
            ErrorCode.FIT_CONVERGENCE,
            f"Shift exponent ran to the bound {inv_nu:.6g} of {inv_nu_bounds}",
            residuals=t - model(L, tc, amplitude, inv_nu),
        )
    try:
        params, _ = optimize.curve_fit(
            model,
            L,
            t,
            p0=(tc, amplitude, inv_nu),
            sigma=sigma,
            absolute_sigma=sigma_given,
            ftol=1e-15,
            xtol=1e-15,
            maxfev=20000,
        )
    except RuntimeError as e:
        logger.debug(f"Joint shift refinement stopped ({e}); keeping the profiled fit")
    else:
        if np.all(np.isfinite(params)) and params[2] > 0 and chi2(params) <= chi2((tc, amplitude, inv_nu)):
            tc, amplitude, inv_nu = (float(p) for p in params)

    tc_stderr = inv_nu_stderr = 0.0
    if sigma_given and n_bootstrap > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        samples = np.array(
            [
                _fit_shift(L, t + sigma * rng.standard_normal(t.size), sigma, inv_nu_bounds)
                for _ in range(n_bootstrap)
            ]
        )
        tc_stderr = float(samples[:, 0].std(ddof=1))
        inv_nu_stderr = float(samples[:, 2].std(ddof=1))

    return TcExtrapolation(
        tc=tc,
        tc_stderr=tc_stderr,
        inv_nu=inv_nu,
        inv_nu_stderr=inv_nu_stderr,
        amplitude=amplitude,
        residuals=t - model(L, tc, amplitude, inv_nu),
    )


@dataclass(frozen=True)
class Crossing:
    sizes: Tuple[int, int]
    location: float
    stderr: float


@dataclass(frozen=True)
class BinderResult:
    transition_detected: bool
    tc: Optional[float]
    tc_stderr: Optional[float]
    crossings: List[Crossing]
    method: Optional[str] = None


def _pair_crossing(small: ScalingCurve, large: ScalingCurve, z: float) -> Optional[Crossing]:
    lo = max(small.control[0], large.control[0])
    hi = min(small.control[-1], large.control[-1])
    grid = np.union1d(small.control, large.control)
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size < 2:
        return None
    values_s = np.interp(grid, small.control, small.values)
    values_l = np.interp(grid, large.control, large.values)
    errors_s = np.interp(grid, small.control, small.errors)
    errors_l = np.interp(grid, large.control, large.errors)
    diff = values_s - values_l
    sigma = np.hypot(errors_s, errors_l)

    significant = np.where(np.abs(diff) > z * sigma, np.sign(diff), 0.0)
    marked = np.flatnonzero(significant)
    for a, b in zip(marked[:-1], marked[1:]):
        if significant[a] == significant[b]:
            continue
        for k in range(a, b):
            if diff[k] * diff[k + 1] <= 0:
                step = diff[k] - diff[k + 1]
                t = diff[k] / step if step != 0 else 0.0
                location = grid[k] + t * (grid[k + 1] - grid[k])
                slope = abs(step) / (grid[k + 1] - grid[k])
                sigma_at = (1 - t) * sigma[k] + t * sigma[k + 1]
                stderr = sigma_at / slope if slope > 0 else float("inf")
                return Crossing((small.L, large.L), float(location), float(stderr))
    return None


def binder_crossing(curves: Sequence[ScalingCurve], z: float = 2.0) -> BinderResult:
    """
    Pairwise crossings of Binder cumulant curves. A pair crosses only where
    the difference changes sign between points that differ significantly (at
    ``z`` standard errors). With three or more crossings T_c is the linear
    extrapolation of the crossings in 1/L̄ to L̄ → ∞; otherwise it is the
    crossing of the largest pair. No crossing means no transition detected.
    """
    curves = sorted(curves, key=lambda c: c.L)
    if len(curves) < 2:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES, "Binder crossings need at least two sizes"
        )
    crossings = [
        c
        for small, large in itertools.combinations(curves, 2)
        if (c := _pair_crossing(small, large, z)) is not None
    ]
    if not crossings:
        return BinderResult(False, None, None, [])

    mean_sizes = np.array([sum(c.sizes) / 2 for c in crossings])
    locations = np.array([c.location for c in crossings])
    stderrs = np.array([c.stderr for c in crossings])
    if len(crossings) >= 3 and np.ptp(1 / mean_sizes) > 0:
        finite = np.all(np.isfinite(stderrs)) and np.all(stderrs > 0)
        params, cov, _ = _weighted_linear_fit(
            (np.ones_like(mean_sizes), 1 / mean_sizes),
            locations,
            stderrs if finite else None,
        )
        return BinderResult(
            True, float(params[0]), float(math.sqrt(max(cov[0, 0], 0.0))), crossings,
            method="extrapolated",
        )
    largest = crossings[int(np.argmax(mean_sizes))]
    return BinderResult(True, largest.location, largest.stderr, crossings, method="largest pair")


def _collapse_score(xs: Sequence[np.ndarray], ys, dys) -> float:
    """
    Mean of (y - Y)² / (dy² + dY²) over every point and every other size
    whose rescaled data bracket it, Y being the linear interpolation between
    the bracketing points. Unit weights when no errors are given. Fewer
    overlapping terms than half the points counts as no overlap.
    """
    unit = all(np.all(d == 0) for d in dys)
    floor = None
    if not unit:
        positive = np.concatenate([d[d > 0] for d in dys])
        floor = float(np.min(positive)) ** 2
    terms = []
    for i, j in itertools.permutations(range(len(xs)), 2):
        order = np.argsort(xs[j], kind="stable")
        xj, yj, dj = xs[j][order], ys[j][order], dys[j][order]
        if xj.size < 2:
            continue
        inside = (xs[i] >= xj[0]) & (xs[i] <= xj[-1])
        if not np.any(inside):
            continue
        x = xs[i][inside]
        k = np.clip(np.searchsorted(xj, x, side="right") - 1, 0, xj.size - 2)
        width = xj[k + 1] - xj[k]
        t = np.divide(x - xj[k], width, out=np.zeros_like(x), where=width > 0)
        master = (1 - t) * yj[k] + t * yj[k + 1]
        if unit:
            denominator = 1.0
        else:
            denominator = dys[i][inside] ** 2 + (1 - t) ** 2 * dj[k] ** 2 + t**2 * dj[k + 1] ** 2
            denominator = np.where(denominator > 0, denominator, floor)
        terms.append((ys[i][inside] - master) ** 2 / denominator)
    n_points = sum(values.size for values in ys)
    terms = np.concatenate(terms) if terms else np.array([])
    if terms.size < n_points / 2:
        raise FisCollapseError(
            ErrorCode.COLLAPSE,
            f"Rescaled sizes overlap on {terms.size} terms for {n_points} points",
        )
    return float(np.mean(terms))


def _check_sizes(curves: Sequence[ScalingCurve]) -> None:
    if len({c.L for c in curves}) < MIN_SIZES:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES,
            f"Collapse needs >= {MIN_SIZES} distinct sizes, got {len(curves)}",
        )


def _rescale(curves, tc, inv_nu, ratio, kappa):
    xs, ys, dys = [], [], []
    for c in curves:
        factor = float(c.L) ** (-kappa * ratio)
        xs.append(float(c.L) ** (kappa * inv_nu) * (c.control - tc) / tc)
        ys.append(c.values * factor)
        dys.append(c.errors * factor)
    return xs, ys, dys


def collapse_quality(
    curves: Sequence[ScalingCurve],
    tc: float,
    inv_nu: float,
    ratio: float,
    kappa: float = 1.0,
) -> float:
    """
    Collapse quality S of P(L, ε) ~ L^(κ p/ν) P̃(L^(κ/ν) ε) with
    ε = (control - T_c)/T_c and ``ratio`` = p/ν.

    Raises:
        FisInsufficientSizesError: for fewer than three sizes.
        FisCollapseError: if the rescaled sizes barely overlap.
    """
    _check_sizes(curves)
    if tc == 0:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, "Reduced control needs a non-zero critical point"
        )
    return _collapse_score(*_rescale(curves, tc, inv_nu, ratio, kappa))


@dataclass(frozen=True)
class CollapseResult:
    params: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    quality: float
    restarts: int


def _minimize_collapse(
    score: Callable[[np.ndarray], float],
    starts: Sequence[Sequence[float]],
    tie_index: int,
) -> Tuple[np.ndarray, float]:
    def objective(p):
        try:
            value = score(p)
        except (FisCollapseError, FloatingPointError, ZeroDivisionError, ValueError):
            return _PENALTY
        return value if math.isfinite(value) else _PENALTY

    results = []
    for start in starts:
        fit = optimize.minimize(
            objective,
            np.asarray(start, dtype=np.float64),
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000},
        )
        results.append((float(fit.fun), np.asarray(fit.x)))
    lowest = min(s for s, _ in results)
    tied = [(s, x) for s, x in results if s <= lowest * (1 + 1e-9) + 1e-15]
    best = min(tied, key=lambda r: abs(r[1][tie_index]))
    if best[0] >= _PENALTY:
        raise FisCollapseError(
            ErrorCode.COLLAPSE, "Every collapse restart left the overlapping window"
        )
    return best[1], best[0]


def _bootstrap_collapse(score_factory, curves_y, best, n_bootstrap, rng, tie_index):
    samples = []
    for _ in range(n_bootstrap):
        perturbed = [y + dy * rng.standard_normal(y.size) for y, dy in curves_y]
        params, _ = _minimize_collapse(score_factory(perturbed), [best], tie_index)
        samples.append(params)
    return np.asarray(samples).std(axis=0, ddof=1)


def optimize_collapse(
    curves: Sequence[ScalingCurve],
    kappa: float = 1.0,
    tc_range: Optional[Tuple[float, float]] = None,
    inv_nu_range: Tuple[float, float] = (0.25, 2.0),
    ratio_range: Tuple[float, float] = (-1.0, 2.0),
    tc_guess: Optional[float] = None,
    fix_tc: bool = False,
    n_bootstrap: int = 20,
    rng: Optional[np.random.Generator] = None,
) -> CollapseResult:
    """
    Minimise S over (T_c, 1/ν, p/ν) with Nelder-Mead from 20 starts on a
    coarse grid. Ties in S go to the smallest |1/ν|. With ``fix_tc`` only
    (1/ν, p/ν) are free and T_c is ``tc_guess``.
    """
    _check_sizes(curves)
    rng = rng if rng is not None else np.random.default_rng(0)
    controls = np.concatenate([c.control for c in curves])
    lo, hi = tc_range if tc_range is not None else (controls.min(), controls.max())
    tcs = lo + (hi - lo) * np.linspace(0.2, 0.8, 5)
    inv_nus = np.linspace(*inv_nu_range, 4)[1:3]
    ratios = np.linspace(*ratio_range, 4)[1:3]

    def factory(values_list):
        rebuilt = [
            ScalingCurve(c.L, c.control, v, c.errors, c.name) for c, v in zip(curves, values_list)
        ]
        if fix_tc:
            return lambda p: collapse_quality(rebuilt, tc_guess, p[0], p[1], kappa)
        return lambda p: collapse_quality(rebuilt, p[0], p[1], p[2], kappa)

    if fix_tc:
        if tc_guess is None:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "A fixed-T_c collapse needs tc_guess"
            )
        starts = [(w, r) for w in np.linspace(*inv_nu_range, 5) for r in np.linspace(*ratio_range, 4)]
        tie_index = 0
    else:
        starts = [(t, w, r) for t in tcs for w in inv_nus for r in ratios]
        if tc_guess is not None:
            starts.append((tc_guess, float(np.mean(inv_nu_range)), float(np.mean(ratio_range))))
        tie_index = 1

    best, quality = _minimize_collapse(factory([c.values for c in curves]), starts, tie_index)
    stderrs = np.zeros_like(best)
    if n_bootstrap > 1 and all(np.any(c.errors > 0) for c in curves):
        stderrs = _bootstrap_collapse(
            factory, [(c.values, c.errors) for c in curves], best, n_bootstrap, rng, tie_index
        )
    return CollapseResult(tuple(float(p) for p in best), tuple(float(s) for s in stderrs), quality, len(starts))


def kappa_exponent(d: int, q: float) -> float:
    """κ = d / d_u with d_u = 2q when the system lies above d_u, else 1."""
    if d not in (1, 2):
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Dimension must be 1 or 2, got {d}"
        )
    if not q > 0:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Fractional order must be positive, got {q}"
        )
    upper = 2 * q
    return d / upper if upper < d else 1.0


def qfss_rescale(ratio: float, kappa: float) -> float:
    """Effective L-power κ p/ν of a bare ratio p/ν."""
    if kappa < 1:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"kappa must be >= 1, got {kappa}"
        )
    return ratio * kappa


def qfss_bare(effective: float, kappa: float) -> float:
    if kappa < 1:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"kappa must be >= 1, got {kappa}"
        )
    return effective / kappa


_PEAK_RATIOS = {"chi": ("gamma_over_nu", 1.0), "C": ("alpha_over_nu", 1.0), "M": ("beta_over_nu", -1.0)}


def exponent_from_peaks(
    sizes: Sequence[int],
    heights: Sequence[float],
    errors: Optional[Sequence[float]] = None,
    observable: str = "chi",
    kappa: float = 1.0,
) -> ExponentEstimate:
    """
    Log-log slope of peak heights against L: γ/ν from χ, α/ν from C and
    β/ν (sign flipped) from M at T_c. The fitted power is divided by κ.
    """
    if observable not in _PEAK_RATIOS:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Unknown peak observable {observable!r}"
        )
    L = np.asarray(sizes, dtype=np.float64)
    h = np.asarray(heights, dtype=np.float64)
    if L.size < MIN_SIZES:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES,
            f"Peak scaling needs >= {MIN_SIZES} sizes, got {L.size}",
        )
    if np.any(h <= 0):
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Peak heights must be positive: {h.tolist()}"
        )
    sigma = None if errors is None else np.asarray(errors, dtype=np.float64) / h
    params, cov, chi2 = _weighted_linear_fit((np.ones_like(L), np.log(L)), np.log(h), sigma)
    name, sign = _PEAK_RATIOS[observable]
    value = sign * qfss_bare(float(params[1]), kappa)
    stderr = qfss_bare(math.sqrt(max(cov[1, 1], 0.0)), kappa)
    return ExponentEstimate(
        name,
        value,
        stderr,
        window=(float(L.min()), float(L.max())),
        quality=chi2,
        diagnostics={"fitted_power": float(params[1]), "kappa": kappa},
    )


def bare_exponent(
    name: str, ratio: ExponentEstimate, nu: float, nu_stderr: float = 0.0
) -> ExponentEstimate:
    """p = (p/ν) ν with errors added in quadrature."""
    value = ratio.value * nu
    stderr = math.hypot(ratio.stderr * nu, ratio.value * nu_stderr)
    return ExponentEstimate(name, value, stderr, ratio.window, ratio.quality, {"from": ratio.name})


def hyperscaling_alpha(d: int, nu: float, kappa: float = 1.0, nu_stderr: float = 0.0) -> ExponentEstimate:
    value = 2 - d * nu / kappa
    return ExponentEstimate("alpha_hyperscaling", value, d * nu_stderr / kappa)


def compare_alpha(peaks: ExponentEstimate, hyperscaling: ExponentEstimate, z: float = 2.0) -> bool:
    """True if the two α estimates disagree at ``z`` combined standard errors."""
    combined = math.hypot(peaks.stderr, hyperscaling.stderr)
    disagree = abs(peaks.value - hyperscaling.value) > z * combined
    if disagree:
        logger.warning(
            f"alpha from specific-heat peaks ({peaks.value:.3g} ± {peaks.stderr:.2g}) "
            f"disagrees with hyperscaling ({hyperscaling.value:.3g} ± {hyperscaling.stderr:.2g})"
        )
    return disagree


@dataclass(frozen=True)
class CorrelationData:
    L: int
    r: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    errors: Optional[np.ndarray] = field(default=None, repr=False)


def extract_eta(data: Sequence[CorrelationData], d: int) -> ExponentEstimate:
    """
    Joint fit of log G = c - ζ log r + a1 x + a2 x², x = r/L, over
    2 <= r <= L/4 on all sizes; η = ζ - d + 2.

    Raises:
        FisWindowTooSmallError: if fewer than five usable points remain.
    """
    logs_r, xs, logs_g, sigmas = [], [], [], []
    for item in data:
        r = np.asarray(item.r, dtype=np.float64)
        g = np.asarray(item.G, dtype=np.float64)
        err = None if item.errors is None else np.asarray(item.errors, dtype=np.float64)
        mask = (r >= 2) & (r <= item.L / 4)
        positive = mask & (g > 0)
        if np.any(mask & ~positive):
            logger.warning(
                f"Dropping {int(np.sum(mask & ~positive))} non-positive G(r) values for L={item.L}"
            )
        logs_r.append(np.log(r[positive]))
        xs.append(r[positive] / item.L)
        logs_g.append(np.log(g[positive]))
        sigmas.append(None if err is None else err[positive] / g[positive])
    log_r = np.concatenate(logs_r) if logs_r else np.array([])
    if log_r.size < 5:
        raise FisWindowTooSmallError(
            ErrorCode.WINDOW_TOO_SMALL,
            f"Correlation window 2 <= r <= L/4 holds only {log_r.size} usable points",
        )
    x = np.concatenate(xs)
    sigma = None if any(s is None for s in sigmas) else np.concatenate(sigmas)
    params, cov, chi2 = _weighted_linear_fit(
        (np.ones_like(log_r), -log_r, x, x**2), np.concatenate(logs_g), sigma
    )
    zeta = float(params[1])
    return ExponentEstimate(
        "eta",
        zeta - d + 2,
        math.sqrt(max(cov[1, 1], 0.0)),
        window=(2.0, max(item.L for item in data) / 4),
        quality=chi2,
        diagnostics={"decay_power": zeta, "d": d},
    )


@dataclass(frozen=True)
class FieldCurve:
    L: int
    h: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    errors: Optional[np.ndarray] = field(default=None, repr=False)


def extract_delta(
    curves: Sequence[FieldCurve],
    form: FieldScalingForm = FieldScalingForm.GAP,
    nu: Optional[float] = None,
    nu_stderr: float = 0.0,
    a_range: Tuple[float, float] = (0.02, 1.0),
    b_range: Tuple[float, float] = (0.5, 3.0),
    n_bootstrap: int = 20,
    rng: Optional[np.random.Generator] = None,
) -> ExponentEstimate:
    """
    Collapse M L^a against h L^b at T_c (abscissa on a log scale), a = β/ν.
    The gap form reads b = βδ/ν so δ = b/a; the literal form reads b = δ/ν
    so δ = b ν.

    Raises:
        FisNoCrossoverError: with fewer than three distinct non-zero fields.
    """
    form = FieldScalingForm(form)
    if len({c.L for c in curves}) < MIN_SIZES:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES, f"δ collapse needs >= {MIN_SIZES} sizes"
        )
    if form == FieldScalingForm.LITERAL and nu is None:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, "The literal field form needs ν"
        )
    prepared = []
    for c in curves:
        h = np.abs(np.asarray(c.h, dtype=np.float64))
        m = np.asarray(c.M, dtype=np.float64)
        err = np.zeros_like(m) if c.errors is None else np.asarray(c.errors, dtype=np.float64)
        keep = h > 0
        if np.unique(h[keep]).size < 3:
            raise FisNoCrossoverError(
                ErrorCode.NO_CROSSOVER,
                f"Field scan of L={c.L} has fewer than three non-zero fields",
            )
        prepared.append((float(c.L), np.log(h[keep]), m[keep], err[keep]))

    def factory(values_list):
        def score(p):
            a, b = p
            return _collapse_score(
                [lh + b * math.log(L) for L, lh, _, _ in prepared],
                [v * L**a for (L, _, _, _), v in zip(prepared, values_list)],
                [e * L**a for L, _, _, e in prepared],
            )

        return score

    starts = [(a, b) for a in np.linspace(*a_range, 5)[1:4] for b in np.linspace(*b_range, 5)[1:4]]
    best, quality = _minimize_collapse(factory([p[2] for p in prepared]), starts, 0)
    a, b = (float(v) for v in best)
    stderrs = np.zeros(2)
    rng = rng if rng is not None else np.random.default_rng(0)
    if n_bootstrap > 1 and all(np.any(p[3] > 0) for p in prepared):
        stderrs = _bootstrap_collapse(
            factory, [(p[2], p[3]) for p in prepared], best, n_bootstrap, rng, 0
        )
    if form == FieldScalingForm.GAP:
        value = b / a
        stderr = abs(value) * math.hypot(stderrs[1] / b, stderrs[0] / a)
    else:
        value = b * nu
        stderr = math.hypot(stderrs[1] * nu, b * nu_stderr)
    return ExponentEstimate(
        "delta",
        value,
        float(stderr),
        window=(float(min(np.exp(p[1]).min() for p in prepared)), float(max(np.exp(p[1]).max() for p in prepared))),
        quality=quality,
        diagnostics={"form": form.value, "beta_over_nu": a, "field_power": b},
    )


@dataclass(frozen=True)
class HausdorffRow:
    q: float
    eta: float
    eta_stderr: float

    @property
    def hausdorff(self) -> float:
        return 2 - self.eta


@dataclass(frozen=True)
class HausdorffReport:
    rows: List[HausdorffRow]
    slope: float
    slope_stderr: float
    target: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "rows": [
                {"q": r.q, "eta": r.eta, "eta_stderr": r.eta_stderr, "H_D": r.hausdorff, "H_D_stderr": r.eta_stderr}
                for r in self.rows
            ],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "target": self.target,
        }


def hausdorff_report(
    etas: Mapping[float, ExponentEstimate], quantum: bool = False
) -> HausdorffReport:
    """H_D = 2 - η per q and the slope of H_D against q."""
    if len(etas) < 2:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES, "The Hausdorff report needs at least two values of q"
        )
    rows = [HausdorffRow(float(q), e.value, e.stderr) for q, e in sorted(etas.items())]
    q = np.array([r.q for r in rows])
    hd = np.array([r.hausdorff for r in rows])
    err = np.array([r.eta_stderr for r in rows])
    params, cov, _ = _weighted_linear_fit(
        (np.ones_like(q), q), hd, err if np.all(err > 0) else None
    )
    return HausdorffReport(
        rows,
        float(params[1]),
        float(math.sqrt(max(cov[1, 1], 0.0))),
        QUANTUM_HAUSDORFF_SLOPE if quantum else CLASSICAL_HAUSDORFF_SLOPE,
    )


@dataclass(frozen=True)
class AnalysisOptions:
    magnetization: MagnetizationConvention = MagnetizationConvention.ABSOLUTE
    binder: BinderConvention = BinderConvention.SQUARED
    field_form: FieldScalingForm = FieldScalingForm.GAP
    n_resamples: int = 500
    n_bootstrap: int = 50
    crossing_z: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "magnetization", MagnetizationConvention(self.magnetization))
        object.__setattr__(self, "binder", BinderConvention(self.binder))
        object.__setattr__(self, "field_form", FieldScalingForm(self.field_form))
        if self.n_resamples < 2 or self.n_bootstrap < 0:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "Resample counts must be positive"
            )

    def manifest_fields(self) -> Dict[str, object]:
        return {
            "magnetization": self.magnetization.value,
            "binder": self.binder.value,
            "field_form": self.field_form.value,
            "n_resamples": self.n_resamples,
            "n_bootstrap": self.n_bootstrap,
            "crossing_z": self.crossing_z,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PointEstimates:
    """Observable estimates of one record: size ``L`` at control value ``control``."""

    L: int
    control: float
    observables: ObservableSet


def scaling_curves(points: Sequence[PointEstimates], name: str) -> List[ScalingCurve]:
    """One curve per size with enough control points; sparser sizes are skipped."""
    by_size: Dict[int, List[PointEstimates]] = {}
    for p in points:
        by_size.setdefault(p.L, []).append(p)
    curves = []
    for L, group in sorted(by_size.items()):
        if len(group) < MIN_CONTROL_POINTS:
            logger.warning(
                f"Skipping L={L} for {name}: {len(group)} control points, "
                f"{MIN_CONTROL_POINTS} needed"
            )
            continue
        curves.append(
            ScalingCurve(
                L,
                [p.control for p in group],
                [p.observables[name].value for p in group],
                [p.observables[name].stderr for p in group],
                name,
            )
        )
    return curves


def _attempt(errors: Dict[str, str], name: str, step: Callable, *args, **kwargs):
    try:
        return step(*args, **kwargs)
    except (FisAnalysisError, FisInvalidArgValueError) as e:
        logger.warning(f"{name}: {e}")
        errors[name] = str(e)
        return None


def _correlation_data(points: Sequence[PointEstimates], critical: float) -> List[CorrelationData]:
    nearest: Dict[int, PointEstimates] = {}
    for p in points:
        best = nearest.get(p.L)
        if best is None or abs(p.control - critical) < abs(best.control - critical):
            nearest[p.L] = p
    data = []
    for L, p in sorted(nearest.items()):
        if not p.observables.correlations:
            continue
        data.append(
            CorrelationData(
                L,
                np.array([g.r for g in p.observables.correlations]),
                np.array([g.value for g in p.observables.correlations]),
                np.array([g.stderr for g in p.observables.correlations]),
            )
        )
    return data


def analyze_blocks(
    points: Sequence[PointEstimates],
    q: float,
    d: int,
    control: str = "temperature",
    quantum: bool = False,
    field_points: Sequence[PointEstimates] = (),
    options: AnalysisOptions = AnalysisOptions(),
) -> Dict[str, object]:
    """
    Full finite-size-scaling pipeline for one value of q: Binder crossings,
    χ peaks and their extrapolation, κ, χ collapse (T_c, ν, γ/ν), peak-height
    ratios, hyperscaling α, η at the critical point, δ from a field scan and
    H_D. A step that cannot be carried out is reported under ``errors``; the
    absence of any Binder crossing ends the analysis with
    ``transition_detected`` false.

    Raises:
        FisInsufficientSizesError: with fewer than three scanned sizes.
    """
    rng = np.random.default_rng(options.seed)
    critical_key = "g_c" if control == "g" else "T_c"
    binder_curves = scaling_curves(points, "U")
    if len(binder_curves) < MIN_SIZES:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES,
            f"q={q:g}: {len(binder_curves)} sizes with a full scan, {MIN_SIZES} needed",
        )
    sizes = [c.L for c in binder_curves]
    errors: Dict[str, str] = {}
    report: Dict[str, object] = {
        "q": q,
        "d": d,
        "control": control,
        "sizes": sizes,
        "errors": errors,
    }

    binder = binder_crossing(binder_curves, options.crossing_z)
    report["transition_detected"] = binder.transition_detected
    report["binder"] = {
        "method": binder.method,
        critical_key: binder.tc,
        "stderr": binder.tc_stderr,
        "crossings": [
            {"sizes": list(c.sizes), "location": c.location, "stderr": c.stderr}
            for c in binder.crossings
        ],
    }
    magnetization_curves = scaling_curves(points, "M")
    report["magnetization"] = {
        str(c.L): {"control": c.control.tolist(), "M": c.values.tolist()}
        for c in magnetization_curves
    }
    if not binder.transition_detected:
        logger.info(f"q={q:g}: no Binder crossing, no transition detected")
        return report

    chi_curves = scaling_curves(points, "chi")
    peaks = []
    for curve in chi_curves:
        peak = _attempt(errors, f"chi_peak_L{curve.L}", locate_peak, curve, rng=rng)
        if peak is not None:
            peaks.append(peak)
    report["chi_peaks"] = [
        {
            "L": p.L,
            "location": p.location,
            "stderr": p.stderr,
            "height": p.height,
            "height_stderr": p.height_stderr,
        }
        for p in peaks
    ]
    shift = None
    if len(peaks) >= MIN_SIZES:
        shift = _attempt(
            errors,
            "extrapolation",
            extrapolate_tc,
            [p.L for p in peaks],
            [p.location for p in peaks],
            [p.stderr for p in peaks],
            options.n_bootstrap,
            rng,
        )
    if shift is not None:
        report["extrapolation"] = {
            critical_key: shift.tc,
            "stderr": shift.tc_stderr,
            "inv_nu": shift.inv_nu,
            "inv_nu_stderr": shift.inv_nu_stderr,
            "amplitude": shift.amplitude,
        }

    kappa = kappa_exponent(d, q)
    if kappa > 1:
        logger.info(f"q={q:g}, d={d}: above the upper critical dimension, kappa={kappa:g}")
    exponents: Dict[str, ExponentEstimate] = {
        "kappa": ExponentEstimate("kappa", kappa, 0.0, diagnostics={"upper_critical_dimension": 2 * q})
    }

    critical = binder.tc
    critical_stderr = binder.tc_stderr
    collapse = _attempt(
        errors,
        "chi_collapse",
        optimize_collapse,
        chi_curves,
        kappa=kappa,
        tc_guess=critical,
        n_bootstrap=options.n_bootstrap,
        rng=rng,
    )
    nu = nu_stderr = None
    if collapse is not None:
        tc_fit, inv_nu, ratio = collapse.params
        tc_err, inv_nu_err, ratio_err = collapse.stderrs
        nu = 1.0 / inv_nu
        nu_stderr = inv_nu_err / inv_nu**2
        report["collapse"] = {
            critical_key: tc_fit,
            "stderr": tc_err,
            "inv_nu": inv_nu,
            "gamma_over_nu": ratio,
            "gamma_over_nu_stderr": ratio_err,
            "S": collapse.quality,
        }
        exponents["nu"] = ExponentEstimate("nu", nu, nu_stderr, quality=collapse.quality)
    elif shift is not None:
        nu = 1.0 / shift.inv_nu
        nu_stderr = shift.inv_nu_stderr / shift.inv_nu**2
        exponents["nu"] = ExponentEstimate("nu", nu, nu_stderr, diagnostics={"from": "shift"})
    report[critical_key] = {"value": critical, "stderr": critical_stderr, "from": "binder"}

    ratios: Dict[str, ExponentEstimate] = {}
    if len(peaks) >= MIN_SIZES:
        ratio = _attempt(
            errors,
            "gamma_over_nu",
            exponent_from_peaks,
            [p.L for p in peaks],
            [p.height for p in peaks],
            [p.height_stderr for p in peaks] if all(p.height_stderr > 0 for p in peaks) else None,
            "chi",
            kappa,
        )
        if ratio is not None:
            ratios["gamma_over_nu"] = ratio
    heat_peaks = [
        p
        for c in scaling_curves(points, "C")
        if (p := _attempt(errors, f"C_peak_L{c.L}", locate_peak, c, rng=rng)) is not None
    ]
    if len(heat_peaks) >= MIN_SIZES:
        ratio = _attempt(
            errors,
            "alpha_over_nu",
            exponent_from_peaks,
            [p.L for p in heat_peaks],
            [p.height for p in heat_peaks],
            None,
            "C",
            kappa,
        )
        if ratio is not None:
            ratios["alpha_over_nu"] = ratio
    at_critical = [
        (c.L, *c.at(critical))
        for c in magnetization_curves
        if c.control[0] <= critical <= c.control[-1]
    ]
    if len(at_critical) >= MIN_SIZES:
        ratio = _attempt(
            errors,
            "beta_over_nu",
            exponent_from_peaks,
            [row[0] for row in at_critical],
            [row[1] for row in at_critical],
            [row[2] for row in at_critical] if all(row[2] > 0 for row in at_critical) else None,
            "M",
            kappa,
        )
        if ratio is not None:
            ratios["beta_over_nu"] = ratio

    if nu is not None:
        for bare, ratio_name in (("gamma", "gamma_over_nu"), ("beta", "beta_over_nu"), ("alpha", "alpha_over_nu")):
            if ratio_name in ratios:
                exponents[bare] = bare_exponent(bare, ratios[ratio_name], nu, nu_stderr)
        alpha_h = hyperscaling_alpha(d, nu, kappa, nu_stderr)
        exponents["alpha_hyperscaling"] = alpha_h
        if "alpha" in exponents:
            report["alpha_disagreement"] = compare_alpha(exponents["alpha"], alpha_h)

    correlation_data = _correlation_data(points, critical)
    eta = _attempt(errors, "eta", extract_eta, correlation_data, d) if correlation_data else None
    if eta is not None:
        exponents["eta"] = eta
        exponents["H_D"] = ExponentEstimate(
            "H_D", 2 - eta.value, eta.stderr, eta.window, eta.quality
        )

    if field_points:
        field_curves = []
        by_size: Dict[int, List[PointEstimates]] = {}
        for p in field_points:
            by_size.setdefault(p.L, []).append(p)
        for L, group in sorted(by_size.items()):
            field_curves.append(
                FieldCurve(
                    L,
                    np.array([p.control for p in group]),
                    np.array([p.observables["M"].value for p in group]),
                    np.array([p.observables["M"].stderr for p in group]),
                )
            )
        delta = _attempt(
            errors,
            "delta",
            extract_delta,
            field_curves,
            options.field_form,
            nu,
            nu_stderr or 0.0,
            n_bootstrap=options.n_bootstrap,
            rng=rng,
        )
        if delta is not None:
            exponents["delta"] = delta

    report["ratios"] = {name: e.to_dict() for name, e in ratios.items()}
    report["exponents"] = {name: e.to_dict() for name, e in exponents.items()}
    report["quantum"] = quantum
    return report
