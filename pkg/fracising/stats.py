"""
Estimators for the thermodynamic observables of a measurement record, with
binning-analysis autocorrelation times and block bootstrap error bars.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .enums import BinderConvention, ErrorCode, MagnetizationConvention
from .errors import FisInsufficientSamplesError, FisTooFewBlocksError

logger = logging.getLogger("fracising")

MIN_SAMPLES = 100
MIN_BINS = 64
MIN_BLOCKS = 20
MAX_BLOCKS = 100
DEFAULT_RESAMPLES = 500

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True)
class TauEstimate:
    """
    Integrated autocorrelation time in units of the series spacing, with
    τ_int = 0.5 for uncorrelated data. ``flagged`` names the reason the
    estimate is unreliable, if any.
    """

    tau: float
    n_samples: int
    bin_size: int
    flagged: Optional[str] = None
    bin_sizes: np.ndarray = field(default=None, repr=False)
    bin_taus: np.ndarray = field(default=None, repr=False)

    @property
    def n_effective(self) -> float:
        return self.n_samples / (2 * self.tau)


def autocorrelation_time(series) -> TauEstimate:
    """
    Binning analysis: τ_B = B Var(bin means) / (2 Var(x)) for bin sizes
    B = 1, 2, 4, ... while at least 64 bins remain. The plateau is the first
    doubling whose relative change stays below the statistical resolution of
    the bin variance, max(5%, 2 sqrt(2 / n_bins)).

    Raises:
        FisInsufficientSamplesError: for fewer than 100 samples.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if n < MIN_SAMPLES:
        raise FisInsufficientSamplesError(
            ErrorCode.INSUFFICIENT_SAMPLES,
            f"Autocorrelation analysis needs >= {MIN_SAMPLES} samples, got {n}",
        )
    variance = x.var(ddof=1)
    if not variance > 1e-300 or variance <= (np.finfo(float).eps * np.abs(x).max()) ** 2:
        return TauEstimate(tau=0.5, n_samples=n, bin_size=1, flagged="zero variance")

    sizes = []
    taus = []
    bin_size = 1
    while n // bin_size >= MIN_BINS:
        n_bins = n // bin_size
        means = x[: n_bins * bin_size].reshape(n_bins, bin_size).mean(axis=1)
        sizes.append(bin_size)
        taus.append(0.5 * bin_size * means.var(ddof=1) / variance)
        if len(taus) > 1:
            change = abs(taus[-1] - taus[-2]) / taus[-1]
            if change < max(0.05, 2 * math.sqrt(2 / n_bins)):
                return TauEstimate(
                    tau=taus[-1],
                    n_samples=n,
                    bin_size=bin_size,
                    bin_sizes=np.array(sizes),
                    bin_taus=np.array(taus),
                )
        bin_size *= 2

    logger.warning(
        f"Binning analysis of {n} samples found no plateau up to bin size "
        f"{sizes[-1]}; using tau_int={taus[-1]:.3g}"
    )
    return TauEstimate(
        tau=max(taus[-1], 0.5),
        n_samples=n,
        bin_size=sizes[-1],
        flagged="no plateau",
        bin_sizes=np.array(sizes),
        bin_taus=np.array(taus),
    )


def block_means(data, n_blocks: int) -> np.ndarray:
    """Means over ``n_blocks`` equal consecutive blocks; a remainder is dropped."""
    data = np.asarray(data, dtype=np.float64)
    length = data.shape[0] // n_blocks
    if length < 1:
        raise FisTooFewBlocksError(
            ErrorCode.TOO_FEW_BLOCKS,
            f"Cannot split {data.shape[0]} samples into {n_blocks} blocks",
        )
    trimmed = data[: n_blocks * length]
    return trimmed.reshape((n_blocks, length) + data.shape[1:]).mean(axis=1)


def bootstrap(
    blocks,
    estimator: Callable[[np.ndarray], ArrayOrFloat],
    n_resamples: int = DEFAULT_RESAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ArrayOrFloat, ArrayOrFloat]:
    """
    Block bootstrap. ``estimator`` maps the mean over blocks (a scalar or a
    vector of block-averaged columns) to a scalar or array.

    Returns:
        The estimator on all blocks and the standard deviation of its
        resampled values.

    Raises:
        FisTooFewBlocksError: for fewer than 20 blocks.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    n_blocks = blocks.shape[0]
    if n_blocks < MIN_BLOCKS:
        raise FisTooFewBlocksError(
            ErrorCode.TOO_FEW_BLOCKS,
            f"Block bootstrap needs >= {MIN_BLOCKS} blocks, got {n_blocks}",
        )
    rng = rng if rng is not None else np.random.default_rng()
    value = estimator(blocks.mean(axis=0))
    draws = rng.integers(0, n_blocks, size=(n_resamples, n_blocks))
    resampled = np.array([estimator(blocks[d].mean(axis=0)) for d in draws])
    stderr = resampled.std(axis=0, ddof=1)
    if np.ndim(value) == 0:
        return float(value), float(stderr)
    return np.asarray(value), np.asarray(stderr)


@dataclass(frozen=True)
class ObservableEstimate:
    name: str
    value: float
    stderr: float
    tau_int: float
    n_effective: float
    r: Optional[int] = None

    def row(self) -> Tuple:
        name = self.name if self.r is None else f"{self.name}({self.r})"
        return name, self.value, self.stderr, self.tau_int, self.n_effective


@dataclass(frozen=True)
class ObservableSet:
    estimates: Dict[str, ObservableEstimate]
    correlations: List[ObservableEstimate]
    beta: float
    n_sites: int
    magnetization: MagnetizationConvention
    binder: BinderConvention

    def __getitem__(self, name: str) -> ObservableEstimate:
        return self.estimates[name]

    def rows(self) -> List[Tuple]:
        return [e.row() for e in self.estimates.values()] + [
            g.row() for g in self.correlations
        ]


def magnetization_value(moments: np.ndarray, convention: MagnetizationConvention) -> ArrayOrFloat:
    # moments columns: E, E2 (centred), m, |m|, m2, m4
    return moments[3] if convention == MagnetizationConvention.ABSOLUTE else moments[2]


def binder_value(m2: ArrayOrFloat, m4: ArrayOrFloat, convention: BinderConvention) -> ArrayOrFloat:
    if convention == BinderConvention.LITERAL:
        return 1 - m4 / (3 * m2)
    return 1 - m4 / (3 * m2**2)


def estimate_observables(
    record,
    beta: Optional[float] = None,
    magnetization: MagnetizationConvention = MagnetizationConvention.ABSOLUTE,
    binder: BinderConvention = BinderConvention.SQUARED,
    n_resamples: int = DEFAULT_RESAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> ObservableSet:
    """
    M, χ = N(⟨m²⟩ - M²), C = β²(⟨E²⟩ - ⟨E⟩²)/N, U and G(r) = ⟨c(r)⟩ - ⟨m⟩²
    for one measurement record, N being the number of spins. Errors come
    from a block bootstrap with blocks at least 2 τ_int long.

    Raises:
        FisInsufficientSamplesError: for fewer than 100 measurements.
        FisTooFewBlocksError: if fewer than 20 blocks of length 2 τ_int fit.
    """
    magnetization = MagnetizationConvention(magnetization)
    binder = BinderConvention(binder)
    beta = record.beta if beta is None else beta
    n = len(record)
    if n < MIN_SAMPLES:
        raise FisInsufficientSamplesError(
            ErrorCode.INSUFFICIENT_SAMPLES,
            f"Observable estimates need >= {MIN_SAMPLES} measurements, got {n}",
        )
    n_sites = record.geometry.n_sites
    rng = rng if rng is not None else np.random.default_rng(record.seed)

    centred = record.E - record.E.mean()
    columns = np.column_stack(
        [centred, centred**2, record.m, record.abs_m, record.m2, record.m4]
    )
    taus = {
        "E": autocorrelation_time(record.E),
        "m": autocorrelation_time(record.m),
        "abs_m": autocorrelation_time(record.abs_m),
        "m2": autocorrelation_time(record.m2),
        "m4": autocorrelation_time(record.m4),
    }
    longest = max(t.tau for t in taus.values())
    block_length = max(1, math.ceil(2 * longest))
    n_blocks = min(n // block_length, MAX_BLOCKS)
    if n_blocks < MIN_BLOCKS:
        raise FisTooFewBlocksError(
            ErrorCode.TOO_FEW_BLOCKS,
            f"{n} measurements give only {n_blocks} blocks of length {block_length} "
            f"(tau_int={longest:.3g}); at least {MIN_BLOCKS} are needed",
        )
    blocks = block_means(columns, n_blocks)
    mean_energy = record.E.mean()

    def observables(moments: np.ndarray) -> np.ndarray:
        m_value = magnetization_value(moments, magnetization)
        variance_e = moments[1] - moments[0] ** 2
        return np.array(
            [
                m_value,
                max(n_sites * (moments[4] - m_value**2), 0.0),
                max(beta**2 * variance_e / n_sites, 0.0),
                binder_value(moments[4], moments[5], binder),
                mean_energy + moments[0],
                moments[4],
                moments[5],
            ]
        )

    values, errors = bootstrap(blocks, observables, n_resamples, rng)
    primary = {
        "M": "abs_m" if magnetization == MagnetizationConvention.ABSOLUTE else "m",
        "chi": "m2",
        "C": "E",
        "U": "m4",
        "E": "E",
        "m2": "m2",
        "m4": "m4",
    }
    estimates = {}
    for i, (name, series) in enumerate(primary.items()):
        tau = taus[series]
        estimates[name] = ObservableEstimate(
            name, float(values[i]), float(errors[i]), tau.tau, tau.n_effective
        )

    return ObservableSet(
        estimates=estimates,
        correlations=_correlation_estimates(record, taus["m"], n_resamples, rng),
        beta=beta,
        n_sites=n_sites,
        magnetization=magnetization,
        binder=binder,
    )


def _correlation_estimates(record, tau: TauEstimate, n_resamples, rng) -> List[ObservableEstimate]:
    corr = record.correlation_blocks
    if corr is None:
        return []
    if corr.shape[0] < MIN_BLOCKS:
        raise FisTooFewBlocksError(
            ErrorCode.TOO_FEW_BLOCKS,
            f"Correlation accumulator has {corr.shape[0]} blocks; at least {MIN_BLOCKS} are needed",
        )
    m_blocks = np.array([record.m[lo:hi].mean() for lo, hi in record.block_bounds])
    blocks = np.column_stack([m_blocks, corr])

    def connected(means: np.ndarray) -> np.ndarray:
        return means[1:] - means[0] ** 2

    values, errors = bootstrap(blocks, connected, n_resamples, rng)
    return [
        ObservableEstimate("G", float(v), float(e), tau.tau, tau.n_effective, r=r)
        for r, (v, e) in enumerate(zip(values, errors))
    ]
