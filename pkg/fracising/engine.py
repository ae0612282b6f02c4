"""
Markov-chain Monte Carlo for the classical fractional Ising model: single
site Metropolis sweeps, long-range single-cluster updates, reproducible runs
and replica-parallel campaigns over (q, L, control) grids.
"""

import concurrent.futures
import functools
import hashlib
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .couplings import (
    DEFAULT_TAIL_TOLERANCE,
    PeriodicCouplingTable,
    build_table,
    periodic_table,
)
from .enums import Algorithm, ControlKind, ErrorCode, GeometryKind
from .errors import (
    FisFieldWithClusterError,
    FisInvalidArgValueError,
    FisIoError,
    FisSizeCapError,
)
from .lattice import (
    ClassicalModel,
    Geometry,
    SpinConfiguration,
    enumeration_energies,
)
from .stats import MIN_BLOCKS, autocorrelation_time

logger = logging.getLogger("fracising")

DEFAULT_CORRELATION_BLOCKS = 64
ADAPTIVE_BURN_IN = 1000
ADAPTIVE_PILOT = 1000
MIN_EQUILIBRATION = 100
MAX_TRANSITION_SITES = 6
OBSERVABLE_COLUMNS = ("E", "m", "abs_m", "m2", "m4")


@dataclass(frozen=True)
class RunSpec:
    """
    One Monte Carlo replica. ``n_equil`` of ``None`` selects adaptive
    equilibration; one step of the mixed schedule is ``cluster_updates``
    cluster updates followed by one Metropolis sweep.
    """

    model: ClassicalModel
    geometry: Geometry
    beta: float
    n_measure: int
    n_equil: Optional[int] = None
    thin: int = 1
    algorithm: Algorithm = Algorithm.MIXED
    cluster_updates: int = 1
    seed: int = 0
    correlation_blocks: int = DEFAULT_CORRELATION_BLOCKS

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        self.model.check_geometry(self.geometry)
        if not self.beta > 0:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"beta must be positive, got {self.beta}"
            )
        if self.n_measure < 1 or self.thin < 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"n_measure and thin must be >= 1, got {self.n_measure} and {self.thin}",
            )
        if self.n_equil is not None and self.n_equil < 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"n_equil must be >= 1, got {self.n_equil}"
            )
        if self.cluster_updates < 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"cluster_updates must be >= 1, got {self.cluster_updates}",
            )
        if self.correlation_blocks < MIN_BLOCKS:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"correlation_blocks must be >= {MIN_BLOCKS}, got {self.correlation_blocks}",
            )


def block_bounds(n_measure: int, n_blocks: int) -> List[Tuple[int, int]]:
    """Consecutive measurement ranges used for the correlation blocks."""
    sizes = [len(part) for part in np.array_split(np.arange(n_measure), n_blocks)]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


@dataclass
class MeasurementRecord:
    """
    Per-measurement observables of one replica. ``correlation_blocks[b, r]``
    is the mean of c(r) = (1/N) Σ σ(x) σ(x + r) over measurement block ``b``.
    """

    geometry: Geometry
    beta: float
    sweeps: np.ndarray = field(repr=False)
    observables: np.ndarray = field(repr=False)
    correlation_blocks: Optional[np.ndarray] = field(default=None, repr=False)
    seed: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)
    final_config: Optional[SpinConfiguration] = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.observables.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.observables[:, OBSERVABLE_COLUMNS.index(name)]

    @property
    def E(self) -> np.ndarray:
        return self.column("E")

    @property
    def m(self) -> np.ndarray:
        return self.column("m")

    @property
    def abs_m(self) -> np.ndarray:
        return self.column("abs_m")

    @property
    def m2(self) -> np.ndarray:
        return self.column("m2")

    @property
    def m4(self) -> np.ndarray:
        return self.column("m4")

    @property
    def block_bounds(self) -> List[Tuple[int, int]]:
        if self.correlation_blocks is None:
            return []
        return block_bounds(len(self), self.correlation_blocks.shape[0])

    @property
    def correlations(self) -> Optional[np.ndarray]:
        """Mean of c(r) over all measurements."""
        if self.correlation_blocks is None:
            return None
        sizes = np.array([hi - lo for lo, hi in self.block_bounds], dtype=np.float64)
        return sizes @ self.correlation_blocks / sizes.sum()


def acceptance_probability(beta: float, delta_e: float) -> float:
    return 1.0 if delta_e <= 0 else math.exp(-beta * delta_e)


def bond_probability(beta: float, j0: float, coupling: float) -> float:
    """1 - exp(-2 β J0 J_L(r)) for aligned spins."""
    return -math.expm1(-2.0 * beta * j0 * coupling) if coupling > 0 else 0.0


def metropolis_sweep(
    config: SpinConfiguration,
    model: ClassicalModel,
    beta: float,
    rng: kernels.KernelRng,
) -> int:
    """N single-site proposals in random order; updates ``config`` in place."""
    if not beta > 0:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"beta must be positive, got {beta}"
        )
    return kernels.metropolis_sweep(
        model.kernel(config.geometry), config.spins, beta, rng
    )


def cluster_update(
    config: SpinConfiguration,
    model: ClassicalModel,
    beta: float,
    rng: kernels.KernelRng,
) -> int:
    """One long-range single-cluster flip; updates ``config`` in place."""
    if model.h != 0:
        raise FisFieldWithClusterError(
            ErrorCode.FIELD_WITH_CLUSTER,
            f"Cluster updates require h = 0, got h = {model.h}",
        )
    if not beta > 0:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"beta must be positive, got {beta}"
        )
    return kernels.cluster_update(model.kernel(config.geometry), config.spins, beta, rng)


def state_index(spins: np.ndarray) -> int:
    """Index of a configuration in enumeration order (bit n set if site n is down)."""
    return int(np.sum((np.asarray(spins) < 0) << np.arange(len(spins), dtype=np.int64)))


def metropolis_transition_matrix(
    model: ClassicalModel, geometry: Geometry, beta: float
) -> np.ndarray:
    """
    Exact one-sweep transition matrix, averaged over all visiting orders.
    ``P[a, b]`` is the probability of moving from state ``a`` to ``b``.
    """
    n = geometry.n_sites
    if n > MAX_TRANSITION_SITES:
        raise FisSizeCapError(
            ErrorCode.SIZE_CAP,
            f"Transition matrices are limited to {MAX_TRANSITION_SITES} spins, got {n}",
        )
    energies = enumeration_energies(model, geometry)
    states = np.arange(1 << n)
    singles = []
    for site in range(n):
        flipped = states ^ (1 << site)
        accept = np.minimum(1.0, np.exp(-beta * (energies[flipped] - energies)))
        matrix = np.diag(1.0 - accept)
        matrix[states, flipped] += accept
        singles.append(matrix)

    total = np.zeros((1 << n, 1 << n))
    orders = list(itertools.permutations(range(n)))
    for order in orders:
        total += functools.reduce(np.matmul, (singles[s] for s in order))
    return total / len(orders)


def _effective_algorithm(spec: RunSpec) -> Algorithm:
    if spec.model.h == 0 or spec.algorithm == Algorithm.METROPOLIS:
        return spec.algorithm
    if spec.algorithm == Algorithm.CLUSTER:
        raise FisFieldWithClusterError(
            ErrorCode.FIELD_WITH_CLUSTER,
            f"Cluster-only schedule requested with h = {spec.model.h}",
        )
    logger.warning(
        f"Cluster updates disabled for h = {spec.model.h}: using Metropolis sweeps only"
    )
    return Algorithm.METROPOLIS


def _equilibrate(spec, kernel_model, spins, schedule, rng) -> int:
    if spec.n_equil is not None:
        kernels.step(kernel_model, spins, spec.beta, schedule, rng, spec.n_equil)
        return spec.n_equil

    kernels.step(kernel_model, spins, spec.beta, schedule, rng, ADAPTIVE_BURN_IN)
    pilot, _, _ = kernels.sample(
        kernel_model,
        spins,
        spec.beta,
        schedule,
        rng,
        ADAPTIVE_PILOT,
        1,
        np.zeros(spec.geometry.lx // 2 + 1),
    )
    tau = max(
        autocorrelation_time(pilot[:, 0]).tau, autocorrelation_time(pilot[:, 2]).tau
    )
    target = int(math.ceil(10 * max(tau, MIN_EQUILIBRATION)))
    done = ADAPTIVE_BURN_IN + ADAPTIVE_PILOT
    extra = max(0, target - done)
    if extra:
        kernels.step(kernel_model, spins, spec.beta, schedule, rng, extra)
    logger.info(
        f"Adaptive equilibration: pilot tau_int={tau:.3g}, "
        f"target {target} steps, {done + extra} steps run"
    )
    return done + extra


def run(spec: RunSpec, initial: Optional[SpinConfiguration] = None) -> MeasurementRecord:
    """
    Equilibrate, then take ``n_measure`` measurements ``thin`` steps apart.
    The record is a deterministic function of ``spec`` (and ``initial``).
    """
    algorithm = _effective_algorithm(spec)
    rng = kernels.KernelRng(spec.seed)
    if initial is not None:
        spec.model.check_geometry(initial.geometry)
        config = initial.copy()
    else:
        config = SpinConfiguration.random(spec.geometry, rng)
    kernel_model = spec.model.kernel(spec.geometry)
    schedule = kernels.KernelSchedule(algorithm, spec.cluster_updates)
    spins = config.spins

    n_equil = _equilibrate(spec, kernel_model, spins, schedule, rng)

    r_max = spec.geometry.lx // 2
    bounds = block_bounds(spec.n_measure, spec.correlation_blocks)
    observables = []
    correlation_blocks = np.zeros((len(bounds), r_max + 1))
    accepted = 0
    clustered = 0
    for b, (lo, hi) in enumerate(bounds):
        accumulator = np.zeros(r_max + 1)
        rows, acc, clus = kernels.sample(
            kernel_model,
            spins,
            spec.beta,
            schedule,
            rng,
            hi - lo,
            spec.thin,
            accumulator,
        )
        observables.append(rows)
        correlation_blocks[b] = accumulator / (hi - lo)
        accepted += acc
        clustered += clus

    n_steps = spec.n_measure * spec.thin
    metadata = {
        "algorithm": algorithm.name.lower(),
        "n_equil": n_equil,
        "rng": kernels.RNG_ALGORITHM,
    }
    if algorithm != Algorithm.CLUSTER:
        metadata["acceptance_rate"] = accepted / (n_steps * spec.geometry.n_sites)
    if algorithm != Algorithm.METROPOLIS:
        metadata["mean_cluster_size"] = clustered / (n_steps * spec.cluster_updates)

    return MeasurementRecord(
        geometry=spec.geometry,
        beta=spec.beta,
        sweeps=n_equil + spec.thin * np.arange(1, spec.n_measure + 1, dtype=np.int64),
        observables=np.concatenate(observables),
        correlation_blocks=correlation_blocks,
        seed=spec.seed,
        metadata=metadata,
        final_config=config,
    )


@dataclass(frozen=True)
class GridPoint:
    """
    One campaign point. ``value`` is the temperature, transverse field or
    longitudinal field according to ``control``; ``dtau`` is set for
    Trotter-mapped points only.
    """

    q: float
    L: int
    control: ControlKind
    value: float
    dtau: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "control", ControlKind(self.control))

    @property
    def key(self) -> Tuple:
        return (
            float(self.q),
            None if self.dtau is None else float(self.dtau),
            int(self.L),
            self.control.value,
            float(self.value),
        )

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.key).encode("utf-8")).hexdigest()

    @property
    def name(self) -> str:
        return f"point-{self.digest[:12]}"


def derive_seed(master_seed: int, point: GridPoint) -> int:
    """64-bit replica seed from the master seed and the point identity."""
    digest = bytes.fromhex(point.digest)
    spawn_key = tuple(
        int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)
    )
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=spawn_key)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@functools.lru_cache(maxsize=64)
def cached_periodic_table(q: float, L: int, tail_tolerance: float) -> PeriodicCouplingTable:
    return periodic_table(build_table(q, L), L, tail_tolerance)


@dataclass(frozen=True)
class EngineOptions:
    n_measure: int = 10000
    n_equil: Optional[int] = None
    thin: int = 1
    algorithm: Algorithm = Algorithm.MIXED
    cluster_updates: int = 1
    correlation_blocks: int = DEFAULT_CORRELATION_BLOCKS

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


@dataclass(frozen=True)
class ClassicalPointBuilder:
    """
    Builds the run of a classical campaign point. On a chain the spatial
    couplings are the fractional ones; ``classical_2d`` adds isotropic
    nearest-neighbour bonds of strength J0 along the second direction. With a
    field control the temperature is ``temperature``.
    """

    engine: EngineOptions
    kind: GeometryKind = GeometryKind.CHAIN
    j0: float = 1.0
    h: float = 0.0
    temperature: Optional[float] = None
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    def __call__(self, point: GridPoint, seed: int) -> RunSpec:
        couplings = cached_periodic_table(point.q, point.L, self.tail_tolerance)
        if point.control == ControlKind.TEMPERATURE:
            temperature, h = point.value, self.h
        elif point.control == ControlKind.FIELD:
            if self.temperature is None:
                raise FisInvalidArgValueError(
                    ErrorCode.INVALID_ARG_VALUE, "Field scans need a fixed temperature"
                )
            temperature, h = self.temperature, point.value
        else:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"Classical campaigns cannot scan {point.control.value}",
            )
        if self.kind == GeometryKind.GRID:
            model = ClassicalModel(couplings, self.j0, h, ktau=self.j0)
            geometry = Geometry.grid(point.L, point.L)
        else:
            model = ClassicalModel(couplings, self.j0, h)
            geometry = Geometry.chain(point.L)
        return RunSpec(
            model=model,
            geometry=geometry,
            beta=1.0 / temperature,
            n_measure=self.engine.n_measure,
            n_equil=self.engine.n_equil,
            thin=self.engine.thin,
            algorithm=self.engine.algorithm,
            cluster_updates=self.engine.cluster_updates,
            seed=seed,
            correlation_blocks=self.engine.correlation_blocks,
        )


@dataclass
class CampaignResult:
    points: List[GridPoint]
    records: Dict[GridPoint, MeasurementRecord] = field(default_factory=dict)
    failures: Dict[GridPoint, str] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def succeeded(self) -> bool:
        return not self.failures


def _run_point(
    builder: Callable[[GridPoint, int], RunSpec], point: GridPoint, master_seed: int
) -> MeasurementRecord:
    spec = builder(point, derive_seed(master_seed, point))
    record = run(spec)
    record.metadata.update(
        q=point.q, L=point.L, control=point.control.value, value=point.value
    )
    if point.dtau is not None:
        record.metadata["dtau"] = point.dtau
    return record


def campaign(
    points: Sequence[GridPoint],
    builder: Callable[[GridPoint, int], RunSpec],
    master_seed: int,
    jobs: int = 1,
    store=None,
    manifest_extra: Optional[Dict[str, object]] = None,
) -> CampaignResult:
    """
    One independent replica per grid point, seeded from the point identity.
    A failing point is logged and reported in the result; the other points
    still run. With a ``store`` every record, its correlation file and a
    checkpoint are written, followed by the manifest. A point whose files
    cannot be written keeps its record but is reported as failed.
    """
    points = list(dict.fromkeys(points))
    if not points:
        raise FisInvalidArgValueError(ErrorCode.INVALID_ARG_VALUE, "Campaign grid is empty")
    logger.info(f"Campaign of {len(points)} points with {jobs} worker(s)")
    start = time.perf_counter()
    result = CampaignResult(points=points)

    def collect(point: GridPoint, outcome: Callable[[], MeasurementRecord]) -> None:
        try:
            record = outcome()
        except Exception as e:
            logger.error(f"Point {point.key} failed: {e}")
            result.failures[point] = str(e)
            return
        logger.debug(f"Point {point.key} finished ({len(record)} measurements)")
        result.records[point] = record
        if store is None:
            return
        try:
            store.write_record(point, record)
        except FisIoError as e:
            logger.error(f"Point {point.key} not stored: {e}")
            result.failures[point] = str(e)

    if jobs <= 1:
        for point in points:
            collect(point, functools.partial(_run_point, builder, point, master_seed))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {
                executor.submit(_run_point, builder, point, master_seed): point
                for point in points
            }
            for future in concurrent.futures.as_completed(futures):
                collect(futures[future], future.result)

    result.wall_time = time.perf_counter() - start
    if store is not None:
        store.write_manifest(points, result.failures, master_seed, manifest_extra or {})
    logger.info(
        f"Campaign finished: {len(result.records)} succeeded, "
        f"{len(result.failures)} failed in {result.wall_time:.1f}s"
    )
    return result
