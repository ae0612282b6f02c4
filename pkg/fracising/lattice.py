"""
Spin configurations and the classical fractional Ising Hamiltonian

    E = -J0 Σ_{i<j} J_L(|i-j|) σ_i σ_j - K_τ Σ σ(x, τ) σ(x, τ+1) + h Σ σ

on periodic chains and periodic (space x imaginary-time) grids. The field
enters with a plus sign, so a negative ``h`` favours up spins.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .couplings import PeriodicCouplingTable, validate_order
from .enums import ErrorCode, GeometryKind
from .errors import (
    FisGeometryMismatchError,
    FisInvalidArgValueError,
    FisInvalidSpinError,
    FisRecordFormatError,
    FisSizeCapError,
)

logger = logging.getLogger("fracising")

MAX_ENUMERATION_SITES = 24
_ENUMERATION_CHUNK = 1 << 16

_CHECKPOINT_MAGIC = b"FISC"
_CHECKPOINT_VERSION = 2
_CHECKPOINT_HEADER = struct.Struct("<4sBBxxiidQQ64s")


@dataclass(frozen=True)
class Geometry:
    kind: GeometryKind
    lx: int
    ltau: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", GeometryKind(self.kind))
        if self.lx < 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"Lattice size must be >= 1, got {self.lx}"
            )
        if self.kind == GeometryKind.CHAIN and self.ltau != 1:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "A chain has a single time slice"
            )
        if self.kind == GeometryKind.GRID and self.ltau < 2:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"A grid needs at least two time slices, got {self.ltau}",
            )

    @classmethod
    def chain(cls, L: int) -> "Geometry":
        return cls(GeometryKind.CHAIN, L)

    @classmethod
    def grid(cls, lx: int, ltau: int) -> "Geometry":
        return cls(GeometryKind.GRID, lx, ltau)

    @property
    def n_sites(self) -> int:
        return self.lx * self.ltau

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ltau, self.lx


@dataclass
class SpinConfiguration:
    """±1 spins stored flat as int8, row-major over (τ, x)."""

    geometry: Geometry
    spins: np.ndarray = field(repr=False)

    def __post_init__(self):
        spins = np.ascontiguousarray(self.spins, dtype=np.int8).reshape(-1)
        if spins.size != self.geometry.n_sites:
            raise FisGeometryMismatchError(
                ErrorCode.GEOMETRY_MISMATCH,
                f"{spins.size} spins do not fit geometry {self.geometry}",
            )
        if not np.all(np.abs(spins) == 1):
            raise FisInvalidSpinError(ErrorCode.INVALID_SPIN, "Spin entries must be -1 or +1")
        self.spins = spins

    @classmethod
    def uniform(cls, geometry: Geometry, value: int = 1) -> "SpinConfiguration":
        return cls(geometry, np.full(geometry.n_sites, value, dtype=np.int8))

    @classmethod
    def random(cls, geometry: Geometry, rng: kernels.KernelRng) -> "SpinConfiguration":
        spins = np.empty(geometry.n_sites, dtype=np.int8)
        kernels.random_spins(spins, rng)
        return cls(geometry, spins)

    @property
    def grid(self) -> np.ndarray:
        return self.spins.reshape(self.geometry.shape)

    @property
    def magnetization(self) -> float:
        return float(self.spins.mean(dtype=np.float64))

    def copy(self) -> "SpinConfiguration":
        return SpinConfiguration(self.geometry, self.spins.copy())

    def flipped(self) -> "SpinConfiguration":
        return SpinConfiguration(self.geometry, -self.spins)

    def shifted(self, dx: int = 0, dtau: int = 0) -> "SpinConfiguration":
        return SpinConfiguration(
            self.geometry, np.roll(self.grid, (dtau, dx), axis=(0, 1)).reshape(-1)
        )

    def to_bytes(self, q: float, seed: int, sweep: int, manifest_hash: str = "") -> bytes:
        """Header plus one int8 per spin; ``manifest_hash`` is a hex digest of at most 64 characters."""
        header = _CHECKPOINT_HEADER.pack(
            _CHECKPOINT_MAGIC,
            _CHECKPOINT_VERSION,
            0 if self.geometry.kind == GeometryKind.CHAIN else 1,
            self.geometry.lx,
            self.geometry.ltau,
            q,
            seed & 0xFFFFFFFFFFFFFFFF,
            sweep,
            manifest_hash.encode("ascii"),
        )
        return header + self.spins.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < _CHECKPOINT_HEADER.size:
            raise FisRecordFormatError(
                ErrorCode.RECORD_FORMAT, "Checkpoint shorter than its header"
            )
        magic, version, kind, lx, ltau, q, seed, sweep, digest = (
            _CHECKPOINT_HEADER.unpack_from(data)
        )
        if magic != _CHECKPOINT_MAGIC or version != _CHECKPOINT_VERSION:
            raise FisRecordFormatError(
                ErrorCode.RECORD_FORMAT,
                f"Not a checkpoint (magic {magic!r}, version {version})",
            )
        geometry = Geometry(
            GeometryKind.CHAIN if kind == 0 else GeometryKind.GRID, lx, ltau
        )
        spins = np.frombuffer(data, dtype=np.int8, offset=_CHECKPOINT_HEADER.size)
        return Checkpoint(
            cls(geometry, spins.copy()), q, seed, sweep, digest.rstrip(b"\0").decode("ascii")
        )


@dataclass(frozen=True)
class Checkpoint:
    config: SpinConfiguration
    q: float
    seed: int
    sweep: int
    manifest_hash: str = ""


@dataclass(frozen=True)
class ClassicalModel:
    """
    Fractional Ising model with spatial couplings ``couplings`` scaled by
    ``j0``, longitudinal field ``h`` and, on grids only, a nearest-neighbour
    time coupling ``ktau``.
    """

    couplings: PeriodicCouplingTable
    j0: float = 1.0
    h: float = 0.0
    ktau: Optional[float] = None

    def __post_init__(self):
        validate_order(self.couplings.q, simulation=True)
        if not self.j0 > 0:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"J0 must be positive, got {self.j0}"
            )
        if self.ktau is not None and not math.isfinite(self.ktau):
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"K_tau must be finite, got {self.ktau}"
            )

    @property
    def q(self) -> float:
        return self.couplings.q

    @property
    def lx(self) -> int:
        return self.couplings.L

    @property
    def kind(self) -> GeometryKind:
        return GeometryKind.CHAIN if self.ktau is None else GeometryKind.GRID

    def check_geometry(self, geometry: Geometry) -> None:
        if geometry.lx != self.lx or geometry.kind != self.kind:
            raise FisGeometryMismatchError(
                ErrorCode.GEOMETRY_MISMATCH,
                f"Geometry {geometry.kind.value}({geometry.lx}, {geometry.ltau}) "
                f"does not match a {self.kind.value} model with L={self.lx}",
            )

    def kernel(self, geometry: Geometry) -> kernels.KernelModel:
        self.check_geometry(geometry)
        return kernels.KernelModel(
            geometry.lx,
            geometry.ltau,
            self.j0,
            self.ktau or 0.0,
            self.h,
            self.couplings.kernel_array(),
        )

    def with_field(self, h: float) -> "ClassicalModel":
        return ClassicalModel(self.couplings, self.j0, h, self.ktau)


def energy(model: ClassicalModel, config: SpinConfiguration) -> float:
    return kernels.energy(model.kernel(config.geometry), config.spins)


def local_field(model: ClassicalModel, config: SpinConfiguration, site: int) -> float:
    if not 0 <= site < config.geometry.n_sites:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, f"Site {site} outside the lattice"
        )
    return kernels.local_field(model.kernel(config.geometry), config.spins, site)


def flip_cost(model: ClassicalModel, config: SpinConfiguration, site: int) -> float:
    """ΔE = 2 σ_i (Φ_i - h) of flipping ``site``."""
    return 2.0 * config.spins[site] * (local_field(model, config, site) - model.h)


def coupling_matrix(model: ClassicalModel, geometry: Geometry) -> np.ndarray:
    """
    Dense symmetric matrix with E = -½ σᵀ J σ + h Σ σ. With two time slices
    both time neighbours coincide and the bond enters twice.
    """
    model.check_geometry(geometry)
    lx, ltau = geometry.lx, geometry.ltau
    n = geometry.n_sites
    x = np.arange(lx)
    row = model.j0 * model.couplings.kernel_array()[(x[None, :] - x[:, None]) % lx]
    matrix = np.kron(np.eye(ltau), row)
    if ltau > 1:
        sites = np.arange(n)
        up = (sites + lx) % n
        down = (sites - lx) % n
        np.add.at(matrix, (sites, up), model.ktau)
        np.add.at(matrix, (sites, down), model.ktau)
    return matrix


def _enumerated_states(n_sites: int, start: int, stop: int) -> np.ndarray:
    index = np.arange(start, stop, dtype=np.int64)
    bits = (index[:, None] >> np.arange(n_sites, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def enumeration_energies(model: ClassicalModel, geometry: Geometry) -> np.ndarray:
    """Energies of all 2^N states; bit n of the state index is site n (1 = down)."""
    n = geometry.n_sites
    if n > MAX_ENUMERATION_SITES:
        raise FisSizeCapError(
            ErrorCode.SIZE_CAP,
            f"Exact enumeration is limited to {MAX_ENUMERATION_SITES} spins, got {n}",
        )
    matrix = coupling_matrix(model, geometry)
    energies = np.empty(1 << n, dtype=np.float64)
    for start in range(0, 1 << n, _ENUMERATION_CHUNK):
        stop = min(start + _ENUMERATION_CHUNK, 1 << n)
        spins = _enumerated_states(n, start, stop).astype(np.float64)
        energies[start:stop] = (
            -0.5 * np.einsum("si,ij,sj->s", spins, matrix, spins)
            + model.h * spins.sum(axis=1)
        )
    return energies


def boltzmann_distribution(
    model: ClassicalModel, geometry: Geometry, beta: float
) -> np.ndarray:
    energies = enumeration_energies(model, geometry)
    weights = -beta * energies
    weights = np.exp(weights - weights.max())
    return weights / weights.sum()


@dataclass(frozen=True)
class ExactObservables:
    """Exact thermal averages; ``correlations[r]`` is ⟨c(r)⟩ for r = 0..lx//2."""

    geometry: Geometry
    beta: float
    log_z: float
    energy: float
    energy2: float
    m: float
    abs_m: float
    m2: float
    m4: float
    correlations: np.ndarray = field(repr=False)

    @property
    def partition_function(self) -> float:
        return math.exp(self.log_z)

    @property
    def susceptibility(self) -> float:
        return self.geometry.n_sites * (self.m2 - self.abs_m**2)

    @property
    def specific_heat(self) -> float:
        return self.beta**2 * (self.energy2 - self.energy**2) / self.geometry.n_sites

    @property
    def binder(self) -> float:
        return 1 - self.m4 / (3 * self.m2**2)

    @property
    def connected_correlations(self) -> np.ndarray:
        return self.correlations - self.m**2


def exact_enumeration(
    model: ClassicalModel, geometry: Geometry, beta: float
) -> ExactObservables:
    """
    Exact averages by summation over all 2^N states.

    Raises:
        FisSizeCapError: if the lattice has more than 24 spins.
    """
    model.check_geometry(geometry)
    n = geometry.n_sites
    if n > MAX_ENUMERATION_SITES:
        raise FisSizeCapError(
            ErrorCode.SIZE_CAP,
            f"Exact enumeration is limited to {MAX_ENUMERATION_SITES} spins, got {n}",
        )
    matrix = coupling_matrix(model, geometry)
    r_max = geometry.lx // 2

    shift = None
    z = 0.0
    sums = np.zeros(6 + r_max + 1, dtype=np.float64)
    for start in range(0, 1 << n, _ENUMERATION_CHUNK):
        stop = min(start + _ENUMERATION_CHUNK, 1 << n)
        spins = _enumerated_states(n, start, stop).astype(np.float64)
        total = spins.sum(axis=1)
        energies = -0.5 * np.einsum("si,ij,sj->s", spins, matrix, spins) + model.h * total
        log_w = -beta * energies
        chunk_shift = float(log_w.max())
        if shift is None or chunk_shift > shift:
            if shift is not None:
                rescale = math.exp(shift - chunk_shift)
                z *= rescale
                sums *= rescale
            shift = chunk_shift
        w = np.exp(log_w - shift)
        m = total / n
        grid = spins.reshape(-1, geometry.ltau, geometry.lx)
        c = [
            (grid * np.roll(grid, -r, axis=2)).mean(axis=(1, 2)) for r in range(r_max + 1)
        ]
        z += float(w.sum())
        sums += np.array(
            [w @ energies, w @ energies**2, w @ m, w @ np.abs(m), w @ m**2, w @ m**4]
            + [w @ cr for cr in c]
        )

    averages = sums / z
    return ExactObservables(
        geometry=geometry,
        beta=beta,
        log_z=shift + math.log(z),
        energy=float(averages[0]),
        energy2=float(averages[1]),
        m=float(averages[2]),
        abs_m=float(averages[3]),
        m2=float(averages[4]),
        m4=float(averages[5]),
        correlations=averages[6:],
    )
