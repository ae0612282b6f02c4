"""
Suzuki-Trotter mapping of the 1D fractional transverse-field Ising chain onto
an anisotropic classical grid of L x L_τ spins at unit inverse temperature.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

from .couplings import DEFAULT_TAIL_TOLERANCE, validate_order
from .engine import (
    CampaignResult,
    EngineOptions,
    GridPoint,
    RunSpec,
    cached_periodic_table,
    campaign,
)
from .enums import AspectRule, ControlKind, ErrorCode
from .errors import FisInvalidArgValueError, FisTrotterMappingError
from .lattice import ClassicalModel, Geometry

logger = logging.getLogger("fracising")


@dataclass(frozen=True)
class QuantumSpec:
    L: int
    q: float
    g: float
    dtau: float
    ltau: int
    j0: float = 1.0
    h: float = 0.0

    def __post_init__(self):
        validate_order(self.q, simulation=True)
        if self.L < 2:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"Chain length must be >= 2, got {self.L}"
            )
        if self.g == 0 or not math.isfinite(self.g):
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"Transverse field must be non-zero, got {self.g}"
            )
        if not self.dtau > 0:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"Trotter step must be positive, got {self.dtau}"
            )
        if self.ltau < 2 or self.ltau % 2:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"Number of time slices must be even and >= 2, got {self.ltau}",
            )


def time_coupling(x: float) -> float:
    """
    K_τ = -½ ln tanh(x) for x = Δτ |g|, strictly decreasing in x.

    Raises:
        FisTrotterMappingError: if tanh(x) underflows to 0 or rounds to 1.
    """
    if not x > 0:
        raise FisTrotterMappingError(
            ErrorCode.TROTTER_MAPPING, f"Trotter argument must be positive, got {x}"
        )
    if x < 1:
        t = math.tanh(x)
        if t == 0:
            raise FisTrotterMappingError(ErrorCode.TROTTER_MAPPING, f"tanh({x}) underflows")
        k = -0.5 * math.log(t)
    else:
        # ln tanh(x) = log1p(-2 / (e^{2x} + 1))
        k = -0.5 * math.log1p(-2.0 / (math.expm1(2 * x) + 2.0))
    if not (k > 0 and math.isfinite(k)):
        raise FisTrotterMappingError(
            ErrorCode.TROTTER_MAPPING, f"Time coupling for Trotter argument {x} is {k}"
        )
    return k


@dataclass(frozen=True)
class MappedModel:
    spec: QuantumSpec
    model: ClassicalModel
    geometry: Geometry
    beta: float = 1.0


def map_to_classical(
    spec: QuantumSpec, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
) -> MappedModel:
    """
    Spatial couplings Δτ J0 J_L(r) within each time slice, time coupling
    K_τ = -½ ln tanh(Δτ |g|) and field Δτ h, at β = 1. The sign of g is a
    gauge choice and only |g| enters.
    """
    couplings = cached_periodic_table(spec.q, spec.L, tail_tolerance)
    model = ClassicalModel(
        couplings,
        j0=spec.dtau * spec.j0,
        h=spec.dtau * spec.h,
        ktau=time_coupling(spec.dtau * abs(spec.g)),
    )
    return MappedModel(spec, model, Geometry.grid(spec.L, spec.ltau))


def _even_slices(value: float) -> int:
    return max(2, 2 * int(round(value / 2)))


@dataclass(frozen=True)
class TrotterOptions:
    """
    ``aspect`` is the prefactor c of the aspect rule; ``None`` means 1/Δτ for
    the linear and power rules, so the imaginary-time extent L_τ Δτ tracks L.
    """

    dtaus: Sequence[float] = (0.1,)
    aspect_rule: AspectRule = AspectRule.LINEAR
    aspect: Optional[float] = None
    z: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "aspect_rule", AspectRule(self.aspect_rule))
        object.__setattr__(self, "dtaus", tuple(float(d) for d in self.dtaus))
        if not self.dtaus or any(not d > 0 for d in self.dtaus):
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, f"Trotter steps must be positive: {self.dtaus}"
            )
        if self.aspect_rule == AspectRule.FIXED and self.aspect is None:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "The fixed aspect rule needs an explicit L_tau"
            )

    def time_slices(self, L: int, dtau: float) -> int:
        c = self.aspect if self.aspect is not None else 1.0 / dtau
        if self.aspect_rule == AspectRule.LINEAR:
            return _even_slices(c * L)
        if self.aspect_rule == AspectRule.POWER:
            return _even_slices(c * L**self.z)
        return _even_slices(c)

    def manifest_fields(self):
        return {
            "dtaus": list(self.dtaus),
            "aspect_rule": self.aspect_rule.value,
            "aspect": self.aspect,
            "z": self.z,
        }


@dataclass(frozen=True)
class QuantumPointBuilder:
    engine: EngineOptions
    trotter: TrotterOptions
    j0: float = 1.0
    h: float = 0.0
    field_g: Optional[float] = None
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    def spec(self, point: GridPoint) -> QuantumSpec:
        """Quantum chain of a point scanning g, or h at ``field_g``."""
        if point.dtau is None:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE, "Quantum points need a Trotter step"
            )
        if point.control == ControlKind.TRANSVERSE_FIELD:
            g, h = point.value, self.h
        elif point.control == ControlKind.FIELD and self.field_g is not None:
            g, h = self.field_g, point.value
        else:
            raise FisInvalidArgValueError(
                ErrorCode.INVALID_ARG_VALUE,
                f"Quantum campaigns cannot scan {point.control.value} here",
            )
        return QuantumSpec(
            L=point.L,
            q=point.q,
            g=g,
            dtau=point.dtau,
            ltau=self.trotter.time_slices(point.L, point.dtau),
            j0=self.j0,
            h=h,
        )

    def __call__(self, point: GridPoint, seed: int) -> RunSpec:
        mapped = map_to_classical(self.spec(point), self.tail_tolerance)
        return RunSpec(
            model=mapped.model,
            geometry=mapped.geometry,
            beta=mapped.beta,
            n_measure=self.engine.n_measure,
            n_equil=self.engine.n_equil,
            thin=self.engine.thin,
            algorithm=self.engine.algorithm,
            cluster_updates=self.engine.cluster_updates,
            seed=seed,
            correlation_blocks=self.engine.correlation_blocks,
        )


def quantum_points(
    q_values: Iterable[float],
    sizes: Iterable[int],
    g_values: Iterable[float],
    dtaus: Iterable[float],
    fields: Iterable[float] = (),
) -> List[GridPoint]:
    q_values, sizes, dtaus = list(q_values), list(sizes), list(dtaus)
    grid = [
        (ControlKind.TRANSVERSE_FIELD, list(g_values)),
        (ControlKind.FIELD, list(fields)),
    ]
    return [
        GridPoint(q, L, control, value, dtau)
        for control, values in grid
        for q in q_values
        for dtau in dtaus
        for L in sizes
        for value in values
    ]


def quantum_campaign(
    q_values: Iterable[float],
    sizes: Iterable[int],
    g_values: Iterable[float],
    builder: QuantumPointBuilder,
    master_seed: int,
    jobs: int = 1,
    store=None,
    fields: Sequence[float] = (),
) -> CampaignResult:
    """
    Classical campaign over (q, Δτ, L, g) on the Trotter-mapped grids, plus
    an optional scan of the longitudinal field at ``builder.field_g``.
    """
    sizes = list(sizes)
    trotter = builder.trotter
    time_slices = {}
    for dtau in trotter.dtaus:
        slices = {L: trotter.time_slices(L, dtau) for L in sizes}
        time_slices[f"{dtau:g}"] = {str(L): n for L, n in slices.items()}
        logger.info(
            f"Trotter step {dtau:g}: aspect rule {trotter.aspect_rule.value} "
            f"gives L_tau {slices}"
        )
    if trotter.aspect_rule != AspectRule.FIXED:
        logger.info(
            f"Time-slice scaling assumes dynamical exponent z={trotter.z:g}; "
            f"exact only for the nearest-neighbour chain (q=2)"
        )
    if fields and builder.field_g is None:
        raise FisInvalidArgValueError(
            ErrorCode.INVALID_ARG_VALUE, "A quantum field scan needs field_g"
        )
    points = quantum_points(q_values, sizes, g_values, trotter.dtaus, fields)
    return campaign(
        points,
        builder,
        master_seed,
        jobs=jobs,
        store=store,
        manifest_extra={"trotter": {**trotter.manifest_fields(), "time_slices": time_slices}},
    )
