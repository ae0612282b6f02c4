"""
Campaign configuration files.

A configuration is INI text with the sections ``[campaign]``, ``[model]``,
``[grid]``, ``[engine]``, ``[couplings]``, ``[trotter]`` and ``[analysis]``.
Unknown sections and keys are rejected. Lists are comma separated and any
item may be an inclusive grid ``start:stop:num``::

    [campaign]
    mode = classical_1d
    seed = 1234

    [model]
    q = 0.75
    sizes = 16, 32, 64

    [grid]
    values = 0.5:2.5:11
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .couplings import DEFAULT_TAIL_TOLERANCE, MAX_SIMULATED_ORDER
from .engine import (
    DEFAULT_CORRELATION_BLOCKS,
    ClassicalPointBuilder,
    EngineOptions,
    GridPoint,
    RunSpec,
)
from .enums import (
    Algorithm,
    AspectRule,
    BinderConvention,
    ControlKind,
    ErrorCode,
    FieldScalingForm,
    GeometryKind,
    MagnetizationConvention,
    Mode,
)
from .errors import FisConfigError, FisException
from .fss import AnalysisOptions
from .stats import MIN_BLOCKS
from .trotter import QuantumPointBuilder, TrotterOptions, quantum_points

_KEYS = {
    "campaign": {"mode", "seed", "out", "jobs"},
    "model": {"q", "sizes", "j0", "h"},
    "grid": {"values", "fields", "field_at"},
    "engine": {"n_measure", "n_equil", "thin", "algorithm", "cluster_updates", "correlation_blocks"},
    "couplings": {"tail_tolerance"},
    "trotter": {"dtaus", "aspect_rule", "aspect", "z"},
    "analysis": {"magnetization", "binder", "field_form", "n_resamples", "n_bootstrap", "crossing_z", "seed"},
}
_REQUIRED = {"campaign": {"mode", "seed"}, "model": {"q", "sizes"}, "grid": {"values"}}


def parse_list(text: str, kind: Callable[[str], object] = float) -> List:
    """Comma-separated values; ``start:stop:num`` expands to an inclusive grid."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise FisConfigError(ErrorCode.CONFIG, f"Grid {item!r} must read start:stop:num")
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise FisConfigError(ErrorCode.CONFIG, f"Grid {item!r} needs at least one point")
            grid = np.linspace(start, stop, num)
            values.extend(int(round(v)) if kind is int else float(v) for v in grid)
        else:
            values.append(kind(item))
    return values


def _grid_values(text: str) -> Tuple[float, ...]:
    # rounding keeps point identities stable against linspace noise
    return tuple(round(v, 12) for v in parse_list(text, float))


@dataclass(frozen=True)
class CampaignConfig:
    mode: Mode
    q_values: Tuple[float, ...]
    sizes: Tuple[int, ...]
    values: Tuple[float, ...]
    seed: int
    fields: Tuple[float, ...] = ()
    field_at: Optional[float] = None
    j0: float = 1.0
    h: float = 0.0
    jobs: int = 1
    out: Optional[str] = None
    engine: EngineOptions = field(default_factory=EngineOptions)
    trotter: TrotterOptions = field(default_factory=TrotterOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    @property
    def quantum(self) -> bool:
        return self.mode == Mode.QUANTUM_1D

    @property
    def control(self) -> ControlKind:
        return ControlKind.TRANSVERSE_FIELD if self.quantum else ControlKind.TEMPERATURE

    @property
    def dimension(self) -> int:
        """Dimension of the simulated classical lattice."""
        return 1 if self.mode == Mode.CLASSICAL_1D else 2

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None, jobs: Optional[int] = None) -> "CampaignConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if out is not None:
            changes["out"] = out
        if jobs is not None:
            if jobs < 1:
                raise FisConfigError(ErrorCode.CONFIG, f"jobs must be >= 1, got {jobs}")
            changes["jobs"] = jobs
        return dataclasses.replace(self, **changes)

    def points(self) -> List[GridPoint]:
        if self.quantum:
            return quantum_points(self.q_values, self.sizes, self.values, self.trotter.dtaus, self.fields)
        points = [
            GridPoint(q, L, ControlKind.TEMPERATURE, T)
            for q in self.q_values
            for L in self.sizes
            for T in self.values
        ]
        points += [
            GridPoint(q, L, ControlKind.FIELD, h)
            for q in self.q_values
            for L in self.sizes
            for h in self.fields
        ]
        return points

    def builder(self) -> Callable[[GridPoint, int], RunSpec]:
        if self.quantum:
            return QuantumPointBuilder(
                self.engine,
                self.trotter,
                j0=self.j0,
                h=self.h,
                field_g=self.field_at,
                tail_tolerance=self.tail_tolerance,
            )
        return ClassicalPointBuilder(
            self.engine,
            kind=GeometryKind.CHAIN if self.mode == Mode.CLASSICAL_1D else GeometryKind.GRID,
            j0=self.j0,
            h=self.h,
            temperature=self.field_at,
            tail_tolerance=self.tail_tolerance,
        )

    def to_dict(self) -> Dict[str, object]:
        """Canonical form hashed into the manifest; ``out`` and ``jobs`` do not affect results."""
        return {
            "campaign": {"mode": self.mode.value, "seed": self.seed},
            "model": {"q": list(self.q_values), "sizes": list(self.sizes), "j0": self.j0, "h": self.h},
            "grid": {"values": list(self.values), "fields": list(self.fields), "field_at": self.field_at},
            "engine": {
                "n_measure": self.engine.n_measure,
                "n_equil": self.engine.n_equil,
                "thin": self.engine.thin,
                "algorithm": self.engine.algorithm.name.lower(),
                "cluster_updates": self.engine.cluster_updates,
                "correlation_blocks": self.engine.correlation_blocks,
            },
            "couplings": {"tail_tolerance": self.tail_tolerance},
            "trotter": self.trotter.manifest_fields() if self.quantum else None,
            "analysis": self.analysis.manifest_fields(),
        }


class _Section:
    """Typed access to the values of one section."""

    def __init__(self, name: str, values: Mapping[str, str]):
        self.name = name
        self.values = dict(values)

    def get(self, key: str, kind: Callable[[str], object], default=None):
        if key not in self.values:
            return default
        text = self.values[key].strip()
        try:
            return kind(text)
        except FisConfigError:
            raise
        except (ValueError, TypeError, FisException) as e:
            raise FisConfigError(ErrorCode.CONFIG, f"[{self.name}] {key} = {text!r}: {e}")


def _int(text: str) -> int:
    return int(text)


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("auto", "none", "") else int(text)


def _algorithm(text: str) -> Algorithm:
    try:
        return Algorithm[text.upper()]
    except KeyError:
        raise FisConfigError(
            ErrorCode.CONFIG, f"Unknown algorithm {text!r}; use metropolis, cluster or mixed"
        )


def _read_sections(parser: configparser.ConfigParser) -> Dict[str, _Section]:
    sections = {}
    for name in parser.sections():
        if name not in _KEYS:
            raise FisConfigError(ErrorCode.CONFIG, f"Unknown section [{name}]")
        unknown = set(parser[name]) - _KEYS[name]
        if unknown:
            raise FisConfigError(
                ErrorCode.CONFIG, f"Unknown keys in [{name}]: {', '.join(sorted(unknown))}"
            )
        sections[name] = _Section(name, parser[name])
    return sections


def _parser(text: str, source: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), default_section="__defaults__"
    )
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise FisConfigError(ErrorCode.CONFIG, f"{source}: {e}")
    return parser


def _analysis_options(section: Optional[_Section]) -> AnalysisOptions:
    if section is None:
        return AnalysisOptions()
    defaults = AnalysisOptions()
    try:
        return AnalysisOptions(
            magnetization=section.get("magnetization", MagnetizationConvention, defaults.magnetization),
            binder=section.get("binder", BinderConvention, defaults.binder),
            field_form=section.get("field_form", FieldScalingForm, defaults.field_form),
            n_resamples=section.get("n_resamples", _int, defaults.n_resamples),
            n_bootstrap=section.get("n_bootstrap", _int, defaults.n_bootstrap),
            crossing_z=section.get("crossing_z", float, defaults.crossing_z),
            seed=section.get("seed", _int, defaults.seed),
        )
    except FisException as e:
        if isinstance(e, FisConfigError):
            raise
        raise FisConfigError(ErrorCode.CONFIG, f"[analysis] {e.message}")


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise FisConfigError(ErrorCode.CONFIG, message)


def parse_config(text: str, source: str = "<config>") -> CampaignConfig:
    """
    Parse and validate a campaign configuration.

    Raises:
        FisConfigError: for unknown sections or keys, missing required keys
            and any value that violates a precondition of the run.
    """
    sections = _read_sections(_parser(text, source))
    for name, keys in _REQUIRED.items():
        present = set(sections[name].values) if name in sections else set()
        missing = keys - present
        if missing:
            raise FisConfigError(
                ErrorCode.CONFIG, f"Missing keys in [{name}]: {', '.join(sorted(missing))}"
            )
    empty = _Section("", {})
    campaign = sections["campaign"]
    model = sections["model"]
    grid = sections["grid"]
    engine = sections.get("engine", empty)
    couplings = sections.get("couplings", empty)
    trotter = sections.get("trotter")

    mode = campaign.get("mode", Mode)
    q_values = tuple(model.get("q", parse_list))
    sizes = tuple(model.get("sizes", lambda t: parse_list(t, int)))
    values = grid.get("values", _grid_values)
    fields = grid.get("fields", _grid_values, ())
    field_at = grid.get("field_at", float)
    j0 = model.get("j0", float, 1.0)
    h = model.get("h", float, 0.0)

    _check(bool(q_values), "[model] q is empty")
    for q in q_values:
        _check(q > 0, f"[model] q={q:g} must be positive")
        _check(
            q <= MAX_SIMULATED_ORDER,
            f"[model] q={q:g} exceeds the simulation bound q <= {MAX_SIMULATED_ORDER:g}",
        )
    _check(bool(sizes), "[model] sizes is empty")
    _check(all(L >= 2 for L in sizes), f"[model] sizes must be >= 2, got {list(sizes)}")
    _check(j0 > 0 and math.isfinite(j0), f"[model] j0 must be positive, got {j0}")
    _check(bool(values), "[grid] values is empty")
    if mode == Mode.QUANTUM_1D:
        _check(all(g != 0 for g in values), "[grid] transverse fields must be non-zero")
    else:
        _check(all(T > 0 for T in values), "[grid] temperatures must be positive")
        _check(trotter is None, f"[trotter] applies to quantum_1d only, mode is {mode.value}")
    if fields:
        _check(field_at is not None, "[grid] fields needs field_at (T, or g for quantum_1d)")
        if mode != Mode.QUANTUM_1D:
            _check(field_at > 0, "[grid] field_at must be a positive temperature")
        else:
            _check(field_at != 0, "[grid] field_at must be a non-zero g")

    n_equil = engine.get("n_equil", _optional_int)
    engine_options = EngineOptions(
        n_measure=engine.get("n_measure", _int, 10000),
        n_equil=n_equil,
        thin=engine.get("thin", _int, 1),
        algorithm=engine.get("algorithm", _algorithm, Algorithm.MIXED),
        cluster_updates=engine.get("cluster_updates", _int, 1),
        correlation_blocks=engine.get("correlation_blocks", _int, DEFAULT_CORRELATION_BLOCKS),
    )
    _check(engine_options.n_measure >= 1, "[engine] n_measure must be >= 1")
    _check(n_equil is None or n_equil >= 1, "[engine] n_equil must be >= 1 or auto")
    _check(engine_options.thin >= 1, "[engine] thin must be >= 1")
    _check(engine_options.cluster_updates >= 1, "[engine] cluster_updates must be >= 1")
    _check(
        engine_options.correlation_blocks >= MIN_BLOCKS,
        f"[engine] correlation_blocks must be >= {MIN_BLOCKS}",
    )
    if engine_options.algorithm == Algorithm.CLUSTER:
        _check(h == 0 and not fields, "[engine] cluster-only updates need h = 0 and no field scan")

    trotter_options = TrotterOptions()
    if trotter is not None:
        try:
            trotter_options = TrotterOptions(
                dtaus=trotter.get("dtaus", parse_list, (0.1,)),
                aspect_rule=trotter.get("aspect_rule", AspectRule, AspectRule.LINEAR),
                aspect=trotter.get("aspect", float),
                z=trotter.get("z", float, 1.0),
            )
        except FisException as e:
            if isinstance(e, FisConfigError):
                raise
            raise FisConfigError(ErrorCode.CONFIG, f"[trotter] {e.message}")
        if trotter_options.aspect_rule == AspectRule.FIXED:
            slices = trotter_options.aspect
            _check(
                slices >= 2 and float(slices).is_integer() and int(slices) % 2 == 0,
                f"[trotter] fixed L_tau must be an even integer >= 2, got {slices}",
            )
        elif trotter_options.aspect is not None:
            _check(trotter_options.aspect > 0, "[trotter] aspect must be positive")

    tail_tolerance = couplings.get("tail_tolerance", float, DEFAULT_TAIL_TOLERANCE)
    _check(tail_tolerance > 0, "[couplings] tail_tolerance must be positive")

    jobs = campaign.get("jobs", _int, 1)
    _check(jobs >= 1, "[campaign] jobs must be >= 1")

    return CampaignConfig(
        mode=mode,
        q_values=q_values,
        sizes=sizes,
        values=values,
        seed=campaign.get("seed", _int),
        fields=fields,
        field_at=field_at,
        j0=j0,
        h=h,
        jobs=jobs,
        out=campaign.get("out", str),
        engine=engine_options,
        trotter=trotter_options,
        analysis=_analysis_options(sections.get("analysis")),
        tail_tolerance=tail_tolerance,
    )


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FisConfigError(ErrorCode.CONFIG, f"Cannot read configuration {path}: {e}")
    return parse_config(text, source=str(path))


def parse_analysis(text: str, source: str = "<config>") -> AnalysisOptions:
    """The ``[analysis]`` section of a configuration; other sections are checked for unknown keys only."""
    sections = _read_sections(_parser(text, source))
    return _analysis_options(sections.get("analysis"))


def load_analysis(path) -> AnalysisOptions:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FisConfigError(ErrorCode.CONFIG, f"Cannot read configuration {path}: {e}")
    return parse_analysis(text, source=str(path))
