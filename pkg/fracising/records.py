"""
On-disk record store of a campaign.

Layout under the output directory::

    manifest.json
    records/<point>.records.csv   sweep, E, m, abs_m, m2, m4
    records/<point>.corr.csv      r, G_accumulator, block_0, ...
    records/<point>.spins         final configuration checkpoint

Every CSV starts with ``# key=value`` comment lines, the first of which is
the manifest hash.
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .engine import OBSERVABLE_COLUMNS, GridPoint, MeasurementRecord
from .enums import ControlKind, ErrorCode
from .errors import FisIoError, FisRecordFormatError
from .lattice import Geometry, SpinConfiguration

logger = logging.getLogger("fracising")

MANIFEST_NAME = "manifest.json"
RECORDS_DIR = "records"
_FLOAT_FORMAT = "%.17g"


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def manifest_hash(config: Mapping[str, object], version: str) -> str:
    """SHA-256 over the canonical configuration, code version and RNG name."""
    payload = canonical_json(
        {"config": config, "version": version, "rng": kernels.RNG_ALGORITHM}
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def point_fields(point: GridPoint) -> Dict[str, object]:
    return {
        "q": point.q,
        "dtau": point.dtau,
        "L": point.L,
        "control": point.control.value,
        "value": point.value,
    }


def _header_lines(fields: Mapping[str, object]) -> str:
    return "\n".join(
        f"{key}={value if isinstance(value, str) else canonical_json(value)}"
        for key, value in fields.items()
    )


def write_table(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[object]],
    header: Mapping[str, object],
) -> Path:
    """CSV with ``# key=value`` header comments followed by a column row."""
    path = Path(path)
    lines = [f"# {line}" for line in _header_lines(header).splitlines()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(
            ",".join(
                _FLOAT_FORMAT % value if isinstance(value, float) else str(value)
                for value in row
            )
        )
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise FisIoError(ErrorCode.RECORD_FORMAT, f"Cannot write {path}: {e}")
    return path


def write_json(path: Path, payload: Mapping[str, object]) -> Path:
    path = Path(path)
    try:
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise FisIoError(ErrorCode.RECORD_FORMAT, f"Cannot write {path}: {e}")
    return path


def read_header(path: Path) -> Tuple[Dict[str, str], List[str]]:
    """Header comments and the column row of a table written by ``write_table``."""
    header: Dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.startswith("#"):
                    key, sep, value = line[1:].strip().partition("=")
                    if not sep:
                        raise FisRecordFormatError(
                            ErrorCode.RECORD_FORMAT, f"{path}: malformed header line {line!r}"
                        )
                    header[key] = value
                    continue
                return header, line.strip().split(",")
    except OSError as e:
        raise FisIoError(ErrorCode.RECORD_FORMAT, f"Cannot read {path}: {e}")
    raise FisRecordFormatError(ErrorCode.RECORD_FORMAT, f"{path}: no column row")


def _load_matrix(path: Path, columns: Sequence[str]) -> Tuple[Dict[str, str], np.ndarray]:
    header, found = read_header(path)
    if list(found[: len(columns)]) != list(columns):
        raise FisRecordFormatError(
            ErrorCode.RECORD_FORMAT, f"{path}: expected columns {columns}, found {found}"
        )
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=len(header) + 1, ndmin=2)
    except ValueError as e:
        raise FisRecordFormatError(ErrorCode.RECORD_FORMAT, f"{path}: {e}")
    if data.size and data.shape[1] != len(found):
        raise FisRecordFormatError(
            ErrorCode.RECORD_FORMAT, f"{path}: {data.shape[1]} values per row, {len(found)} columns"
        )
    return header, data


def _json_field(header: Mapping[str, str], key: str, path: Path):
    try:
        return json.loads(header[key])
    except (KeyError, json.JSONDecodeError) as e:
        raise FisRecordFormatError(
            ErrorCode.RECORD_FORMAT, f"{path}: bad or missing header field {key!r} ({e})"
        )


@dataclass(frozen=True)
class StoredRecord:
    point: GridPoint
    record: MeasurementRecord
    manifest_hash: str


class RecordStore:
    """Writes records and the manifest of one campaign under ``root``."""

    def __init__(self, root, config: Mapping[str, object], version: str) -> None:
        self.root = Path(root)
        self.config = dict(config)
        self.version = version
        self.manifest_hash = manifest_hash(self.config, version)
        self._started = time.perf_counter()
        try:
            (self.root / RECORDS_DIR).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise FisIoError(
                ErrorCode.RECORD_FORMAT, f"Cannot create record store {self.root}: {e}"
            )

    def record_path(self, point: GridPoint, suffix: str) -> Path:
        return self.root / RECORDS_DIR / f"{point.name}{suffix}"

    def _header(self, point: GridPoint, record: MeasurementRecord) -> Dict[str, object]:
        return {
            "manifest_hash": self.manifest_hash,
            "point": point_fields(point),
            "geometry": {
                "kind": record.geometry.kind.value,
                "lx": record.geometry.lx,
                "ltau": record.geometry.ltau,
            },
            "beta": record.beta,
            "seed": record.seed,
            "metadata": record.metadata,
        }

    def write_record(self, point: GridPoint, record: MeasurementRecord) -> None:
        header = self._header(point, record)
        write_table(
            self.record_path(point, ".records.csv"),
            ("sweep",) + OBSERVABLE_COLUMNS,
            (
                (int(sweep), *(float(v) for v in row))
                for sweep, row in zip(record.sweeps, record.observables)
            ),
            header,
        )
        if record.correlation_blocks is not None:
            blocks = record.correlation_blocks
            sizes = [hi - lo for lo, hi in record.block_bounds]
            write_table(
                self.record_path(point, ".corr.csv"),
                ["r", "G_accumulator"] + [f"block_{b}" for b in range(blocks.shape[0])],
                (
                    (r, float(mean), *(float(v) for v in blocks[:, r]))
                    for r, mean in enumerate(record.correlations)
                ),
                {"manifest_hash": self.manifest_hash, "block_sizes": sizes},
            )
        if record.final_config is not None:
            path = self.record_path(point, ".spins")
            try:
                path.write_bytes(
                    record.final_config.to_bytes(
                        point.q, record.seed, int(record.sweeps[-1]), self.manifest_hash
                    )
                )
            except OSError as e:
                raise FisIoError(ErrorCode.RECORD_FORMAT, f"Cannot write {path}: {e}")

    def write_manifest(
        self,
        points: Sequence[GridPoint],
        failures: Mapping[GridPoint, str],
        master_seed: int,
        extra: Optional[Mapping[str, object]] = None,
    ) -> Path:
        entries = []
        for point in sorted(points, key=lambda p: p.name):
            entry = {"name": point.name, **point_fields(point)}
            if point in failures:
                entry["status"] = "failed"
                entry["error"] = failures[point]
            else:
                entry["status"] = "ok"
            entries.append(entry)
        return write_json(
            self.root / MANIFEST_NAME,
            {
                "manifest_hash": self.manifest_hash,
                "code_version": self.version,
                "rng": kernels.RNG_ALGORITHM,
                "master_seed": master_seed,
                "config": self.config,
                "points": entries,
                "failures": len(failures),
                "wall_time": time.perf_counter() - self._started,
                **(extra or {}),
            },
        )


def read_manifest(root) -> Dict[str, object]:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise FisRecordFormatError(ErrorCode.RECORD_FORMAT, f"No manifest in {root}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FisRecordFormatError(ErrorCode.RECORD_FORMAT, f"Unreadable manifest {path}: {e}")


def load_record(path) -> StoredRecord:
    """Rebuild a measurement record and its correlation blocks from disk."""
    path = Path(path)
    header, data = _load_matrix(path, ("sweep",) + OBSERVABLE_COLUMNS)
    point_data = _json_field(header, "point", path)
    geometry_data = _json_field(header, "geometry", path)
    try:
        point = GridPoint(
            q=point_data["q"],
            L=point_data["L"],
            control=ControlKind(point_data["control"]),
            value=point_data["value"],
            dtau=point_data["dtau"],
        )
        geometry = Geometry(geometry_data["kind"], geometry_data["lx"], geometry_data["ltau"])
    except (KeyError, ValueError) as e:
        raise FisRecordFormatError(
            ErrorCode.RECORD_FORMAT, f"{path}: bad point or geometry header ({e})"
        )

    correlation_blocks = None
    corr_path = path.with_name(path.name.replace(".records.csv", ".corr.csv"))
    if corr_path.exists():
        _, corr = _load_matrix(corr_path, ("r", "G_accumulator"))
        correlation_blocks = np.ascontiguousarray(corr[:, 2:].T)

    final_config = None
    spins_path = path.with_name(path.name.replace(".records.csv", ".spins"))
    if spins_path.exists():
        checkpoint = SpinConfiguration.from_bytes(spins_path.read_bytes())
        digest = header.get("manifest_hash", "")
        if checkpoint.manifest_hash != digest:
            raise FisRecordFormatError(
                ErrorCode.RECORD_FORMAT,
                f"{spins_path}: checkpoint manifest hash {checkpoint.manifest_hash[:12]!r} "
                f"does not match the record's {digest[:12]!r}",
            )
        final_config = checkpoint.config

    record = MeasurementRecord(
        geometry=geometry,
        beta=float(_json_field(header, "beta", path)),
        sweeps=data[:, 0].astype(np.int64),
        observables=np.ascontiguousarray(data[:, 1:]),
        correlation_blocks=correlation_blocks,
        seed=int(_json_field(header, "seed", path)),
        metadata=_json_field(header, "metadata", path),
        final_config=final_config,
    )
    return StoredRecord(point, record, header.get("manifest_hash", ""))


def load_store(root) -> List[StoredRecord]:
    """All records of a store, in file-name order."""
    directory = Path(root) / RECORDS_DIR
    if not directory.is_dir():
        return []
    paths = sorted(p for p in directory.iterdir() if p.name.endswith(".records.csv"))
    stored = [load_record(p) for p in paths]
    hashes = {s.manifest_hash for s in stored}
    if len(hashes) > 1:
        logger.warning(f"Store {root} mixes {len(hashes)} manifest hashes")
    return stored


def ensure_directory(path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise FisIoError(ErrorCode.RECORD_FORMAT, f"Cannot create {path}: {e}")
    return path
