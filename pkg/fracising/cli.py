"""
Command-line entry point::

    fracising couplings --q 0.5,1.0 --r-max 10000 --L 64 --out tables/
    fracising run --config campaign.ini --out store/ --jobs 4
    fracising analyze store/ --out analysis/
    fracising report analysis/report.json other/report.json --out summary/

Exit codes: 0 success, 1 other library error, 2 configuration error,
3 partial campaign failure, 4 analysis precondition failure.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import load_analysis, load_config, parse_list
from .couplings import (
    DEFAULT_TAIL_TOLERANCE,
    MIN_ASYMPTOTIC_DISTANCE,
    asymptotic_exponent,
    build_table,
    momentum_curve,
    periodic_table,
    residual_subleading,
    spectral_residual,
)
from .engine import campaign, derive_seed
from .enums import ControlKind, ErrorCode, GeometryKind
from .errors import (
    FisAnalysisError,
    FisArgumentError,
    FisConfigError,
    FisException,
    FisInsufficientSizesError,
    FisNumericalError,
    FisStatisticsError,
)
from .fss import AnalysisOptions, ExponentEstimate, PointEstimates, analyze_blocks, hausdorff_report
from .records import (
    MANIFEST_NAME,
    RecordStore,
    ensure_directory,
    load_store,
    manifest_hash,
    read_manifest,
    write_json,
    write_table,
)
from .stats import estimate_observables
from .trotter import quantum_campaign

logger = logging.getLogger("fracising")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_ANALYSIS = 4

EXPONENT_NAMES = ("nu", "beta", "gamma", "alpha", "alpha_hyperscaling", "delta", "eta", "kappa", "H_D")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _q_label(q: float) -> str:
    return f"{q:g}"


def cmd_couplings(args) -> int:
    """Real-space tables with asymptotic fits and momentum-space curves per q."""
    try:
        q_values = parse_list(args.q)
    except ValueError as e:
        raise FisConfigError(ErrorCode.CONFIG, f"--q {args.q!r}: {e}")
    if not q_values:
        raise FisConfigError(ErrorCode.CONFIG, "--q is empty")
    out = ensure_directory(args.out)
    settings = {"q": q_values, "r_max": args.r_max, "L": args.L, "tolerance": args.tolerance}
    digest = manifest_hash({"couplings": settings}, __version__)

    for q in q_values:
        table = build_table(q, args.r_max)
        periodic = periodic_table(table, args.L, args.tolerance) if args.L else None
        r_lo = max(MIN_ASYMPTOTIC_DISTANCE, args.r_max // 100)
        slope = residual_slope = None
        amplitude = table.amplitude
        if r_lo < args.r_max:
            try:
                slope = asymptotic_exponent(table, r_lo, args.r_max)
                subleading = residual_subleading(table, r_lo, args.r_max)
                residual_slope, amplitude = subleading.slope, subleading.amplitude
            except (FisNumericalError, FisArgumentError) as e:
                logger.warning(f"q={q:g}: no asymptotic fit ({e.message})")

        r = table.distances.astype(np.float64)
        asymptote = amplitude * r ** (-(1 + q))
        periodic_values = periodic.values if periodic is not None else np.array([])
        rows = (
            (
                int(r_i),
                float(j),
                float(periodic_values[i]) if i < periodic_values.size else "",
                float(a),
                float(j - a),
            )
            for i, (r_i, j, a) in enumerate(zip(table.distances, table.values, asymptote))
        )
        header = {
            "manifest_hash": digest,
            "q": q,
            "r_max": args.r_max,
            "L": args.L,
            "tolerance": args.tolerance,
            "central": table.central,
            "amplitude": amplitude,
            "asymptotic_slope": slope,
            "residual_slope": residual_slope,
        }
        if periodic is not None:
            header["tail_bound"] = periodic.tail_bound
            header["spectral_residual_max"] = float(np.max(np.abs(spectral_residual(periodic))))
        write_table(
            out / f"couplings_q{_q_label(q)}.csv",
            ("r", "J", "J_periodic", "asymptote", "residual"),
            rows,
            header,
        )
        k, spectrum = momentum_curve(q)
        write_table(
            out / f"momentum_q{_q_label(q)}.csv",
            ("k", "J_k"),
            zip(map(float, k), map(float, spectrum)),
            {"manifest_hash": digest, "q": q},
        )
        fitted = "n/a" if slope is None else f"{slope:.4f} (expected {-(1 + q):.4f})"
        print(f"q={q:g}: central={table.central:.6g}, log-log slope {fitted}")
    return EXIT_OK


def cmd_run(args) -> int:
    """Execute the campaign of a configuration file into a record store."""
    config = load_config(args.config).with_overrides(
        seed=args.seed_override, out=args.out, jobs=args.jobs
    )
    if config.out is None:
        raise FisConfigError(
            ErrorCode.CONFIG, "No output directory: pass --out or set [campaign] out"
        )
    store = RecordStore(config.out, config.to_dict(), __version__)
    logger.info(f"Record store {config.out}, manifest hash {store.manifest_hash[:12]}")
    if config.quantum:
        result = quantum_campaign(
            config.q_values,
            config.sizes,
            config.values,
            config.builder(),
            config.seed,
            jobs=config.jobs,
            store=store,
            fields=config.fields,
        )
    else:
        result = campaign(config.points(), config.builder(), config.seed, jobs=config.jobs, store=store)
    for point, message in sorted(result.failures.items(), key=lambda item: item[0].name):
        print(f"failed {point.name} {point.key}: {message}", file=sys.stderr)
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _analysis_options(args, manifest: Optional[Dict]) -> AnalysisOptions:
    if args.config:
        return load_analysis(args.config)
    if manifest and manifest.get("config", {}).get("analysis"):
        return AnalysisOptions(**manifest["config"]["analysis"])
    return AnalysisOptions()


def _group_key(point) -> Tuple[float, Optional[float]]:
    return point.q, point.dtau


def cmd_analyze(args) -> int:
    """Observable estimates, the per-q scaling report and plot data of a record store."""
    store_dir = Path(args.store)
    manifest = read_manifest(store_dir) if (store_dir / MANIFEST_NAME).exists() else None
    stored = load_store(store_dir)
    if not stored:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES, f"Record store {store_dir} holds no records"
        )
    options = _analysis_options(args, manifest)
    digest = manifest["manifest_hash"] if manifest else stored[0].manifest_hash
    out = ensure_directory(args.out)

    estimate_rows = []
    groups: Dict[Tuple, Dict[str, List[PointEstimates]]] = {}
    dimensions: Dict[Tuple, int] = {}
    controls: Dict[Tuple, str] = {}
    skipped = {}
    for item in stored:
        point, record = item.point, item.record
        try:
            observables = estimate_observables(
                record,
                magnetization=options.magnetization,
                binder=options.binder,
                n_resamples=options.n_resamples,
                rng=np.random.default_rng(derive_seed(options.seed, point)),
            )
        except FisStatisticsError as e:
            logger.error(f"Skipping {point.name} {point.key}: {e}")
            skipped[point.name] = str(e)
            continue
        for row in observables.rows():
            estimate_rows.append(
                (point.q, "" if point.dtau is None else point.dtau, point.L, point.control.value, point.value, *row)
            )
        key = _group_key(point)
        entry = groups.setdefault(key, {"scan": [], "field": []})
        estimates = PointEstimates(point.L, point.value, observables)
        if point.control == ControlKind.FIELD:
            entry["field"].append(estimates)
        else:
            entry["scan"].append(estimates)
            controls[key] = point.control.value
        dimensions[key] = 1 if record.geometry.kind == GeometryKind.CHAIN else 2

    write_table(
        out / "estimates.csv",
        ("q", "dtau", "L", "control", "control_value", "observable", "value", "stderr", "tau_int", "n_eff"),
        sorted(estimate_rows, key=lambda row: (row[0], str(row[1]), row[2], row[3], row[4], row[5])),
        {"manifest_hash": digest, "analysis": options.manifest_fields()},
    )

    blocks = []
    for key in sorted(groups, key=lambda k: (k[0], -1.0 if k[1] is None else k[1])):
        q, dtau = key
        control = controls.get(key, ControlKind.TEMPERATURE.value)
        try:
            block = analyze_blocks(
                groups[key]["scan"],
                q,
                dimensions[key],
                control=control,
                quantum=control == ControlKind.TRANSVERSE_FIELD.value,
                field_points=groups[key]["field"],
                options=options,
            )
        except (FisAnalysisError, FisStatisticsError) as e:
            logger.error(f"q={q:g}, dtau={dtau}: {e}")
            block = {"q": q, "control": control, "error": str(e)}
        block["dtau"] = dtau
        blocks.append(block)

    hausdorff = _hausdorff_tables(blocks)
    report = {
        "manifest_hash": digest,
        "code_version": __version__,
        "analysis": options.manifest_fields(),
        "blocks": blocks,
        "hausdorff": hausdorff,
        "skipped": skipped,
    }
    write_json(out / "report.json", report)
    _write_plot_data(out, blocks, hausdorff, digest)
    for block in blocks:
        print(_summary_line(block))
    return EXIT_ANALYSIS if all("error" in b for b in blocks) else EXIT_OK


def _hausdorff_tables(blocks: Sequence[Dict]) -> List[Dict]:
    families: Dict[Tuple, Dict[float, ExponentEstimate]] = {}
    for block in blocks:
        eta = block.get("exponents", {}).get("eta")
        if eta is None:
            continue
        family = (block.get("control"), block.get("dtau"))
        families.setdefault(family, {})[block["q"]] = ExponentEstimate("eta", eta["value"], eta["stderr"])
    tables = []
    for (control, dtau), etas in sorted(families.items(), key=lambda item: (str(item[0][0]), str(item[0][1]))):
        if len(etas) < 2:
            continue
        table = hausdorff_report(etas, quantum=control == ControlKind.TRANSVERSE_FIELD.value)
        tables.append({"control": control, "dtau": dtau, **table.to_dict()})
    return tables


def _write_plot_data(out: Path, blocks: Sequence[Dict], hausdorff: Sequence[Dict], digest: str) -> None:
    peaks = []
    exponents = []
    for block in blocks:
        dtau = "" if block.get("dtau") is None else block["dtau"]
        for p in block.get("chi_peaks", []):
            peaks.append((block["q"], dtau, p["L"], 1.0 / p["L"], p["location"], p["stderr"]))
        for name, e in block.get("exponents", {}).items():
            exponents.append((block["q"], dtau, name, e["value"], e["stderr"]))
    header = {"manifest_hash": digest}
    write_table(out / "pseudo_critical.csv", ("q", "dtau", "L", "inv_L", "location", "stderr"), peaks, header)
    write_table(out / "exponents.csv", ("q", "dtau", "exponent", "value", "stderr"), exponents, header)
    write_table(
        out / "hausdorff.csv",
        ("control", "dtau", "q", "eta", "eta_stderr", "H_D"),
        (
            (t["control"], "" if t["dtau"] is None else t["dtau"], r["q"], r["eta"], r["eta_stderr"], r["H_D"])
            for t in hausdorff
            for r in t["rows"]
        ),
        header,
    )


def _summary_line(block: Dict) -> str:
    label = f"q={block['q']:g}" + ("" if block.get("dtau") is None else f" dtau={block['dtau']:g}")
    if "error" in block:
        return f"{label}: analysis failed: {block['error']}"
    if not block.get("transition_detected"):
        return f"{label}: no transition detected"
    critical_key = "g_c" if block["control"] == ControlKind.TRANSVERSE_FIELD.value else "T_c"
    critical = block.get(critical_key, {})
    parts = [f"{critical_key}={critical.get('value', math.nan):.5g}"]
    for name in EXPONENT_NAMES:
        e = block.get("exponents", {}).get(name)
        if e is not None:
            parts.append(f"{name}={e['value']:.3g}±{e['stderr']:.2g}")
    return f"{label}: " + ", ".join(parts)


def cmd_report(args) -> int:
    """Merge analysis reports into exponent-vs-q and Hausdorff tables."""
    blocks = []
    hashes = []
    for path in args.reports:
        try:
            report = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise FisConfigError(ErrorCode.CONFIG, f"Cannot read report {path}: {e}")
        hashes.append(report.get("manifest_hash", ""))
        blocks.extend(report.get("blocks", []))
    if not blocks:
        raise FisInsufficientSizesError(
            ErrorCode.INSUFFICIENT_SIZES, "No analysis blocks in the given reports"
        )
    out = ensure_directory(args.out)
    header = {"manifest_hashes": hashes}

    columns = ["q", "dtau", "control", "transition_detected", "critical", "critical_stderr"]
    for name in EXPONENT_NAMES:
        columns += [name, f"{name}_stderr"]
    rows = []
    for block in sorted(blocks, key=lambda b: (str(b.get("control")), str(b.get("dtau")), b["q"])):
        critical_key = "g_c" if block.get("control") == ControlKind.TRANSVERSE_FIELD.value else "T_c"
        critical = block.get(critical_key, {})
        row = [
            block["q"],
            "" if block.get("dtau") is None else block["dtau"],
            block.get("control", ""),
            str(bool(block.get("transition_detected", False))).lower(),
            critical.get("value", ""),
            critical.get("stderr", ""),
        ]
        for name in EXPONENT_NAMES:
            e = block.get("exponents", {}).get(name)
            row += ["", ""] if e is None else [e["value"], e["stderr"]]
        rows.append([v if v is not None else "" for v in row])
        print(_summary_line(block))
    write_table(out / "exponents_vs_q.csv", columns, rows, header)

    hausdorff = _hausdorff_tables(blocks)
    _write_plot_data(out, blocks, hausdorff, ",".join(hashes))
    for table in hausdorff:
        print(
            f"H_D slope ({table['control']}, dtau={table['dtau']}): "
            f"{table['slope']:.3f} ± {table['slope_stderr']:.2g} (target {table['target']:g})"
        )
    write_json(out / "summary.json", {"manifest_hashes": hashes, "hausdorff": hausdorff})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracising",
        description="Monte Carlo and finite-size scaling of the fractional Ising model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging threshold",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    couplings = commands.add_parser("couplings", help="Export coupling tables and momentum curves")
    couplings.add_argument("--q", required=True, help="Fractional orders, e.g. 0.5,1.0 or 0.2:0.8:3")
    couplings.add_argument("--r-max", type=_positive_int, default=10000)
    couplings.add_argument("--L", type=_positive_int, default=None, help="Ring size for image-summed couplings")
    couplings.add_argument("--tolerance", type=_positive_float, default=DEFAULT_TAIL_TOLERANCE)
    couplings.add_argument("--out", required=True)
    couplings.set_defaults(func=cmd_couplings)

    run = commands.add_parser("run", help="Run a campaign into a record store")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)
    run.add_argument("--jobs", type=_positive_int, default=None)
    run.add_argument("--seed-override", type=int, default=None)
    run.set_defaults(func=cmd_run)

    analyze = commands.add_parser("analyze", help="Finite-size-scaling analysis of a record store")
    analyze.add_argument("store")
    analyze.add_argument("--config", default=None, help="Configuration whose [analysis] section is used")
    analyze.add_argument("--out", required=True)
    analyze.set_defaults(func=cmd_analyze)

    report = commands.add_parser("report", help="Merge analysis reports")
    report.add_argument("reports", nargs="+")
    report.add_argument("--out", required=True)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FisConfigError, FisArgumentError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except (FisAnalysisError, FisStatisticsError) as e:
        logger.error(str(e))
        return EXIT_ANALYSIS
    except FisException as e:
        logger.error(str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
