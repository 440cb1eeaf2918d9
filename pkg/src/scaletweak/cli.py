"""Command line front end.

Subcommands: scale, tweak, measure, run, analyze-overlap, validate-target,
sweep. Every option can also come from one TOML or JSON config file; command
line flags override config file values. Failures print a machine-readable
error record to stderr and exit 2 (configuration or input error), 3
(infeasible target) or 4 (coordinator out of options).
"""

from __future__ import annotations

import argparse
import itertools
import json
import subprocess
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from .errors import (
    CoordinatorExhausted,
    InfeasibleRepair,
    InfeasibleTarget,
    ScaletweakError,
    SpecMismatch,
    TargetInfeasible,
)
from .pipeline import (
    PipelineConfig,
    analyze_overlap_journal,
    run_measure,
    run_pipeline,
    run_scale,
    validate_targets,
)

_DEFAULTS = {
    "order": "L-C-P",
    "iterations": 1,
    "seed": 0,
    "e_threshold": 0.05,
    "crosscheck": False,
}

_CONFIG_KEYS = {
    "schema",
    "data",
    "sizes",
    "order",
    "iterations",
    "seed",
    "e_threshold",
    "targets",
    "ground_truth",
    "out",
    "journal",
    "queries",
    "crosscheck",
    "orders",
}


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    flags = {
        "schema": dict(help="schema JSON file"),
        "data": dict(help="directory with one CSV per table"),
        "sizes": dict(help="target sizes JSON file"),
        "order": dict(help="tool order, letters L C P (e.g. C-L-P)"),
        "iterations": dict(type=int, help="tweaking iterations"),
        "seed": dict(type=int, help="random seed"),
        "e_threshold": dict(type=float, help="validation error threshold"),
        "targets": dict(help="explicit targets JSON file"),
        "ground_truth": dict(help="ground-truth dataset directory"),
        "out": dict(help="output directory"),
        "journal": dict(help="journal NDJSON path"),
        "queries": dict(help="query suite JSON file"),
    }
    p.add_argument("--config", help="TOML or JSON config file")
    for name in names:
        if name == "crosscheck":
            p.add_argument(
                "--crosscheck",
                action="store_const",
                const=True,
                default=None,
                help="recompute every feature after each applied batch",
            )
            continue
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, default=None, **flags[name])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scaletweak",
        description="Scale a relational dataset and tweak statistical features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scale", help="randomly scale to target sizes")
    _add_common(p, "schema", "data", "sizes", "seed", "out")

    p = sub.add_parser("run", help="scale then tweak for N iterations")
    _add_common(
        p,
        "schema",
        "data",
        "sizes",
        "order",
        "iterations",
        "seed",
        "e_threshold",
        "targets",
        "ground_truth",
        "out",
        "journal",
        "queries",
        "crosscheck",
    )

    p = sub.add_parser("tweak", help="tweak an already scaled dataset")
    _add_common(
        p,
        "schema",
        "data",
        "order",
        "iterations",
        "seed",
        "e_threshold",
        "targets",
        "ground_truth",
        "out",
        "journal",
        "queries",
        "crosscheck",
    )

    p = sub.add_parser("measure", help="report feature and query errors")
    _add_common(
        p, "schema", "data", "targets", "ground_truth", "queries", "out"
    )

    p = sub.add_parser("validate-target", help="check targets against sizes")
    _add_common(p, "schema", "targets", "sizes", "data")

    p = sub.add_parser("analyze-overlap", help="overlap graph from a journal")
    _add_common(p, "journal", "out")

    p = sub.add_parser("sweep", help="run every order permutation in turn")
    _add_common(
        p,
        "schema",
        "data",
        "sizes",
        "iterations",
        "seed",
        "e_threshold",
        "targets",
        "ground_truth",
        "out",
        "queries",
    )
    p.add_argument(
        "--orders",
        default=None,
        help="comma-separated permutations (default: all six)",
    )
    return parser


def _load_config_file(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".toml"):
        cfg = tomllib.loads(raw.decode("utf-8"))
    elif path.endswith(".json"):
        cfg = json.loads(raw.decode("utf-8"))
    else:
        raise SpecMismatch(f"config file {path} must end in .toml or .json")
    if not isinstance(cfg, dict):
        raise SpecMismatch("config file must hold a table of options")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise SpecMismatch(f"config file has unknown keys {sorted(unknown)}")
    return cfg


def _merge(args: argparse.Namespace) -> dict:
    """Command line flags override config file values override defaults."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _need(merged: dict, *keys: str) -> None:
    missing = [k for k in keys if merged.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise SpecMismatch(f"missing required options: {flags}")


def _pipeline_config(merged: dict) -> PipelineConfig:
    return PipelineConfig(
        schema_path=merged.get("schema"),
        data_dir=merged.get("data"),
        out_dir=merged.get("out"),
        sizes_path=merged.get("sizes"),
        order=merged.get("order", _DEFAULTS["order"]),
        iterations=int(merged.get("iterations", 1)),
        seed=int(merged.get("seed", 0)),
        e_threshold=float(merged.get("e_threshold", 0.05)),
        targets_path=merged.get("targets"),
        ground_truth_dir=merged.get("ground_truth"),
        journal_path=merged.get("journal"),
        queries_path=merged.get("queries"),
        crosscheck=bool(merged.get("crosscheck", False)),
    )


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _cmd_scale(merged: dict) -> int:
    _need(merged, "schema", "data", "sizes", "out")
    result = run_scale(_pipeline_config(merged))
    _emit({"out": str(result.out_paths["data"]), "sizes": result.report["sizes"]})
    return 0


def _cmd_run(merged: dict, scale: bool) -> int:
    if scale:
        _need(merged, "schema", "data", "sizes", "out")
    else:
        _need(merged, "schema", "data", "targets", "out")
    result = run_pipeline(_pipeline_config(merged), scale=scale)
    _emit(
        {
            "report": str(result.report_path),
            "journal": str(result.journal_path),
            "finalErrors": result.report["finalErrors"],
        }
    )
    return 0


def _cmd_measure(merged: dict) -> int:
    _need(merged, "schema", "data")
    report = run_measure(_pipeline_config(merged))
    if merged.get("out"):
        out_dir = Path(merged["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "measure.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _emit(report)
    return 0


def _cmd_validate(merged: dict) -> int:
    _need(merged, "schema", "targets")
    if merged.get("sizes") is None and merged.get("data") is None:
        raise SpecMismatch("validate-target needs --sizes or --data")
    report = validate_targets(_pipeline_config(merged))
    _emit(report)
    return 0 if report["ok"] else 3


def _cmd_overlap(merged: dict) -> int:
    _need(merged, "journal")
    report = analyze_overlap_journal(merged["journal"])
    if merged.get("out"):
        out_dir = Path(merged["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "overlap.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _emit(report)
    return 0


def _cmd_sweep(merged: dict) -> int:
    """One child process per permutation, each writing under its own out dir."""
    _need(merged, "schema", "data", "sizes", "out")
    if merged.get("orders"):
        orders = [o.strip() for o in str(merged["orders"]).split(",") if o.strip()]
    else:
        orders = ["-".join(p) for p in itertools.permutations("LCP")]
    out_root = Path(merged["out"])
    out_root.mkdir(parents=True, exist_ok=True)
    results = []
    worst = 0
    for order in orders:
        safe = order.replace("-", "")
        child_out = out_root / safe
        cmd = [
            sys.executable,
            "-m",
            "scaletweak.cli",
            "run",
            "--schema",
            str(merged["schema"]),
            "--data",
            str(merged["data"]),
            "--sizes",
            str(merged["sizes"]),
            "--order",
            order,
            "--iterations",
            str(merged.get("iterations", 1)),
            "--seed",
            str(merged.get("seed", 0)),
            "--e-threshold",
            str(merged.get("e_threshold", 0.05)),
            "--out",
            str(child_out),
        ]
        for flag, key in (
            ("--targets", "targets"),
            ("--ground-truth", "ground_truth"),
            ("--queries", "queries"),
        ):
            if merged.get(key):
                cmd.extend([flag, str(merged[key])])
        proc = subprocess.run(cmd, capture_output=True, text=True)
        entry = {"order": order, "exitCode": proc.returncode, "out": str(child_out)}
        if proc.returncode == 0:
            try:
                report = json.loads((child_out / "report.json").read_text("utf-8"))
                entry["finalErrors"] = report["finalErrors"]
            except (OSError, json.JSONDecodeError, KeyError):
                entry["finalErrors"] = None
        else:
            entry["stderr"] = proc.stderr.strip()
            worst = worst or proc.returncode
        results.append(entry)
    summary = {"orders": orders, "results": results}
    with open(out_root / "sweep.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    _emit(summary)
    return worst


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (InfeasibleTarget, TargetInfeasible, InfeasibleRepair)):
        return 3
    if isinstance(exc, CoordinatorExhausted):
        return 4
    return 2


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        merged = _merge(args)
        if args.command == "scale":
            return _cmd_scale(merged)
        if args.command == "run":
            return _cmd_run(merged, scale=True)
        if args.command == "tweak":
            return _cmd_run(merged, scale=False)
        if args.command == "measure":
            return _cmd_measure(merged)
        if args.command == "validate-target":
            return _cmd_validate(merged)
        if args.command == "analyze-overlap":
            return _cmd_overlap(merged)
        if args.command == "sweep":
            return _cmd_sweep(merged)
        raise SpecMismatch(f"unknown command {args.command!r}")
    except (ScaletweakError, OSError, json.JSONDecodeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
