"""End-to-end pipeline: scale, repair targets, run tools, report.

A run loads the source dataset, scales it to the requested sizes, then for
every iteration applies the selected tools in the configured order. Targets
come from an explicit file or are generated from the source dataset's own
features; before every tool run they are re-checked against the live table
sizes and repaired when growth by an earlier tool invalidated them. The run
emits the scaled dataset before and after tweaking, a journal of every
applied modification, and a JSON report with per-step feature errors and
query errors against a ground-truth dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .coappear import CoappearDistribution, CoappearTool
from .coordinator import Coordinator, CoordinatorConfig
from .dataset import Dataset, load_dataset, write_dataset
from .errors import IoFailure, SpecMismatch, ZeroTruth
from .linear import LinearJoinMatrix, LinearTool
from .metrics import (
    default_query_suite,
    eval_query,
    feature_error_report,
    parse_query_suite,
    query_error,
)
from .overlap import maximum_independent_set, overlap_graph
from .pairwise import PairwiseDistribution, PairwiseTool
from .randscale import check_size_target, load_size_target, rand_scale
from .schema import DatasetSchema

_LETTER_NAMES = {"L": "linear", "C": "coappear", "P": "pairwise"}


@dataclass
class PipelineConfig:
    schema_path: str
    data_dir: str
    out_dir: str
    sizes_path: str | None = None
    order: str = "L-C-P"
    iterations: int = 1
    seed: int = 0
    e_threshold: float = 0.05
    targets_path: str | None = None
    ground_truth_dir: str | None = None
    journal_path: str | None = None
    queries_path: str | None = None
    crosscheck: bool = False


@dataclass
class PipelineResult:
    dataset: Dataset
    report: dict
    report_path: Path | None = None
    journal_path: Path | None = None
    out_paths: dict = field(default_factory=dict)


def parse_order(order: str) -> list[str]:
    letters = [c for c in order.upper() if c != "-"]
    if not letters:
        raise SpecMismatch("order selects no tools")
    for c in letters:
        if c not in _LETTER_NAMES:
            raise SpecMismatch(f"order letter {c!r} is not one of L, C, P")
    if len(set(letters)) != len(letters):
        raise SpecMismatch("order must list each selected tool exactly once")
    return letters


def _make_tool(letter: str, seed: int):
    if letter == "L":
        return LinearTool(seed)
    if letter == "C":
        return CoappearTool(seed)
    return PairwiseTool(seed)


def load_targets_file(path: str | Path, schema: DatasetSchema) -> dict[str, tuple]:
    """Parse a combined targets file into per-feature target tuples."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read targets file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecMismatch(f"targets file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecMismatch("targets file must hold an object")
    unknown = set(raw) - set(_LETTER_NAMES.values())
    if unknown:
        raise SpecMismatch(f"targets file has unknown sections {sorted(unknown)}")
    out: dict[str, tuple] = {}
    if "linear" in raw:
        out["linear"] = tuple(
            LinearJoinMatrix.from_dict(d, schema) for d in raw["linear"]
        )
    if "coappear" in raw:
        out["coappear"] = tuple(
            CoappearDistribution.from_dict(d, schema) for d in raw["coappear"]
        )
    if "pairwise" in raw:
        out["pairwise"] = tuple(
            PairwiseDistribution.from_dict(d, schema) for d in raw["pairwise"]
        )
    return out


def _load_queries(cfg: PipelineConfig, schema: DatasetSchema):
    if cfg.queries_path is None:
        return default_query_suite(schema)
    try:
        with open(cfg.queries_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read query file {cfg.queries_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecMismatch(f"query file is not valid JSON: {exc}") from exc
    return parse_query_suite(raw, schema)


def _query_section(queries, truth: Dataset, scaled: Dataset) -> list[dict]:
    out = []
    for q in queries:
        t = eval_query(truth, q)
        s = eval_query(scaled, q)
        entry = {"name": q.name, "kind": q.kind, "truth": t, "scaled": s}
        try:
            entry["error"] = query_error(s, t)
            entry["zeroTruth"] = False
        except ZeroTruth:
            entry["error"] = None
            entry["zeroTruth"] = True
        out.append(entry)
    return out


def _targets_by_letter(
    cfg: PipelineConfig,
    letters: list[str],
    schema: DatasetSchema,
    source: Dataset,
    sizes: dict[str, int],
    tools: dict,
    require_explicit: bool,
) -> dict[str, tuple]:
    explicit = (
        load_targets_file(cfg.targets_path, schema) if cfg.targets_path else {}
    )
    targets: dict[str, tuple] = {}
    for letter in letters:
        section = _LETTER_NAMES[letter]
        if section in explicit:
            targets[letter] = explicit[section]
        elif require_explicit:
            raise SpecMismatch(
                f"tweak needs explicit targets; section {section!r} missing"
            )
        else:
            targets[letter] = tools[letter].generate_target(source, sizes)
    return targets


def _feature_section(dataset: Dataset, letters, targets) -> dict:
    return feature_error_report(
        dataset,
        linear_targets=targets.get("L", ()) if "L" in letters else (),
        coappear_targets=targets.get("C", ()) if "C" in letters else (),
        pairwise_targets=targets.get("P", ()) if "P" in letters else (),
    )


def _mean_errors(section: dict) -> dict:
    return {name: part["mean"] for name, part in section.items()}


def run_pipeline(cfg: PipelineConfig, scale: bool = True) -> PipelineResult:
    schema = DatasetSchema.from_file(cfg.schema_path)
    source = load_dataset(schema, cfg.data_dir)
    if cfg.iterations < 1:
        raise SpecMismatch("iterations must be at least 1")
    letters = parse_order(cfg.order)

    if scale:
        if cfg.sizes_path is None:
            raise SpecMismatch("a sizes file is required to scale")
        sizes = load_size_target(cfg.sizes_path, schema)
        check_size_target(sizes, schema)
        dataset = rand_scale(source, sizes, cfg.seed)
    else:
        dataset = source.clone()
        sizes = dataset.sizes()

    tools = {letter: _make_tool(letter, cfg.seed) for letter in letters}
    targets = _targets_by_letter(
        cfg, letters, schema, source, sizes, tools, require_explicit=not scale
    )

    coordinator = Coordinator(
        CoordinatorConfig(e_threshold=cfg.e_threshold, crosscheck=cfg.crosscheck)
    )
    handles = {letter: coordinator.register(tools[letter]) for letter in letters}

    out_dir = Path(cfg.out_dir)
    initial_dir = out_dir / "initial"
    data_dir = out_dir / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, initial_dir)

    steps: list[dict] = []
    runs: list[dict] = []
    initial = _feature_section(dataset, letters, targets)
    step_no = 0
    for iteration in range(cfg.iterations):
        for letter in letters:
            tool = tools[letter]
            live = dataset.sizes()
            current = targets[letter]
            violations = tool.check_target(current, live)
            if violations:
                current = tool.repair_target(current, live)
                targets[letter] = current
            summary = coordinator.run_tool(handles[letter], current, dataset)
            runs.append(summary.to_dict())
            section = _feature_section(dataset, letters, targets)
            step_no += 1
            steps.append(
                {
                    "step": step_no,
                    "iteration": iteration + 1,
                    "tool": tool.name,
                    "targetRepaired": bool(violations),
                    "errors": _mean_errors(section),
                }
            )

    final_section = _feature_section(dataset, letters, targets)
    write_dataset(dataset, data_dir)

    journal_path = Path(cfg.journal_path) if cfg.journal_path else out_dir / "journal.ndjson"
    journal_path.parent.mkdir(parents=True, exist_ok=True)
    with open(journal_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in coordinator.journal:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    truth = (
        load_dataset(schema, cfg.ground_truth_dir)
        if cfg.ground_truth_dir
        else source
    )
    queries = _load_queries(cfg, schema)
    query_section = _query_section(queries, truth, dataset)

    report = {
        "config": {
            "order": "-".join(letters),
            "iterations": cfg.iterations,
            "seed": cfg.seed,
            "eThreshold": cfg.e_threshold,
            "scaled": scale,
        },
        "sizes": dict(sorted(dataset.sizes().items())),
        "initialErrors": _mean_errors(initial),
        "steps": steps,
        "finalErrors": _mean_errors(final_section),
        "features": final_section,
        "runs": runs,
        "queries": query_section,
        "journalRecords": len(coordinator.journal),
    }
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")

    return PipelineResult(
        dataset=dataset,
        report=report,
        report_path=report_path,
        journal_path=journal_path,
        out_paths={"initial": initial_dir, "data": data_dir},
    )


def run_scale(cfg: PipelineConfig) -> PipelineResult:
    """Scale only: write the randomly scaled dataset without tweaking."""
    schema = DatasetSchema.from_file(cfg.schema_path)
    source = load_dataset(schema, cfg.data_dir)
    if cfg.sizes_path is None:
        raise SpecMismatch("a sizes file is required to scale")
    sizes = load_size_target(cfg.sizes_path, schema)
    check_size_target(sizes, schema)
    dataset = rand_scale(source, sizes, cfg.seed)
    out_dir = Path(cfg.out_dir)
    data_dir = out_dir / "data"
    write_dataset(dataset, data_dir)
    report = {
        "config": {"seed": cfg.seed},
        "sizes": dict(sorted(dataset.sizes().items())),
    }
    report_path = out_dir / "report.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return PipelineResult(
        dataset=dataset,
        report=report,
        report_path=report_path,
        out_paths={"data": data_dir},
    )


def run_measure(cfg: PipelineConfig) -> dict:
    """Measure feature errors of an already-scaled dataset against targets,
    plus query errors when a ground truth is available."""
    schema = DatasetSchema.from_file(cfg.schema_path)
    dataset = load_dataset(schema, cfg.data_dir)
    explicit = (
        load_targets_file(cfg.targets_path, schema) if cfg.targets_path else {}
    )
    section = feature_error_report(
        dataset,
        linear_targets=explicit.get("linear", ()),
        coappear_targets=explicit.get("coappear", ()),
        pairwise_targets=explicit.get("pairwise", ()),
    )
    report: dict = {"features": section, "means": _mean_errors(section)}
    if cfg.ground_truth_dir:
        truth = load_dataset(schema, cfg.ground_truth_dir)
        queries = _load_queries(cfg, schema)
        report["queries"] = _query_section(queries, truth, dataset)
    return report


def validate_targets(cfg: PipelineConfig) -> dict:
    """Check every target in the file against the sizes; list violations."""
    schema = DatasetSchema.from_file(cfg.schema_path)
    if cfg.targets_path is None:
        raise SpecMismatch("validate-target needs a targets file")
    explicit = load_targets_file(cfg.targets_path, schema)
    if cfg.sizes_path is not None:
        sizes = load_size_target(cfg.sizes_path, schema)
    else:
        sizes = load_dataset(schema, cfg.data_dir).sizes()
    report: dict = {"violations": [], "checked": sorted(explicit)}
    tools = {"linear": "L", "coappear": "C", "pairwise": "P"}
    for section, letter in tools.items():
        if section not in explicit:
            continue
        tool = _make_tool(letter, cfg.seed)
        for v in tool.check_target(explicit[section], sizes):
            report["violations"].append(
                {
                    "feature": section,
                    "condition": v.condition,
                    "location": _jsonable(v.location),
                    "message": v.message,
                }
            )
    report["ok"] = not report["violations"]
    return report


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def analyze_overlap_journal(journal_path: str | Path) -> dict:
    """Overlap graph and a maximum independent set from a run journal."""
    access: dict[str, set[tuple[str, int]]] = {}
    try:
        with open(journal_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                tool = rec["toolName"]
                table = rec["tableID"]
                touched = access.setdefault(tool, set())
                for pk in rec["tupleIDs"]:
                    touched.add((table, pk))
    except OSError as exc:
        raise IoFailure(f"cannot read journal {journal_path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SpecMismatch(f"malformed journal {journal_path}: {exc}") from exc
    adj = overlap_graph(access)
    independent = maximum_independent_set(adj)
    return {
        "tools": sorted(access),
        "accessCounts": {t: len(s) for t, s in sorted(access.items())},
        "overlaps": sorted(
            [a, b] for a in adj for b in adj[a] if a < b
        ),
        "maxIndependentSet": list(independent),
    }
