"""Command line behavior: config merging, exit codes, stderr records."""

import json

import pytest

from conftest import (
    chain_schema,
    fill_random,
    seeded,
    social_schema,
    write_workspace,
)
from scaletweak import LinearTool
from scaletweak.cli import _exit_code, main
from scaletweak.errors import (
    CoordinatorExhausted,
    InfeasibleTarget,
    SpecMismatch,
    TargetInfeasible,
)


@pytest.fixture
def ws(tmp_path):
    rng = seeded(9)
    schema = social_schema()
    ds = fill_random(schema, {t.name: rng.randint(6, 12) for t in schema.tables}, rng)
    sizes = {t.name: 10 for t in schema.tables}
    paths = write_workspace(tmp_path / "ws", schema, ds, sizes=sizes)
    paths["out"] = tmp_path / "out"
    paths["source"] = ds
    return paths


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    out = json.loads(captured.out) if captured.out.strip() else None
    err = json.loads(captured.err) if captured.err.strip() else None
    return code, out, err


def test_scale_subcommand(ws, capsys):
    code, out, err = run_cli(
        capsys,
        "scale",
        "--schema", ws["schema"],
        "--data", ws["data"],
        "--sizes", ws["sizes"],
        "--out", ws["out"],
    )
    assert code == 0 and err is None
    assert out["sizes"] == {t: 10 for t in out["sizes"]}
    assert (ws["out"] / "data" / "U.csv").is_file()


def test_run_subcommand_with_json_config(ws, tmp_path, capsys):
    cfg = {
        "schema": str(ws["schema"]),
        "data": str(ws["data"]),
        "sizes": str(ws["sizes"]),
        "out": str(ws["out"]),
        "order": "L",
        "seed": 7,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code, out, err = run_cli(capsys, "run", "--config", cfg_path)
    assert code == 0 and err is None
    assert set(out) == {"report", "journal", "finalErrors"}
    report = json.loads((ws["out"] / "report.json").read_text("utf-8"))
    assert report["config"]["seed"] == 7
    assert report["config"]["order"] == "L"
    assert (ws["out"] / "journal.ndjson").is_file()


def test_flags_override_toml_config(ws, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        f'schema = "{ws["schema"]}"\n'
        f'data = "{ws["data"]}"\n'
        f'sizes = "{ws["sizes"]}"\n'
        f'out = "{ws["out"]}"\n'
        "order = \"L-C-P\"\n"
        "iterations = 2\n"
        "seed = 1\n"
    )
    code, out, err = run_cli(
        capsys, "run", "--config", cfg_path, "--seed", 2, "--order", "C"
    )
    assert code == 0
    report = json.loads((ws["out"] / "report.json").read_text("utf-8"))
    # flag beats config file, config file beats built-in default
    assert report["config"]["seed"] == 2
    assert report["config"]["order"] == "C"
    assert report["config"]["iterations"] == 2
    assert len(report["steps"]) == 2


def test_unknown_config_key_is_a_usage_error(ws, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"schema": str(ws["schema"]), "voltage": 9}))
    code, out, err = run_cli(capsys, "run", "--config", cfg_path)
    assert code == 2
    assert err["error"] == "SpecMismatch"
    assert "voltage" in err["message"]


def test_config_file_needs_known_extension(ws, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text("x")
    code, out, err = run_cli(capsys, "run", "--config", cfg_path)
    assert code == 2 and err["error"] == "SpecMismatch"


def test_missing_required_options(ws, capsys):
    code, out, err = run_cli(capsys, "scale", "--schema", ws["schema"])
    assert code == 2
    assert err["error"] == "SpecMismatch"
    assert "--sizes" in err["message"] and "--out" in err["message"]


def test_infeasible_sizes_exit_code(tmp_path, capsys):
    rng = seeded(2)
    schema = chain_schema(("A", "B"))
    ds = fill_random(schema, {"A": 4, "B": 6}, rng)
    paths = write_workspace(tmp_path / "ws", schema, ds, sizes={"A": 0, "B": 5})
    code, out, err = run_cli(
        capsys,
        "scale",
        "--schema", paths["schema"],
        "--data", paths["data"],
        "--sizes", paths["sizes"],
        "--out", tmp_path / "out",
    )
    assert code == 3
    assert err["error"] == "InfeasibleTarget"


def test_validate_target_exit_codes(ws, tmp_path, capsys):
    src = ws["source"]
    good = {"linear": [m.to_dict() for m in LinearTool().calculate(src)]}
    good_path = tmp_path / "good.json"
    good_path.write_text(json.dumps(good))
    code, out, err = run_cli(
        capsys,
        "validate-target",
        "--schema", ws["schema"],
        "--targets", good_path,
        "--data", ws["data"],
    )
    assert code == 0 and out["ok"] is True

    bad = json.loads(json.dumps(good))
    bad["linear"][0]["h"][-1][0] = 10_000
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    code, out, err = run_cli(
        capsys,
        "validate-target",
        "--schema", ws["schema"],
        "--targets", bad_path,
        "--data", ws["data"],
    )
    assert code == 3 and out["ok"] is False and out["violations"]

    code, out, err = run_cli(
        capsys, "validate-target", "--schema", ws["schema"], "--targets", good_path
    )
    assert code == 2 and err["error"] == "SpecMismatch"


def test_tweak_subcommand_uses_explicit_targets(ws, tmp_path, capsys):
    targets = {"linear": [m.to_dict() for m in LinearTool().calculate(ws["source"])]}
    targets_path = tmp_path / "targets.json"
    targets_path.write_text(json.dumps(targets))
    code, out, err = run_cli(
        capsys,
        "tweak",
        "--schema", ws["schema"],
        "--data", ws["data"],
        "--targets", targets_path,
        "--order", "L",
        "--out", ws["out"],
    )
    assert code == 0
    assert out["finalErrors"] == {"linear": 0.0}


def test_measure_subcommand_writes_report(ws, capsys):
    code, out, err = run_cli(
        capsys,
        "measure",
        "--schema", ws["schema"],
        "--data", ws["data"],
        "--out", ws["out"],
    )
    assert code == 0
    assert out == {"features": {}, "means": {}}
    assert json.loads((ws["out"] / "measure.json").read_text("utf-8")) == out


def test_analyze_overlap_subcommand(ws, tmp_path, capsys):
    code, _, _ = run_cli(
        capsys,
        "run",
        "--schema", ws["schema"],
        "--data", ws["data"],
        "--sizes", ws["sizes"],
        "--order", "L-P",
        "--out", ws["out"],
    )
    assert code == 0
    code, out, err = run_cli(
        capsys,
        "analyze-overlap",
        "--journal", ws["out"] / "journal.ndjson",
        "--out", tmp_path / "overlap_out",
    )
    assert code == 0
    assert set(out) == {"tools", "accessCounts", "overlaps", "maxIndependentSet"}
    assert (tmp_path / "overlap_out" / "overlap.json").is_file()

    code, out, err = run_cli(
        capsys, "analyze-overlap", "--journal", tmp_path / "absent.ndjson"
    )
    assert code == 2 and err["error"] == "IoFailure"


def test_sweep_subcommand_runs_selected_orders(ws, capsys):
    code, out, err = run_cli(
        capsys,
        "sweep",
        "--schema", ws["schema"],
        "--data", ws["data"],
        "--sizes", ws["sizes"],
        "--out", ws["out"],
        "--orders", "L-C,C-L",
    )
    assert code == 0 and err is None
    assert out["orders"] == ["L-C", "C-L"]
    assert [r["exitCode"] for r in out["results"]] == [0, 0]
    for r in out["results"]:
        assert set(r["finalErrors"]) == {"linear", "coappear"}
        report = json.loads((ws["out"] / r["order"].replace("-", "") / "report.json").read_text("utf-8"))
        assert report["config"]["order"] == r["order"]
    assert json.loads((ws["out"] / "sweep.json").read_text("utf-8")) == out


def test_exit_code_mapping():
    assert _exit_code(SpecMismatch("x")) == 2
    assert _exit_code(InfeasibleTarget("x")) == 3
    assert _exit_code(TargetInfeasible("x")) == 3
    assert _exit_code(CoordinatorExhausted("x")) == 4
