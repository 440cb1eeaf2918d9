"""Shared workbench for the experiment scripts.

Provides a six-table synthetic schema in which all three feature families
overlap on the same foreign keys, seeded random filling, reference-derived
target files, and on-disk workspace layout for the pipeline.
"""

import json
from pathlib import Path

from scaletweak.coappear import CoappearTool
from scaletweak.dataset import Dataset, write_dataset
from scaletweak.linear import LinearTool
from scaletweak.pairwise import PairwiseTool
from scaletweak.schema import DatasetSchema


def _table(name, fks=()):
    cols = [{"name": "id", "kind": "integer"}]
    cols += [{"name": c, "kind": "integer"} for c, _ in fks]
    return {
        "name": name,
        "columns": cols,
        "primaryKey": "id",
        "foreignKeys": [{"column": c, "references": r} for c, r in fks],
    }


def social_schema() -> DatasetSchema:
    """Users U, comments C, posts P and three response tables R1..R3.

    Every foreign key lies on a maximal chain, C/P and R1..R3 form two
    coappearance groups, and each response table carries a pairwise binding,
    so all three tweaking tools collide on the same cells.
    """
    tables = [
        _table("U"),
        _table("C", fks=[("ref", "U")]),
        _table("P", fks=[("owner", "U")]),
        _table("R1", fks=[("post", "P"), ("author", "U")]),
        _table("R2", fks=[("post", "P"), ("author", "U")]),
        _table("R3", fks=[("post", "P"), ("author", "U")]),
    ]
    bindings = [
        {
            "userTable": "U",
            "postTable": "P",
            "responseTable": r,
            "postOwnerColumn": "owner",
            "responsePostColumn": "post",
            "responseUserColumn": "author",
        }
        for r in ("R1", "R2", "R3")
    ]
    return DatasetSchema.from_dict(
        {"tables": tables, "pairwiseBindings": bindings}
    )


def fill_random(schema: DatasetSchema, sizes: dict, rng) -> Dataset:
    """Dense keys 1..n with uniform foreign keys."""
    rows = {}
    for ts in schema.tables:
        table_rows = {}
        for pk in range(1, sizes[ts.name] + 1):
            cells = []
            for col in ts.data_columns:
                fk = ts.fk_for_column(col.name)
                if fk is not None:
                    cells.append(rng.randint(1, sizes[fk.references]))
                else:
                    cells.append(rng.randint(0, 9))
            table_rows[pk] = cells
        rows[ts.name] = table_rows
    return Dataset.from_rows(schema, rows)


def reference_targets(schema: DatasetSchema, sizes: dict, rng) -> dict:
    """Targets calculated from one fresh dataset at the requested sizes.

    All three sections are realized by the same dataset, so they are jointly
    attainable; runs against them measure coordination quality rather than
    target compatibility.
    """
    reference = fill_random(schema, sizes, rng)
    return {
        "linear": [m.to_dict() for m in LinearTool().calculate(reference)],
        "coappear": [d.to_dict() for d in CoappearTool().calculate(reference)],
        "pairwise": [d.to_dict() for d in PairwiseTool().calculate(reference)],
    }


def write_workspace(root, schema, dataset, sizes, targets=None) -> dict:
    """Materialize schema.json, data/, sizes.json and optionally targets.json."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = {"schema": root / "schema.json", "data": root / "data",
             "sizes": root / "sizes.json"}
    paths["schema"].write_text(
        json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    write_dataset(dataset, paths["data"])
    paths["sizes"].write_text(json.dumps(sizes) + "\n", encoding="utf-8")
    if targets is not None:
        paths["targets"] = root / "targets.json"
        paths["targets"].write_text(json.dumps(targets) + "\n", encoding="utf-8")
    return paths
