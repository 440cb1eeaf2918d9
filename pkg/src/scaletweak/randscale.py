"""Random size scaling.

Builds a fresh dataset at requested per-table cardinalities: dense primary
keys 1..n, foreign keys drawn uniformly over the referenced table's new key
range, and non-key cells sampled with replacement from the source table's
empirical column values. Every table uses its own derived RNG stream, so one
table's size never shifts another table's draws.

When a source table is empty but its target is positive there is no empirical
pool; non-key cells then fall back to the column kind's default (0 or "").
"""

from __future__ import annotations

import json
from pathlib import Path

from .dataset import Dataset, Table
from .errors import InfeasibleTarget, IoFailure, SchemaParseError
from .seeding import derive_rng


def parse_size_target(raw: dict, schema) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for ts in schema.tables:
        if ts.name not in raw:
            raise SchemaParseError(f"size target missing table {ts.name!r}")
        n = raw[ts.name]
        if not isinstance(n, int) or n < 0:
            raise SchemaParseError(
                f"size target for {ts.name!r} must be a nonnegative integer"
            )
        sizes[ts.name] = n
    unknown = set(raw) - set(sizes)
    if unknown:
        raise SchemaParseError(f"size target names unknown tables {sorted(unknown)}")
    return sizes


def load_size_target(path: str | Path, schema) -> dict[str, int]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read sizes {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaParseError(f"sizes {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaParseError(f"sizes {path} must be an object of table counts")
    return parse_size_target(raw, schema)


def check_size_target(sizes: dict[str, int], schema) -> None:
    """A populated table needs populated referenced tables (FKs are non-null)."""
    for ts in schema.tables:
        if sizes[ts.name] <= 0:
            continue
        for fk in ts.foreign_keys:
            if sizes[fk.references] <= 0:
                raise InfeasibleTarget(
                    f"table {ts.name!r} has target {sizes[ts.name]} but referenced "
                    f"{fk.references!r} has target {sizes[fk.references]}"
                )


def rand_scale(dataset: Dataset, sizes: dict[str, int], seed: int) -> Dataset:
    """Scaled dataset with the same schema; source is left untouched."""
    schema = dataset.schema
    check_size_target(sizes, schema)
    tables: dict[str, Table] = {}
    for ts in schema.tables:
        source = dataset.tables[ts.name]
        n = sizes[ts.name]
        rng = derive_rng(seed, "randscale", ts.name)
        # empirical pools for non-key columns, in pk order for determinism
        pools: list[list | None] = []
        for ci in range(source.width):
            if source.references[ci] is not None:
                pools.append(None)
            else:
                pools.append([source.rows[pk][ci] for pk in sorted(source.rows)])
        rows: dict[int, list] = {}
        for pk in range(1, n + 1):
            cells = []
            for ci in range(source.width):
                ref = source.references[ci]
                if ref is not None:
                    cells.append(rng.randint(1, sizes[ref]))
                else:
                    pool = pools[ci]
                    if pool:
                        cells.append(rng.choice(pool))
                    else:
                        cells.append(0 if source.col_kinds[ci] == "integer" else "")
            rows[pk] = cells
        tables[ts.name] = Table(ts, rows)
    return Dataset(schema, tables)
