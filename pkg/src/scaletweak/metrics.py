"""Evaluation queries and the scaled-versus-truth error measure.

Queries are deliberately evaluated by direct table scans, independent of the
incremental bookkeeping the tweaking tools maintain, so a disagreement
between the two surfaces as a test failure instead of hiding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dataset import EMPTY, Dataset
from .errors import SpecMismatch, ZeroTruth
from .linear import resolve_chain
from .pairwise import _binding_cis, resolve_binding
from .schema import DatasetSchema

_KINDS = (
    "chainRootCount",
    "referencerThresholdCount",
    "averageReferencers",
    "interactingUserPairs",
)


@dataclass(frozen=True)
class QuerySpec:
    kind: str
    name: str
    params: dict = field(default_factory=dict)


def parse_query(raw: dict, schema: DatasetSchema, default_name: str) -> QuerySpec:
    kind = raw.get("kind")
    if kind not in _KINDS:
        raise SpecMismatch(f"unknown query kind {kind!r}")
    name = raw.get("name", default_name)
    params: dict = {}
    if kind == "chainRootCount":
        chain = resolve_chain(
            schema,
            tuple(raw.get("chain", ())),
            tuple(raw["fkColumns"]) if "fkColumns" in raw else None,
        )
        params["chain"] = chain
    elif kind in ("referencerThresholdCount", "averageReferencers"):
        table = raw.get("referencing")
        column = raw.get("column")
        if not schema.has_table(table):
            raise SpecMismatch(f"query names unknown table {table!r}")
        fk = schema.table(table).fk_for_column(column)
        if fk is None:
            raise SpecMismatch(f"{table}.{column} is not a foreign key")
        params["referencing"] = table
        params["column"] = column
        params["referenced"] = fk.references
        if kind == "referencerThresholdCount":
            try:
                params["k"] = int(raw["k"])
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecMismatch(f"query needs an integer k: {exc}") from exc
            if params["k"] < 0:
                raise SpecMismatch("query threshold k cannot be negative")
    else:
        params["binding"] = resolve_binding(schema, raw.get("binding", {}))
    return QuerySpec(kind=kind, name=name, params=params)


def parse_query_suite(raw: list, schema: DatasetSchema) -> list[QuerySpec]:
    if not isinstance(raw, list):
        raise SpecMismatch("query file must hold a list of query objects")
    out = []
    for n, entry in enumerate(raw):
        out.append(parse_query(entry, schema, default_name=f"query{n}"))
    names = [q.name for q in out]
    if len(set(names)) != len(names):
        raise SpecMismatch("query names must be unique")
    return out


def default_query_suite(schema: DatasetSchema) -> list[QuerySpec]:
    """One query per chain, per foreign key and per binding."""
    from .schema import enumerate_maximal_chains

    out: list[QuerySpec] = []
    for chain in enumerate_maximal_chains(schema):
        out.append(
            QuerySpec(
                kind="chainRootCount",
                name="chainRootCount:" + ">".join(chain.tables),
                params={"chain": chain},
            )
        )
    for table in schema.tables:
        for fk in table.foreign_keys:
            base = f"{table.name}.{fk.column}"
            out.append(
                QuerySpec(
                    kind="averageReferencers",
                    name=f"averageReferencers:{base}",
                    params={
                        "referencing": table.name,
                        "column": fk.column,
                        "referenced": fk.references,
                    },
                )
            )
            out.append(
                QuerySpec(
                    kind="referencerThresholdCount",
                    name=f"referencerThresholdCount:{base}<=1",
                    params={
                        "referencing": table.name,
                        "column": fk.column,
                        "referenced": fk.references,
                        "k": 1,
                    },
                )
            )
    for b in sorted(schema.pairwise_bindings, key=lambda b: b.key()):
        out.append(
            QuerySpec(
                kind="interactingUserPairs",
                name=f"interactingUserPairs:{b.response_table}",
                params={"binding": b},
            )
        )
    return out


def eval_query(dataset: Dataset, query: QuerySpec) -> float:
    if query.kind == "chainRootCount":
        return float(_chain_root_count(dataset, query.params["chain"]))
    if query.kind == "referencerThresholdCount":
        return float(
            _referencer_threshold_count(
                dataset,
                query.params["referencing"],
                query.params["column"],
                query.params["referenced"],
                query.params["k"],
            )
        )
    if query.kind == "averageReferencers":
        return _average_referencers(
            dataset,
            query.params["referencing"],
            query.params["column"],
            query.params["referenced"],
        )
    if query.kind == "interactingUserPairs":
        return float(_interacting_user_pairs(dataset, query.params["binding"]))
    raise SpecMismatch(f"unknown query kind {query.kind!r}")


def _chain_root_count(dataset: Dataset, chain) -> int:
    """Roots in the first chain table with a full path to the last."""
    alive: set[int] | None = None
    for level in range(chain.length - 1, 0, -1):
        table = dataset.tables[chain.tables[level]]
        ci = table.schema.data_index(chain.fk_columns[level - 1])
        parents = set()
        for pk, cells in table.rows.items():
            if alive is not None and pk not in alive:
                continue
            p = cells[ci]
            if p is not EMPTY:
                parents.add(p)
        alive = parents
    if alive is None:
        return dataset.tables[chain.tables[0]].size()
    return len(alive & set(dataset.tables[chain.tables[0]].rows))


def _referencer_counts(
    dataset: Dataset, referencing: str, column: str, referenced: str
) -> dict[int, int]:
    table = dataset.tables[referencing]
    ci = table.schema.data_index(column)
    counts = {pk: 0 for pk in dataset.tables[referenced].rows}
    for cells in table.rows.values():
        v = cells[ci]
        if v is not EMPTY and v in counts:
            counts[v] += 1
    return counts


def _referencer_threshold_count(
    dataset: Dataset, referencing: str, column: str, referenced: str, k: int
) -> int:
    counts = _referencer_counts(dataset, referencing, column, referenced)
    return sum(1 for n in counts.values() if n <= k)


def _average_referencers(
    dataset: Dataset, referencing: str, column: str, referenced: str
) -> float:
    counts = _referencer_counts(dataset, referencing, column, referenced)
    used = sum(1 for n in counts.values() if n > 0)
    if not used:
        return 0.0
    total = sum(counts.values())
    return total / used


def _interacting_user_pairs(dataset: Dataset, binding) -> int:
    owner_ci, rpost_ci, ruser_ci = _binding_cis(dataset, binding)
    posts = dataset.tables[binding.post_table].rows
    pairs: set[tuple[int, int]] = set()
    for cells in dataset.tables[binding.response_table].rows.values():
        p = cells[rpost_ci]
        u = cells[ruser_ci]
        if p is EMPTY or u is EMPTY:
            continue
        v = posts[p][owner_ci]
        if v is EMPTY or u == v:
            continue
        pairs.add((u, v) if u < v else (v, u))
    return len(pairs)


def query_error(scaled: float, truth: float) -> float:
    """Relative error against the ground-truth value."""
    if truth == 0:
        raise ZeroTruth("query ground truth is 0; relative error is undefined")
    return abs(scaled - truth) / abs(truth)


def feature_error_report(
    dataset: Dataset,
    linear_targets=(),
    coappear_targets=(),
    pairwise_targets=(),
) -> dict:
    """Per-item feature errors with their means; empty targets, empty report."""
    from .coappear import coappear_error, compute_coappear
    from .linear import compute_linear_matrix, linear_error
    from .pairwise import compute_pairwise, pairwise_error

    sizes = dataset.sizes()
    report: dict = {}
    if linear_targets:
        items = []
        for m in sorted(linear_targets, key=lambda m: m.chain.key()):
            actual = compute_linear_matrix(dataset, m.chain)
            items.append(
                {"chain": list(m.chain.tables), "error": linear_error(actual, m)}
            )
        report["linear"] = {
            "items": items,
            "mean": sum(i["error"] for i in items) / len(items),
        }
    if coappear_targets:
        items = []
        for d in sorted(coappear_targets, key=lambda d: d.group.key()):
            actual = compute_coappear(dataset, d.group)
            items.append(
                {
                    "group": d.group.to_dict(),
                    "error": coappear_error(actual, d, sizes),
                }
            )
        report["coappear"] = {
            "items": items,
            "mean": sum(i["error"] for i in items) / len(items),
        }
    if pairwise_targets:
        items = []
        for d in sorted(pairwise_targets, key=lambda d: d.binding.key()):
            actual = compute_pairwise(dataset, d.binding)
            items.append(
                {
                    "binding": d.binding.key(),
                    "error": pairwise_error(actual, d, sizes),
                }
            )
        report["pairwise"] = {
            "items": items,
            "mean": sum(i["error"] for i in items) / len(items),
        }
    return report
