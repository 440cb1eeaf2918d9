"""Shared schema builders, worked-example datasets, random fillers and
brute-force oracles used across the suite.

The oracles recompute each feature from raw table scans in a deliberately
different formulation from the package (ancestor walks instead of reach
bookkeeping, Counter inversion instead of occurrence maps), so agreement is
evidence rather than tautology.
"""

from __future__ import annotations

import json
import random
from collections import Counter

from scaletweak import (
    AppendTuple,
    Coordinator,
    CoordinatorConfig,
    Dataset,
    DatasetSchema,
    DeleteValues,
    InsertValues,
    ReplaceValues,
    apply_modification,
)
from scaletweak.dataset import EMPTY
from scaletweak.dataset import write_dataset as _write_dataset

# --- schema construction ---------------------------------------------------


def table_dict(name, fks=(), data=()):
    """Table description: integer pk `id`, FK columns, then payload columns."""
    cols = [{"name": "id", "kind": "integer"}]
    cols += [{"name": c, "kind": "integer"} for c, _ in fks]
    cols += [{"name": c, "kind": k} for c, k in data]
    return {
        "name": name,
        "columns": cols,
        "primaryKey": "id",
        "foreignKeys": [{"column": c, "references": r} for c, r in fks],
    }


def make_schema(tables, bindings=()):
    return DatasetSchema.from_dict(
        {"tables": list(tables), "pairwiseBindings": list(bindings)}
    )


def chain_schema(names=("A", "B", "C", "D")):
    """One straight reference chain: names[i+1] references names[i]."""
    tables = [table_dict(names[0])]
    for parent, child in zip(names, names[1:]):
        tables.append(table_dict(child, fks=[(f"{parent.lower()}_id", parent)]))
    return make_schema(tables)


def binding_dict(user, post, response):
    return {
        "userTable": user,
        "postTable": post,
        "responseTable": response,
        "postOwnerColumn": "owner",
        "responsePostColumn": "post",
        "responseUserColumn": "author",
    }


def social_schema():
    """Six tables where all three feature families overlap.

    R1/R2/R3 sit in the {P, U} coappearance group and each carries a pairwise
    binding; C and P form the singleton-refset {U} group; every foreign key
    lies on one of seven maximal chains.
    """
    tables = [
        table_dict("U"),
        table_dict("C", fks=[("ref", "U")]),
        table_dict("P", fks=[("owner", "U")]),
        table_dict("R1", fks=[("post", "P"), ("author", "U")]),
        table_dict("R2", fks=[("post", "P"), ("author", "U")]),
        table_dict("R3", fks=[("post", "P"), ("author", "U")]),
    ]
    bindings = [binding_dict("U", "P", r) for r in ("R1", "R2", "R3")]
    return make_schema(tables, bindings)


# --- worked examples -------------------------------------------------------

LINEAR_FIGURE_ROWS = ((0,), (3, 0), (2, 4, 0), (1, 2, 2, 0))
LINEAR_FIGURE_TARGET = ((0,), (2, 0), (2, 5, 0), (2, 5, 5, 0))


def linear_figure_dataset():
    """Four-level chain whose join matrix is LINEAR_FIGURE_ROWS."""
    return Dataset.from_rows(
        chain_schema(),
        {
            "A": {1: [], 2: [], 3: []},
            "B": {1: [1], 2: [2], 3: [2], 4: [3], 5: [3]},
            "C": {1: [2], 2: [2], 3: [3], 4: [4], 5: [5]},
            "D": {1: [4], 2: [4], 3: [4], 4: [5], 5: [5]},
        },
    )


def coappear_figure_dataset():
    """Three referencing tables over {T_H, T_K}: appearance vector (3,3,1)
    occurs once and (1,1,2) twice; six of the nine combinations are unused."""
    schema = make_schema(
        [
            table_dict("T_H"),
            table_dict("T_K"),
            table_dict("T_A", fks=[("h_id", "T_H"), ("k_id", "T_K")]),
            table_dict("T_B", fks=[("h_id", "T_H"), ("k_id", "T_K")]),
            table_dict("T_C", fks=[("h_id", "T_H"), ("k_id", "T_K")]),
        ]
    )
    spread = {1: [2, 1], 2: [2, 1], 3: [2, 1], 4: [3, 2], 5: [1, 3]}
    skew = {1: [2, 1], 2: [3, 2], 3: [3, 2], 4: [1, 3], 5: [1, 3]}
    return Dataset.from_rows(
        schema,
        {
            "T_H": {1: [], 2: [], 3: []},
            "T_K": {1: [], 2: [], 3: []},
            "T_A": {pk: list(v) for pk, v in spread.items()},
            "T_B": {pk: list(v) for pk, v in spread.items()},
            "T_C": {pk: list(v) for pk, v in skew.items()},
        },
    )


def pairwise_figure_dataset():
    """Two users, three posts, six responses: one user pair interacting with
    ordered counts (2, 4) and (4, 2), no self responses."""
    schema = make_schema(
        [
            table_dict("U"),
            table_dict("P", fks=[("owner", "U")]),
            table_dict("R", fks=[("post", "P"), ("author", "U")]),
        ],
        [binding_dict("U", "P", "R")],
    )
    return Dataset.from_rows(
        schema,
        {
            "U": {1: [], 2: []},
            "P": {1: [1], 2: [1], 3: [2]},
            "R": {1: [3, 1], 2: [3, 1], 3: [1, 2], 4: [1, 2], 5: [2, 2], 6: [2, 2]},
        },
    )


# --- random datasets -------------------------------------------------------


def fill_random(schema, sizes, rng):
    """Dense keys 1..n, uniform foreign keys, small random payload cells."""
    rows = {}
    for ts in schema.tables:
        table_rows = {}
        for pk in range(1, sizes[ts.name] + 1):
            cells = []
            for col in ts.data_columns:
                fk = ts.fk_for_column(col.name)
                if fk is not None:
                    cells.append(rng.randint(1, sizes[fk.references]))
                elif col.kind == "integer":
                    cells.append(rng.randint(0, 9))
                else:
                    cells.append(rng.choice("abcdef"))
            table_rows[pk] = cells
        rows[ts.name] = table_rows
    return Dataset.from_rows(schema, rows)


def log_uniform_sizes(rng, names, lo=100, hi=10000, skew=2.0):
    """Per-table counts spanning [lo, hi], leaning toward the small end."""
    out = {}
    for name in names:
        u = rng.random() ** skew
        out[name] = int(round(lo * (hi / lo) ** u))
    return out


def random_chain_schema(rng):
    k = rng.randint(3, 5)
    return chain_schema(tuple(f"T{n}" for n in range(1, k + 1)))


def random_coappear_schema(rng):
    """Star of 2..4 referencing tables over 1..2 referenced, 3..5 total."""
    n_ref = rng.randint(1, 2)
    n_src = rng.randint(2, 5 - n_ref)
    refs = [f"V{j}" for j in range(1, n_ref + 1)]
    tables = [table_dict(r) for r in refs]
    for i in range(1, n_src + 1):
        tables.append(
            table_dict(f"S{i}", fks=[(f"v{j + 1}", r) for j, r in enumerate(refs)])
        )
    return make_schema(tables)


def random_pairwise_schema(rng):
    """User/post/response core plus at most one extra response table."""
    tables = [
        table_dict("U"),
        table_dict("P", fks=[("owner", "U")]),
        table_dict("R1", fks=[("post", "P"), ("author", "U")]),
    ]
    responses = ["R1"]
    if rng.random() < 0.5:
        tables.append(table_dict("R2", fks=[("post", "P"), ("author", "U")]))
        responses.append("R2")
    return make_schema(tables, [binding_dict("U", "P", r) for r in responses])


# --- brute-force oracles ---------------------------------------------------


def brute_linear_rows(dataset, chain):
    """Entry (j, i), 1-based: distinct level-(i-1) ancestors reached by
    walking parent pointers up from every level-(j-1) tuple."""
    k = chain.length
    parent = [None]
    for level in range(1, k):
        table = dataset.tables[chain.tables[level]]
        ci = table.schema.data_index(chain.fk_columns[level - 1])
        parent.append({pk: cells[ci] for pk, cells in table.rows.items()})
    rows = []
    for j in range(1, k + 1):
        row = []
        for i in range(1, j):
            ancestors = set()
            for pk in dataset.tables[chain.tables[j - 1]].rows:
                a = pk
                for level in range(j - 1, i - 1, -1):
                    a = parent[level].get(a)
                    if a is EMPTY or a is None:
                        a = None
                        break
                if a is not None:
                    ancestors.add(a)
            row.append(len(ancestors))
        row.append(0)
        rows.append(tuple(row))
    return tuple(rows)


def brute_coappear_cells(dataset, group):
    """Appearance-vector counts via per-combination Counter inversion."""
    per_combo: dict[tuple, list[int]] = {}
    for t_i, name in enumerate(group.referencing):
        table = dataset.tables[name]
        cis = [table.schema.data_index(c) for c in group.fk_columns[t_i]]
        for cells in table.rows.values():
            combo = tuple(cells[ci] for ci in cis)
            if any(v is EMPTY for v in combo):
                continue
            per_combo.setdefault(combo, [0] * group.width)[t_i] += 1
    tally = Counter(tuple(v) for v in per_combo.values())
    return dict(tally)


def brute_pairwise_cells(dataset, binding):
    """(rho_n, rho_s) dicts; rho_n stores both orders per interacting pair."""
    post_t = dataset.tables[binding.post_table]
    owner_ci = post_t.schema.data_index(binding.post_owner_column)
    resp_t = dataset.tables[binding.response_table]
    rpost_ci = resp_t.schema.data_index(binding.response_post_column)
    ruser_ci = resp_t.schema.data_index(binding.response_user_column)
    cross: Counter = Counter()
    selfc: Counter = Counter()
    for cells in resp_t.rows.values():
        p = cells[rpost_ci]
        u = cells[ruser_ci]
        if p is EMPTY or u is EMPTY:
            continue
        v = post_t.rows[p][owner_ci]
        if v is EMPTY:
            continue
        if u == v:
            selfc[u] += 1
        else:
            cross[(u, v)] += 1
    users = sorted(dataset.tables[binding.user_table].rows)
    rho_n: Counter = Counter()
    for a_i, u in enumerate(users):
        for v in users[a_i + 1 :]:
            x = cross.get((u, v), 0)
            y = cross.get((v, u), 0)
            if x or y:
                rho_n[(x, y)] += 1
                rho_n[(y, x)] += 1
    return dict(rho_n), dict(Counter(selfc.values()))


# --- modification generators ----------------------------------------------


def _random_value(table, ci, dataset, rng):
    ref = table.references[ci]
    if ref is not None:
        return rng.choice(sorted(dataset.tables[ref].rows))
    if table.col_kinds[ci] == "integer":
        return rng.randint(0, 9)
    return rng.choice("abcdef")


def _append_values(table, dataset, rng):
    return tuple(_random_value(table, ci, dataset, rng) for ci in range(table.width))


def random_rest_edit(dataset, rng):
    """One integrity-preserving batch that leaves no Empty cells behind:
    a replace, an append, or a delete immediately refilled by an insert."""
    names = [n for n, t in dataset.tables.items() if t.width and t.rows]
    if not names:
        return [AppendTuple(table=sorted(dataset.tables)[0], values=())]
    table_name = rng.choice(sorted(names))
    table = dataset.tables[table_name]
    pk = rng.choice(sorted(table.rows))
    ci = rng.randrange(table.width)
    kind = rng.random()
    if kind < 0.5:
        value = _random_value(table, ci, dataset, rng)
        return [ReplaceValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,), values=(value,))]
    if kind < 0.75:
        value = _random_value(table, ci, dataset, rng)
        return [
            DeleteValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,)),
            InsertValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,), values=(value,)),
        ]
    return [AppendTuple(table=table_name, values=_append_values(table, dataset, rng))]


def random_fuzz_batch(dataset, rng):
    """One check-valid batch for fuzzing; may create or fill Empty cells."""
    names = [n for n, t in dataset.tables.items() if t.width and t.rows]
    table_name = rng.choice(sorted(names))
    table = dataset.tables[table_name]
    pk = rng.choice(sorted(table.rows))
    ci = rng.randrange(table.width)
    cell_empty = table.rows[pk][ci] is EMPTY
    kind = rng.random()
    if kind < 0.1:
        return [AppendTuple(table=table_name, values=_append_values(table, dataset, rng))]
    if cell_empty:
        value = _random_value(table, ci, dataset, rng)
        return [InsertValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,), values=(value,))]
    if kind < 0.35:
        return [DeleteValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,))]
    value = _random_value(table, ci, dataset, rng)
    return [ReplaceValues(table=table_name, tuple_ids=(pk,), col_indexes=(ci,), values=(value,))]


def apply_edits(dataset, rng, n_batches):
    """Apply n rest-preserving random batches directly, outside any session."""
    for _ in range(n_batches):
        for mod in random_rest_edit(dataset, rng):
            apply_modification(dataset, mod)
    assert dataset.empty_cell_count() == 0
    return dataset


# --- session helpers -------------------------------------------------------


def solo_run(tool, dataset, target, **cfg_kwargs):
    """Register one tool, run it, return (coordinator, summary)."""
    coordinator = Coordinator(CoordinatorConfig(**cfg_kwargs))
    handle = coordinator.register(tool)
    summary = coordinator.run_tool(handle, target, dataset)
    return coordinator, summary


def seeded(n):
    return random.Random(n)


# --- on-disk fixtures ------------------------------------------------------


def write_workspace(root, schema, dataset, sizes=None):
    """Materialize schema.json, data/ CSV files and an optional sizes.json."""
    root.mkdir(parents=True, exist_ok=True)
    schema_path = root / "schema.json"
    schema_path.write_text(
        json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    data_dir = root / "data"
    _write_dataset(dataset, data_dir)
    paths = {"schema": schema_path, "data": data_dir}
    if sizes is not None:
        sizes_path = root / "sizes.json"
        sizes_path.write_text(json.dumps(sizes) + "\n", encoding="utf-8")
        paths["sizes"] = sizes_path
    return paths
