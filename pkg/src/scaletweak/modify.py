"""Standardized dataset modifications and their journal wire format.

Three cell-level edits plus one row-level extension:

- DeleteValues:  non-Empty cells become Empty.
- InsertValues:  Empty cells receive one shared value vector.
- ReplaceValues: non-Empty cells receive one shared value vector.
- AppendTuple:   adds a full row (used only for bounded post growth).

Column indexes address the non-key columns in declared order; primary keys are
immutable by construction. Foreign key values must always reference existing
primary keys, so integrity can only be broken by leaving cells Empty, which
tool runs must repair before completing.

RemoveTuple exists solely so trial applications of AppendTuple can be rolled
back; it never appears in journals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .dataset import EMPTY, Dataset
from .errors import MalformedModification


@dataclass(frozen=True)
class DeleteValues:
    table: str
    tuple_ids: tuple[int, ...]
    col_indexes: tuple[int, ...]


@dataclass(frozen=True)
class InsertValues:
    table: str
    tuple_ids: tuple[int, ...]
    col_indexes: tuple[int, ...]
    values: tuple


@dataclass(frozen=True)
class ReplaceValues:
    table: str
    tuple_ids: tuple[int, ...]
    col_indexes: tuple[int, ...]
    values: tuple


@dataclass(frozen=True)
class AppendTuple:
    table: str
    values: tuple  # full data-column row
    pk: int | None = None  # forced on journal replay, assigned otherwise


@dataclass(frozen=True)
class RemoveTuple:
    """Internal inverse of AppendTuple for trial rollback only."""

    table: str
    pk: int


Modification = Union[DeleteValues, InsertValues, ReplaceValues, AppendTuple]


@dataclass(frozen=True)
class Undo:
    """Inverse information for one applied modification."""

    kind: str  # "cells" | "append"
    table: str
    cells: tuple[tuple[int, int, object], ...] = ()  # (pk, ci, old value)
    pk: int = 0


def _check_cell_op(
    dataset: Dataset,
    mod: DeleteValues | InsertValues | ReplaceValues,
    want_empty: bool,
) -> None:
    if mod.table not in dataset.tables:
        raise MalformedModification(f"no table {mod.table!r}")
    table = dataset.tables[mod.table]
    if not mod.tuple_ids:
        raise MalformedModification("modification targets no tuples")
    if not mod.col_indexes:
        raise MalformedModification("modification targets no columns")
    if len(set(mod.col_indexes)) != len(mod.col_indexes):
        raise MalformedModification("duplicate column indexes")
    if len(set(mod.tuple_ids)) != len(mod.tuple_ids):
        raise MalformedModification("duplicate tuple ids")
    for ci in mod.col_indexes:
        if not 0 <= ci < table.width:
            raise MalformedModification(
                f"column index {ci} out of range for {mod.table!r}"
            )
    values = getattr(mod, "values", None)
    if values is not None:
        if len(values) != len(mod.col_indexes):
            raise MalformedModification("values length must match column indexes")
        for ci, v in zip(mod.col_indexes, values):
            _check_value(dataset, table, ci, v)
    for pk in mod.tuple_ids:
        if pk not in table.rows:
            raise MalformedModification(f"{mod.table!r} has no tuple {pk}")
        cells = table.rows[pk]
        for ci in mod.col_indexes:
            is_empty = cells[ci] is EMPTY
            if want_empty and not is_empty:
                raise MalformedModification(
                    f"{mod.table!r}.{pk} col {ci}: insert targets a non-Empty cell"
                )
            if not want_empty and is_empty:
                raise MalformedModification(
                    f"{mod.table!r}.{pk} col {ci}: cell is Empty"
                )


def _check_value(dataset: Dataset, table, ci: int, v) -> None:
    if v is EMPTY:
        raise MalformedModification("Empty is not an insertable value")
    kind = table.col_kinds[ci]
    if kind == "integer" and not isinstance(v, int):
        raise MalformedModification(
            f"{table.name!r} col {ci} needs an integer, got {type(v).__name__}"
        )
    if kind == "text" and not isinstance(v, str):
        raise MalformedModification(
            f"{table.name!r} col {ci} needs text, got {type(v).__name__}"
        )
    ref = table.references[ci]
    if ref is not None and v not in dataset.tables[ref].rows:
        raise MalformedModification(
            f"{table.name!r} col {ci}: value {v!r} references no {ref} tuple"
        )


def check_modification(dataset: Dataset, mod) -> None:
    """Raise MalformedModification unless `mod` can be applied right now."""
    if isinstance(mod, DeleteValues):
        _check_cell_op(dataset, mod, want_empty=False)
    elif isinstance(mod, InsertValues):
        _check_cell_op(dataset, mod, want_empty=True)
    elif isinstance(mod, ReplaceValues):
        _check_cell_op(dataset, mod, want_empty=False)
    elif isinstance(mod, AppendTuple):
        if mod.table not in dataset.tables:
            raise MalformedModification(f"no table {mod.table!r}")
        table = dataset.tables[mod.table]
        if len(mod.values) != table.width:
            raise MalformedModification(
                f"append to {mod.table!r} needs {table.width} cells"
            )
        for ci, v in enumerate(mod.values):
            _check_value(dataset, table, ci, v)
        if mod.pk is not None and mod.pk in table.rows:
            raise MalformedModification(
                f"append pk {mod.pk} already exists in {mod.table!r}"
            )
    elif isinstance(mod, RemoveTuple):
        table = dataset.tables.get(mod.table)
        if table is None or mod.pk not in table.rows:
            raise MalformedModification(f"no tuple {mod.pk} in {mod.table!r}")
    else:
        raise MalformedModification(f"unknown modification {type(mod).__name__}")


def apply_modification(dataset: Dataset, mod) -> Undo:
    """Validate and apply; returns the inverse record.

    AppendTuple with pk=None receives max+1; the Undo and journal carry the
    assigned id so replays reproduce it exactly.
    """
    check_modification(dataset, mod)
    if isinstance(mod, DeleteValues):
        table = dataset.tables[mod.table]
        old = []
        for pk in mod.tuple_ids:
            cells = table.rows[pk]
            for ci in mod.col_indexes:
                old.append((pk, ci, cells[ci]))
                cells[ci] = EMPTY
        table.empty_cells += len(old)
        return Undo("cells", mod.table, tuple(old))
    if isinstance(mod, (InsertValues, ReplaceValues)):
        table = dataset.tables[mod.table]
        inserting = isinstance(mod, InsertValues)
        old = []
        for pk in mod.tuple_ids:
            cells = table.rows[pk]
            for ci, v in zip(mod.col_indexes, mod.values):
                old.append((pk, ci, cells[ci]))
                cells[ci] = v
        if inserting:
            table.empty_cells -= len(old)
        return Undo("cells", mod.table, tuple(old))
    if isinstance(mod, AppendTuple):
        table = dataset.tables[mod.table]
        pk = mod.pk if mod.pk is not None else table.next_pk()
        table.rows[pk] = list(mod.values)
        return Undo("append", mod.table, pk=pk)
    if isinstance(mod, RemoveTuple):
        table = dataset.tables[mod.table]
        cells = table.rows.pop(mod.pk)
        table.empty_cells -= sum(1 for c in cells if c is EMPTY)
        return Undo("remove", mod.table, tuple(cells), pk=mod.pk)
    raise MalformedModification(f"unknown modification {type(mod).__name__}")


def apply_undo(dataset: Dataset, undo: Undo) -> None:
    table = dataset.tables[undo.table]
    if undo.kind == "cells":
        for pk, ci, old in undo.cells:
            cur = table.rows[pk][ci]
            if cur is EMPTY and old is not EMPTY:
                table.empty_cells -= 1
            elif cur is not EMPTY and old is EMPTY:
                table.empty_cells += 1
            table.rows[pk][ci] = old
    elif undo.kind == "append":
        cells = table.rows.pop(undo.pk)
        table.empty_cells -= sum(1 for c in cells if c is EMPTY)
    elif undo.kind == "remove":
        table.rows[undo.pk] = list(undo.cells)
        table.empty_cells += sum(1 for c in undo.cells if c is EMPTY)
    else:
        raise MalformedModification(f"unknown undo kind {undo.kind!r}")


def cell_delta(mod) -> tuple[int, int]:
    """(cells deleted, cells inserted) for run conservation accounting."""
    if isinstance(mod, DeleteValues):
        return (len(mod.tuple_ids) * len(mod.col_indexes), 0)
    if isinstance(mod, InsertValues):
        return (0, len(mod.tuple_ids) * len(mod.col_indexes))
    return (0, 0)


# --- journal wire format ---------------------------------------------------

_OP_NAMES = {
    DeleteValues: "deleteValues",
    InsertValues: "insertValues",
    ReplaceValues: "replaceValues",
    AppendTuple: "appendTuple",
}


def encode_journal_record(mod, tool_name: str, step: int, assigned_pk: int | None = None) -> dict:
    rec: dict = {
        "op": _OP_NAMES[type(mod)],
        "tableID": mod.table,
        "toolName": tool_name,
        "step": step,
    }
    if isinstance(mod, AppendTuple):
        rec["tupleIDs"] = [assigned_pk if mod.pk is None else mod.pk]
        rec["colIndexes"] = []
        rec["values"] = list(mod.values)
    else:
        rec["tupleIDs"] = list(mod.tuple_ids)
        rec["colIndexes"] = list(mod.col_indexes)
        rec["values"] = list(mod.values) if hasattr(mod, "values") else None
    return rec


def decode_journal_record(rec: dict):
    """Returns (modification, tool_name, step)."""
    try:
        op = rec["op"]
        table = rec["tableID"]
        tuple_ids = tuple(rec["tupleIDs"])
        col_indexes = tuple(rec["colIndexes"])
        values = rec["values"]
        tool = rec["toolName"]
        step = rec["step"]
    except (KeyError, TypeError) as exc:
        raise MalformedModification(f"bad journal record: {exc}") from exc
    if op == "deleteValues":
        mod = DeleteValues(table, tuple_ids, col_indexes)
    elif op == "insertValues":
        mod = InsertValues(table, tuple_ids, col_indexes, tuple(values))
    elif op == "replaceValues":
        mod = ReplaceValues(table, tuple_ids, col_indexes, tuple(values))
    elif op == "appendTuple":
        mod = AppendTuple(table, tuple(values), pk=tuple_ids[0])
    else:
        raise MalformedModification(f"unknown journal op {op!r}")
    return mod, tool, step


def replay_journal(dataset: Dataset, records) -> Dataset:
    """Apply journal records in order to `dataset` (mutated and returned)."""
    for rec in records:
        mod, _tool, _step = decode_journal_record(rec)
        apply_modification(dataset, mod)
    return dataset
