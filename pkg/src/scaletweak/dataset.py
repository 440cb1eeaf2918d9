"""Dataset runtime model.

Tables hold rows keyed by integer primary key; row cells cover the non-key
columns in declared order. A cell is an int, a str, or the EMPTY sentinel.
EMPTY marks a deleted value awaiting re-insertion and can never be serialized:
it exists only between modifications inside a tool run.

CSV on disk is RFC 4180 (header row, CRLF), one file per table, rows sorted by
primary key so that equal datasets serialize byte-identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DanglingForeignKey,
    DuplicatePrimaryKey,
    IoFailure,
    MissingTableFile,
    PendingEmptyCells,
    SchemaParseError,
)
from .schema import DatasetSchema, TableSchema


class _Empty:
    """Singleton sentinel for a deleted cell value."""

    _instance: _Empty | None = None

    def __new__(cls) -> _Empty:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EMPTY"


EMPTY = _Empty()

Cell = int | str | _Empty


class Table:
    """Rows of one table: pk -> list of data-column cells."""

    def __init__(self, schema: TableSchema, rows: dict[int, list] | None = None):
        self.schema = schema
        self.rows: dict[int, list] = rows if rows is not None else {}
        self.empty_cells = 0
        data_cols = schema.data_columns
        self.col_names = tuple(c.name for c in data_cols)
        self.col_kinds = tuple(c.kind for c in data_cols)
        # references[ci] is the referenced table name or None
        refs: list[str | None] = []
        for c in data_cols:
            fk = schema.fk_for_column(c.name)
            refs.append(fk.references if fk else None)
        self.references: tuple[str | None, ...] = tuple(refs)

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def width(self) -> int:
        return len(self.col_names)

    def size(self) -> int:
        return len(self.rows)

    def next_pk(self) -> int:
        return max(self.rows) + 1 if self.rows else 1

    def clone(self) -> Table:
        t = Table(self.schema, {pk: list(cells) for pk, cells in self.rows.items()})
        t.empty_cells = self.empty_cells
        return t


class Dataset:
    def __init__(self, schema: DatasetSchema, tables: dict[str, Table]):
        self.schema = schema
        self.tables = tables
        self.version = 0

    @classmethod
    def from_rows(
        cls, schema: DatasetSchema, rows: dict[str, dict[int, list]]
    ) -> Dataset:
        """Build a dataset in memory; validates foreign keys like a load."""
        tables = {}
        for ts in schema.tables:
            table_rows = rows.get(ts.name, {})
            width = len(ts.data_columns)
            for pk, cells in table_rows.items():
                if len(cells) != width:
                    raise SchemaParseError(
                        f"table {ts.name!r} row {pk}: expected {width} cells"
                    )
            tables[ts.name] = Table(ts, {pk: list(c) for pk, c in table_rows.items()})
        ds = cls(schema, tables)
        report = validate_integrity(ds)
        if not report.ok:
            v = report.violations[0]
            raise DanglingForeignKey(
                f"{v.kind} in {v.table}.{v.column} tuple {v.tuple_id}: {v.detail}"
            )
        return ds

    def table(self, name: str) -> Table:
        return self.tables[name]

    def sizes(self) -> dict[str, int]:
        return {name: t.size() for name, t in self.tables.items()}

    def empty_cell_count(self) -> int:
        return sum(t.empty_cells for t in self.tables.values())

    def clone(self) -> Dataset:
        ds = Dataset(self.schema, {n: t.clone() for n, t in self.tables.items()})
        ds.version = self.version
        return ds


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    if set(a.tables) != set(b.tables):
        return False
    for name, ta in a.tables.items():
        tb = b.tables[name]
        if ta.rows.keys() != tb.rows.keys():
            return False
        for pk, cells in ta.rows.items():
            if cells != tb.rows[pk]:
                return False
    return True


# --- integrity -------------------------------------------------------------


@dataclass(frozen=True)
class IntegrityViolation:
    kind: str  # "danglingForeignKey" | "emptyCell"
    table: str
    tuple_id: int
    column: str
    detail: str


@dataclass
class IntegrityReport:
    violations: list[IntegrityViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_integrity(dataset: Dataset) -> IntegrityReport:
    """Report dangling foreign keys and leftover Empty cells."""
    report = IntegrityReport()
    for table in dataset.tables.values():
        for ci, ref in enumerate(table.references):
            col = table.col_names[ci]
            ref_rows = dataset.tables[ref].rows if ref else None
            for pk, cells in table.rows.items():
                v = cells[ci]
                if v is EMPTY:
                    report.violations.append(
                        IntegrityViolation(
                            "emptyCell", table.name, pk, col, "cell is Empty"
                        )
                    )
                elif ref_rows is not None and v not in ref_rows:
                    report.violations.append(
                        IntegrityViolation(
                            "danglingForeignKey",
                            table.name,
                            pk,
                            col,
                            f"references missing {ref}.{v}",
                        )
                    )
        # non-FK columns: only Empty cells can be wrong
        fk_cis = {ci for ci, ref in enumerate(table.references) if ref}
        for pk, cells in table.rows.items():
            for ci, v in enumerate(cells):
                if ci not in fk_cis and v is EMPTY:
                    report.violations.append(
                        IntegrityViolation(
                            "emptyCell", table.name, pk, table.col_names[ci],
                            "cell is Empty",
                        )
                    )
    return report


# --- serialization ---------------------------------------------------------


def _table_path(data_dir: Path, name: str) -> Path:
    return data_dir / f"{name}.csv"


def load_dataset(schema: DatasetSchema, data_dir: str | Path) -> Dataset:
    """Load one CSV per table from `data_dir` and validate integrity."""
    data_dir = Path(data_dir)
    tables: dict[str, Table] = {}
    for ts in schema.tables:
        path = _table_path(data_dir, ts.name)
        if not path.exists():
            raise MissingTableFile(f"no file for table {ts.name!r}: {path}")
        try:
            with path.open("r", encoding="utf-8", newline="") as fh:
                records = list(csv.reader(fh))
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        reader = iter(records)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaParseError(f"{path}: missing header row") from None
        expected = [c.name for c in ts.columns]
        if header != expected:
            raise SchemaParseError(
                f"{path}: header {header} does not match schema columns {expected}"
            )
        pk_pos = expected.index(ts.primary_key)
        kinds = [c.kind for c in ts.columns]
        rows: dict[int, list] = {}
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(expected):
                raise SchemaParseError(
                    f"{path}:{lineno}: expected {len(expected)} fields, got {len(rec)}"
                )
            cells = []
            pk = None
            for pos, raw in enumerate(rec):
                if kinds[pos] == "integer":
                    try:
                        value: int | str = int(raw)
                    except ValueError:
                        raise SchemaParseError(
                            f"{path}:{lineno}: column {expected[pos]!r} needs an "
                            f"integer, got {raw!r}"
                        ) from None
                else:
                    value = raw
                if pos == pk_pos:
                    pk = value
                else:
                    cells.append(value)
            assert isinstance(pk, int)
            if pk in rows:
                raise DuplicatePrimaryKey(f"{path}: duplicate primary key {pk}")
            rows[pk] = cells
        tables[ts.name] = Table(ts, rows)
    ds = Dataset(schema, tables)
    report = validate_integrity(ds)
    if not report.ok:
        v = report.violations[0]
        raise DanglingForeignKey(
            f"{v.table}.{v.column} tuple {v.tuple_id}: {v.detail}"
        )
    return ds


def write_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    """Write one CSV per table, rows sorted by primary key."""
    if dataset.empty_cell_count() > 0:
        raise PendingEmptyCells(
            f"{dataset.empty_cell_count()} Empty cells pending; dataset not at rest"
        )
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    for ts in dataset.schema.tables:
        table = dataset.tables[ts.name]
        pk_pos = [c.name for c in ts.columns].index(ts.primary_key)
        path = _table_path(out_dir, ts.name)
        try:
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([c.name for c in ts.columns])
                for pk in sorted(table.rows):
                    cells = table.rows[pk]
                    rec = list(cells[:pk_pos]) + [pk] + list(cells[pk_pos:])
                    writer.writerow(rec)
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
