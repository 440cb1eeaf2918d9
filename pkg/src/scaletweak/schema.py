"""Relational schema model.

A dataset schema declares tables (typed columns, integer primary key, foreign
keys) plus optional pairwise bindings naming a user/post/response triple.
Reference chains are derived: every maximal directed path through the foreign
key graph, ordered here from the referenced end (the root side) upward.

Cyclic reference graphs are rejected at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CyclicSchema, SchemaParseError

COLUMN_KINDS = ("integer", "text")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class ForeignKey:
    column: str
    references: str


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]
    primary_key: str
    foreign_keys: tuple[ForeignKey, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaParseError(f"table {self.name!r}: duplicate column names")
        by_name = {c.name: c for c in self.columns}
        for c in self.columns:
            if c.kind not in COLUMN_KINDS:
                raise SchemaParseError(
                    f"table {self.name!r}: column {c.name!r} has unknown kind {c.kind!r}"
                )
        if self.primary_key not in by_name:
            raise SchemaParseError(
                f"table {self.name!r}: primary key {self.primary_key!r} is not a column"
            )
        if by_name[self.primary_key].kind != "integer":
            raise SchemaParseError(
                f"table {self.name!r}: primary key must be an integer column"
            )
        seen_fk: set[str] = set()
        for fk in self.foreign_keys:
            if fk.column not in by_name:
                raise SchemaParseError(
                    f"table {self.name!r}: foreign key column {fk.column!r} is not a column"
                )
            if fk.column == self.primary_key:
                raise SchemaParseError(
                    f"table {self.name!r}: primary key column cannot be a foreign key"
                )
            if by_name[fk.column].kind != "integer":
                raise SchemaParseError(
                    f"table {self.name!r}: foreign key column {fk.column!r} must be integer"
                )
            if fk.column in seen_fk:
                raise SchemaParseError(
                    f"table {self.name!r}: column {fk.column!r} declared as foreign key twice"
                )
            seen_fk.add(fk.column)

    @property
    def data_columns(self) -> tuple[Column, ...]:
        """Columns addressable by modifications: all except the primary key."""
        return tuple(c for c in self.columns if c.name != self.primary_key)

    def data_index(self, column: str) -> int:
        for i, c in enumerate(self.data_columns):
            if c.name == column:
                return i
        raise SchemaParseError(f"table {self.name!r}: no data column {column!r}")

    def fk_for_column(self, column: str) -> ForeignKey | None:
        for fk in self.foreign_keys:
            if fk.column == column:
                return fk
        return None

    @property
    def referenced_tables(self) -> frozenset[str]:
        return frozenset(fk.references for fk in self.foreign_keys)


@dataclass(frozen=True)
class PairwiseBinding:
    """User/post/response triple for the pairwise interaction feature."""

    user_table: str
    post_table: str
    response_table: str
    post_owner_column: str
    response_post_column: str
    response_user_column: str

    def key(self) -> tuple[str, ...]:
        return (
            self.user_table,
            self.post_table,
            self.response_table,
            self.post_owner_column,
            self.response_post_column,
            self.response_user_column,
        )


@dataclass(frozen=True)
class ReferenceChain:
    """Maximal reference path, stored root-end first.

    tables[0] is referenced by tables[1] via fk_columns[0], and so on; the
    last table is referenced by nothing on this path.
    """

    tables: tuple[str, ...]
    fk_columns: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.fk_columns) != len(self.tables) - 1:
            raise SchemaParseError("chain column count must be table count - 1")

    @property
    def length(self) -> int:
        return len(self.tables)

    def key(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return (self.tables, self.fk_columns)


@dataclass(frozen=True)
class DatasetSchema:
    tables: tuple[TableSchema, ...]
    pairwise_bindings: tuple[PairwiseBinding, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaParseError("duplicate table names")
        by_name = {t.name: t for t in self.tables}
        for t in self.tables:
            for fk in t.foreign_keys:
                if fk.references not in by_name:
                    raise SchemaParseError(
                        f"table {t.name!r}: foreign key references unknown table "
                        f"{fk.references!r}"
                    )
        for b in self.pairwise_bindings:
            self._check_binding(b, by_name)
        self._check_acyclic()

    def _check_binding(self, b: PairwiseBinding, by_name: dict[str, TableSchema]) -> None:
        for t in (b.user_table, b.post_table, b.response_table):
            if t not in by_name:
                raise SchemaParseError(f"pairwise binding references unknown table {t!r}")
        post = by_name[b.post_table]
        resp = by_name[b.response_table]
        owner = post.fk_for_column(b.post_owner_column)
        if owner is None or owner.references != b.user_table:
            raise SchemaParseError(
                f"binding: {b.post_table}.{b.post_owner_column} must reference "
                f"{b.user_table}"
            )
        rp = resp.fk_for_column(b.response_post_column)
        if rp is None or rp.references != b.post_table:
            raise SchemaParseError(
                f"binding: {b.response_table}.{b.response_post_column} must reference "
                f"{b.post_table}"
            )
        ru = resp.fk_for_column(b.response_user_column)
        if ru is None or ru.references != b.user_table:
            raise SchemaParseError(
                f"binding: {b.response_table}.{b.response_user_column} must reference "
                f"{b.user_table}"
            )

    def _check_acyclic(self) -> None:
        # Kahn's algorithm over the table reference graph; leftovers mean a cycle.
        out_edges: dict[str, set[str]] = {t.name: set() for t in self.tables}
        indegree: dict[str, int] = {t.name: 0 for t in self.tables}
        for t in self.tables:
            for fk in t.foreign_keys:
                if fk.references not in out_edges[t.name]:
                    out_edges[t.name].add(fk.references)
                    indegree[fk.references] += 1
        ready = [n for n, d in indegree.items() if d == 0]
        done = 0
        while ready:
            n = ready.pop()
            done += 1
            for m in out_edges[n]:
                indegree[m] -= 1
                if indegree[m] == 0:
                    ready.append(m)
        if done != len(self.tables):
            cyclic = sorted(n for n, d in indegree.items() if d > 0)
            raise CyclicSchema(f"reference graph has a cycle through {cyclic}")

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name == name:
                return t
        raise SchemaParseError(f"no table named {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    # --- serialization -----------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> DatasetSchema:
        try:
            tables = tuple(
                TableSchema(
                    name=t["name"],
                    columns=tuple(Column(c["name"], c["kind"]) for c in t["columns"]),
                    primary_key=t["primaryKey"],
                    foreign_keys=tuple(
                        ForeignKey(f["column"], f["references"])
                        for f in t.get("foreignKeys", [])
                    ),
                )
                for t in raw["tables"]
            )
            bindings = tuple(
                PairwiseBinding(
                    user_table=b["userTable"],
                    post_table=b["postTable"],
                    response_table=b["responseTable"],
                    post_owner_column=b["postOwnerColumn"],
                    response_post_column=b["responsePostColumn"],
                    response_user_column=b["responseUserColumn"],
                )
                for b in raw.get("pairwiseBindings", [])
            )
        except (KeyError, TypeError) as exc:
            raise SchemaParseError(f"malformed schema JSON: {exc}") from exc
        return cls(tables=tables, pairwise_bindings=bindings)

    @classmethod
    def from_file(cls, path: str | Path) -> DatasetSchema:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            from .errors import IoFailure

            raise IoFailure(f"cannot read schema {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaParseError(f"schema {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "tables": [
                {
                    "name": t.name,
                    "columns": [{"name": c.name, "kind": c.kind} for c in t.columns],
                    "primaryKey": t.primary_key,
                    "foreignKeys": [
                        {"column": f.column, "references": f.references}
                        for f in t.foreign_keys
                    ],
                }
                for t in self.tables
            ],
            "pairwiseBindings": [
                {
                    "userTable": b.user_table,
                    "postTable": b.post_table,
                    "responseTable": b.response_table,
                    "postOwnerColumn": b.post_owner_column,
                    "responsePostColumn": b.response_post_column,
                    "responseUserColumn": b.response_user_column,
                }
                for b in self.pairwise_bindings
            ],
        }


def enumerate_maximal_chains(schema: DatasetSchema) -> tuple[ReferenceChain, ...]:
    """All maximal reference paths, sorted by table then column sequence.

    A path is maximal when no table references its referencing end and its
    referenced end has no foreign keys. Single tables without references do
    not form chains. The schema is acyclic by construction, so plain DFS
    terminates.
    """
    referenced_by_someone: set[str] = set()
    for t in schema.tables:
        for fk in t.foreign_keys:
            referenced_by_someone.add(fk.references)

    chains: list[ReferenceChain] = []

    def descend(path_tables: list[str], path_cols: list[str]) -> None:
        current = schema.table(path_tables[-1])
        if not current.foreign_keys:
            if len(path_tables) >= 2:
                chains.append(
                    ReferenceChain(
                        tables=tuple(reversed(path_tables)),
                        fk_columns=tuple(reversed(path_cols)),
                    )
                )
            return
        for fk in sorted(current.foreign_keys, key=lambda f: (f.references, f.column)):
            descend(path_tables + [fk.references], path_cols + [fk.column])

    tops = sorted(t.name for t in schema.tables if t.name not in referenced_by_someone)
    for top in tops:
        descend([top], [])
    chains.sort(key=lambda c: c.key())
    return tuple(chains)
