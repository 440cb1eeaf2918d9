"""Linear join feature: root-count matrices over reference chains.

For a chain T_1 <- T_2 <- ... <- T_k (each table referencing the previous),
entry (j, i) of the lower-triangular matrix counts the distinct T_i tuples
that start a full reference path from some T_j tuple. Row and column indexes
are 1-based to match the matrix notation; levels are 0-based internally.

Necessity conditions checked on targets:

- shape: integer entries, no negatives.
- L1: entry (j, i) cannot exceed the smallest table size among levels i..j.
- L0: entry (j, i) is at least 1 when every level i..j is populated, because
      foreign keys at rest are non-null so every T_j tuple closes a chain.
- L2: columns never increase downward.
- L3: rows never decrease rightward.
- L4: differences between consecutive rows are monotone across consecutive
      columns, including the boundary column where the diagonal stands in
      with the table size. Without the boundary case some accepted targets
      are unreachable.

The tweaking algorithm fixes entries row by row, left to right, using only
ReplaceValues on chain foreign keys: surplus roots are demoted by re-homing
their top-level descendants under kept roots, deficit roots are promoted by
attaching a plucked top-level tuple, re-parenting the candidate first when
its parent is not already rooted deep enough. Reserved-descendant sets keep
every previously fixed entry intact.
"""

from __future__ import annotations

from dataclasses import dataclass

from .coordinator import ChangeEvent, Coordinator, TweakingTool, Violation
from .dataset import EMPTY, Dataset
from .errors import InfeasibleRepair, ShapeMismatch
from .modify import ReplaceValues
from .schema import DatasetSchema, ReferenceChain, enumerate_maximal_chains
from .seeding import derive_rng


@dataclass(frozen=True)
class LinearJoinMatrix:
    """Lower-triangular root-count matrix; row r holds r+1 entries, diagonal 0."""

    chain: ReferenceChain
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.rows) != self.chain.length:
            raise ShapeMismatch(
                f"matrix needs {self.chain.length} rows, got {len(self.rows)}"
            )
        for r, row in enumerate(self.rows):
            if len(row) != r + 1:
                raise ShapeMismatch(f"row {r + 1} needs {r + 1} entries")
            if row[r] != 0:
                raise ShapeMismatch(f"diagonal entry of row {r + 1} must be 0")
            for v in row:
                if not isinstance(v, int):
                    raise ShapeMismatch("matrix entries must be integers")

    @property
    def k(self) -> int:
        return self.chain.length

    def value(self, j: int, i: int) -> int:
        """1-based entry (row j, column i), j > i."""
        return self.rows[j - 1][i - 1]

    def to_dict(self) -> dict:
        return {
            "chain": list(self.chain.tables),
            "fkColumns": list(self.chain.fk_columns),
            "h": [list(row) for row in self.rows],
        }

    @classmethod
    def from_dict(cls, raw: dict, schema: DatasetSchema) -> LinearJoinMatrix:
        try:
            tables = tuple(raw["chain"])
            h = raw["h"]
        except (KeyError, TypeError) as exc:
            raise ShapeMismatch(f"malformed linear target: {exc}") from exc
        fk_columns = tuple(raw["fkColumns"]) if "fkColumns" in raw else None
        chain = resolve_chain(schema, tables, fk_columns)
        try:
            rows = tuple(tuple(int(v) for v in row) for row in h)
        except (TypeError, ValueError) as exc:
            raise ShapeMismatch(f"malformed linear target rows: {exc}") from exc
        return cls(chain=chain, rows=rows)


def resolve_chain(
    schema: DatasetSchema,
    tables: tuple[str, ...],
    fk_columns: tuple[str, ...] | None = None,
) -> ReferenceChain:
    """Find the maximal chain with these tables (and columns, if given)."""
    matches = [
        c
        for c in enumerate_maximal_chains(schema)
        if c.tables == tuple(tables)
        and (fk_columns is None or c.fk_columns == tuple(fk_columns))
    ]
    if not matches:
        raise ShapeMismatch(f"no maximal chain over tables {list(tables)}")
    if len(matches) > 1:
        raise ShapeMismatch(
            f"chain over {list(tables)} is ambiguous; give fkColumns"
        )
    return matches[0]


# --- calculation -----------------------------------------------------------


def compute_linear_matrix(dataset: Dataset, chain: ReferenceChain) -> LinearJoinMatrix:
    return ChainState(dataset, chain).matrix()


def linear_error(actual: LinearJoinMatrix, target: LinearJoinMatrix) -> float:
    """Mean relative entry error; target entries are the denominators.

    A zero target entry contributes 0 when matched and 1 when not.
    """
    if actual.chain.key() != target.chain.key():
        raise ShapeMismatch("matrices cover different chains")
    k = target.k
    if k < 2:
        return 0.0
    total = 0.0
    cells = 0
    for j in range(2, k + 1):
        for i in range(1, j):
            t = target.value(j, i)
            a = actual.value(j, i)
            if t == 0:
                total += 0.0 if a == 0 else 1.0
            else:
                total += abs(a - t) / t
            cells += 1
    return total / cells


# --- necessity, repair, generation ----------------------------------------


def _span_min(sizes_by_level: list[int], i: int, j: int) -> int:
    """Smallest size among 1-based levels i..j."""
    return min(sizes_by_level[n - 1] for n in range(i, j + 1))


def check_necessity_linear(
    target: LinearJoinMatrix, sizes: dict[str, int]
) -> list[Violation]:
    out: list[Violation] = []
    k = target.k
    loc = target.chain.tables
    missing = [t for t in loc if t not in sizes]
    if missing:
        return [
            Violation("shape", loc, f"no sizes for chain tables {missing}")
        ]
    by_level = [sizes[t] for t in loc]

    def g(j: int, i: int) -> int:
        return by_level[j - 1] if i == j else target.value(j, i)

    for j in range(2, k + 1):
        for i in range(1, j):
            v = target.value(j, i)
            if v < 0:
                out.append(
                    Violation("shape", (loc, j, i), f"entry ({j},{i}) is negative")
                )
                continue
            cap = _span_min(by_level, i, j)
            if v > cap:
                out.append(
                    Violation(
                        "L1",
                        (loc, j, i),
                        f"entry ({j},{i})={v} exceeds smallest span size {cap}",
                    )
                )
            if cap >= 1 and v < 1:
                out.append(
                    Violation(
                        "L0",
                        (loc, j, i),
                        f"entry ({j},{i})={v} must be at least 1 while levels "
                        f"{i}..{j} are all populated",
                    )
                )
            if i >= 2 and v < target.value(j, i - 1):
                out.append(
                    Violation(
                        "L3",
                        (loc, j, i),
                        f"row {j} decreases from ({j},{i - 1}) to ({j},{i})",
                    )
                )
            if j - 1 > i and v > target.value(j - 1, i):
                out.append(
                    Violation(
                        "L2",
                        (loc, j, i),
                        f"column {i} increases from ({j - 1},{i}) to ({j},{i})",
                    )
                )
    for j in range(2, k):
        for i in range(1, j):
            lhs = g(j, i + 1) - target.value(j + 1, i + 1)
            rhs = target.value(j, i) - target.value(j + 1, i)
            if lhs < rhs:
                out.append(
                    Violation(
                        "L4",
                        (loc, j, i),
                        f"row difference between rows {j} and {j + 1} drops from "
                        f"column {i + 1} to column {i}",
                    )
                )
    return out


def repair_target_linear(
    target: LinearJoinMatrix, sizes: dict[str, int]
) -> LinearJoinMatrix:
    """Raster clamp into the necessity envelope; idempotent on valid targets."""
    k = target.k
    by_level = [sizes[t] for t in target.chain.tables]
    x: list[list[int]] = [[0] * (r + 1) for r in range(k)]

    def gx(j: int, i: int) -> int:
        return by_level[j - 1] if i == j else x[j - 1][i - 1]

    for j in range(2, k + 1):
        for i in range(1, j):
            raw = target.value(j, i)
            cap = _span_min(by_level, i, j)
            upper = cap
            if j - 1 > i:
                upper = min(upper, x[j - 2][i - 1])
            if i >= 2:
                upper = min(upper, gx(j - 1, i) - gx(j - 1, i - 1) + x[j - 1][i - 2])
            lower = x[j - 1][i - 2] if i >= 2 else 0
            if cap >= 1:
                lower = max(lower, 1)
            if lower > upper:
                raise InfeasibleRepair(
                    f"chain {target.chain.tables}: no feasible value for entry "
                    f"({j},{i}) with sizes {by_level}"
                )
            x[j - 1][i - 1] = min(max(raw, lower), upper)
    return LinearJoinMatrix(
        chain=target.chain, rows=tuple(tuple(row) for row in x)
    )


def generate_target_linear(
    source: LinearJoinMatrix, old_sizes: dict[str, int], new_sizes: dict[str, int]
) -> LinearJoinMatrix:
    """Scale each entry by its root table's growth ratio, then repair."""
    k = source.k
    rows: list[list[int]] = [[0] * (r + 1) for r in range(k)]
    for j in range(2, k + 1):
        for i in range(1, j):
            root = source.chain.tables[i - 1]
            old = old_sizes[root]
            ratio = (new_sizes[root] / old) if old else 0.0
            rows[j - 1][i - 1] = int(source.value(j, i) * ratio + 0.5)
    scaled = LinearJoinMatrix(
        chain=source.chain, rows=tuple(tuple(r) for r in rows)
    )
    return repair_target_linear(scaled, new_sizes)


# --- incremental chain state ----------------------------------------------


class ChainState:
    """Reach bookkeeping for one chain.

    reach(t) is the highest level with a descendant of t (its own level when
    childless). Entry (j, i) equals the number of level i-1 tuples with reach
    at least j-1, so per-level reach buckets give the matrix directly, and a
    foreign key edit costs O(k) reach propagations of O(k) each.
    """

    def __init__(self, dataset: Dataset, chain: ReferenceChain):
        self.chain = chain
        self.k = chain.length
        self.table_names = chain.tables
        self.fk_ci: list[int | None] = [None]
        for level in range(1, self.k):
            schema = dataset.tables[chain.tables[level]].schema
            self.fk_ci.append(schema.data_index(chain.fk_columns[level - 1]))
        k = self.k
        self.parent: list[dict[int, int | None]] = [dict() for _ in range(k)]
        self.children: list[dict[int, set[int]]] = [dict() for _ in range(k)]
        self.crc: list[dict[int, list[int]]] = [dict() for _ in range(k)]
        self.reach: list[dict[int, int]] = [dict() for _ in range(k)]
        self.buckets: list[dict[int, set[int]]] = [dict() for _ in range(k)]
        for level in range(k - 1, -1, -1):
            table = dataset.tables[chain.tables[level]]
            ci = self.fk_ci[level]
            for pk, cells in table.rows.items():
                r = self._reach_from_counts(level, pk)
                self.reach[level][pk] = r
                self.buckets[level].setdefault(r, set()).add(pk)
                if level > 0:
                    raw = cells[ci]
                    p = None if raw is EMPTY else raw
                    self.parent[level][pk] = p
                    if p is not None:
                        self.children[level - 1].setdefault(p, set()).add(pk)
                        counts = self.crc[level - 1].setdefault(p, [0] * k)
                        counts[r] += 1

    # internal reach maintenance

    def _reach_from_counts(self, level: int, pk: int) -> int:
        counts = self.crc[level].get(pk)
        if counts:
            for r in range(self.k - 1, level, -1):
                if counts[r] > 0:
                    return r
        return level

    def _set_reach(self, level: int, pk: int, new_r: int) -> None:
        old = self.reach[level][pk]
        if old == new_r:
            return
        self.reach[level][pk] = new_r
        self.buckets[level][old].discard(pk)
        self.buckets[level].setdefault(new_r, set()).add(pk)
        if level > 0:
            p = self.parent[level].get(pk)
            if p is not None:
                self._child_changed(level - 1, p, old, new_r)

    def _child_changed(
        self, level: int, pk: int, old_r: int | None, new_r: int | None
    ) -> None:
        counts = self.crc[level].setdefault(pk, [0] * self.k)
        if old_r is not None:
            counts[old_r] -= 1
        if new_r is not None:
            counts[new_r] += 1
        self._set_reach(level, pk, self._reach_from_counts(level, pk))

    # mutations

    def set_parent(self, level: int, pk: int, new_p: int | None) -> None:
        old_p = self.parent[level].get(pk)
        if old_p == new_p:
            return
        r = self.reach[level][pk]
        if old_p is not None:
            self.children[level - 1][old_p].discard(pk)
            self._child_changed(level - 1, old_p, r, None)
        self.parent[level][pk] = new_p
        if new_p is not None:
            self.children[level - 1].setdefault(new_p, set()).add(pk)
            self._child_changed(level - 1, new_p, None, r)

    def add_tuple(self, level: int, pk: int, parent: int | None) -> None:
        self.reach[level][pk] = level
        self.buckets[level].setdefault(level, set()).add(pk)
        if level > 0:
            self.parent[level][pk] = parent
            if parent is not None:
                self.children[level - 1].setdefault(parent, set()).add(pk)
                self._child_changed(level - 1, parent, None, level)

    def remove_tuple(self, level: int, pk: int) -> None:
        assert not self.children[level].get(pk), "only childless tuples are removable"
        r = self.reach[level].pop(pk)
        self.buckets[level][r].discard(pk)
        self.crc[level].pop(pk, None)
        if level > 0:
            p = self.parent[level].pop(pk)
            if p is not None:
                self.children[level - 1][p].discard(pk)
                self._child_changed(level - 1, p, r, None)

    # queries

    def count_at_least(self, level: int, min_reach: int) -> int:
        buckets = self.buckets[level]
        return sum(len(buckets.get(r, ())) for r in range(min_reach, self.k))

    def members_at_least(self, level: int, min_reach: int) -> set[int]:
        buckets = self.buckets[level]
        out: set[int] = set()
        for r in range(min_reach, self.k):
            out |= buckets.get(r, set())
        return out

    def bucket_exact(self, level: int, r: int) -> set[int]:
        return set(self.buckets[level].get(r, set()))

    def descendants_at(self, level: int, pk: int, at_level: int) -> list[int]:
        """All descendants of pk at `at_level`; pk itself when levels match."""
        if at_level == level:
            return [pk]
        out: list[int] = []
        stack = [(level, pk)]
        while stack:
            cl, cid = stack.pop()
            next_reach = self.reach[cl + 1]
            for ch in self.children[cl].get(cid, ()):
                if next_reach[ch] < at_level:
                    continue
                if cl + 1 == at_level:
                    out.append(ch)
                else:
                    stack.append((cl + 1, ch))
        return out

    def min_descendant_at(self, level: int, pk: int, at_level: int) -> int | None:
        d = self.descendants_at(level, pk, at_level)
        return min(d) if d else None

    def min_child_reaching(self, level: int, pk: int, min_reach: int) -> int | None:
        reach = self.reach[level + 1]
        best = None
        for ch in self.children[level].get(pk, ()):
            if reach[ch] >= min_reach and (best is None or ch < best):
                best = ch
        return best

    def matrix(self) -> LinearJoinMatrix:
        rows = []
        for rj in range(self.k):
            row = [self.count_at_least(ci, rj) for ci in range(rj)]
            row.append(0)
            rows.append(tuple(row))
        return LinearJoinMatrix(chain=self.chain, rows=tuple(rows))


# --- the tool --------------------------------------------------------------

LinearTarget = tuple[LinearJoinMatrix, ...]

_ATTACH_RETRIES = 6


class LinearTool(TweakingTool):
    name = "linear"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._states: dict = {}
        self._targets: dict = {}
        self._cell_routes: dict[tuple[str, int], list] = {}
        self._table_levels: dict[str, list] = {}
        self._runs = 0

    def calculate(self, dataset: Dataset) -> LinearTarget:
        chains = enumerate_maximal_chains(dataset.schema)
        return tuple(compute_linear_matrix(dataset, c) for c in chains)

    def generate_target(
        self, dataset: Dataset, new_sizes: dict[str, int]
    ) -> LinearTarget:
        old_sizes = dataset.sizes()
        return tuple(
            generate_target_linear(m, old_sizes, new_sizes)
            for m in self.calculate(dataset)
        )

    def check_target(self, target: LinearTarget, sizes: dict[str, int]) -> list[Violation]:
        out: list[Violation] = []
        seen = set()
        for m in target:
            key = m.chain.key()
            if key in seen:
                out.append(
                    Violation("shape", m.chain.tables, "duplicate chain in target")
                )
            seen.add(key)
            out.extend(check_necessity_linear(m, sizes))
        return out

    def repair_target(self, target: LinearTarget, sizes: dict[str, int]) -> LinearTarget:
        return tuple(repair_target_linear(m, sizes) for m in target)

    def begin_tracking(self, dataset: Dataset, target: LinearTarget) -> None:
        self._states = {}
        self._targets = {}
        self._cell_routes = {}
        self._table_levels = {}
        for m in sorted(target, key=lambda m: m.chain.key()):
            key = m.chain.key()
            state = ChainState(dataset, m.chain)
            self._states[key] = state
            self._targets[key] = m
            for level, table in enumerate(m.chain.tables):
                self._table_levels.setdefault(table, []).append((key, level))
                if level > 0:
                    ci = state.fk_ci[level]
                    self._cell_routes.setdefault((table, ci), []).append((key, level))

    def notify_change(self, dataset: Dataset, event: ChangeEvent) -> None:
        for pk, ci, _old, new in event.cells:
            for key, level in self._cell_routes.get((event.table, ci), ()):
                self._states[key].set_parent(
                    level, pk, None if new is EMPTY else new
                )
        for pk, values in event.appended:
            for key, level in self._table_levels.get(event.table, ()):
                state = self._states[key]
                parent = values[state.fk_ci[level]] if level > 0 else None
                state.add_tuple(level, pk, parent)
        for pk, _values in event.removed:
            for key, level in self._table_levels.get(event.table, ()):
                self._states[key].remove_tuple(level, pk)

    def current_error(self) -> float:
        if not self._targets:
            return 0.0
        total = 0.0
        for key, target in self._targets.items():
            total += linear_error(self._states[key].matrix(), target)
        return total / len(self._targets)

    def verify_tracking(self, dataset: Dataset) -> None:
        for key, state in self._states.items():
            fresh = compute_linear_matrix(dataset, state.chain)
            assert state.matrix().rows == fresh.rows, (
                f"chain {state.chain.tables}: tracked {state.matrix().rows} "
                f"!= recomputed {fresh.rows}"
            )

    # --- tweaking ----------------------------------------------------------

    def tweak(self, dataset: Dataset, target: LinearTarget, session: Coordinator) -> None:
        rng = derive_rng(self.seed, "linear", self._runs)
        self._runs += 1
        for m in sorted(target, key=lambda m: m.chain.key()):
            self._tweak_chain(self._states[m.chain.key()], m, session, rng)

    def _tweak_chain(self, state: ChainState, tm: LinearJoinMatrix, session, rng) -> None:
        for rj in range(1, state.k):
            for ci in range(rj):
                self._tweak_entry(state, tm, rj, ci, session, rng)

    def _tweak_entry(self, state, tm: LinearJoinMatrix, rj: int, ci: int, session, rng) -> None:
        tgt = tm.rows[rj][ci]
        while True:
            delta = state.count_at_least(ci, rj) - tgt
            if delta == 0:
                return
            if delta > 0:
                progressed = self._demote_pass(state, rj, ci, delta, session, rng)
            else:
                progressed = self._promote_pass(state, rj, ci, -delta, session, rng)
            if not progressed:
                if session.request_relaxation(self.name) is None:
                    raise session.exhausted(
                        self.name,
                        f"chain {state.chain.tables} entry ({rj + 1},{ci + 1})",
                    )

    def _submit_with_retries(self, session, build_mods, retries: int) -> bool:
        for _attempt in range(retries):
            mods = build_mods()
            if mods is None:
                return False
            if session.submit(self.name, mods).accepted:
                return True
        return False

    def _demote_pass(self, state: ChainState, rj, ci, delta, session, rng) -> bool:
        """Re-home all level-rj descendants of `delta` surplus roots."""
        protected: set[int] = set()
        if ci >= 1:
            for s in sorted(state.members_at_least(ci - 1, rj)):
                m = state.min_child_reaching(ci - 1, s, rj)
                if m is not None:
                    protected.add(m)
        roots = state.members_at_least(ci, rj)
        candidates = sorted(roots - protected)
        candidates.sort(key=lambda c: (len(state.descendants_at(ci, c, rj)), c))
        demote = candidates[:delta]
        keep = roots - set(demote)
        pool: list[int] = []
        for r in sorted(keep):
            pool.extend(state.descendants_at(ci, r, rj - 1))
        pool.sort()
        if not pool:
            return False
        table = state.table_names[rj]
        fk_ci = state.fk_ci[rj]
        applied = False
        for d in demote:
            moves = sorted(state.descendants_at(ci, d, rj))
            grouped: dict[int, list[int]] = {}
            for q in moves:
                grouped.setdefault(rng.choice(pool), []).append(q)
            for v, qs in sorted(grouped.items()):
                target_v = [v]

                def build(qs=tuple(qs), target_v=target_v):
                    mod = ReplaceValues(table, qs, (fk_ci,), (target_v[0],))
                    target_v[0] = rng.choice(pool)
                    return (mod,)

                if self._submit_with_retries(session, build, _ATTACH_RETRIES):
                    applied = True
        return applied

    def _promote_pass(self, state: ChainState, rj, ci, need, session, rng) -> bool:
        """Grow the entry by attaching plucked level-rj tuples to new roots."""
        leaves: set[int] = set()
        for s in sorted(state.members_at_least(ci, rj)):
            leaf = state.min_descendant_at(ci, s, rj)
            if leaf is not None:
                leaves.add(leaf)
        level_rj = self._level_population(state, rj)
        pluckable = sorted(level_rj - leaves)
        if len(pluckable) < need:
            return False
        plucked = rng.sample(pluckable, need)

        exact = sorted(state.bucket_exact(ci, rj - 1))
        if ci >= 1:
            rooted_prev = state.members_at_least(ci - 1, rj)
            direct = [c for c in exact if state.parent[ci].get(c) in rooted_prev]
            direct_set = set(direct)
            reserves: set[int] = set()
            for s in sorted(state.bucket_exact(ci - 1, rj - 1)):
                m = state.min_child_reaching(ci - 1, s, rj - 1)
                if m is not None:
                    reserves.add(m)
            gains = direct + [
                c for c in exact if c not in direct_set and c not in reserves
            ]
            anchors = sorted(rooted_prev)
        else:
            gains = exact
            anchors = []
        table = state.table_names[rj]
        fk_ci = state.fk_ci[rj]
        applied = False
        for g, q in zip(gains, plucked):
            if need <= 0:
                break

            def build(g=g, q=q):
                mods = []
                if ci >= 1 and state.parent[ci].get(g) not in state.members_at_least(ci - 1, rj):
                    if not anchors:
                        return None
                    mods.append(
                        ReplaceValues(
                            state.table_names[ci],
                            (g,),
                            (state.fk_ci[ci],),
                            (rng.choice(anchors),),
                        )
                    )
                hosts = state.descendants_at(ci, g, rj - 1)
                if not hosts:
                    return None
                w = rng.choice(sorted(hosts))
                mods.append(ReplaceValues(table, (q,), (fk_ci,), (w,)))
                return tuple(mods)

            if self._submit_with_retries(session, build, _ATTACH_RETRIES):
                applied = True
                need -= 1
        return applied

    def _level_population(self, state: ChainState, level: int) -> set[int]:
        out: set[int] = set()
        for members in state.buckets[level].values():
            out |= members
        return out
