"""Coappearance feature: distribution of foreign-key combination usage.

A coappearance group collects the referencing tables that point at one and
the same set of referenced tables. A combination is one choice of referenced
tuple per referenced table. For a combination c, the appearance vector lists
how many tuples of each referencing table carry exactly c; the feature maps
each appearance vector v to the number of combinations having it.

Combinations carried by no tuple at all sit in the all-zero class, which is
never stored: its mass is the combination count minus the explicit total.
Keeping it implicit means growth of a referenced table (appends by a later
tool) only grows the zero class instead of invalidating the distribution.

Necessity conditions:

- C1: for each referencing table, the vector-weighted total equals the table
      size, because every tuple carries exactly one combination.
- C2: the explicit class total cannot exceed the combination count.

The tweaking algorithm first compiles a plan pairing each deficit class with
the Manhattan-closest surplus classes, binding concrete combinations to each
unit, then executes one atomic batch per moved combination. A tuple released
by one move and absorbed by another is rewritten in a single ReplaceValues,
so tuple counts are conserved at every step.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from .coordinator import ChangeEvent, Coordinator, TweakingTool, Violation
from .dataset import EMPTY, Dataset
from .errors import GroupMismatch, InfeasibleRepair, ShapeMismatch
from .modify import ReplaceValues
from .schema import DatasetSchema


@dataclass(frozen=True)
class CoappearGroup:
    """Referencing tables sharing one referenced-table set.

    fk_columns[i] holds the foreign key columns of referencing[i], aligned
    with the sorted referenced tuple. Tables carrying two foreign keys into
    the same target are left out of grouping: their combinations would need
    an ordering convention the column names cannot supply.
    """

    referencing: tuple[str, ...]
    referenced: tuple[str, ...]
    fk_columns: tuple[tuple[str, ...], ...]

    @property
    def width(self) -> int:
        return len(self.referencing)

    def key(self) -> tuple:
        return (self.referencing, self.referenced)

    def to_dict(self) -> dict:
        return {
            "referencing": list(self.referencing),
            "referenced": list(self.referenced),
        }


def detect_coappear_groups(schema: DatasetSchema) -> list[CoappearGroup]:
    by_refset: dict[tuple[str, ...], list[tuple[str, tuple[str, ...]]]] = {}
    for table in schema.tables:
        if not table.foreign_keys:
            continue
        targets = [fk.references for fk in table.foreign_keys]
        if len(set(targets)) != len(targets):
            continue
        refset = tuple(sorted(targets))
        colmap = {fk.references: fk.column for fk in table.foreign_keys}
        cols = tuple(colmap[r] for r in refset)
        by_refset.setdefault(refset, []).append((table.name, cols))
    groups = []
    for refset in sorted(by_refset):
        members = sorted(by_refset[refset])
        groups.append(
            CoappearGroup(
                referencing=tuple(name for name, _ in members),
                referenced=refset,
                fk_columns=tuple(cols for _, cols in members),
            )
        )
    return groups


def resolve_group(schema: DatasetSchema, raw: dict) -> CoappearGroup:
    try:
        referencing = tuple(raw["referencing"])
        referenced = tuple(raw["referenced"])
    except (KeyError, TypeError) as exc:
        raise GroupMismatch(f"malformed group description: {exc}") from exc
    for g in detect_coappear_groups(schema):
        if g.referencing == referencing and g.referenced == referenced:
            return g
    raise GroupMismatch(
        f"schema has no coappearance group {list(referencing)} -> {list(referenced)}"
    )


@dataclass(frozen=True)
class CoappearDistribution:
    """Explicit appearance-vector counts; the all-zero class is implicit."""

    group: CoappearGroup
    cells: dict[tuple[int, ...], int]

    def to_dict(self) -> dict:
        return {
            "group": self.group.to_dict(),
            "entries": [
                {"v": list(v), "count": self.cells[v]} for v in sorted(self.cells)
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict, schema: DatasetSchema) -> CoappearDistribution:
        group = resolve_group(schema, raw.get("group", {}))
        cells: dict[tuple[int, ...], int] = {}
        for entry in raw.get("entries", ()):
            try:
                v = tuple(int(n) for n in entry["v"])
                count = int(entry["count"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ShapeMismatch(f"malformed coappearance entry: {exc}") from exc
            if len(v) != group.width:
                raise ShapeMismatch(
                    f"vector {list(v)} needs {group.width} components"
                )
            if any(n < 0 for n in v):
                raise ShapeMismatch(f"vector {list(v)} has negative components")
            if not any(v):
                raise ShapeMismatch("the all-zero vector is implicit, not listed")
            if v in cells:
                raise ShapeMismatch(f"vector {list(v)} listed twice")
            if count < 0:
                raise ShapeMismatch(f"vector {list(v)} has a negative count")
            if count:
                cells[v] = count
        return cls(group=group, cells=cells)


def _fk_cis(dataset: Dataset, group: CoappearGroup, ti: int) -> tuple[int, ...]:
    schema = dataset.tables[group.referencing[ti]].schema
    return tuple(schema.data_index(c) for c in group.fk_columns[ti])


def combination_count(group: CoappearGroup, sizes: dict[str, int]) -> int:
    n = 1
    for r in group.referenced:
        n *= sizes[r]
    return n


def compute_coappear(dataset: Dataset, group: CoappearGroup) -> CoappearDistribution:
    d = group.width
    occ: dict[tuple, list[int]] = {}
    for ti, name in enumerate(group.referencing):
        cis = _fk_cis(dataset, group, ti)
        for _pk, cells in dataset.tables[name].rows.items():
            vals = tuple(cells[ci] for ci in cis)
            if any(v is EMPTY for v in vals):
                continue
            occ.setdefault(vals, [0] * d)[ti] += 1
    out: dict[tuple[int, ...], int] = {}
    for counts in occ.values():
        vec = tuple(counts)
        out[vec] = out.get(vec, 0) + 1
    return CoappearDistribution(group=group, cells=out)


def check_necessity_coappear(
    dist: CoappearDistribution, sizes: dict[str, int]
) -> list[Violation]:
    group = dist.group
    out: list[Violation] = []
    missing = [
        t for t in group.referencing + group.referenced if t not in sizes
    ]
    if missing:
        return [Violation("shape", group.key(), f"no sizes for tables {missing}")]
    for v, count in dist.cells.items():
        if count < 0:
            out.append(
                Violation("shape", (group.key(), v), f"negative count for {list(v)}")
            )
    for ti, name in enumerate(group.referencing):
        weighted = sum(v[ti] * c for v, c in dist.cells.items())
        if weighted != sizes[name]:
            out.append(
                Violation(
                    "C1",
                    (group.key(), name),
                    f"vector-weighted total {weighted} must equal |{name}|="
                    f"{sizes[name]}",
                )
            )
    n_fk = combination_count(group, sizes)
    explicit = sum(dist.cells.values())
    if explicit > n_fk:
        out.append(
            Violation(
                "C2",
                group.key(),
                f"explicit class total {explicit} exceeds combination count {n_fk}",
            )
        )
    return out


def repair_target_coappear(
    dist: CoappearDistribution, sizes: dict[str, int]
) -> CoappearDistribution:
    """Restore C1 with unit moves along one axis, then C2 by merging classes."""
    group = dist.group
    d = group.width
    cells = {v: c for v, c in dist.cells.items() if c > 0 and any(v)}
    n_fk = combination_count(group, sizes)

    def implicit() -> int:
        return n_fk - sum(cells.values())

    def shift(src: tuple[int, ...], dst: tuple[int, ...], units: int) -> None:
        if any(src):
            cells[src] -= units
            if not cells[src]:
                del cells[src]
        if any(dst):
            cells[dst] = cells.get(dst, 0) + units

    for ti, name in enumerate(group.referencing):
        want = sizes[name]
        have = sum(v[ti] * c for v, c in cells.items())
        while have > want:
            v = min((v for v in cells if v[ti] > 0), key=lambda v: (-v[ti], v))
            units = min(cells[v], have - want)
            down = v[:ti] + (v[ti] - 1,) + v[ti + 1 :]
            shift(v, down, units)
            have -= units
        while have < want:
            gap = want - have
            spare = implicit()
            if spare > 0:
                units = min(spare, gap)
                up = tuple(1 if i == ti else 0 for i in range(d))
                cells[up] = cells.get(up, 0) + units
                have += units
                continue
            if not cells:
                raise InfeasibleRepair(
                    f"group {group.referencing}: no mass left to reach "
                    f"|{name}|={want}"
                )
            v = min(cells)
            units = min(cells[v], gap)
            up = v[:ti] + (v[ti] + 1,) + v[ti + 1 :]
            shift(v, up, units)
            have += units

    while sum(cells.values()) > n_fk:
        a = min(cells)
        cells[a] -= 1
        if not cells[a]:
            del cells[a]
        if cells.get(a, 0) >= 1:
            b = a
        else:
            rest = [v for v in cells if cells[v] > 0]
            if not rest:
                raise InfeasibleRepair(
                    f"group {group.referencing}: cannot merge a single class "
                    f"into {n_fk} combinations"
                )
            b = min(rest)
        cells[b] -= 1
        if not cells[b]:
            del cells[b]
        merged = tuple(x + y for x, y in zip(a, b))
        cells[merged] = cells.get(merged, 0) + 1
    return CoappearDistribution(group=group, cells=cells)


def generate_target_coappear(
    source: CoappearDistribution,
    old_sizes: dict[str, int],
    new_sizes: dict[str, int],
) -> CoappearDistribution:
    """Scale class counts by combination-count growth, then repair."""
    old_n = combination_count(source.group, old_sizes)
    new_n = combination_count(source.group, new_sizes)
    ratio = (new_n / old_n) if old_n else 0.0
    scaled = {
        v: int(c * ratio + 0.5) for v, c in source.cells.items() if int(c * ratio + 0.5)
    }
    return repair_target_coappear(
        CoappearDistribution(group=source.group, cells=scaled), new_sizes
    )


def coappear_error(
    actual: CoappearDistribution,
    target: CoappearDistribution,
    sizes: dict[str, int],
) -> float:
    """Mean absolute class-count error over all vectors, zero class included."""
    if actual.group.key() != target.group.key():
        raise ShapeMismatch("distributions cover different groups")
    n_fk = combination_count(target.group, sizes)
    if n_fk <= 0:
        return 0.0
    total = 0
    for v in set(actual.cells) | set(target.cells):
        total += abs(actual.cells.get(v, 0) - target.cells.get(v, 0))
    imp_a = n_fk - sum(actual.cells.values())
    imp_t = n_fk - sum(target.cells.values())
    total += abs(imp_a - imp_t)
    return total / n_fk


# --- incremental state -----------------------------------------------------


class CoappearState:
    """Live combination membership for one group.

    members maps each carried combination to per-table tuple id sets; the
    appearance vector is the tuple of set sizes. class_members groups the
    carried combinations by vector, so the distribution is read off by set
    size. Combination values double as the replacement vectors for moves.
    """

    def __init__(self, dataset: Dataset, group: CoappearGroup):
        self.group = group
        self.d = group.width
        self.fk_cis = [_fk_cis(dataset, group, ti) for ti in range(self.d)]
        self.combo_of: list[dict[int, tuple | None]] = [dict() for _ in range(self.d)]
        self.members: dict[tuple, list[set[int]]] = {}
        self.class_members: dict[tuple[int, ...], set[tuple]] = {}
        for ti, name in enumerate(group.referencing):
            for pk, cells in dataset.tables[name].rows.items():
                vals = tuple(cells[ci] for ci in self.fk_cis[ti])
                combo = None if any(v is EMPTY for v in vals) else vals
                self.set_combo(ti, pk, combo)

    def set_combo(self, ti: int, pk: int, combo: tuple | None) -> None:
        old = self.combo_of[ti].get(pk)
        if old == combo:
            self.combo_of[ti][pk] = combo
            return
        if old is not None:
            sets = self.members[old]
            before = tuple(len(s) for s in sets)
            sets[ti].discard(pk)
            self._reclass(old, before)
        self.combo_of[ti][pk] = combo
        if combo is not None:
            sets = self.members.get(combo)
            if sets is None:
                sets = self.members[combo] = [set() for _ in range(self.d)]
            before = tuple(len(s) for s in sets)
            sets[ti].add(pk)
            self._reclass(combo, before)

    def drop_tuple(self, ti: int, pk: int) -> None:
        self.set_combo(ti, pk, None)
        self.combo_of[ti].pop(pk, None)

    def _reclass(self, combo: tuple, before: tuple[int, ...]) -> None:
        sets = self.members[combo]
        after = tuple(len(s) for s in sets)
        if before == after:
            return
        if any(before):
            group = self.class_members[before]
            group.discard(combo)
            if not group:
                del self.class_members[before]
        if any(after):
            self.class_members.setdefault(after, set()).add(combo)
        else:
            del self.members[combo]

    def distribution(self) -> CoappearDistribution:
        return CoappearDistribution(
            group=self.group,
            cells={v: len(s) for v, s in self.class_members.items()},
        )


# --- the tool --------------------------------------------------------------

CoappearTarget = tuple[CoappearDistribution, ...]


class CoappearTool(TweakingTool):
    name = "coappear"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._states: dict = {}
        self._targets: dict = {}
        self._cell_routes: dict[tuple[str, int], list] = {}
        self._table_slots: dict[str, list] = {}
        self._dataset: Dataset | None = None

    def calculate(self, dataset: Dataset) -> CoappearTarget:
        groups = detect_coappear_groups(dataset.schema)
        return tuple(compute_coappear(dataset, g) for g in groups)

    def generate_target(
        self, dataset: Dataset, new_sizes: dict[str, int]
    ) -> CoappearTarget:
        old_sizes = dataset.sizes()
        return tuple(
            generate_target_coappear(dist, old_sizes, new_sizes)
            for dist in self.calculate(dataset)
        )

    def check_target(
        self, target: CoappearTarget, sizes: dict[str, int]
    ) -> list[Violation]:
        out: list[Violation] = []
        seen = set()
        for dist in target:
            key = dist.group.key()
            if key in seen:
                out.append(Violation("shape", key, "duplicate group in target"))
            seen.add(key)
            out.extend(check_necessity_coappear(dist, sizes))
        return out

    def repair_target(
        self, target: CoappearTarget, sizes: dict[str, int]
    ) -> CoappearTarget:
        return tuple(repair_target_coappear(d, sizes) for d in target)

    def begin_tracking(self, dataset: Dataset, target: CoappearTarget) -> None:
        self._dataset = dataset
        self._states = {}
        self._targets = {}
        self._cell_routes = {}
        self._table_slots = {}
        for dist in sorted(target, key=lambda d: d.group.key()):
            key = dist.group.key()
            state = CoappearState(dataset, dist.group)
            self._states[key] = state
            self._targets[key] = dist
            for ti, name in enumerate(dist.group.referencing):
                self._table_slots.setdefault(name, []).append((key, ti))
                for ci in state.fk_cis[ti]:
                    self._cell_routes.setdefault((name, ci), []).append((key, ti))

    def _recompute(self, state: CoappearState, ti: int, pk: int) -> None:
        cells = self._dataset.tables[state.group.referencing[ti]].rows[pk]
        vals = tuple(cells[ci] for ci in state.fk_cis[ti])
        state.set_combo(ti, pk, None if any(v is EMPTY for v in vals) else vals)

    def notify_change(self, dataset: Dataset, event: ChangeEvent) -> None:
        touched: set[tuple[tuple, int, int]] = set()
        for pk, ci, _old, _new in event.cells:
            for key, ti in self._cell_routes.get((event.table, ci), ()):
                touched.add((key, ti, pk))
        for key, ti, pk in sorted(touched, key=lambda t: (t[0], t[1], t[2])):
            self._recompute(self._states[key], ti, pk)
        for pk, _values in event.appended:
            for key, ti in self._table_slots.get(event.table, ()):
                self._recompute(self._states[key], ti, pk)
        for pk, _values in event.removed:
            for key, ti in self._table_slots.get(event.table, ()):
                self._states[key].drop_tuple(ti, pk)

    def current_error(self) -> float:
        if not self._targets:
            return 0.0
        sizes = self._dataset.sizes()
        total = 0.0
        for key, target in self._targets.items():
            total += coappear_error(self._states[key].distribution(), target, sizes)
        return total / len(self._targets)

    def verify_tracking(self, dataset: Dataset) -> None:
        for key, state in self._states.items():
            fresh = compute_coappear(dataset, state.group)
            got = state.distribution().cells
            assert got == fresh.cells, (
                f"group {state.group.referencing}: tracked {got} != "
                f"recomputed {fresh.cells}"
            )

    # --- tweaking ----------------------------------------------------------

    def tweak(
        self, dataset: Dataset, target: CoappearTarget, session: Coordinator
    ) -> None:
        for dist in sorted(target, key=lambda d: d.group.key()):
            self._tweak_group(dataset, self._states[dist.group.key()], dist, session)

    def _tweak_group(
        self,
        dataset: Dataset,
        state: CoappearState,
        target: CoappearDistribution,
        session: Coordinator,
    ) -> None:
        group = state.group
        sizes = dataset.sizes()
        n_fk = combination_count(group, sizes)
        zero = (0,) * group.width

        cur = {v: len(s) for v, s in state.class_members.items()}
        tgt = dict(target.cells)
        cur[zero] = n_fk - sum(cur.values())
        tgt[zero] = n_fk - sum(tgt.values())
        delta = {
            v: cur.get(v, 0) - tgt.get(v, 0)
            for v in set(cur) | set(tgt)
            if cur.get(v, 0) != tgt.get(v, 0)
        }
        if not delta:
            return

        surplus = {v: d for v, d in delta.items() if d > 0}
        moves = self._plan_moves(dataset, state, surplus, delta, zero)
        self._execute_moves(state, moves, session)

    def _plan_moves(self, dataset, state: CoappearState, surplus, delta, zero):
        """Bind each deficit unit to a concrete surplus combination."""
        group = state.group
        avail = dict(surplus)
        cursors: dict[tuple[int, ...], list] = {
            v: sorted(state.class_members.get(v, ())) for v in surplus if v != zero
        }
        fresh = self._fresh_combos(dataset, state)
        moves: list[tuple[tuple, tuple, tuple]] = []
        for w in sorted(v for v, d in delta.items() if d < 0):
            need = -delta[w]
            while need > 0:
                v = min(
                    (v for v, a in avail.items() if a > 0),
                    key=lambda v: (sum(abs(a - b) for a, b in zip(v, w)), v),
                )
                units = min(avail[v], need)
                for _ in range(units):
                    if v == zero:
                        combo = next(fresh)
                    else:
                        combo = cursors[v].pop(0)
                    moves.append((combo, v, w))
                avail[v] -= units
                need -= units
        return moves

    def _fresh_combos(self, dataset: Dataset, state: CoappearState):
        pools = [sorted(dataset.tables[r].rows) for r in state.group.referenced]
        for combo in itertools.product(*pools):
            if combo not in state.members:
                yield combo

    def _execute_moves(self, state: CoappearState, moves, session: Coordinator) -> None:
        group = state.group
        d = group.width
        give_q: list[deque[int]] = [deque() for _ in range(d)]
        for combo, v, w in moves:
            for ti in range(d):
                n = v[ti] - w[ti]
                if n > 0:
                    give_q[ti].extend(sorted(state.members[combo][ti])[:n])
        for combo, v, w in moves:
            mods = []
            for ti in range(d):
                n = w[ti] - v[ti]
                if n <= 0:
                    continue
                ids = tuple(give_q[ti].popleft() for _ in range(n))
                mods.append(
                    ReplaceValues(
                        group.referencing[ti], ids, state.fk_cis[ti], combo
                    )
                )
            if not mods:
                continue
            while not session.submit(self.name, tuple(mods)).accepted:
                if session.request_relaxation(self.name) is None:
                    raise session.exhausted(
                        self.name,
                        f"group {group.referencing}: move to class {list(w)}",
                    )
        leftovers = [ti for ti in range(d) if give_q[ti]]
        assert not leftovers, f"unconsumed freed tuples in tables {leftovers}"
