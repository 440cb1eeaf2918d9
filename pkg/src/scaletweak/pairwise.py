"""Pairwise interaction feature over a user/post/response binding.

For an ordered pair of distinct users (u, v), the cross count is the number
of responses u wrote on posts owned by v. The pair part of the feature maps
(x, y) to the number of ordered pairs whose cross counts are (x, y); the
self part maps x to the number of users with x responses on their own posts.
Pairs with no interaction either way form the implicit (0, 0) class, and
users without self responses the implicit 0 class.

Necessity conditions:

- P1: the pair part is symmetric and its diagonal is even, because the two
      orientations of one user pair land on mirrored cells.
- P2: the coordinate-weighted pair total plus twice the weighted self total
      equals twice the response count; every response is cross or self.
- P3: the explicit pair total cannot exceed the ordered pair budget.
- SP2: the explicit self total cannot exceed the user count.

The tweaking algorithm plans both parts first: each deficit cell pulls from
the Manhattan-closest surplus cells and every unit is bound to a concrete
user pair (or user, for the self part). Responses released by one move are
rewritten directly into their destination, so the response count never
changes. A move that must insert toward a user who owns no posts first
performs the borrowed-post maneuver: a donor post is emptied by shifting
its responses to the donor owner's other posts, which keeps every pair
count intact, and then handed over; when no user owns two posts a fresh
post is appended instead, which bounds post growth by the number of users.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .coordinator import ChangeEvent, Coordinator, TweakingTool, Violation
from .dataset import EMPTY, Dataset
from .errors import BindingMismatch, InfeasibleRepair, ShapeMismatch
from .modify import AppendTuple, Modification, ReplaceValues
from .schema import DatasetSchema, PairwiseBinding
from .seeding import derive_rng


def resolve_binding(schema: DatasetSchema, raw: dict) -> PairwiseBinding:
    try:
        key = (
            raw["userTable"],
            raw["postTable"],
            raw["responseTable"],
            raw["postOwnerColumn"],
            raw["responsePostColumn"],
            raw["responseUserColumn"],
        )
    except (KeyError, TypeError) as exc:
        raise BindingMismatch(f"malformed binding description: {exc}") from exc
    for b in schema.pairwise_bindings:
        if b.key() == key:
            return b
    raise BindingMismatch(f"schema has no pairwise binding {key}")


def _binding_dict(b: PairwiseBinding) -> dict:
    return {
        "userTable": b.user_table,
        "postTable": b.post_table,
        "responseTable": b.response_table,
        "postOwnerColumn": b.post_owner_column,
        "responsePostColumn": b.response_post_column,
        "responseUserColumn": b.response_user_column,
    }


@dataclass(frozen=True)
class PairwiseDistribution:
    """Explicit pair and self counts; (0,0) and self 0 are implicit."""

    binding: PairwiseBinding
    rho_n: dict[tuple[int, int], int]
    rho_s: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "binding": _binding_dict(self.binding),
            "rhoN": [
                {"x": x, "y": y, "count": self.rho_n[(x, y)]}
                for x, y in sorted(self.rho_n)
            ],
            "rhoS": [{"x": x, "count": self.rho_s[x]} for x in sorted(self.rho_s)],
        }

    @classmethod
    def from_dict(cls, raw: dict, schema: DatasetSchema) -> PairwiseDistribution:
        binding = resolve_binding(schema, raw.get("binding", {}))
        rho_n: dict[tuple[int, int], int] = {}
        rho_s: dict[int, int] = {}
        for entry in raw.get("rhoN", ()):
            try:
                cell = (int(entry["x"]), int(entry["y"]))
                count = int(entry["count"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ShapeMismatch(f"malformed pair entry: {exc}") from exc
            if cell[0] < 0 or cell[1] < 0:
                raise ShapeMismatch(f"pair cell {cell} has negative coordinates")
            if cell == (0, 0):
                raise ShapeMismatch("the (0,0) pair cell is implicit, not listed")
            if cell in rho_n:
                raise ShapeMismatch(f"pair cell {cell} listed twice")
            if count < 0:
                raise ShapeMismatch(f"pair cell {cell} has a negative count")
            if count:
                rho_n[cell] = count
        for entry in raw.get("rhoS", ()):
            try:
                x = int(entry["x"])
                count = int(entry["count"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ShapeMismatch(f"malformed self entry: {exc}") from exc
            if x <= 0:
                raise ShapeMismatch("self cells start at 1; 0 is implicit")
            if x in rho_s:
                raise ShapeMismatch(f"self cell {x} listed twice")
            if count < 0:
                raise ShapeMismatch(f"self cell {x} has a negative count")
            if count:
                rho_s[x] = count
        return cls(binding=binding, rho_n=rho_n, rho_s=rho_s)


def _binding_cis(dataset: Dataset, b: PairwiseBinding) -> tuple[int, int, int]:
    """(owner ci in posts, post ci in responses, user ci in responses)."""
    post_schema = dataset.tables[b.post_table].schema
    resp_schema = dataset.tables[b.response_table].schema
    return (
        post_schema.data_index(b.post_owner_column),
        resp_schema.data_index(b.response_post_column),
        resp_schema.data_index(b.response_user_column),
    )


def compute_pairwise(dataset: Dataset, binding: PairwiseBinding) -> PairwiseDistribution:
    owner_ci, rpost_ci, ruser_ci = _binding_cis(dataset, binding)
    posts = dataset.tables[binding.post_table].rows
    cross: dict[tuple[int, int], int] = {}
    self_count: dict[int, int] = {}
    for cells in dataset.tables[binding.response_table].rows.values():
        p = cells[rpost_ci]
        u = cells[ruser_ci]
        if p is EMPTY or u is EMPTY:
            continue
        v = posts[p][owner_ci]
        if v is EMPTY:
            continue
        if u == v:
            self_count[u] = self_count.get(u, 0) + 1
        else:
            cross[(u, v)] = cross.get((u, v), 0) + 1
    rho_n: dict[tuple[int, int], int] = {}
    seen: set[tuple[int, int]] = set()
    for u, v in cross:
        pair = (u, v) if u < v else (v, u)
        if pair in seen:
            continue
        seen.add(pair)
        x = cross.get(pair, 0)
        y = cross.get((pair[1], pair[0]), 0)
        rho_n[(x, y)] = rho_n.get((x, y), 0) + 1
        rho_n[(y, x)] = rho_n.get((y, x), 0) + 1
    rho_s: dict[int, int] = {}
    for n in self_count.values():
        rho_s[n] = rho_s.get(n, 0) + 1
    return PairwiseDistribution(binding=binding, rho_n=rho_n, rho_s=rho_s)


def check_necessity_pairwise(
    dist: PairwiseDistribution, sizes: dict[str, int]
) -> list[Violation]:
    b = dist.binding
    out: list[Violation] = []
    missing = [
        t
        for t in (b.user_table, b.post_table, b.response_table)
        if t not in sizes
    ]
    if missing:
        return [Violation("shape", b.key(), f"no sizes for tables {missing}")]
    for (x, y), count in dist.rho_n.items():
        if count < 0:
            out.append(
                Violation("shape", (b.key(), (x, y)), f"negative count at {(x, y)}")
            )
    for (x, y), count in sorted(dist.rho_n.items()):
        if x == y:
            if count % 2:
                out.append(
                    Violation(
                        "P1",
                        (b.key(), (x, y)),
                        f"diagonal cell {(x, x)} has odd count {count}",
                    )
                )
        elif x < y and dist.rho_n.get((y, x), 0) != count:
            out.append(
                Violation(
                    "P1",
                    (b.key(), (x, y)),
                    f"cells {(x, y)} and {(y, x)} disagree",
                )
            )
    weighted = sum((x + y) * c for (x, y), c in dist.rho_n.items())
    weighted += 2 * sum(x * c for x, c in dist.rho_s.items())
    want = 2 * sizes[b.response_table]
    if weighted != want:
        out.append(
            Violation(
                "P2",
                b.key(),
                f"weighted response total {weighted} must equal {want}",
            )
        )
    n_users = sizes[b.user_table]
    budget = n_users * (n_users - 1)
    explicit = sum(dist.rho_n.values())
    if explicit > budget:
        out.append(
            Violation(
                "P3",
                b.key(),
                f"explicit pair total {explicit} exceeds budget {budget}",
            )
        )
    self_total = sum(dist.rho_s.values())
    if self_total > n_users:
        out.append(
            Violation(
                "SP2",
                b.key(),
                f"explicit self total {self_total} exceeds user count {n_users}",
            )
        )
    return out


def _largest_remainder_scale(cells: dict, cap: int) -> dict:
    """Scale counts down to sum() == cap, assigning leftovers by remainder."""
    total = sum(cells.values())
    if total <= cap:
        return dict(cells)
    out = {}
    shares = []
    for key in sorted(cells):
        exact = cells[key] * cap / total
        base = int(exact)
        out[key] = base
        shares.append((-(exact - base), key))
    leftover = cap - sum(out.values())
    shares.sort()
    for _, key in shares[:leftover]:
        out[key] += 1
    return {k: v for k, v in out.items() if v > 0}


def repair_target_pairwise(
    dist: PairwiseDistribution, sizes: dict[str, int]
) -> PairwiseDistribution:
    """Symmetrize, even out the diagonal, fit budgets, then restore P2."""
    b = dist.binding
    n_users = sizes[b.user_table]
    n_resp = sizes[b.response_table]

    pairs: dict[tuple[int, int], int] = {}
    for (x, y), count in dist.rho_n.items():
        if count <= 0 or (x, y) == (0, 0):
            continue
        cell = (x, y) if x <= y else (y, x)
        pairs[cell] = pairs.get(cell, 0) + count
    for cell in sorted(pairs):
        x, y = cell
        pairs[cell] = (pairs[cell] + 1) // 2 if x < y else pairs[cell] // 2
        if not pairs[cell]:
            del pairs[cell]
    selves = {x: c for x, c in dist.rho_s.items() if x > 0 and c > 0}

    pair_cap = n_users * (n_users - 1) // 2
    pairs = _largest_remainder_scale(pairs, pair_cap)
    selves = _largest_remainder_scale(selves, n_users)

    def weight() -> int:
        return sum((x + y) * c for (x, y), c in pairs.items()) + sum(
            x * c for x, c in selves.items()
        )

    while weight() < n_resp:
        gap = n_resp - weight()
        if sum(pairs.values()) < pair_cap:
            room = pair_cap - sum(pairs.values())
            add = min(room, gap)
            pairs[(0, 1)] = pairs.get((0, 1), 0) + add
        elif sum(selves.values()) < n_users:
            room = n_users - sum(selves.values())
            add = min(room, gap)
            selves[1] = selves.get(1, 0) + add
        elif pairs:
            cell = min(pairs)
            x, y = cell
            up = (x, y + 1)
            moved = min(pairs[cell], gap)
            pairs[cell] -= moved
            if not pairs[cell]:
                del pairs[cell]
            pairs[up] = pairs.get(up, 0) + moved
        elif selves:
            x = min(selves)
            moved = min(selves[x], gap)
            selves[x] -= moved
            if not selves[x]:
                del selves[x]
            selves[x + 1] = selves.get(x + 1, 0) + moved
        else:
            raise InfeasibleRepair(
                f"binding {b.key()}: no users or pairs can absorb "
                f"{n_resp} responses"
            )
    while weight() > n_resp:
        gap = weight() - n_resp
        if pairs:
            cell = max(pairs)
            x, y = cell
            down = (min(x, y - 1), max(x, y - 1))
            moved = min(pairs[cell], gap)
            pairs[cell] -= moved
            if not pairs[cell]:
                del pairs[cell]
            if down != (0, 0):
                pairs[down] = pairs.get(down, 0) + moved
        else:
            x = max(selves)
            moved = min(selves[x], gap)
            selves[x] -= moved
            if not selves[x]:
                del selves[x]
            if x - 1 > 0:
                selves[x - 1] = selves.get(x - 1, 0) + moved

    rho_n: dict[tuple[int, int], int] = {}
    for (x, y), count in pairs.items():
        if x == y:
            rho_n[(x, x)] = rho_n.get((x, x), 0) + 2 * count
        else:
            rho_n[(x, y)] = rho_n.get((x, y), 0) + count
            rho_n[(y, x)] = rho_n.get((y, x), 0) + count
    return PairwiseDistribution(binding=b, rho_n=rho_n, rho_s=dict(selves))


def generate_target_pairwise(
    source: PairwiseDistribution,
    old_sizes: dict[str, int],
    new_sizes: dict[str, int],
) -> PairwiseDistribution:
    """Scale pair counts by pair-budget growth, self counts by user growth."""
    b = source.binding
    old_u = old_sizes[b.user_table]
    new_u = new_sizes[b.user_table]
    old_pairs = old_u * (old_u - 1)
    new_pairs = new_u * (new_u - 1)
    pr = (new_pairs / old_pairs) if old_pairs else 0.0
    sr = (new_u / old_u) if old_u else 0.0
    rho_n = {
        cell: int(c * pr + 0.5)
        for cell, c in source.rho_n.items()
        if int(c * pr + 0.5)
    }
    rho_s = {
        x: int(c * sr + 0.5) for x, c in source.rho_s.items() if int(c * sr + 0.5)
    }
    return repair_target_pairwise(
        PairwiseDistribution(binding=b, rho_n=rho_n, rho_s=rho_s), new_sizes
    )


def pairwise_error(
    actual: PairwiseDistribution,
    target: PairwiseDistribution,
    sizes: dict[str, int],
) -> float:
    """Mean absolute cell error across both parts, implicit cells included."""
    if actual.binding.key() != target.binding.key():
        raise ShapeMismatch("distributions cover different bindings")
    n_users = sizes[target.binding.user_table]
    budget = n_users * (n_users - 1)
    if budget <= 0:
        return 0.0
    total = 0
    for cell in set(actual.rho_n) | set(target.rho_n):
        total += abs(actual.rho_n.get(cell, 0) - target.rho_n.get(cell, 0))
    total += abs(
        (budget - sum(actual.rho_n.values())) - (budget - sum(target.rho_n.values()))
    )
    for x in set(actual.rho_s) | set(target.rho_s):
        total += abs(actual.rho_s.get(x, 0) - target.rho_s.get(x, 0))
    total += abs(
        (n_users - sum(actual.rho_s.values()))
        - (n_users - sum(target.rho_s.values()))
    )
    return total / budget


# --- incremental state -----------------------------------------------------


class PairwiseState:
    """Live cross and self counts for one binding.

    cross maps ordered (author, owner) pairs to response counts, rids maps
    (author, post) to the concrete response ids, and the class indexes group
    user pairs and users by their current cell so tweak planning can bind
    concrete members. Owner changes re-home every response on the post.
    """

    def __init__(self, dataset: Dataset, binding: PairwiseBinding):
        self.binding = binding
        self.owner_ci, self.rpost_ci, self.ruser_ci = _binding_cis(dataset, binding)
        self.owner: dict[int, int | None] = {}
        self.posts_of: dict[int, set[int]] = {}
        self.resp: dict[int, tuple[int | None, int | None]] = {}
        self.rid_by_post: dict[int, set[int]] = {}
        self.rids: dict[tuple[int, int], set[int]] = {}
        self.cross: dict[tuple[int, int], int] = {}
        self.self_count: dict[int, int] = {}
        self.class_n: dict[tuple[int, int], int] = {}
        self.pair_members: dict[tuple[int, int], set[tuple[int, int]]] = {}
        self.self_members: dict[int, set[int]] = {}
        for pk, cells in dataset.tables[binding.post_table].rows.items():
            raw = cells[self.owner_ci]
            self.set_owner(pk, None if raw is EMPTY else raw)
        for rid, cells in dataset.tables[binding.response_table].rows.items():
            p = cells[self.rpost_ci]
            u = cells[self.ruser_ci]
            self.set_response(
                rid, None if p is EMPTY else p, None if u is EMPTY else u
            )

    # class bookkeeping

    def _pair_cell(self, u: int, v: int) -> tuple[int, int]:
        return (self.cross.get((u, v), 0), self.cross.get((v, u), 0))

    def _bump_pair_class(self, u: int, v: int, delta: int) -> None:
        """Adjust the class indexes for unordered pair {u, v} by +-1."""
        a, b = self._pair_cell(u, v)
        if (a, b) == (0, 0):
            return
        self.class_n[(a, b)] = self.class_n.get((a, b), 0) + delta
        self.class_n[(b, a)] = self.class_n.get((b, a), 0) + delta
        for cell in {(a, b), (b, a)}:
            if not self.class_n.get(cell):
                self.class_n.pop(cell, None)
        norm = (a, b) if a <= b else (b, a)
        pair = (u, v) if u < v else (v, u)
        if delta > 0:
            self.pair_members.setdefault(norm, set()).add(pair)
        else:
            members = self.pair_members.get(norm)
            if members is not None:
                members.discard(pair)
                if not members:
                    del self.pair_members[norm]

    def _change_cross(self, u: int, v: int, delta: int) -> None:
        self._bump_pair_class(u, v, -1)
        n = self.cross.get((u, v), 0) + delta
        if n:
            self.cross[(u, v)] = n
        else:
            self.cross.pop((u, v), None)
        self._bump_pair_class(u, v, +1)

    def _change_self(self, u: int, delta: int) -> None:
        old = self.self_count.get(u, 0)
        if old:
            self.self_members[old].discard(u)
            if not self.self_members[old]:
                del self.self_members[old]
        new = old + delta
        if new:
            self.self_count[u] = new
            self.self_members.setdefault(new, set()).add(u)
        else:
            self.self_count.pop(u, None)

    def _contribution(self, rid: int, delta: int) -> None:
        p, u = self.resp[rid]
        if p is None or u is None:
            return
        v = self.owner.get(p)
        if v is None:
            return
        if u == v:
            self._change_self(u, delta)
        else:
            self._change_cross(u, v, delta)

    # mutations

    def set_owner(self, post: int, new_owner: int | None) -> None:
        old = self.owner.get(post)
        if post in self.owner and old == new_owner:
            return
        for rid in sorted(self.rid_by_post.get(post, ())):
            self._contribution(rid, -1)
        if old is not None:
            self.posts_of[old].discard(post)
            if not self.posts_of[old]:
                del self.posts_of[old]
        self.owner[post] = new_owner
        if new_owner is not None:
            self.posts_of.setdefault(new_owner, set()).add(post)
        for rid in sorted(self.rid_by_post.get(post, ())):
            self._contribution(rid, +1)

    def drop_post(self, post: int) -> None:
        self.set_owner(post, None)
        self.owner.pop(post, None)

    def set_response(self, rid: int, post: int | None, user: int | None) -> None:
        old = self.resp.get(rid)
        if old is not None:
            if old == (post, user):
                return
            self._contribution(rid, -1)
            op, ou = old
            if op is not None:
                self.rid_by_post[op].discard(rid)
            if op is not None and ou is not None:
                self.rids[(ou, op)].discard(rid)
                if not self.rids[(ou, op)]:
                    del self.rids[(ou, op)]
        self.resp[rid] = (post, user)
        if post is not None:
            self.rid_by_post.setdefault(post, set()).add(rid)
        if post is not None and user is not None:
            self.rids.setdefault((user, post), set()).add(rid)
        self._contribution(rid, +1)

    def drop_response(self, rid: int) -> None:
        self.set_response(rid, None, None)
        self.resp.pop(rid, None)

    # reads

    def pair_rids(self, author: int, owner: int) -> list[int]:
        """Response ids by `author` on `owner`'s posts, ascending."""
        out: set[int] = set()
        for p in self.posts_of.get(owner, ()):
            out |= self.rids.get((author, p), set())
        return sorted(out)

    def distribution(self) -> PairwiseDistribution:
        rho_s = {x: len(s) for x, s in self.self_members.items()}
        return PairwiseDistribution(
            binding=self.binding, rho_n=dict(self.class_n), rho_s=rho_s
        )


# --- the tool --------------------------------------------------------------

PairwiseTarget = tuple[PairwiseDistribution, ...]


class PairwiseTool(TweakingTool):
    name = "pairwise"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._states: dict = {}
        self._targets: dict = {}
        self._dataset: Dataset | None = None
        self._runs = 0

    def calculate(self, dataset: Dataset) -> PairwiseTarget:
        return tuple(
            compute_pairwise(dataset, b)
            for b in sorted(dataset.schema.pairwise_bindings, key=lambda b: b.key())
        )

    def generate_target(
        self, dataset: Dataset, new_sizes: dict[str, int]
    ) -> PairwiseTarget:
        old_sizes = dataset.sizes()
        return tuple(
            generate_target_pairwise(d, old_sizes, new_sizes)
            for d in self.calculate(dataset)
        )

    def check_target(
        self, target: PairwiseTarget, sizes: dict[str, int]
    ) -> list[Violation]:
        out: list[Violation] = []
        seen = set()
        for dist in target:
            key = dist.binding.key()
            if key in seen:
                out.append(Violation("shape", key, "duplicate binding in target"))
            seen.add(key)
            out.extend(check_necessity_pairwise(dist, sizes))
        return out

    def repair_target(
        self, target: PairwiseTarget, sizes: dict[str, int]
    ) -> PairwiseTarget:
        return tuple(repair_target_pairwise(d, sizes) for d in target)

    def begin_tracking(self, dataset: Dataset, target: PairwiseTarget) -> None:
        self._dataset = dataset
        self._states = {}
        self._targets = {}
        for dist in sorted(target, key=lambda d: d.binding.key()):
            key = dist.binding.key()
            self._states[key] = PairwiseState(dataset, dist.binding)
            self._targets[key] = dist

    def notify_change(self, dataset: Dataset, event: ChangeEvent) -> None:
        for key, state in self._states.items():
            b = state.binding
            if event.table == b.post_table:
                for pk, ci, _old, new in event.cells:
                    if ci == state.owner_ci:
                        state.set_owner(pk, None if new is EMPTY else new)
                for pk, values in event.appended:
                    raw = values[state.owner_ci]
                    state.set_owner(pk, None if raw is EMPTY else raw)
                for pk, _values in event.removed:
                    state.drop_post(pk)
            if event.table == b.response_table:
                touched = {
                    pk
                    for pk, ci, _old, _new in event.cells
                    if ci in (state.rpost_ci, state.ruser_ci)
                }
                for rid in sorted(touched):
                    cells = dataset.tables[b.response_table].rows[rid]
                    p = cells[state.rpost_ci]
                    u = cells[state.ruser_ci]
                    state.set_response(
                        rid, None if p is EMPTY else p, None if u is EMPTY else u
                    )
                for rid, values in event.appended:
                    p = values[state.rpost_ci]
                    u = values[state.ruser_ci]
                    state.set_response(
                        rid, None if p is EMPTY else p, None if u is EMPTY else u
                    )
                for rid, _values in event.removed:
                    state.drop_response(rid)

    def current_error(self) -> float:
        if not self._targets:
            return 0.0
        sizes = self._dataset.sizes()
        total = 0.0
        for key, target in self._targets.items():
            total += pairwise_error(self._states[key].distribution(), target, sizes)
        return total / len(self._targets)

    def verify_tracking(self, dataset: Dataset) -> None:
        for key, state in self._states.items():
            fresh = compute_pairwise(dataset, state.binding)
            got = state.distribution()
            assert got.rho_n == fresh.rho_n, (
                f"binding {key}: tracked pair part {got.rho_n} != {fresh.rho_n}"
            )
            assert got.rho_s == fresh.rho_s, (
                f"binding {key}: tracked self part {got.rho_s} != {fresh.rho_s}"
            )

    # --- tweaking ----------------------------------------------------------

    def tweak(
        self, dataset: Dataset, target: PairwiseTarget, session: Coordinator
    ) -> None:
        rng = derive_rng(self.seed, "pairwise", self._runs)
        self._runs += 1
        for dist in sorted(target, key=lambda d: d.binding.key()):
            self._tweak_binding(
                dataset, self._states[dist.binding.key()], dist, session, rng
            )

    def _tweak_binding(
        self,
        dataset: Dataset,
        state: PairwiseState,
        target: PairwiseDistribution,
        session: Coordinator,
        rng,
    ) -> None:
        users = sorted(dataset.tables[state.binding.user_table].rows)
        n_users = len(users)

        pair_moves = self._plan_pairs(state, target, users, n_users)
        self_moves = self._plan_selves(state, target, users, n_users)
        self._execute(dataset, state, pair_moves, self_moves, session, rng)

    def _unordered_cells(self, ordered: dict[tuple[int, int], int]) -> dict:
        out: dict[tuple[int, int], int] = {}
        for (x, y), count in ordered.items():
            if x < y:
                out[(x, y)] = count
            elif x == y:
                out[(x, x)] = count // 2
        return out

    def _plan_pairs(self, state: PairwiseState, target, users, n_users):
        """Bind each pair-part deficit unit to a concrete user pair."""
        zero = (0, 0)
        budget = n_users * (n_users - 1) // 2
        cur = self._unordered_cells(state.class_n)
        tgt = self._unordered_cells(target.rho_n)
        cur[zero] = budget - sum(cur.values())
        tgt[zero] = budget - sum(tgt.values())
        delta = {
            c: cur.get(c, 0) - tgt.get(c, 0)
            for c in set(cur) | set(tgt)
            if cur.get(c, 0) != tgt.get(c, 0)
        }
        avail = {c: d for c, d in delta.items() if d > 0}
        cursors = {
            c: sorted(state.pair_members.get(c, ())) for c in avail if c != zero
        }
        fresh = self._fresh_pairs(state, users)
        moves = []
        for w in sorted(c for c, d in delta.items() if d < 0):
            need = -delta[w]
            while need > 0:
                v = min(
                    (c for c, a in avail.items() if a > 0),
                    key=lambda c: (abs(c[0] - w[0]) + abs(c[1] - w[1]), c),
                )
                units = min(avail[v], need)
                for _ in range(units):
                    pair = next(fresh) if v == zero else cursors[v].pop(0)
                    moves.append((pair, v, w))
                avail[v] -= units
                need -= units
        return moves

    def _fresh_pairs(self, state: PairwiseState, users):
        """Users that already own a post come first: binding a fresh pair to
        them keeps the later placement free of borrowed-post maneuvers."""
        owning = [u for u in users if state.posts_of.get(u)]
        bare = [u for u in users if not state.posts_of.get(u)]

        def taken(u, v):
            return (u, v) in state.cross or (v, u) in state.cross

        for i, u in enumerate(owning):
            for v in owning[i + 1 :]:
                if not taken(u, v):
                    yield (u, v)
        for u in owning:
            for v in bare:
                if not taken(u, v):
                    yield (u, v)
        for i, u in enumerate(bare):
            for v in bare[i + 1 :]:
                if not taken(u, v):
                    yield (u, v)

    def _plan_selves(self, state: PairwiseState, target, users, n_users):
        """Bind each self-part deficit unit to a concrete user."""
        cur = {x: len(s) for x, s in state.self_members.items()}
        tgt = dict(target.rho_s)
        cur[0] = n_users - sum(cur.values())
        tgt[0] = n_users - sum(tgt.values())
        delta = {
            x: cur.get(x, 0) - tgt.get(x, 0)
            for x in set(cur) | set(tgt)
            if cur.get(x, 0) != tgt.get(x, 0)
        }
        avail = {x: d for x, d in delta.items() if d > 0}
        cursors = {
            x: sorted(state.self_members.get(x, ())) for x in avail if x != 0
        }

        def fresh_users():
            # post owners first; a self response needs a post to sit on
            for u in users:
                if not state.self_count.get(u) and state.posts_of.get(u):
                    yield u
            for u in users:
                if not state.self_count.get(u) and not state.posts_of.get(u):
                    yield u

        fresh = fresh_users()
        moves = []
        for w in sorted(x for x, d in delta.items() if d < 0):
            need = -delta[w]
            while need > 0:
                v = min(
                    (x for x, a in avail.items() if a > 0),
                    key=lambda x: (abs(x - w), x),
                )
                units = min(avail[v], need)
                for _ in range(units):
                    u = next(fresh) if v == 0 else cursors[v].pop(0)
                    moves.append((u, v, w))
                avail[v] -= units
                need -= units
        return moves

    def _execute(self, dataset, state, pair_moves, self_moves, session, rng) -> None:
        give_q: deque[int] = deque()

        bound_pairs = []
        for (u, v), _cell, w in pair_moves:
            a1 = state.cross.get((u, v), 0)
            b1 = state.cross.get((v, u), 0)
            x, y = w

            def borrows(wx, wy):
                return int(wx > 0 and not state.posts_of.get(v)) + int(
                    wy > 0 and not state.posts_of.get(u)
                )

            # fewest response moves first, then fewest borrowed posts
            fwd = (abs(a1 - x) + abs(b1 - y), borrows(x, y))
            rev = (abs(a1 - y) + abs(b1 - x), borrows(y, x))
            want = (x, y) if fwd <= rev else (y, x)
            bound_pairs.append(((u, v), (a1, b1), want))
            for author, owner, have, goal in (
                (u, v, a1, want[0]),
                (v, u, b1, want[1]),
            ):
                if have > goal:
                    give_q.extend(state.pair_rids(author, owner)[: have - goal])
        for u, have, goal in self_moves:
            if have > goal:
                give_q.extend(state.pair_rids(u, u)[: have - goal])

        for (u, v), (a1, b1), want in bound_pairs:
            inserts = []
            for author, owner, have, goal in (
                (u, v, a1, want[0]),
                (v, u, b1, want[1]),
            ):
                if goal > have:
                    rids = tuple(give_q.popleft() for _ in range(goal - have))
                    inserts.append((author, owner, rids))
            self._deliver(
                session, dataset, state, inserts, rng, f"pair {(u, v)} to {want}"
            )
        for u, have, goal in self_moves:
            if goal > have:
                rids = tuple(give_q.popleft() for _ in range(goal - have))
                self._deliver(
                    session,
                    dataset,
                    state,
                    [(u, u, rids)],
                    rng,
                    f"user {u} to {goal} self responses",
                )
        assert not give_q, f"{len(give_q)} freed responses left unplaced"

    # bound on candidate batches tried per relaxation round; keeps validator
    # trial-apply cost linear in the move count
    _VARIANT_CAP = 8

    def _batch_variants(self, dataset, state: PairwiseState, inserts, rng):
        """Yield candidate batches placing every insert's pooled responses.

        Variant 0 is the cheapest placement (lowest post, least-burdened
        donor); later variants walk the other landing posts and donor posts
        so a validator veto can be answered with a genuinely different move.
        """
        for variant in range(self._VARIANT_CAP):
            mods: list[Modification] = []
            novel = variant == 0
            for author, owner, rids in inserts:
                posts = sorted(state.posts_of.get(owner, ()))
                if posts:
                    novel = novel or variant < len(posts)
                    post = posts[min(variant, len(posts) - 1)]
                else:
                    post, fresh = self._borrow_post(
                        dataset, state, owner, variant, rng, mods
                    )
                    novel = novel or fresh
                mods.append(
                    ReplaceValues(
                        state.binding.response_table,
                        rids,
                        (state.rpost_ci, state.ruser_ci),
                        (post, author),
                    )
                )
            if not novel:
                return
            yield tuple(mods)

    def _sibling_states(self, b):
        """Tracked states that read the same post-owner column, one per
        distinct (response table, post column) pair."""
        out, seen = [], set()
        for s in self._states.values():
            if (
                s.binding.post_table != b.post_table
                or s.binding.post_owner_column != b.post_owner_column
            ):
                continue
            key = (s.binding.response_table, s.rpost_ci)
            if key in seen:
                continue
            seen.add(key)
            out.append(s)
        return out

    def _borrow_post(self, dataset, state: PairwiseState, owner, variant, rng, mods):
        """Give `owner` a post, preferring to re-own a spare one.

        Returns (post id, whether this variant differs from the previous one).
        Donors are ranked by how many responses would need a new home across
        all bindings on this owner column; the whole hand-over ships in the
        caller's batch so validators price it as a unit.
        """
        b = state.binding
        siblings = self._sibling_states(b)
        donors = sorted(
            (sum(len(s.rid_by_post.get(p, ())) for s in siblings), p)
            for posts in state.posts_of.values()
            if len(posts) >= 2
            for p in posts
        )
        if donors:
            _burden, post = donors[min(variant, len(donors) - 1)]
            donor_owner = state.owner[post]
            others = sorted(state.posts_of[donor_owner] - {post})
            # the post must change hands clean in every binding that reads
            # this owner column, or their settled counts shift under us
            for s in siblings:
                for rid in sorted(s.rid_by_post.get(post, ())):
                    mods.append(
                        ReplaceValues(
                            s.binding.response_table,
                            (rid,),
                            (s.rpost_ci,),
                            (rng.choice(others),),
                        )
                    )
            mods.append(
                ReplaceValues(b.post_table, (post,), (state.owner_ci,), (owner,))
            )
            return post, variant < len(donors)
        table = dataset.tables[b.post_table]
        pk = table.next_pk()
        values = []
        for ci in range(table.width):
            if ci == state.owner_ci:
                values.append(owner)
                continue
            pool = [table.rows[r][ci] for r in sorted(table.rows)]
            pool = [v for v in pool if v is not EMPTY]
            if pool:
                values.append(rng.choice(pool))
            else:
                values.append(0 if table.col_kinds[ci] == "integer" else "")
        mods.append(AppendTuple(b.post_table, tuple(values), pk=pk))
        return pk, variant == 0

    def _deliver(self, session: Coordinator, dataset, state, inserts, rng, what) -> None:
        if not inserts:
            return
        while True:
            for mods in self._batch_variants(dataset, state, inserts, rng):
                if session.submit(self.name, mods).accepted:
                    return
            if session.request_relaxation(self.name) is None:
                raise session.exhausted(
                    self.name, f"binding {state.binding.key()}: {what}"
                )
