"""Tool overlap graph and exact maximum independent set.

Two tools overlap when their applied modifications touched at least one common
(table, tuple) pair. Tools forming an independent set of the overlap graph
could have run concurrently without coordination.

The solver is exact branch-and-bound with memoization; among all maximum
independent sets it returns the one whose sorted name tuple is
lexicographically smallest. Guarded at 30 nodes.
"""

from __future__ import annotations

from .errors import GraphTooLarge

MAX_NODES = 30


def overlap_graph(access_sets: dict[str, set[tuple[str, int]]]) -> dict[str, set[str]]:
    """Adjacency over tool names; edge iff touched tuple sets intersect."""
    names = sorted(access_sets)
    adj: dict[str, set[str]] = {n: set() for n in names}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            if access_sets[a] & access_sets[b]:
                adj[a].add(b)
                adj[b].add(a)
    return adj


def _mis_size(adj: dict[int, frozenset[int]], vertices: frozenset[int], memo: dict) -> int:
    if not vertices:
        return 0
    got = memo.get(vertices)
    if got is not None:
        return got
    # isolated vertices are always in some maximum set
    for u in vertices:
        if not (adj[u] & vertices):
            result = 1 + _mis_size(adj, vertices - {u}, memo)
            memo[vertices] = result
            return result
    # branch on a maximum-degree vertex: either excluded, or included
    v = max(vertices, key=lambda u: (len(adj[u] & vertices), -u))
    best = max(
        _mis_size(adj, vertices - {v}, memo),
        1 + _mis_size(adj, vertices - {v} - adj[v], memo),
    )
    memo[vertices] = best
    return best


def maximum_independent_set(adj: dict[str, set[str]]) -> tuple[str, ...]:
    """Exact maximum independent set, lexicographically smallest on ties."""
    names = sorted(adj)
    if len(names) > MAX_NODES:
        raise GraphTooLarge(f"{len(names)} nodes exceeds the exact limit {MAX_NODES}")
    index = {n: i for i, n in enumerate(names)}
    iadj: dict[int, frozenset[int]] = {
        index[n]: frozenset(index[m] for m in adj[n]) for n in names
    }
    memo: dict = {}
    full = frozenset(iadj)
    target = _mis_size(iadj, full, memo)
    # build the lexicographically smallest witness greedily
    chosen: list[int] = []
    remaining = full
    for i in sorted(iadj):
        if i not in remaining:
            continue
        with_i = remaining - {i} - iadj[i]
        if 1 + len(chosen) + _mis_size(iadj, with_i, memo) == target:
            chosen.append(i)
            remaining = with_i
        else:
            remaining = remaining - {i}
    assert len(chosen) == target
    return tuple(names[i] for i in chosen)
