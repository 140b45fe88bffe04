"""Neighbourhood covers, the vertex-removal game, and removal structures.

A cover with locality radius r assigns every element a connected cluster
containing its full r-ball; clusters are grown greedily as 2r-balls, so the
cluster radius bound is s = 2r.  The removal game (rounds: one side picks a
vertex a, the other deletes one vertex from the r-ball of a, play continues
on the ball minus the deletion) yields the recursion depth budget for the
localized evaluator; it is solved exactly for small graphs and approximated
by heuristics beyond that.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InputError
from .structures import (GaifmanGraph, Signature, Structure, gaifman_graph)


def as_graph(g) -> GaifmanGraph:
    if isinstance(g, Structure):
        return gaifman_graph(g)
    if isinstance(g, GaifmanGraph):
        return g
    raise InputError(f"expected a structure or graph, got {type(g).__name__}")


# -- covers ----------------------------------------------------------------


@dataclass
class Cover:
    """Clusters indexed 0..m-1; every element is assigned to one cluster."""

    r: int
    s: int
    clusters: tuple[frozenset[str], ...]
    centres: tuple[str, ...]
    assignment: dict[str, int]

    def cluster_of(self, a: str) -> frozenset[str]:
        return self.clusters[self.assignment[a]]

    def members(self, cid: int) -> tuple[str, ...]:
        return tuple(sorted(a for a, c in self.assignment.items() if c == cid))

    def degrees(self) -> dict[str, int]:
        deg: dict[str, int] = {}
        for cluster in self.clusters:
            for a in cluster:
                deg[a] = deg.get(a, 0) + 1
        return deg

    def max_degree(self) -> int:
        return max(self.degrees().values(), default=0)

    def total_weight(self) -> int:
        return sum(len(c) for c in self.clusters)


def degeneracy_order(graph: GaifmanGraph) -> list[str]:
    """Vertices in min-degree-removal order.  Ties retire low-original-degree
    vertices first, so reversing the order starts at hubs."""
    orig = {v: len(graph.adj[v]) for v in graph.vertices}
    deg = dict(orig)
    heap = [(d, orig[v], v) for v, d in deg.items()]
    heapq.heapify(heap)
    removed: set[str] = set()
    order = []
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in removed or d != deg[v]:
            continue
        removed.add(v)
        order.append(v)
        for u in graph.adj[v]:
            if u not in removed:
                deg[u] -= 1
                heapq.heappush(heap, (deg[u], orig[u], u))
    return order


def build_cover(structure: Structure, r: int) -> Cover:
    """Greedy cover: in reverse degeneracy order, every still-unassigned
    vertex spawns the cluster ball(v, 2r) and captures each element whose
    r-ball fits inside.  Yields a valid (r, 2r) cover; the cluster degree is
    whatever the greedy process produces (it is measured, not bounded)."""
    if r < 0:
        raise InputError("cover radius must be >= 0")
    graph = gaifman_graph(structure)
    n = len(graph.vertices)
    clusters: list[frozenset[str]] = []
    centres: list[str] = []
    assignment: dict[str, int] = {}
    for v in reversed(degeneracy_order(graph)):
        if v in assignment:
            continue
        cid = len(clusters)
        cluster = frozenset(graph.ball(v, 2 * r))
        clusters.append(cluster)
        centres.append(v)
        whole = len(cluster) == n
        for a in sorted(cluster):
            if a in assignment:
                continue
            if whole or _ball_inside(graph, a, r, cluster):
                assignment[a] = cid
    return Cover(r, 2 * r, tuple(clusters), tuple(centres), assignment)


def _ball_inside(graph: GaifmanGraph, a: str, r: int,
                 cluster: frozenset[str]) -> bool:
    seen = {a}
    queue = deque([(a, 0)])
    while queue:
        u, du = queue.popleft()
        if du == r:
            continue
        for v in graph.adj[u]:
            if v not in seen:
                if v not in cluster:
                    return False
                seen.add(v)
                queue.append((v, du + 1))
    return True


@dataclass
class CoverReport:
    ok: bool
    problems: list[str]
    n: int
    cluster_count: int
    max_degree: int
    total_weight: int
    degree_histogram: dict[int, int]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "problems": self.problems,
            "n": self.n,
            "clusters": self.cluster_count,
            "max_degree": self.max_degree,
            "total_weight": self.total_weight,
            "degree_histogram": {str(k): v for k, v in
                                 sorted(self.degree_histogram.items())},
        }


def validate_cover(structure: Structure, cover: Cover,
                   max_problems: int = 20) -> CoverReport:
    """Check connectivity, ball containment, radius via the centre, and the
    weight bound total <= n * max_degree."""
    graph = gaifman_graph(structure)
    problems: list[str] = []

    def note(msg: str) -> None:
        if len(problems) < max_problems:
            problems.append(msg)

    n = len(graph.vertices)
    for a in graph.vertices:
        if a not in cover.assignment:
            note(f"element {a!r} has no cluster")
    for cid, cluster in enumerate(cover.clusters):
        centre = cover.centres[cid]
        if centre not in cluster:
            note(f"cluster {cid} misses its centre {centre!r}")
            continue
        reach = graph.ball(centre, cover.s, allowed=cluster)
        if len(reach) != len(cluster):
            far = sorted(cluster - set(reach))[:3]
            inner = graph.ball(centre, n, allowed=cluster)
            if len(inner) != len(cluster):
                note(f"cluster {cid} is disconnected (e.g. {far})")
            else:
                note(f"cluster {cid} exceeds radius {cover.s} from its centre "
                     f"(e.g. {far})")
    for a, cid in cover.assignment.items():
        cluster = cover.clusters[cid]
        if not _ball_inside(graph, a, cover.r, cluster):
            note(f"ball({a!r}, {cover.r}) leaves its cluster {cid}")
    degrees = cover.degrees()
    hist: dict[int, int] = {}
    for d in degrees.values():
        hist[d] = hist.get(d, 0) + 1
    max_deg = max(degrees.values(), default=0)
    total = cover.total_weight()
    if total > n * max(max_deg, 1):
        note(f"total weight {total} exceeds n * max_degree")
    return CoverReport(not problems, problems, n, len(cover.clusters),
                       max_deg, total, hist)


# -- removal game ----------------------------------------------------------


@dataclass
class GameValue:
    """Exact solution of the removal game on a small graph."""

    radius: int
    value: int | None           # None: survival beyond round_cap
    round_cap: int
    strategy: dict[tuple[frozenset[str], str], str] = field(default_factory=dict)

    @property
    def survived(self) -> bool:
        return self.value is None


EXACT_GAME_CAP = 16


def solve_splitter(graph, r: int, round_cap: int = 10,
                   cap: int = EXACT_GAME_CAP) -> GameValue:
    """Exact minimax value: the least number of rounds in which the deleting
    player clears the graph, or None when the picking player survives
    `round_cap` rounds.  Refuses graphs larger than `cap` vertices."""
    g = as_graph(graph)
    n = len(g.vertices)
    if n > cap:
        raise InputError(
            f"exact game solving is limited to {cap} vertices, got {n}")
    if r < 0 or round_cap < 1:
        raise InputError("need r >= 0 and round_cap >= 1")
    strategy: dict[tuple[frozenset[str], str], str] = {}
    memo: dict[tuple[frozenset[str], int], int | None] = {}
    INF = None

    def value(position: frozenset[str], budget: int) -> int | None:
        if budget <= 0:
            return INF
        key = (position, budget)
        if key in memo:
            return memo[key]
        worst: int | None = 1
        for a in sorted(position):
            ball = frozenset(g.ball(a, r, allowed=position))
            best: int | None = INF
            best_b = None
            for b in sorted(ball):
                rest = ball - {b}
                if not rest:
                    cost = 1
                else:
                    sub = value(rest, budget - 1)
                    cost = None if sub is None else 1 + sub
                if _lt(cost, best):
                    best, best_b = cost, b
            if budget == round_cap and best_b is not None:
                strategy[(position, a)] = best_b
            if _lt(worst, best):
                worst = best
            if worst is None:
                break
        memo[key] = worst
        return worst

    full = frozenset(g.vertices)
    v = value(full, round_cap)
    return GameValue(r, v, round_cap, strategy)


def _lt(a: int | None, b: int | None) -> bool:
    """Compare round counts where None means 'never'."""
    if a is None:
        return False
    if b is None:
        return True
    return a < b


def _is_forest(graph: GaifmanGraph) -> bool:
    edges = sum(len(graph.adj[v]) for v in graph.vertices) // 2
    return edges == len(graph.vertices) - len(graph.components())


def _tree_root(graph: GaifmanGraph, inside: frozenset[str]) -> str:
    """Centre of the component: midpoint of a double-sweep diameter path."""
    start = min(inside)
    far1 = _farthest(graph, start, inside)
    far2, parents = _farthest(graph, far1, inside, with_parents=True)
    path = [far2]
    while path[-1] != far1:
        path.append(parents[path[-1]])
    return path[len(path) // 2]


def _farthest(graph: GaifmanGraph, source: str, inside: frozenset[str],
              with_parents: bool = False):
    seen = {source: 0}
    parents: dict[str, str] = {}
    queue = deque([source])
    order = [source]
    while queue:
        u = queue.popleft()
        for v in sorted(graph.adj[u]):
            if v in inside and v not in seen:
                seen[v] = seen[u] + 1
                parents[v] = u
                queue.append(v)
                order.append(v)
    best = max(order, key=lambda v: (seen[v], v))
    # deterministic: among the farthest pick the lexicographically smallest
    cands = sorted(v for v in order if seen[v] == seen[best])
    best = cands[0]
    return (best, parents) if with_parents else best


def splitter_move(graph, a: str, r: int, cap: int = EXACT_GAME_CAP) -> str:
    """The deleting player's reply to a pick of `a`: exact for small graphs,
    otherwise root-most-in-ball on forests and max-degree-in-ball elsewhere."""
    g = as_graph(graph)
    if a not in g.adj:
        raise InputError(f"element {a!r} not in graph")
    if len(g.vertices) <= cap:
        solved = solve_splitter(g, r, round_cap=len(g.vertices) + 1, cap=cap)
        reply = solved.strategy.get((frozenset(g.vertices), a))
        if reply is not None:
            return reply
    ball = g.ball(a, r)
    if _is_forest(g):
        comp = frozenset(g.ball(a, len(g.vertices)))
        root = _tree_root(g, comp)
        depth = g.ball(root, len(g.vertices), allowed=comp)
        return min(ball, key=lambda v: (depth.get(v, 0), v))
    return max(sorted(ball), key=lambda v: len(g.adj[v]))


# -- removal structures ----------------------------------------------------


def tilde_name(rel: str, positions: Sequence[int]) -> str:
    """Name of the projected copy of `rel` with 1-based `positions` pinned
    to the removed element.  The empty projection keeps the original name."""
    pos = tuple(sorted(positions))
    if not pos:
        return rel
    if any(p > 9 for p in pos):
        raise InputError("removal supports relation arities up to 9")
    return f"{rel}__d{''.join(str(p) for p in pos)}"


def halo_name(i: int) -> str:
    return f"S__{i}"


def _subsets(k: int):
    for mask in range(1 << k):
        yield tuple(i + 1 for i in range(k) if mask >> i & 1)


@dataclass
class RemovalStructure:
    """A structure with one element removed: projected relations record the
    tuples that used the element, unary halos record distances to it."""

    structure: Structure
    removed: str
    r: int
    base_signature: Signature

    def halo_level(self, b: str) -> int | None:
        """Smallest i with b in S_i, i.e. the base distance to the removed
        element, when it is <= r."""
        for i in range(1, self.r + 1):
            if (b,) in self.structure.relations[halo_name(i)]:
                return i
        return None


def remove(structure: Structure, d: str, r: int) -> RemovalStructure:
    """Build the removal structure for element d with halo radius r."""
    structure.check_element(d)
    if len(structure.universe) < 2:
        raise InputError("cannot remove from a one-element structure")
    if r < 0:
        raise InputError("halo radius must be >= 0")
    sig_items: list[tuple[str, int]] = []
    rels: dict[str, set[tuple[str, ...]]] = {}
    for name, arity in structure.signature.relations:
        if arity > 9:
            raise InputError("removal supports relation arities up to 9")
        for I in _subsets(arity):
            tname = tilde_name(name, I)
            if tname != name and (structure.signature.has(tname)
                                  or tname in rels):
                raise InputError(f"reserved name {tname!r} already in use")
            sig_items.append((tname, arity - len(I)))
            rels[tname] = set()
    for name, arity in structure.signature.relations:
        for t in structure.relations[name]:
            I = tuple(i + 1 for i, e in enumerate(t) if e == d)
            rest = tuple(e for e in t if e != d)
            rels[tilde_name(name, I)].add(rest)
    halo = structure.ball_with_dist(d, r)
    for i in range(1, r + 1):
        name = halo_name(i)
        if structure.signature.has(name):
            raise InputError(f"reserved name {name!r} already in use")
        sig_items.append((name, 1))
        rels[name] = {(b,) for b, dist in halo.items() if 0 < dist <= i}
    universe = [e for e in structure.universe if e != d]
    out = Structure(Signature(tuple(sig_items)), universe, rels)
    return RemovalStructure(out, d, r, structure.signature)


def reconstruct(removed: RemovalStructure) -> Structure:
    """Inverse of remove(): reinsert the element into every projected tuple."""
    base = removed.base_signature
    d = removed.removed
    universe = removed.structure.universe + (d,)
    rels: dict[str, set[tuple[str, ...]]] = {name: set() for name in base.names()}
    for name, arity in base.relations:
        for I in _subsets(arity):
            for t in removed.structure.relations[tilde_name(name, I)]:
                full: list[str] = []
                it = iter(t)
                for pos in range(1, arity + 1):
                    full.append(d if pos in I else next(it))
                rels[name].add(tuple(full))
    return Structure(base, universe, rels)
