"""Shared test machinery.

MemoEval reimplements expression semantics from scratch with a per-node
value cache, so agreement with the library evaluator is a meaningful
cross-check and large encoded structures stay affordable.  The nx_* helpers
rebuild Gaifman adjacency and distances through networkx, independent of the
structures module.  Generators produce random structures and formulas in
fragments the individual test files pick.
"""
from __future__ import annotations

from itertools import product

import networkx as nx

from focount.logic import (Add, Atom, CountTerm, DistAtom, Eq, Exists,
                           Falsity, IntConst, Mul, Not, Or, PredApp, Truth,
                           default_registry, free_vars)
from focount.structures import (INFINITY, GaifmanGraph, Signature, Structure)


class MemoEval:
    """Structure-bound evaluator caching one value per (node, values of the
    node's free variables).  Nodes are keyed by identity, so shared
    subformula objects are evaluated once per assignment projection."""

    def __init__(self, structure: Structure, registry=None):
        self.structure = structure
        self.registry = registry or default_registry()
        self._cache: dict = {}
        self._fv: dict[int, tuple[str, ...]] = {}
        self._pins: list = []

    def _free(self, node) -> tuple[str, ...]:
        got = self._fv.get(id(node))
        if got is None:
            got = tuple(sorted(free_vars(node)))
            self._fv[id(node)] = got
            self._pins.append(node)  # ids must stay unique while cached
        return got

    def evaluate(self, node, env=None):
        return self._eval(node, env or {})

    def _eval(self, node, env):
        key = (id(node), tuple(env[v] for v in self._free(node)))
        hit = self._cache.get(key)
        if hit is None:
            hit = self._compute(node, env)
            self._cache[key] = hit
        return hit

    def _compute(self, node, env):
        s = self.structure
        match node:
            case Truth():
                return True
            case Falsity():
                return False
            case Eq(a, b):
                return env[a] == env[b]
            case Atom(rel, args):
                return tuple(env[v] for v in args) in s.relations[rel]
            case DistAtom(a, b, bound):
                return s.dist(env[a], env[b]) <= bound
            case Not(sub):
                return not self._eval(sub, env)
            case Or(left, right):
                return self._eval(left, env) or self._eval(right, env)
            case Exists(var, sub):
                saved = env.get(var)
                for e in s.universe:
                    env[var] = e
                    if self._eval(sub, env):
                        self._restore(env, var, saved)
                        return True
                self._restore(env, var, saved)
                return False
            case PredApp(name, args):
                values = [self._eval(t, env) for t in args]
                return self.registry.get(name).holds(*values)
            case IntConst(value):
                return value
            case CountTerm(vars, body):
                saved = [env.get(v) for v in vars]
                total = 0
                for tup in product(s.universe, repeat=len(vars)):
                    for v, e in zip(vars, tup):
                        env[v] = e
                    if self._eval(body, env):
                        total += 1
                for v, old in zip(vars, saved):
                    self._restore(env, v, old)
                return total
            case Add(left, right):
                return self._eval(left, env) + self._eval(right, env)
            case Mul(left, right):
                return self._eval(left, env) * self._eval(right, env)
        raise TypeError(f"unhandled node {node!r}")

    @staticmethod
    def _restore(env, var, old):
        if old is None:
            env.pop(var, None)
        else:
            env[var] = old


# -- independent graph-metric oracle ---------------------------------------


def nx_gaifman(structure: Structure) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(structure.universe)
    for name, arity in structure.signature.relations:
        if arity < 2:
            continue
        for t in structure.relations[name]:
            distinct = sorted(set(t))
            for i, u in enumerate(distinct):
                for v in distinct[i + 1:]:
                    g.add_edge(u, v)
    return g


def nx_dist(g: nx.Graph, a: str, b: str):
    try:
        return nx.shortest_path_length(g, a, b)
    except nx.NetworkXNoPath:
        return INFINITY


def graph_from_nx(g: nx.Graph) -> GaifmanGraph:
    names = {v: f"n{v}" for v in g.nodes}
    verts = tuple(sorted(names.values()))
    adj: dict[str, set[str]] = {u: set() for u in verts}
    for a, b in g.edges:
        adj[names[a]].add(names[b])
        adj[names[b]].add(names[a])
    return GaifmanGraph(verts, {u: frozenset(s) for u, s in adj.items()})


def atlas_graphs(max_n: int) -> list[nx.Graph]:
    """All graphs with between 1 and max_n vertices, one per isomorphism
    class (max_n <= 7)."""
    return [g for g in nx.graph_atlas_g()[1:] if len(g) <= max_n]


# -- random inputs ---------------------------------------------------------


GRAPH_SIG = Signature.of({"E": 2, "P": 1, "Q": 1})


def random_structure(rng, n: int, edge_prob: float = 0.35,
                     color_prob: float = 0.5, symmetric: bool = True,
                     sig: Signature = GRAPH_SIG) -> Structure:
    """Random colored graph structure on elements e01..e{n}."""
    names = [f"e{i:02d}" for i in range(1, n + 1)]
    rels: dict[str, list] = {name: [] for name, _ in sig.relations}
    for i, u in enumerate(names):
        for v in names[i + 1:]:
            if rng.random() < edge_prob:
                rels["E"].append((u, v))
                if symmetric:
                    rels["E"].append((v, u))
    for name, arity in sig.relations:
        if arity == 1:
            rels[name] = [(u,) for u in names if rng.random() < color_prob]
    return Structure(sig, names, rels)


def random_fo_plus(rng, vars: list[str], depth: int,
                   max_dist: int = 3) -> object:
    """Random quantified relational formula (E/P/Q atoms, equalities,
    distance atoms with bounds 0..max_dist) with free variables drawn from
    `vars`.  Bound variables are w1, w2, ... and never shadow `vars`."""
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"w{counter[0]}"

    def atom(scope: list[str]):
        a, b = rng.choice(scope), rng.choice(scope)
        pick = rng.randrange(5)
        if pick == 0:
            return Atom("E", (a, b))
        if pick == 1:
            return Atom(rng.choice(("P", "Q")), (a,))
        if pick == 2:
            return Eq(a, b)
        if pick == 3:
            return DistAtom(a, b, rng.randint(0, max_dist))
        return Truth() if rng.random() < 0.5 else Falsity()

    def go(scope: list[str], d: int):
        if d <= 0 or rng.random() < 0.3:
            return atom(scope)
        pick = rng.randrange(4)
        if pick == 0:
            return Not(go(scope, d - 1))
        if pick == 1:
            return Or(go(scope, d - 1), go(scope, d - 1))
        v = fresh()
        return Exists(v, go(scope + [v], d - 1))

    return go(list(vars), depth)
