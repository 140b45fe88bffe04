"""Connected-local counting terms and layered decompositions.

A basic cl-term counts tuples that realize one distance pattern and satisfy a
radius-r local condition; a cl-term is an integer polynomial in basic ones.
Sentences and ground terms of the one-free-variable counting fragment are
decomposed into layers of fresh unary/0-ary symbols whose definitions apply
numerical predicates to cl-terms; after the layers are materialized the
original expression collapses to a boolean combination of 0-ary atoms or to
one ground cl-term.

Locality is checked syntactically: quantifiers must be distance-guarded with
accumulated radius at most r, and distance atoms must stay within the bounds
that the guarded radii allow.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

from .errors import InputError, UnsupportedFragmentError
from .logic import (Add, Atom, CountTerm, DistAtom, Eq, Exists, Falsity,
                    IntConst, Mul, Not, Or, PredApp, Registry, Truth,
                    and_, conj, count_depth, default_registry, flatten_conj,
                    free_vars, fresh_names, is_formula, render, replace_nodes,
                    simplify, validate_fo1c, walk)
from .naive import Evaluator
from .structures import (PatternGraph, Signature, Structure, all_patterns)

MAX_WIDTH = 4


# -- distance pattern formulas --------------------------------------------


def delta_formula(pattern: PatternGraph, threshold: int,
                  vars: Sequence[str]) -> "Formula":
    """Conjunction asserting exactly this pattern at the given distance
    threshold over the named variables."""
    if pattern.k != len(vars):
        raise InputError("pattern width and variable count differ")
    parts = []
    for i in range(1, pattern.k + 1):
        for j in range(i + 1, pattern.k + 1):
            atom = DistAtom(vars[i - 1], vars[j - 1], threshold)
            parts.append(atom if pattern.has_edge(i, j) else Not(atom))
    return conj(parts)


# -- syntactic locality ----------------------------------------------------


def locality_radius(phi, anchors: Sequence[str]) -> int | None:
    """Least r for which the formula passes the syntactic r-locality check
    around the anchor variables, or None if it never does.

    Quantifiers must carry a distance guard tying the new variable to an
    anchor or an already guarded variable; guard radii accumulate and must
    stay at most r.  A distance atom between variables at accumulated radii
    p and q may use bounds up to 2r+1 - p - q.
    """
    needs: list[int] = []
    env = {a: 0 for a in anchors}

    def need_for_atom(p: int, q: int, bound: int) -> int:
        # smallest r with p + q + bound <= 2r + 1
        return max(0, -(-(p + q + bound - 1) // 2))

    def go(node, env: dict[str, int]) -> bool:
        match node:
            case Truth() | Falsity() | Eq():
                return True
            case Atom(_, args):
                return all(a in env for a in args)
            case DistAtom(a, b, d):
                if a not in env or b not in env:
                    return False
                needs.append(need_for_atom(env[a], env[b], d))
                return True
            case Not(sub):
                return go(sub, env)
            case Or(a, b):
                return go(a, env) and go(b, env)
            case Exists(v, body):
                return exists_ok(v, body, env)
            case _:
                return False

    def exists_ok(v: str, body, env: dict[str, int]) -> bool:
        if isinstance(body, Or):
            return exists_ok(v, body.left, env) and exists_ok(v, body.right, env)
        parts = flatten_conj(body)
        guard_at = None
        for idx, part in enumerate(parts):
            if isinstance(part, DistAtom):
                w = None
                if part.left == v and part.right != v:
                    w = part.right
                elif part.right == v and part.left != v:
                    w = part.left
                if w is not None and w in env:
                    guard_at = (idx, w, part.bound)
                    break
        if guard_at is None:
            return False
        idx, w, bound = guard_at
        radius = env[w] + bound
        needs.append(radius)
        inner = dict(env)
        inner[v] = radius
        return all(go(p, inner) for i, p in enumerate(parts) if i != idx)

    if not go(phi, env):
        return None
    return max(needs, default=0)


def is_local(phi, anchors: Sequence[str], r: int) -> bool:
    got = locality_radius(phi, anchors)
    return got is not None and got <= r


# -- basic cl-terms --------------------------------------------------------


@dataclass(frozen=True)
class BasicClTerm:
    """Counts tuples realizing `pattern` at threshold 2*radius+1 whose local
    condition `psi` holds.  When `unary`, the first variable is the free
    anchor and the remaining ones are counted."""

    vars: tuple[str, ...]
    radius: int
    pattern: PatternGraph
    psi: "Formula"
    unary: bool

    def __post_init__(self):
        k = len(self.vars)
        if k < 1 or self.pattern.k != k:
            raise InputError("pattern width must match the variable tuple")
        if k > MAX_WIDTH:
            raise InputError(f"width {k} exceeds the supported cap {MAX_WIDTH}")
        if self.unary and k < 2:
            raise InputError("unary basic terms have width >= 2 (pad with an "
                             "equality variable)")
        if not self.pattern.is_connected():
            raise InputError("basic cl-terms need a connected pattern")
        extra = free_vars(self.psi) - set(self.vars)
        if extra:
            raise InputError(f"psi has stray free variables {sorted(extra)}")
        if len(set(self.vars)) != k:
            raise InputError("variables must be distinct")

    @property
    def k(self) -> int:
        return len(self.vars)

    @property
    def threshold(self) -> int:
        return 2 * self.radius + 1

    @property
    def eval_radius(self) -> int:
        """Everything relevant to one anchor lives within this distance."""
        return self.radius + (self.k - 1) * self.threshold

    def counted_vars(self) -> tuple[str, ...]:
        return self.vars[1:] if self.unary else self.vars

    def body(self) -> "Formula":
        return and_(self.psi, delta_formula(self.pattern, self.threshold, self.vars))

    def to_count_term(self) -> CountTerm:
        return CountTerm(self.counted_vars(), self.body())

    def check_local(self) -> None:
        got = locality_radius(self.psi, self.vars)
        if got is None or got > self.radius:
            raise UnsupportedFragmentError(
                f"condition is not {self.radius}-local around {self.vars}",
                render(self.psi))


def eval_basic_cl(structure: Structure, term: BasicClTerm,
                  anchor: str | None = None,
                  registry: Registry | None = None) -> int:
    """Evaluate a basic cl-term, working entirely inside the eval-radius
    neighbourhood of each anchor."""
    term.check_local()
    if term.unary:
        if anchor is None:
            raise InputError("unary basic terms need an anchor element")
        return _anchored_count(structure, term, anchor, registry)
    total = 0
    for a in structure.universe:
        total += _anchored_count(structure, term, a, registry)
    return total


def _anchored_count(structure: Structure, term: BasicClTerm, anchor: str,
                    registry: Registry | None) -> int:
    structure.check_element(anchor)
    sub = structure.neighborhood(anchor, term.eval_radius)
    theta = term.threshold
    balls = {e: sub.ball(e, theta) for e in sub.universe}
    ev = Evaluator(sub, registry)
    want = term.pattern
    k = term.k
    total = 0
    for rest in product(sub.universe, repeat=k - 1):
        tup = (anchor,) + rest
        if _tuple_pattern(balls, tup) != want:
            continue
        env = dict(zip(term.vars, tup))
        if ev._eval(term.psi, env):
            total += 1
    return total


def _tuple_pattern(balls: Mapping[str, frozenset[str]],
                   tup: Sequence[str]) -> PatternGraph:
    k = len(tup)
    edges = []
    for i in range(k):
        for j in range(i + 1, k):
            if tup[i] == tup[j] or tup[j] in balls[tup[i]]:
                edges.append((i + 1, j + 1))
    return PatternGraph.of(k, edges)


# -- cl-term polynomials ---------------------------------------------------


@dataclass(frozen=True)
class ClTerm:
    """constant + sum of coef * product-of-basic-terms."""

    constant: int = 0
    monomials: tuple[tuple[int, tuple[BasicClTerm, ...]], ...] = ()

    @staticmethod
    def of_const(v: int) -> "ClTerm":
        return ClTerm(v, ())

    @staticmethod
    def of_basic(b: BasicClTerm) -> "ClTerm":
        return ClTerm(0, ((1, (b,)),))

    def __add__(self, other: "ClTerm") -> "ClTerm":
        return _normalize(self.constant + other.constant,
                          self.monomials + other.monomials)

    def __sub__(self, other: "ClTerm") -> "ClTerm":
        return self + other.scale(-1)

    def scale(self, c: int) -> "ClTerm":
        return _normalize(self.constant * c,
                          tuple((coef * c, fs) for coef, fs in self.monomials))

    def __mul__(self, other: "ClTerm") -> "ClTerm":
        mons: list[tuple[int, tuple[BasicClTerm, ...]]] = []
        if other.constant:
            mons += [(c * other.constant, fs) for c, fs in self.monomials]
        if self.constant:
            mons += [(c * self.constant, fs) for c, fs in other.monomials]
        for c1, f1 in self.monomials:
            for c2, f2 in other.monomials:
                mons.append((c1 * c2, f1 + f2))
        return _normalize(self.constant * other.constant, tuple(mons))

    def basics(self) -> tuple[BasicClTerm, ...]:
        seen: dict[BasicClTerm, None] = {}
        for _, fs in self.monomials:
            for b in fs:
                seen.setdefault(b)
        return tuple(seen)

    def value(self, basic_value: Callable[[BasicClTerm], int]) -> int:
        total = self.constant
        for coef, fs in self.monomials:
            prod = coef
            for b in fs:
                prod *= basic_value(b)
            total += prod
        return total

    def is_unary(self) -> bool:
        return any(b.unary for b in self.basics())

    def to_term(self):
        """Plain counting-term rendering of the polynomial."""
        out = None
        for coef, fs in self.monomials:
            piece = None
            for b in fs:
                ct = b.to_count_term()
                piece = ct if piece is None else Mul(piece, ct)
            if piece is None:
                piece = IntConst(coef)
            elif coef != 1:
                piece = Mul(IntConst(coef), piece)
            out = piece if out is None else Add(out, piece)
        if out is None:
            return IntConst(self.constant)
        if self.constant:
            out = Add(out, IntConst(self.constant))
        return out


def _normalize(constant: int,
               monomials: Iterable[tuple[int, tuple[BasicClTerm, ...]]]) -> ClTerm:
    merged: dict[tuple[BasicClTerm, ...], int] = {}
    order: list[tuple[BasicClTerm, ...]] = []
    for coef, fs in monomials:
        fs = tuple(sorted(fs, key=lambda b: render(b.to_count_term())))
        if fs not in merged:
            merged[fs] = 0
            order.append(fs)
        merged[fs] += coef
    out = tuple((merged[fs], fs) for fs in order if merged[fs] != 0)
    return ClTerm(constant, out)


# -- far-pair folding and component factorization -------------------------


def specialize_far(phi, origin: Mapping[str, int], threshold: int):
    """Rewrite atoms that cannot hold once variables anchored in different
    pattern components are more than `threshold` apart.  `origin` maps each
    free tuple variable to its component id."""

    def bound_of(node) -> int:
        if isinstance(node, Eq):
            return 0
        if isinstance(node, Atom):
            return 1
        return node.bound  # DistAtom

    def go(node, env: dict[str, tuple[int | None, int]]):
        match node:
            case Truth() | Falsity():
                return node
            case Eq(a, b) | DistAtom(a, b, _):
                pa = env.get(a, (None, 0))
                pb = env.get(b, (None, 0))
                if (pa[0] is not None and pb[0] is not None and pa[0] != pb[0]
                        and pa[1] + pb[1] + bound_of(node) <= threshold):
                    return Falsity()
                return node
            case Atom(_, args):
                if len(args) >= 2:
                    for i, u in enumerate(args):
                        for v in args[i + 1:]:
                            pu = env.get(u, (None, 0))
                            pv = env.get(v, (None, 0))
                            if (pu[0] is not None and pv[0] is not None
                                    and pu[0] != pv[0]
                                    and pu[1] + pv[1] + 1 <= threshold):
                                return Falsity()
                return node
            case Not(sub):
                return Not(go(sub, env))
            case Or(a, b):
                return Or(go(a, env), go(b, env))
            case Exists(v, body):
                guard = _find_guard(v, body, env)
                inner = dict(env)
                if guard is None:
                    inner[v] = (None, 0)
                else:
                    w, bound = guard
                    owner = env[w]
                    inner[v] = (owner[0], owner[1] + bound)
                return Exists(v, go(body, inner))
            case _:
                raise InputError(
                    f"cannot fold counting machinery: {render(node)}")

    env0 = {v: (comp, 0) for v, comp in origin.items()}
    return go(phi, env0)


def _find_guard(v: str, body, env) -> tuple[str, int] | None:
    probe = body
    if isinstance(probe, Or):
        return None
    for part in flatten_conj(probe):
        if isinstance(part, DistAtom):
            if part.left == v and part.right != v and part.right in env:
                return part.right, part.bound
            if part.right == v and part.left != v and part.left in env:
                return part.left, part.bound
    return None


def _fold_pattern_dist(theta, pos_of: dict[str, int], pattern: PatternGraph,
                       threshold: int):
    """Decide constraints between tuple variables from the pattern itself:
    a pattern edge caps their distance at the threshold, a non-edge forces
    it above (hence also rules out equality and shared atoms)."""

    def decide_dist(u: str, v: str, bound: int):
        if pattern.has_edge(pos_of[u], pos_of[v]):
            return Truth() if bound >= threshold else None
        return Falsity() if bound <= threshold else None

    def go(node, live: frozenset[str]):
        match node:
            case DistAtom(u, v, b) if u in live and v in live and u != v:
                out = decide_dist(u, v, b)
                return node if out is None else out
            case Eq(u, v) if (u in live and v in live and u != v
                              and not pattern.has_edge(pos_of[u], pos_of[v])):
                return Falsity()
            case Atom(_, args):
                seen = [a for a in args if a in live]
                for i, u in enumerate(seen):
                    for v in seen[i + 1:]:
                        if u != v and not pattern.has_edge(pos_of[u],
                                                           pos_of[v]):
                            return Falsity()
                return node
            case Not(sub):
                return Not(go(sub, live))
            case Or(a, b):
                return Or(go(a, live), go(b, live))
            case Exists(v, body):
                return Exists(v, go(body, live - {v}))
            case CountTerm(vs, body):
                return CountTerm(vs, go(body, live - frozenset(vs)))
            case PredApp(p, args):
                return PredApp(p, tuple(go(a, live) for a in args))
            case Add(a, b):
                return Add(go(a, live), go(b, live))
            case Mul(a, b):
                return Mul(go(a, live), go(b, live))
            case _:
                return node

    return go(theta, frozenset(pos_of))


def factor_for_pattern(theta, vars: Sequence[str], pattern: PatternGraph,
                       radius: int) -> dict[frozenset[int], "Formula"] | None:
    """Split theta into per-component conjuncts for this pattern, folding
    atoms that the pattern's separations force to be false.  None when a
    conjunct irreducibly spans several components."""
    comps = pattern.components()
    pos_of = {vars[p - 1]: p for p in range(1, pattern.k + 1)}
    theta = simplify(_fold_pattern_dist(theta, pos_of, pattern,
                                        2 * radius + 1))
    if len(comps) == 1:
        return {comps[0]: theta}
    comp_id = {}
    for ci, comp in enumerate(comps):
        for pos in comp:
            comp_id[vars[pos - 1]] = ci
    folded = simplify(specialize_far(theta, comp_id, 2 * radius + 1))
    buckets: dict[int, list] = {ci: [] for ci in range(len(comps))}
    home = comp_id[vars[0]]
    for part in flatten_conj(folded):
        owners = {comp_id[v] for v in free_vars(part) if v in comp_id}
        if len(owners) > 1:
            return None
        buckets[owners.pop() if owners else home].append(part)
    return {comp: conj(buckets[ci]) for ci, comp in enumerate(comps)}


def cross_extensions(pattern: PatternGraph,
                     side: frozenset[int]) -> tuple[PatternGraph, ...]:
    """All patterns obtained by adding at least one edge between `side` and
    the rest, keeping both induced sides unchanged."""
    other = frozenset(range(1, pattern.k + 1)) - side
    pairs = [(min(i, j), max(i, j)) for i in sorted(side) for j in sorted(other)]
    out = []
    for mask in range(1, 1 << len(pairs)):
        extra = [p for b, p in enumerate(pairs) if mask >> b & 1]
        out.append(PatternGraph.of(pattern.k,
                                   tuple(pattern.edges) + tuple(extra)))
    return tuple(out)


# -- cl-term construction for local counting bodies ------------------------


def count_to_clterm(vars: Sequence[str], theta, radius: int,
                    unary: bool) -> ClTerm:
    """cl-term equal to the count of tuples satisfying theta (r-local around
    the tuple), summed over all distance patterns."""
    vars = tuple(vars)
    k = len(vars)
    if k > MAX_WIDTH:
        raise UnsupportedFragmentError(
            f"counting width {k} exceeds the cap {MAX_WIDTH}", render(theta))
    total = ClTerm.of_const(0)
    for pattern in all_patterns(k):
        factors = factor_for_pattern(theta, vars, pattern, radius)
        if factors is None:
            raise UnsupportedFragmentError(
                "condition does not factor over the components of pattern "
                f"{sorted(pattern.edges)}", render(theta))
        total = total + _pattern_clterm(pattern, radius, factors, vars, unary)
    return total


def _pattern_clterm(pattern: PatternGraph, radius: int,
                    factors: Mapping[frozenset[int], "Formula"],
                    vars: tuple[str, ...], unary: bool,
                    memo: dict | None = None) -> ClTerm:
    if memo is None:
        memo = {}
    key = (pattern.edges, unary)
    if key in memo:
        return memo[key]
    comps = pattern.components()
    if len(comps) == 1:
        psi = conj([factors[c] for c in sorted(factors, key=min)])
        term = _connected_clterm(pattern, radius, psi, vars, unary)
    else:
        side = next(c for c in comps if 1 in c)
        rest = frozenset(range(1, pattern.k + 1)) - side
        sub_side = _restrict(pattern, radius, factors, vars, side, unary)
        sub_rest = _restrict(pattern, radius, factors, vars, rest, False)
        term = sub_side * sub_rest
        for ext in cross_extensions(pattern, side):
            ext_factors = _merge_factors(ext, factors)
            if ext_factors is None:
                raise UnsupportedFragmentError(
                    "component factors do not nest into pattern extension")
            term = term - _pattern_clterm(ext, radius, ext_factors, vars,
                                          unary, memo)
    memo[key] = term
    return term


def _restrict(pattern: PatternGraph, radius: int, factors, vars,
              positions: frozenset[int], unary: bool) -> ClTerm:
    pos = sorted(positions)
    sub_pattern = pattern.induced(pos)
    sub_vars = tuple(vars[p - 1] for p in pos)
    sub_factors = {}
    remap = {p: i + 1 for i, p in enumerate(pos)}
    for comp, psi in factors.items():
        if comp <= positions:
            sub_factors[frozenset(remap[p] for p in comp)] = psi
    return _pattern_clterm(sub_pattern, radius, sub_factors, sub_vars, unary)


def _merge_factors(pattern: PatternGraph, factors) -> dict | None:
    """Re-key component factors onto the (coarser) components of `pattern`."""
    out: dict[frozenset[int], list] = {c: [] for c in pattern.components()}
    for comp, psi in factors.items():
        hosts = [c for c in out if comp <= c]
        if not hosts:
            return None
        out[hosts[0]].append(psi)
    return {c: conj(ps) for c, ps in out.items()}


def _connected_clterm(pattern: PatternGraph, radius: int, psi,
                      vars: tuple[str, ...], unary: bool) -> ClTerm:
    if unary and pattern.k == 1:
        # width-1 anchored count: pad with an equality twin of the anchor
        (pad,) = fresh_names(1, set(vars) | free_vars(psi), base=vars[0] + "_")
        padded = PatternGraph.of(2, [(1, 2)])
        body = and_(psi, Eq(pad, vars[0]))
        return ClTerm.of_basic(BasicClTerm((vars[0], pad), radius, padded,
                                           body, True))
    return ClTerm.of_basic(BasicClTerm(vars, radius, pattern, psi, unary))


# -- pattern counting (numeric) -------------------------------------------


def count_pattern(structure: Structure, pattern: PatternGraph, radius: int,
                  factors: Mapping[frozenset[int], "Formula"] | None = None,
                  anchor: str | None = None,
                  registry: Registry | None = None) -> int:
    """Number of tuples realizing `pattern` at threshold 2*radius+1 whose
    per-component conditions hold; anchored at the first position when an
    anchor element is given.  Disconnected patterns are handled by the
    product-minus-corrections recursion over connected pieces."""
    if pattern.k > MAX_WIDTH:
        raise InputError(f"width {pattern.k} exceeds the cap {MAX_WIDTH}")
    vars = tuple(f"y{i}" for i in range(1, pattern.k + 1))
    comps = pattern.components()
    full = {c: Truth() for c in comps}
    if factors:
        for comp, psi in factors.items():
            comp = frozenset(comp)
            if comp not in full:
                raise InputError(
                    f"factor key {sorted(comp)} is not a component of the pattern")
            full[comp] = psi
        for comp, psi in full.items():
            names = {vars[p - 1] for p in comp}
            # factor formulas may use canonical names y1..yk
            stray = free_vars(psi) - names
            if stray:
                raise InputError(
                    f"factor for {sorted(comp)} uses variables {sorted(stray)}")
    unary = anchor is not None
    term = _pattern_clterm(pattern, radius, full, vars, unary)
    cache: dict[BasicClTerm, int] = {}

    def basic_value(b: BasicClTerm) -> int:
        if b not in cache:
            cache[b] = eval_basic_cl(structure, b,
                                     anchor if b.unary else None, registry)
        return cache[b]

    return term.value(basic_value)


# -- sentence dispatch -----------------------------------------------------


def sentence_constituents(phi) -> tuple:
    """Maximal closed non-boolean subformulas, in first-occurrence order."""
    out: list = []

    def go(node) -> None:
        match node:
            case Not(sub):
                go(sub)
            case Or(a, b):
                go(a)
                go(b)
            case Truth() | Falsity():
                pass
            case _:
                if not free_vars(node) and node not in out:
                    out.append(node)
    go(phi)
    return tuple(out)


def dispatch_sentences(phi, structure: Structure,
                       registry: Registry | None = None):
    """Evaluate the closed constituents of a boolean combination, returning
    the set of true indices and the residual formula with constituents
    replaced by their truth values."""
    consts = sentence_constituents(phi)
    ev = Evaluator(structure, registry)
    true_idx = frozenset(
        i for i, c in enumerate(consts) if ev.evaluate(c))
    table = {c: (Truth() if i in true_idx else Falsity())
             for i, c in enumerate(consts)}
    residual = simplify(replace_nodes(phi, table))
    return true_idx, residual


# -- layered decompositions ------------------------------------------------


@dataclass(frozen=True)
class SymbolDef:
    """One fresh symbol: ι(name) = pred(args...) with `var` free when unary.
    The special predicate for sentence symbols is geq1 over one ground
    cl-term."""

    name: str
    arity: int
    var: str | None
    pred: str
    args: tuple[ClTerm, ...]

    def describe(self) -> str:
        rendered = ", ".join(render(a.to_term()) for a in self.args)
        head = f"{self.name}({self.var})" if self.arity else f"{self.name}()"
        return f"{head} := {self.pred}({rendered})"


@dataclass(frozen=True)
class Layer:
    symbols: tuple[SymbolDef, ...]


@dataclass(frozen=True)
class ClDecomposition:
    base_signature: Signature
    layers: tuple[Layer, ...]
    final_formula: object | None
    final_term: ClTerm | None

    def symbol_count(self) -> int:
        return sum(len(l.symbols) for l in self.layers)

    def to_json(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = {}
            for sym in layer.symbols:
                entry[sym.name] = {
                    "arity": sym.arity,
                    "var": sym.var,
                    "pred": sym.pred,
                    "args": [render(a.to_term()) for a in sym.args],
                    "radii": sorted({b.radius for a in sym.args
                                     for b in a.basics()}),
                    "widths": sorted({b.k for a in sym.args
                                      for b in a.basics()}),
                }
            layers.append(entry)
        out = {"layers": layers}
        if self.final_formula is not None:
            out["final_formula"] = render(self.final_formula)
        if self.final_term is not None:
            out["final_term"] = render(self.final_term.to_term())
        return out


class _Decomposer:
    def __init__(self, sig: Signature, registry: Registry):
        self.sig = sig
        self.registry = registry
        self.layers: list[list[SymbolDef]] = []
        self.names: set[str] = set(sig.names())

    def fresh_name(self, payload: str) -> str:
        digest = hashlib.sha1(payload.encode()).hexdigest()[:8]
        name = f"Q{len(self.layers)}_{digest}"
        while name in self.names:
            name += "x"
        self.names.add(name)
        return name

    def push_layer(self, symbols: list[SymbolDef]) -> None:
        if symbols:
            self.layers.append(symbols)
            self.sig = self.sig.extend(
                (s.name, s.arity) for s in symbols)

    # closed predicate applications over pure integer arithmetic
    def pull_const_preds(self, expr):
        table = {}
        symbols = []
        for node in walk(expr):
            if isinstance(node, PredApp) and node not in table \
                    and count_depth(node) == 0:
                args = tuple(ClTerm.of_const(_const_value(t)) for t in node.args)
                name = self.fresh_name(render(node))
                symbols.append(SymbolDef(name, 0, None, node.pred, args))
                table[node] = Atom(name, ())
        if not table:
            return expr
        self.push_layer(symbols)
        return replace_nodes(expr, table)

    # closed existential subformulas inside counting bodies; sentences
    # still carrying predicate applications wait until rewrite_apps has
    # turned those into atoms
    def pull_sentences(self, expr):
        while True:
            target = None
            for node in walk(expr):
                if (isinstance(node, Exists) and not free_vars(node)
                        and not any(isinstance(n, PredApp)
                                    for n in walk(node))):
                    inner = [n for n in walk(node.sub)
                             if isinstance(n, Exists) and not free_vars(n)]
                    if not inner:
                        target = node
                        break
            if target is None:
                return expr
            sym = self.sentence_symbol(target)
            expr = replace_nodes(expr, {target: Atom(sym.name, ())})

    def sentence_symbol(self, chi: Exists) -> SymbolDef:
        vars: list[str] = []
        body = chi
        while isinstance(body, Exists):
            vars.append(body.var)
            body = body.sub
        radius = locality_radius(body, vars)
        if radius is None:
            raise UnsupportedFragmentError(
                "sentence body is not distance-local around its prefix "
                "variables", render(chi))
        g = count_to_clterm(tuple(vars), body, radius, unary=False)
        name = self.fresh_name(render(chi))
        sym = SymbolDef(name, 0, None, "geq1", (g,))
        self.push_layer([sym])
        return sym

    def term_to_clterm(self, t, anchor: str | None) -> ClTerm:
        match t:
            case IntConst(v):
                return ClTerm.of_const(v)
            case Add(a, b):
                return self.term_to_clterm(a, anchor) + self.term_to_clterm(b, anchor)
            case Mul(a, b):
                return self.term_to_clterm(a, anchor) * self.term_to_clterm(b, anchor)
            case CountTerm(vs, theta):
                unary = (anchor is not None
                         and anchor in free_vars(theta) - set(vs))
                full = ((anchor,) + tuple(vs)) if unary else tuple(vs)
                radius = locality_radius(theta, full)
                if radius is None:
                    raise UnsupportedFragmentError(
                        f"counting body is not distance-local around {full}",
                        render(theta))
                return count_to_clterm(full, theta, radius, unary)
        raise UnsupportedFragmentError("unsupported term shape", render(t))

    def rewrite_apps(self, expr):
        while True:
            expr = self.pull_const_preds(expr)
            expr = self.pull_sentences(expr)
            targets = []
            for node in walk(expr):
                if isinstance(node, PredApp) and node not in targets:
                    if any(isinstance(inner, PredApp) and inner is not node
                           for inner in walk(node)):
                        continue
                    if count_depth(node) <= 1:
                        targets.append(node)
            if not targets:
                if any(isinstance(n, PredApp) for n in walk(expr)):
                    raise UnsupportedFragmentError(
                        "stuck predicate applications remain", render(expr))
                return expr
            table = {}
            symbols = []
            for app in targets:
                fv = sorted(free_vars(app))
                if len(fv) > 1:
                    raise InputError(
                        f"{render(app)} joins free variables {fv}")
                anchor = fv[0] if fv else None
                args = tuple(self.term_to_clterm(t, anchor) for t in app.args)
                name = self.fresh_name(render(app))
                if anchor is None:
                    symbols.append(SymbolDef(name, 0, None, app.pred, args))
                    table[app] = Atom(name, ())
                else:
                    symbols.append(SymbolDef(name, 1, anchor, app.pred, args))
                    table[app] = Atom(name, (anchor,))
            self.push_layer(symbols)
            expr = replace_nodes(expr, table)

    def finish_sentence(self, phi):
        symbols: list[SymbolDef] = []
        table = {}

        def go(node):
            match node:
                case Truth() | Falsity():
                    return node
                case Not(sub):
                    return Not(go(sub))
                case Or(a, b):
                    return Or(go(a), go(b))
                case Atom(_, args) if not args:
                    return node
                case Exists():
                    if node in table:
                        return table[node]
                    sym_like = self._sentence_symbol_deferred(node, symbols)
                    table[node] = sym_like
                    return sym_like
                case _:
                    raise UnsupportedFragmentError(
                        "sentence part outside the supported fragment",
                        render(node))

        out = go(phi)
        self.push_layer(symbols)
        return out

    def _sentence_symbol_deferred(self, chi: Exists,
                                  symbols: list[SymbolDef]):
        vars: list[str] = []
        body = chi
        while isinstance(body, Exists):
            vars.append(body.var)
            body = body.sub
        radius = locality_radius(body, vars)
        if radius is None:
            raise UnsupportedFragmentError(
                "sentence body is not distance-local around its prefix "
                "variables", render(chi))
        g = count_to_clterm(tuple(vars), body, radius, unary=False)
        name = self.fresh_name(render(chi))
        symbols.append(SymbolDef(name, 0, None, "geq1", (g,)))
        return Atom(name, ())


def _const_value(t) -> int:
    folded = simplify(t)
    if isinstance(folded, IntConst):
        return folded.value
    raise UnsupportedFragmentError("expected integer arithmetic", render(t))


def cl_decompose(expr, sig: Signature,
                 registry: Registry | None = None) -> ClDecomposition:
    """Decompose a closed counting-logic sentence or ground term into layered
    symbol definitions plus a final boolean combination (sentences) or one
    ground cl-term (terms)."""
    registry = registry or default_registry()
    if free_vars(expr):
        raise InputError(
            f"decomposition needs a closed input; free: {sorted(free_vars(expr))}")
    problems = validate_fo1c(expr)
    if problems:
        raise InputError("outside the one-variable counting fragment: "
                         + "; ".join(problems))
    dec = _Decomposer(sig, registry)
    expr = dec.rewrite_apps(expr)
    if is_formula(expr):
        final = dec.finish_sentence(simplify(expr))
        return ClDecomposition(sig, tuple(Layer(tuple(s)) for s in dec.layers),
                               final, None)
    expr = dec.pull_sentences(dec.pull_const_preds(expr))
    term = dec.term_to_clterm(expr, None)
    return ClDecomposition(sig, tuple(Layer(tuple(s)) for s in dec.layers),
                           None, term)


# -- decomposition evaluation ---------------------------------------------


def default_engine(structure: Structure, basic: BasicClTerm,
                   registry: Registry | None = None):
    """Reference engine: per-anchor local evaluation."""
    if basic.unary:
        return {a: eval_basic_cl(structure, basic, a, registry)
                for a in structure.universe}
    return eval_basic_cl(structure, basic, None, registry)


def eval_decomposition(decomp: ClDecomposition, structure: Structure,
                       registry: Registry | None = None,
                       engine: Callable | None = None):
    """Materialize the layers bottom-up, then evaluate the final part.
    Returns a bool for sentences and an int for ground terms."""
    registry = registry or default_registry()
    if engine is None:
        engine = lambda s, b: default_engine(s, b, registry)
    current = structure
    for layer in decomp.layers:
        extra = {}
        cache: dict[BasicClTerm, object] = {}

        def basic_values(b: BasicClTerm):
            if b not in cache:
                cache[b] = engine(current, b)
            return cache[b]

        for sym in layer.symbols:
            pred = registry.get(sym.pred)
            if sym.arity == 0:
                values = [a.value(lambda b: _ground_val(basic_values(b)))
                          for a in sym.args]
                tuples = [()] if pred.holds(*values) else []
            else:
                tuples = []
                for elem in current.universe:
                    values = [a.value(lambda b: _at(basic_values(b), elem))
                              for a in sym.args]
                    if pred.holds(*values):
                        tuples.append((elem,))
            extra[sym.name] = (sym.arity, tuples)
        current = current.expand(extra)
    if decomp.final_formula is not None:
        return bool(Evaluator(current, registry).evaluate(decomp.final_formula))
    cache2: dict[BasicClTerm, object] = {}

    def bval(b: BasicClTerm) -> int:
        if b not in cache2:
            cache2[b] = engine(current, b)
        return _ground_val(cache2[b])

    return decomp.final_term.value(bval)


def _ground_val(v) -> int:
    if isinstance(v, dict):
        raise InputError("ground position received per-element values")
    return v


def _at(v, elem: str) -> int:
    if isinstance(v, dict):
        return v[elem]
    return v
