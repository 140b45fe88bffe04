"""Reference evaluation of counting-logic expressions, straight from the
semantic clauses.

Counting terms enumerate assignment tuples over the full universe.  The only
liberties taken are short-circuiting of disjunctions/quantifiers and a value
cache keyed by (subexpression, relevant assignment slice); both leave the
defined value untouched.  Deliberately no indexing or join planning.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

from .errors import InputError
from .logic import (Add, Atom, CountTerm, DistAtom, Eq, Exists, Falsity,
                    IntConst, Mul, Not, Or, PredApp, Query, Registry, Truth,
                    default_registry, free_vars, is_formula, rename_bound,
                    conj, render)
from .structures import Signature, Structure


class Evaluator:
    """Evaluates formulas (to 0/1) and terms (to int) on one structure."""

    def __init__(self, structure: Structure, registry: Registry | None = None,
                 memo: bool = True):
        self.structure = structure
        self.registry = registry or default_registry()
        self.memo_enabled = memo
        self._memo: dict[tuple, int] = {}
        self._free: dict[int, tuple[str, ...]] = {}
        self._balls: dict[tuple[str, int], frozenset[str]] = {}
        self.oracle_calls = 0

    def _free_of(self, e) -> tuple[str, ...]:
        key = id(e)
        got = self._free.get(key)
        if got is None:
            got = tuple(sorted(free_vars(e)))
            self._free[key] = got
        return got

    def _within(self, a: str, b: str, bound: int) -> bool:
        if a == b:
            return bound >= 0
        key = (a, bound)
        ball = self._balls.get(key)
        if ball is None:
            ball = self.structure.ball(a, bound)
            self._balls[key] = ball
        return b in ball

    def evaluate(self, e, assignment: Mapping[str, str] | None = None):
        """Public entry: bool for formulas, int for terms."""
        env = dict(assignment or {})
        missing = set(self._free_of(e)) - set(env)
        if missing:
            raise InputError(f"unassigned free variables: {sorted(missing)}")
        for v in env.values():
            self.structure.check_element(v)
        value = self._eval(e, env)
        return bool(value) if is_formula(e) else value

    def _eval(self, e, env: dict[str, str]) -> int:
        expensive = isinstance(e, (CountTerm, PredApp, Exists))
        if self.memo_enabled and expensive:
            fv = self._free_of(e)
            key = (id(e), tuple(env[v] for v in fv))
            hit = self._memo.get(key)
            if hit is not None:
                return hit
            value = self._eval_raw(e, env)
            self._memo[key] = value
            return value
        return self._eval_raw(e, env)

    def _eval_raw(self, e, env: dict[str, str]) -> int:
        match e:
            case Truth():
                return 1
            case Falsity():
                return 0
            case Eq(a, b):
                return int(env[a] == env[b])
            case Atom(rel, args):
                tup = tuple(env[a] for a in args)
                return int(tup in self.structure.relations[rel])
            case DistAtom(a, b, d):
                return int(self._within(env[a], env[b], d))
            case Not(sub):
                return 1 - self._eval(sub, env)
            case Or(a, b):
                if self._eval(a, env):
                    return 1
                return self._eval(b, env)
            case Exists(v, sub):
                saved = env.get(v)
                for elem in self.structure.universe:
                    env[v] = elem
                    if self._eval(sub, env):
                        self._restore(env, v, saved)
                        return 1
                self._restore(env, v, saved)
                return 0
            case IntConst(value):
                return value
            case Add(a, b):
                return self._eval(a, env) + self._eval(b, env)
            case Mul(a, b):
                return self._eval(a, env) * self._eval(b, env)
            case CountTerm(vs, body):
                if not vs:
                    return self._eval(body, env)
                saved = [env.get(v) for v in vs]
                total = 0
                for tup in product(self.structure.universe, repeat=len(vs)):
                    for v, elem in zip(vs, tup):
                        env[v] = elem
                    if self._eval(body, env):
                        total += 1
                for v, old in zip(vs, saved):
                    self._restore(env, v, old)
                return total
            case PredApp(p, args):
                values = [self._eval(t, env) for t in args]
                self.oracle_calls += 1
                return int(self.registry.get(p).holds(*values))
        raise TypeError(f"not an expression: {e!r}")

    @staticmethod
    def _restore(env: dict[str, str], v: str, old: str | None) -> None:
        if old is None:
            env.pop(v, None)
        else:
            env[v] = old


def eval_expr(e, structure: Structure,
              assignment: Mapping[str, str] | None = None,
              registry: Registry | None = None):
    return Evaluator(structure, registry).evaluate(e, assignment)


# The direct evaluator doubles as the correctness oracle everywhere else.
eval_reference = eval_expr


# -- queries ---------------------------------------------------------------


@dataclass(frozen=True)
class QueryResult:
    """Sorted output rows; each row lists elements then term values."""

    rows: tuple[tuple, ...]

    def to_json(self) -> list[list]:
        out = []
        for row in self.rows:
            enc = []
            for cell in row:
                if isinstance(cell, int) and abs(cell) >= 2 ** 53:
                    enc.append(str(cell))
                else:
                    enc.append(cell)
            out.append(enc)
        return out


def eval_query(query: Query, structure: Structure,
               registry: Registry | None = None) -> QueryResult:
    query.validate()
    ev = Evaluator(structure, registry)
    rows = []
    k = len(query.out_vars)
    for tup in product(structure.universe, repeat=k):
        env = dict(zip(query.out_vars, tup))
        if k == 0:
            env = {}
        if ev._eval(query.body, dict(env)):
            values = tuple(ev._eval(t, dict(env)) for t in query.out_terms)
            rows.append(tup + values)
    return QueryResult(tuple(sorted(rows)))


# -- free-variable elimination --------------------------------------------


@dataclass(frozen=True)
class ElimResult:
    """Sentence/ground-term forms of a query body after marking the output
    variables by fresh singleton relations."""

    formula: object
    terms: tuple
    signature: Signature
    markers: tuple[str, ...]


def _marker_names(sig: Signature, k: int) -> tuple[str, ...]:
    names = []
    for i in range(1, k + 1):
        cand = f"X{i}"
        while sig.has(cand) or cand in names:
            cand += "_"
        names.append(cand)
    return tuple(names)


def eliminate_free_vars(phi, terms: Sequence, out_vars: Sequence[str],
                        sig: Signature) -> ElimResult:
    """Rewrite phi(x1..xk) and terms t_j(x1..xk) into a sentence and ground
    terms over the signature extended with unary markers X1..Xk.  When each
    marker is interpreted by the singleton {a_i}, the sentence holds iff phi
    held at (a1..ak) and each ground term has the original term's value."""
    xs = tuple(out_vars)
    if len(set(xs)) != len(xs):
        raise InputError("output variables must be distinct")
    markers = _marker_names(sig, len(xs))
    sig_ext = sig.extend((m, 1) for m in markers)
    marks = [Atom(m, (x,)) for m, x in zip(markers, xs)]

    def close(formula):
        formula = rename_bound(formula, xs)
        body = conj(marks + [formula])
        for x in reversed(xs):
            body = Exists(x, body)
        return body

    phi_tilde = close(phi)

    def term_tilde(t):
        match t:
            case IntConst():
                return t
            case Add(a, b):
                return Add(term_tilde(a), term_tilde(b))
            case Mul(a, b):
                return Mul(term_tilde(a), term_tilde(b))
            case CountTerm(vs, body):
                clash = set(vs) & set(xs)
                if clash:
                    renamed = rename_bound(t, xs)
                    return term_tilde(renamed)
                return CountTerm(vs, close(body))
        raise InputError(f"not a term: {render(t)}")

    return ElimResult(phi_tilde, tuple(term_tilde(t) for t in terms),
                      sig_ext, markers)


def mark_structure(structure: Structure, markers: Sequence[str],
                   elements: Sequence[str]) -> Structure:
    """Expand the structure with singleton unary relations marking `elements`."""
    if len(markers) != len(elements):
        raise InputError("marker/element count mismatch")
    extra = {m: (1, [(structure.check_element(e),)])
             for m, e in zip(markers, elements)}
    return structure.expand(extra)
