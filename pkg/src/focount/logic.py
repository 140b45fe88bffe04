"""Syntax for first-order logic with counting terms.

Core connectives are negation, disjunction and existential quantification;
conjunction, implication, universal quantification and "t >= 1" are parser
sugar and are desugared immediately.  Terms are integers, counting terms
#(y1,..,yk). phi, sums and products; numerical predicates are applied to
terms.  Distance atoms dist(x,y) <= d extend plain first-order syntax.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .errors import InputError, ParseError
from .structures import Signature

KEYWORDS = {"exists", "forall", "dist", "true", "false"}


# -- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Truth:
    pass


@dataclass(frozen=True)
class Falsity:
    pass


@dataclass(frozen=True)
class Eq:
    left: str
    right: str


@dataclass(frozen=True)
class Atom:
    rel: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class DistAtom:
    left: str
    right: str
    bound: int


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    sub: "Formula"


@dataclass(frozen=True)
class PredApp:
    pred: str
    args: tuple["Term", ...]


@dataclass(frozen=True)
class IntConst:
    value: int


@dataclass(frozen=True)
class CountTerm:
    vars: tuple[str, ...]
    body: "Formula"

    def __post_init__(self):
        if len(set(self.vars)) != len(self.vars):
            raise InputError(f"counting variables must be distinct: {self.vars}")


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


Formula = Truth | Falsity | Eq | Atom | DistAtom | Not | Or | Exists | PredApp
Term = IntConst | CountTerm | Add | Mul
Expr = Formula | Term

FORMULA_TYPES = (Truth, Falsity, Eq, Atom, DistAtom, Not, Or, Exists, PredApp)
TERM_TYPES = (IntConst, CountTerm, Add, Mul)


def is_formula(e: Expr) -> bool:
    return isinstance(e, FORMULA_TYPES)


def is_term(e: Expr) -> bool:
    return isinstance(e, TERM_TYPES)


# -- sugar constructors ----------------------------------------------------


def and_(a: Formula, b: Formula) -> Formula:
    return Not(Or(Not(a), Not(b)))


def conj(parts: Iterable[Formula]) -> Formula:
    parts = list(parts)
    if not parts:
        return Truth()
    out = parts[0]
    for p in parts[1:]:
        out = and_(out, p)
    return out


def disj(parts: Iterable[Formula]) -> Formula:
    parts = list(parts)
    if not parts:
        return Falsity()
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


def forall(var: str, body: Formula) -> Formula:
    return Not(Exists(var, Not(body)))


def exists_chain(vars: Iterable[str], body: Formula) -> Formula:
    out = body
    for v in reversed(list(vars)):
        out = Exists(v, out)
    return out


def geq1(t: Term) -> Formula:
    return PredApp("geq1", (t,))


def split_and(f: Formula) -> tuple[Formula, Formula] | None:
    """Recognize the desugared conjunction pattern."""
    if (isinstance(f, Not) and isinstance(f.sub, Or)
            and isinstance(f.sub.left, Not) and isinstance(f.sub.right, Not)):
        return f.sub.left.sub, f.sub.right.sub
    return None


def flatten_conj(f: Formula) -> list[Formula]:
    """Conjunctive parts of f.  Any negated disjunction splits (De Morgan),
    so conjunctions survive even after double negations were simplified
    away; double negations on the parts are stripped."""
    while isinstance(f, Not) and isinstance(f.sub, Not):
        f = f.sub.sub
    if isinstance(f, Not) and isinstance(f.sub, Or):
        return flatten_conj(Not(f.sub.left)) + flatten_conj(Not(f.sub.right))
    return [] if isinstance(f, Truth) else [f]


# -- traversals ------------------------------------------------------------


def children(e: Expr) -> tuple[Expr, ...]:
    match e:
        case Not(sub):
            return (sub,)
        case Or(a, b) | Add(a, b) | Mul(a, b):
            return (a, b)
        case Exists(_, sub):
            return (sub,)
        case PredApp(_, args):
            return args
        case CountTerm(_, body):
            return (body,)
        case _:
            return ()


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case Truth() | Falsity() | IntConst():
            return frozenset()
        case Eq(a, b):
            return frozenset((a, b))
        case DistAtom(a, b, _):
            return frozenset((a, b))
        case Atom(_, args):
            return frozenset(args)
        case Not(sub):
            return free_vars(sub)
        case Or(a, b) | Add(a, b) | Mul(a, b):
            return free_vars(a) | free_vars(b)
        case Exists(v, sub):
            return free_vars(sub) - {v}
        case CountTerm(vs, body):
            return free_vars(body) - set(vs)
        case PredApp(_, args):
            out: frozenset[str] = frozenset()
            for t in args:
                out |= free_vars(t)
            return out
    raise TypeError(f"not an expression: {e!r}")


def count_depth(e: Expr) -> int:
    """Nesting depth of counting terms."""
    match e:
        case CountTerm(_, body):
            return 1 + count_depth(body)
        case _:
            kids = children(e)
            return max((count_depth(c) for c in kids), default=0)


def bound_vars(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    for node in walk(e):
        if isinstance(node, Exists):
            out.add(node.var)
        elif isinstance(node, CountTerm):
            out.update(node.vars)
    return frozenset(out)


def subst_free(e: Expr, mapping: Mapping[str, str]) -> Expr:
    """Rename free variable occurrences.  Capture is the caller's problem."""
    if not mapping:
        return e

    def var(x: str) -> str:
        return mapping.get(x, x)

    match e:
        case Truth() | Falsity() | IntConst():
            return e
        case Eq(a, b):
            return Eq(var(a), var(b))
        case DistAtom(a, b, d):
            return DistAtom(var(a), var(b), d)
        case Atom(rel, args):
            return Atom(rel, tuple(var(a) for a in args))
        case Not(sub):
            return Not(subst_free(sub, mapping))
        case Or(a, b):
            return Or(subst_free(a, mapping), subst_free(b, mapping))
        case Exists(v, sub):
            inner = {k: w for k, w in mapping.items() if k != v}
            return Exists(v, subst_free(sub, inner))
        case CountTerm(vs, body):
            inner = {k: w for k, w in mapping.items() if k not in vs}
            return CountTerm(vs, subst_free(body, inner))
        case PredApp(p, args):
            return PredApp(p, tuple(subst_free(t, mapping) for t in args))
        case Add(a, b):
            return Add(subst_free(a, mapping), subst_free(b, mapping))
        case Mul(a, b):
            return Mul(subst_free(a, mapping), subst_free(b, mapping))
    raise TypeError(f"not an expression: {e!r}")


def fresh_names(count: int, avoid: Iterable[str], base: str = "v") -> list[str]:
    taken = set(avoid) | KEYWORDS
    out = []
    i = 1
    while len(out) < count:
        cand = f"{base}{i}"
        if cand not in taken:
            out.append(cand)
            taken.add(cand)
        i += 1
    return out


def rename_bound(e: Expr, avoid: Iterable[str]) -> Expr:
    """Alpha-rename every bound variable that collides with `avoid`."""
    avoid = frozenset(avoid)

    def go(node: Expr, taken: frozenset[str]) -> Expr:
        match node:
            case Exists(v, sub):
                if v in avoid:
                    (w,) = fresh_names(1, taken | free_vars(sub) | bound_vars(sub))
                    sub = subst_free(sub, {v: w})
                    return Exists(w, go(sub, taken | {w}))
                return Exists(v, go(sub, taken | {v}))
            case CountTerm(vs, body):
                bad = [v for v in vs if v in avoid]
                if bad:
                    repl = fresh_names(len(bad),
                                       taken | set(vs) | free_vars(body) | bound_vars(body))
                    mapping = dict(zip(bad, repl))
                    body = subst_free(body, mapping)
                    vs = tuple(mapping.get(v, v) for v in vs)
                return CountTerm(vs, go(body, taken | set(vs)))
            case Not(sub):
                return Not(go(sub, taken))
            case Or(a, b):
                return Or(go(a, taken), go(b, taken))
            case PredApp(p, args):
                return PredApp(p, tuple(go(t, taken) for t in args))
            case Add(a, b):
                return Add(go(a, taken), go(b, taken))
            case Mul(a, b):
                return Mul(go(a, taken), go(b, taken))
            case _:
                return node

    return go(e, avoid | free_vars(e))


def replace_nodes(e: Expr, table: Mapping[Expr, Expr]) -> Expr:
    """Replace whole subexpressions (matched structurally), outermost first."""
    if e in table:
        return table[e]
    match e:
        case Not(sub):
            return Not(replace_nodes(sub, table))
        case Or(a, b):
            return Or(replace_nodes(a, table), replace_nodes(b, table))
        case Exists(v, sub):
            return Exists(v, replace_nodes(sub, table))
        case CountTerm(vs, body):
            return CountTerm(vs, replace_nodes(body, table))
        case PredApp(p, args):
            return PredApp(p, tuple(replace_nodes(t, table) for t in args))
        case Add(a, b):
            return Add(replace_nodes(a, table), replace_nodes(b, table))
        case Mul(a, b):
            return Mul(replace_nodes(a, table), replace_nodes(b, table))
        case _:
            return e


def simplify(e: Expr) -> Expr:
    """Constant folding on boolean and arithmetic structure (semantics kept)."""
    match e:
        case Not(sub):
            s = simplify(sub)
            if isinstance(s, Truth):
                return Falsity()
            if isinstance(s, Falsity):
                return Truth()
            if isinstance(s, Not):
                return s.sub
            return Not(s)
        case Or(a, b):
            sa, sb = simplify(a), simplify(b)
            if isinstance(sa, Truth) or isinstance(sb, Truth):
                return Truth()
            if isinstance(sa, Falsity):
                return sb
            if isinstance(sb, Falsity):
                return sa
            return Or(sa, sb)
        case Exists(v, sub):
            s = simplify(sub)
            # universes are non-empty, so a vacuous body decides the quantifier
            if isinstance(s, (Truth, Falsity)):
                return s
            return Exists(v, s)
        case Eq(a, b) if a == b:
            return Truth()
        case DistAtom(a, b, d):
            if a == b and d >= 0:
                return Truth()
            if d < 0:
                return Falsity()
            return e
        case CountTerm(vs, body):
            s = simplify(body)
            if isinstance(s, Falsity):
                return IntConst(0)
            return CountTerm(vs, s)
        case PredApp(p, args):
            return PredApp(p, tuple(simplify(t) for t in args))
        case Add(a, b):
            sa, sb = simplify(a), simplify(b)
            if isinstance(sa, IntConst) and isinstance(sb, IntConst):
                return IntConst(sa.value + sb.value)
            if isinstance(sa, IntConst) and sa.value == 0:
                return sb
            if isinstance(sb, IntConst) and sb.value == 0:
                return sa
            return Add(sa, sb)
        case Mul(a, b):
            sa, sb = simplify(a), simplify(b)
            if isinstance(sa, IntConst) and isinstance(sb, IntConst):
                return IntConst(sa.value * sb.value)
            for x, y in ((sa, sb), (sb, sa)):
                if isinstance(x, IntConst):
                    if x.value == 0:
                        return IntConst(0)
                    if x.value == 1:
                        return y
            return Mul(sa, sb)
        case _:
            return e


# -- rendering -------------------------------------------------------------


def render(e: Expr) -> str:
    match e:
        case Truth():
            return "true"
        case Falsity():
            return "false"
        case Eq(a, b):
            return f"{a} = {b}"
        case Atom(rel, args):
            return f"{rel}({','.join(args)})"
        case DistAtom(a, b, d):
            return f"dist({a},{b}) <= {d}"
        case Not(sub):
            return f"!{render(sub)}"
        case Or(a, b):
            return f"({render(a)} | {render(b)})"
        case Exists(v, sub):
            return f"exists {v}. {render(sub)}"
        case PredApp(p, args):
            return f"{p}({', '.join(render(t) for t in args)})"
        case IntConst(v):
            return str(v)
        case CountTerm(vs, body):
            return f"#({','.join(vs)}). {render(body)}"
        case Add(a, b):
            return f"({render(a)} + {render(b)})"
        case Mul(a, b):
            return f"({render(a)} * {render(b)})"
    raise TypeError(f"not an expression: {e!r}")


# -- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<WS>\s+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<INT>-?\d+)
  | (?P<IMP>=>)
  | (?P<LE><=)
  | (?P<GE>>=)
  | (?P<EQ>=)
  | (?P<LPAR>\()
  | (?P<RPAR>\))
  | (?P<COMMA>,)
  | (?P<DOT>\.)
  | (?P<BANG>!)
  | (?P<PIPE>\|)
  | (?P<AMP>&)
  | (?P<HASH>\#)
  | (?P<PLUS>\+)
  | (?P<STAR>\*)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        if m.lastgroup != "WS":
            out.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(Token("EOF", "", len(text)))
    return out


def expr_size(e) -> int:
    """Token count of the canonical rendering (one token per integer literal)."""
    text = render_query(e) if isinstance(e, Query) else render(e)
    return len(tokenize(text)) - 1  # drop EOF


size = expr_size


# -- numerical predicates --------------------------------------------------


@dataclass(frozen=True)
class NumericPredicate:
    """A named m-ary predicate on integers with a decision oracle."""

    name: str
    arity: int
    fn: Callable[..., bool]

    def holds(self, *values: int) -> bool:
        if len(values) != self.arity:
            raise InputError(
                f"predicate {self.name!r} expects {self.arity} arguments")
        return bool(self.fn(*values))


def _is_prime(n: int) -> bool:
    from sympy import isprime
    return bool(isprime(n))


class Registry:
    """Name -> NumericPredicate lookup, extensible per run."""

    def __init__(self, preds: Iterable[NumericPredicate] = ()):
        self._preds: dict[str, NumericPredicate] = {}
        for p in preds:
            self.register(p)

    def register(self, pred: NumericPredicate) -> None:
        if pred.name in self._preds:
            raise InputError(f"predicate {pred.name!r} already registered")
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", pred.name) \
                or pred.name in KEYWORDS:
            raise InputError(f"invalid predicate name {pred.name!r}")
        self._preds[pred.name] = pred

    def has(self, name: str) -> bool:
        return name in self._preds

    def get(self, name: str) -> NumericPredicate:
        try:
            return self._preds[name]
        except KeyError:
            raise InputError(f"unknown predicate {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._preds))

    def copy(self) -> "Registry":
        return Registry(self._preds.values())


def default_registry() -> Registry:
    return Registry([
        NumericPredicate("geq1", 1, lambda n: n >= 1),
        NumericPredicate("eq", 2, lambda a, b: a == b),
        NumericPredicate("leq", 2, lambda a, b: a <= b),
        NumericPredicate("prime", 1, _is_prime),
    ])


# -- queries ---------------------------------------------------------------


@dataclass(frozen=True)
class Query:
    """Output variables, output terms, and a body formula."""

    out_vars: tuple[str, ...]
    out_terms: tuple[Term, ...]
    body: Formula

    def validate(self) -> None:
        if len(set(self.out_vars)) != len(self.out_vars):
            raise InputError("output variables must be distinct")
        body_free = free_vars(self.body)
        if body_free != set(self.out_vars):
            raise InputError(
                f"body free variables {sorted(body_free)} must equal "
                f"output variables {list(self.out_vars)}")
        for t in self.out_terms:
            extra = free_vars(t) - set(self.out_vars)
            if extra:
                raise InputError(
                    f"output term {render(t)} uses non-output variables {sorted(extra)}")
        problems = validate_fo1c(self.body)
        for t in self.out_terms:
            problems += validate_fo1c(t)
        if problems:
            raise InputError("query outside the one-variable counting fragment: "
                             + "; ".join(problems))


def render_query(q: Query) -> str:
    head = list(q.out_vars) + [render(t) for t in q.out_terms]
    return f"({', '.join(head)}). {render(q.body)}"


# -- fragment checks -------------------------------------------------------


def validate_fo1c(e: Expr) -> list[str]:
    """Diagnostics for predicate applications whose terms jointly use more
    than one free variable.  Empty list means the expression is inside the
    one-free-variable counting fragment."""
    problems = []
    for node in walk(e):
        if isinstance(node, PredApp):
            joint: frozenset[str] = frozenset()
            for t in node.args:
                joint |= free_vars(t)
            if len(joint) > 1:
                problems.append(
                    f"{render(node)} joins free variables {sorted(joint)}")
    return problems


def f_q(q: int, depth: int) -> int:
    """Distance budget (4q)^(q+depth) for radius bookkeeping."""
    if q < 1 or depth < 0:
        raise InputError("need q >= 1 and depth >= 0")
    return (4 * q) ** (q + depth)


def q_rank_check(phi: Formula, q: int, rank: int) -> list[str]:
    """Diagnostics for membership in the bounded-rank distance fragment:
    quantifier nesting at most `rank`, and a distance atom under i quantifiers
    may use bounds up to (4q)^(q+rank-i)."""
    if q < 1 or rank < 0:
        raise InputError("need q >= 1 and rank >= 0")
    problems: list[str] = []

    def go(node: Formula, depth: int) -> None:
        match node:
            case Truth() | Falsity() | Eq() | Atom():
                pass
            case DistAtom(_, _, d):
                limit = f_q(q, rank - depth)
                if d > limit:
                    problems.append(
                        f"{render(node)} under {depth} quantifiers exceeds bound {limit}")
            case Not(sub):
                go(sub, depth)
            case Or(a, b):
                go(a, depth)
                go(b, depth)
            case Exists(_, sub):
                if depth + 1 > rank:
                    problems.append(
                        f"quantifier nesting exceeds {rank} at {render(node)}")
                else:
                    go(sub, depth + 1)
            case _:
                raise InputError(
                    f"not a plain distance-logic formula: {render(node)}")

    go(phi, 0)
    return problems


def is_fo_plus(e: Expr) -> bool:
    """True when the expression uses no counting machinery at all."""
    return all(not isinstance(n, (PredApp, CountTerm, IntConst, Add, Mul))
               for n in walk(e))


# -- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, sig: Signature, registry: Registry):
        self.text = text
        self.toks = tokenize(text)
        self.pos = 0
        self.sig = sig
        self.registry = registry

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, found {t.value!r}", t.pos, self.text)
        return self.next()

    def fail(self, message: str) -> None:
        t = self.peek()
        raise ParseError(message, t.pos, self.text)

    def variable(self) -> str:
        t = self.expect("IDENT")
        if t.value in KEYWORDS:
            raise ParseError(f"{t.value!r} is a keyword, not a variable",
                             t.pos, self.text)
        return t.value

    # formulas

    def formula(self) -> Formula:
        t = self.peek()
        if t.kind == "IDENT" and t.value == "true":
            self.next()
            return Truth()
        if t.kind == "IDENT" and t.value == "false":
            self.next()
            return Falsity()
        if t.kind == "BANG":
            self.next()
            return Not(self.formula())
        if t.kind == "IDENT" and t.value in ("exists", "forall"):
            self.next()
            v = self.variable()
            self.expect("DOT")
            body = self.formula()
            return Exists(v, body) if t.value == "exists" else forall(v, body)
        if t.kind == "IDENT" and t.value == "dist":
            self.next()
            self.expect("LPAR")
            a = self.variable()
            self.expect("COMMA")
            b = self.variable()
            self.expect("RPAR")
            self.expect("LE")
            d = int(self.expect("INT").value)
            if d < 0:
                raise ParseError("distance bound must be non-negative",
                                 t.pos, self.text)
            return DistAtom(a, b, d)
        if t.kind == "IDENT":
            if self.peek(1).kind == "LPAR":
                return self.application()
            if self.peek(1).kind == "EQ":
                a = self.variable()
                self.next()
                b = self.variable()
                return Eq(a, b)
            self.fail(f"expected '(' or '=' after identifier {t.value!r}")
        if t.kind in ("INT", "HASH"):
            return self.geq_one()
        if t.kind == "LPAR":
            save = self.pos
            try:
                self.next()
                left = self.formula()
                op = self.peek()
                if op.kind not in ("PIPE", "AMP", "IMP"):
                    self.fail("expected '|', '&' or '=>'")
                self.next()
                right = self.formula()
                self.expect("RPAR")
            except ParseError:
                self.pos = save
                return self.geq_one()
            if op.kind == "PIPE":
                return Or(left, right)
            if op.kind == "AMP":
                return and_(left, right)
            return implies(left, right)
        self.fail("expected a formula")

    def geq_one(self) -> Formula:
        t = self.term()
        self.expect("GE")
        one = self.expect("INT")
        if one.value != "1":
            raise ParseError("only '>= 1' comparisons are supported",
                             one.pos, self.text)
        return geq1(t)

    def application(self) -> Formula:
        name_tok = self.next()
        name = name_tok.value
        in_sig = self.sig.has(name)
        in_reg = self.registry.has(name)
        if in_sig and in_reg:
            raise ParseError(f"{name!r} is both a relation and a predicate",
                             name_tok.pos, self.text)
        if not in_sig and not in_reg:
            raise ParseError(f"unknown relation or predicate {name!r}",
                             name_tok.pos, self.text)
        self.expect("LPAR")
        if in_sig:
            args: list[str] = []
            if self.peek().kind != "RPAR":
                args.append(self.variable())
                while self.peek().kind == "COMMA":
                    self.next()
                    args.append(self.variable())
            self.expect("RPAR")
            want = self.sig.arity(name)
            if len(args) != want:
                raise ParseError(
                    f"relation {name!r} expects {want} arguments, got {len(args)}",
                    name_tok.pos, self.text)
            return Atom(name, tuple(args))
        terms: list[Term] = [self.term()]
        while self.peek().kind == "COMMA":
            self.next()
            terms.append(self.term())
        self.expect("RPAR")
        want = self.registry.get(name).arity
        if len(terms) != want:
            raise ParseError(
                f"predicate {name!r} expects {want} arguments, got {len(terms)}",
                name_tok.pos, self.text)
        return PredApp(name, tuple(terms))

    # terms

    def term(self) -> Term:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return IntConst(int(t.value))
        if t.kind == "HASH":
            self.next()
            self.expect("LPAR")
            vs: list[str] = []
            if self.peek().kind != "RPAR":
                vs.append(self.variable())
                while self.peek().kind == "COMMA":
                    self.next()
                    vs.append(self.variable())
            self.expect("RPAR")
            self.expect("DOT")
            body = self.formula()
            if len(set(vs)) != len(vs):
                raise ParseError("counting variables must be distinct",
                                 t.pos, self.text)
            return CountTerm(tuple(vs), body)
        if t.kind == "LPAR":
            self.next()
            left = self.term()
            op = self.peek()
            if op.kind not in ("PLUS", "STAR"):
                self.fail("expected '+' or '*'")
            self.next()
            right = self.term()
            self.expect("RPAR")
            return Add(left, right) if op.kind == "PLUS" else Mul(left, right)
        self.fail("expected a term")

    # queries

    def query(self) -> Query:
        self.expect("LPAR")
        out_vars: list[str] = []
        out_terms: list[Term] = []
        while self.peek().kind != "RPAR":
            if out_vars or out_terms:
                self.expect("COMMA")
            t = self.peek()
            if t.kind == "IDENT" and t.value not in KEYWORDS \
                    and self.peek(1).kind in ("COMMA", "RPAR"):
                if out_terms:
                    raise ParseError("output variables must precede output terms",
                                     t.pos, self.text)
                out_vars.append(self.variable())
            else:
                out_terms.append(self.term())
        self.expect("RPAR")
        self.expect("DOT")
        body = self.formula()
        q = Query(tuple(out_vars), tuple(out_terms), body)
        q.validate()
        return q

    def at_query(self) -> bool:
        """True when the token stream looks like '(' ... ')' '.' ..."""
        if self.toks[0].kind != "LPAR":
            return False
        depth = 0
        for i, t in enumerate(self.toks):
            if t.kind == "LPAR":
                depth += 1
            elif t.kind == "RPAR":
                depth -= 1
                if depth == 0:
                    return self.toks[i + 1].kind == "DOT"
        return False


def _finish(parser: _Parser, value):
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError(f"unexpected trailing input {tok.value!r}",
                         tok.pos, parser.text)
    return value


def parse_formula(text: str, sig: Signature,
                  registry: Registry | None = None) -> Formula:
    p = _Parser(text, sig, registry or default_registry())
    return _finish(p, p.formula())


def parse_term(text: str, sig: Signature,
               registry: Registry | None = None) -> Term:
    p = _Parser(text, sig, registry or default_registry())
    return _finish(p, p.term())


def parse_expr(text: str, sig: Signature,
               registry: Registry | None = None) -> Expr:
    p = _Parser(text, sig, registry or default_registry())
    t = p.peek()
    if t.kind in ("INT", "HASH"):
        save = p.pos
        term = p.term()
        if p.peek().kind == "EOF":
            return term
        p.pos = save
        return _finish(p, p.formula())
    if t.kind == "LPAR":
        save = p.pos
        try:
            term = p.term()
            if p.peek().kind == "EOF":
                return term
        except ParseError:
            pass
        p.pos = save
    return _finish(p, p.formula())


def parse_query(text: str, sig: Signature,
                registry: Registry | None = None) -> Query:
    p = _Parser(text, sig, registry or default_registry())
    return _finish(p, p.query())


def parse(text: str, sig: Signature,
          registry: Registry | None = None) -> Expr | Query:
    """Parse either a query (head '.' body) or a bare expression."""
    p = _Parser(text, sig, registry or default_registry())
    if p.at_query():
        return _finish(p, p.query())
    return parse_expr(text, sig, registry)
