"""Expression ASTs, parsing, rendering, fragment checks, simplification."""
import random

import pytest

from focount.errors import InputError, ParseError
from focount.generators import ExpressionSampler
from focount.logic import (Atom, CountTerm, DistAtom, Eq, Exists, IntConst,
                           Not, NumericPredicate, Or, PredApp, Query, Truth,
                           and_, bound_vars, conj, count_depth,
                           default_registry, expr_size, f_q, flatten_conj,
                           free_vars, geq1, parse, parse_formula, parse_query,
                           parse_term, q_rank_check, rename_bound, render,
                           render_query, simplify, size, subst_free,
                           validate_fo1c)
from focount.naive import Evaluator
from focount.structures import Signature

from helpers import random_fo_plus, random_structure

SIG = Signature.of({"E": 2, "P": 1, "Q": 1})


def test_parse_render_round_trip_by_hand():
    texts = [
        "P(x)",
        "!(!P(x) | !Q(x))",
        "exists y. (E(x,y) & dist(x,y) <= 2)",
        "#(x). P(x)",
        "(#(x). P(x) + #(y). Q(y))",
        "(2 * #(x, y). E(x,y))",
        "eq(#(x). P(x), 3)",
        "#(x). #(y). (dist(x,y) <= 1 & Q(y)) >= 1",
        "true",
        "false",
        "prime(#(x). x = x)",
    ]
    for text in texts:
        e = parse(text, SIG)
        again = parse(render(e), SIG)
        assert again == e, text


def test_parse_render_round_trip_sampled():
    rng = random.Random(7)
    sampler = ExpressionSampler(rng)
    for _ in range(200):
        e = sampler.expression()
        assert parse(render(e), SIG) == e


def test_parse_errors():
    for text in ["", "P(", "exists . P(x)", "#x. P(x)", "(P(x) & Q(x)",
                 "P(x) &", "dist(x) <= 1", "#(x). P(x) >=", "(1 +)"]:
        with pytest.raises(ParseError):
            parse(text, SIG)
    with pytest.raises(ParseError):
        parse("R(x)", SIG)  # unknown relation
    with pytest.raises(ParseError):
        parse("E(x)", SIG)  # arity mismatch
    with pytest.raises(ParseError):
        parse("frob(#(x). P(x))", SIG)  # unknown predicate


def test_geq1_is_parser_sugar():
    assert parse("#(x). P(x) >= 1", SIG) == geq1(parse_term("#(x). P(x)", SIG))


def test_query_parse_and_validate():
    q = parse_query("(x, #(y). (dist(x,y) <= 1 & E(x,y))). P(x)", SIG)
    assert isinstance(q, Query)
    q.validate()
    assert parse_query(render_query(q), SIG) == q
    with pytest.raises(InputError):
        Query(("x",), (), Atom("P", ("y",))).validate()
    with pytest.raises(InputError):
        Query(("x", "x"), (), Truth()).validate()


def test_free_and_bound_vars():
    e = parse("exists y. (E(x,y) & #(z). E(y,z) >= 1)", SIG)
    assert free_vars(e) == {"x"}
    assert bound_vars(e) == {"y", "z"}
    assert free_vars(parse("#(x). P(x)", SIG)) == frozenset()


def test_count_depth():
    assert count_depth(parse("P(x)", SIG)) == 0
    assert count_depth(parse("#(x). P(x)", SIG)) == 1
    assert count_depth(
        parse("#(x). eq(#(y). E(x,y), 2)", SIG)) == 2
    assert count_depth(
        parse("(#(x). P(x) + #(y). Q(y))", SIG)) == 1


def test_subst_free_touches_only_free_occurrences():
    e = parse("(P(y) & exists y. E(x,y))", SIG)
    moved = subst_free(e, {"y": "z", "x": "w"})
    assert free_vars(moved) == {"z", "w"}
    assert bound_vars(moved) == {"y"}


def test_rename_bound_then_subst_is_capture_free():
    e = parse("exists y. E(x,y)", SIG)
    moved = subst_free(rename_bound(e, {"y"}), {"x": "y"})
    assert free_vars(moved) == {"y"}
    s = random_structure(random.Random(3), 5)
    ev = Evaluator(s)
    for a in s.universe:
        assert ev.evaluate(moved, {"y": a}) == ev.evaluate(e, {"x": a})


def test_simplify_preserves_semantics():
    rng = random.Random(11)
    for _ in range(150):
        s = random_structure(rng, rng.randint(2, 6))
        f = random_fo_plus(rng, ["x"], 4)
        g = simplify(f)
        ev = Evaluator(s)
        for a in s.universe:
            assert ev.evaluate(f, {"x": a}) == ev.evaluate(g, {"x": a})


def test_flatten_conj_splits_after_simplification():
    a, b, c = Atom("P", ("x",)), Atom("Q", ("x",)), Atom("E", ("x", "x"))
    f = and_(a, and_(b, c))
    assert flatten_conj(f) == [a, b, c]
    assert flatten_conj(simplify(f)) == [a, b, c]
    assert flatten_conj(Truth()) == []
    # a lone disjunction is not a conjunction
    assert flatten_conj(Or(a, b)) == [Or(a, b)]


def test_conj_of_flatten_is_equivalent():
    rng = random.Random(23)
    for _ in range(100):
        s = random_structure(rng, rng.randint(2, 5))
        f = random_fo_plus(rng, ["x"], 4)
        parts = flatten_conj(f)
        ev = Evaluator(s)
        for a in s.universe:
            want = ev.evaluate(f, {"x": a})
            got = all(ev.evaluate(p, {"x": a}) for p in parts)
            assert got == want


def test_validate_fo1c_flags_joint_variables():
    ok = parse("#(x). eq(#(y). E(x,y), 2)", SIG)
    assert validate_fo1c(ok) == []
    t1 = CountTerm(("y",), Atom("E", ("x", "y")))
    t2 = CountTerm(("y",), Atom("E", ("z", "y")))
    bad = PredApp("eq", (t1, t2))
    problems = validate_fo1c(bad)
    assert len(problems) == 1 and "x" in problems[0] and "z" in problems[0]


def test_f_q_values():
    assert f_q(1, 0) == 4
    assert f_q(1, 1) == 16
    assert f_q(2, 1) == 8 ** 3
    assert f_q(3, 2) == 12 ** 5
    with pytest.raises(InputError):
        f_q(0, 1)


def test_q_rank_check():
    inside = parse_formula("exists y. dist(x,y) <= 4", SIG)
    assert q_rank_check(inside, 1, 1) == []
    deep = parse_formula("exists y. exists z. E(y,z)", SIG)
    assert q_rank_check(deep, 1, 1) != []
    wide = DistAtom("x", "y", 17)
    assert q_rank_check(wide, 1, 1) != []
    assert q_rank_check(wide, 1, 2) == []  # budget 4^3 = 64
    with pytest.raises(InputError):
        q_rank_check(parse_formula("#(y). E(x,y) >= 1", SIG), 1, 1)


def test_size_counts_tokens():
    assert size is expr_size
    assert expr_size(parse("P(x)", SIG)) == 4
    assert expr_size(parse("#(x). P(x)", SIG)) == 9
    assert expr_size(IntConst(123)) == 1


def test_registry():
    reg = default_registry()
    assert reg.get("eq").holds(3, 3)
    assert not reg.get("leq").holds(4, 3)
    assert reg.get("prime").holds(7) and not reg.get("prime").holds(6)
    assert reg.get("geq1").holds(1) and not reg.get("geq1").holds(0)
    with pytest.raises(InputError):
        reg.get("nope")
    with pytest.raises(InputError):
        reg.register(NumericPredicate("eq", 2, lambda a, b: True))
    with pytest.raises(InputError):
        reg.register(NumericPredicate("exists", 1, lambda a: True))
    with pytest.raises(InputError):
        reg.get("eq").holds(1)


def test_simplify_folds_constants():
    assert simplify(parse("(P(x) & true)", SIG)) == Atom("P", ("x",))
    assert simplify(parse("(P(x) | true)", SIG)) == Truth()
    assert simplify(Not(Not(Atom("P", ("x",))))) == Atom("P", ("x",))
    assert simplify(parse("(0 * #(x). P(x))", SIG)) == IntConst(0)
