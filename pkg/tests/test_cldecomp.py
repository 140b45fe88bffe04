"""Pattern formulas, basic counting terms, and the layered decomposition."""
import random
from itertools import product

import pytest

from focount.cldecomp import (MAX_WIDTH, BasicClTerm, cl_decompose,
                              count_pattern, delta_formula,
                              dispatch_sentences, eval_basic_cl,
                              eval_decomposition, is_local, locality_radius)
from focount.errors import InputError, UnsupportedFragmentError
from focount.generators import ExpressionSampler
from focount.logic import (Atom, DistAtom, Exists, Not, Truth, and_, parse,
                           parse_formula)
from focount.naive import Evaluator, eval_reference
from focount.structures import (PatternGraph, Signature, Structure,
                                all_patterns, pattern_graph)

from helpers import MemoEval, random_structure

SIG = Signature.of({"E": 2, "P": 1, "Q": 1})


def test_delta_formula_characterizes_patterns():
    rng = random.Random(3)
    for _ in range(10):
        s = random_structure(rng, rng.randint(2, 6), edge_prob=0.3)
        for radius in (0, 1):
            threshold = 2 * radius + 1
            for pattern in all_patterns(3):
                delta = delta_formula(pattern, threshold, ("v1", "v2", "v3"))
                ev = Evaluator(s)
                for tup in product(s.universe, repeat=3):
                    want = pattern_graph(s, tup, threshold) == pattern
                    got = ev.evaluate(delta, dict(zip(("v1", "v2", "v3"), tup)))
                    assert got == want


def test_locality_radius_by_hand():
    assert locality_radius(parse_formula("P(x)", SIG), ["x"]) == 0
    assert locality_radius(Truth(), ["x"]) == 0
    guarded = parse_formula("exists y. (dist(x,y) <= 2 & E(x,y))", SIG)
    assert locality_radius(guarded, ["x"]) == 2
    nested = parse_formula(
        "exists y. (dist(x,y) <= 1 & exists z. (dist(y,z) <= 1 & E(y,z)))",
        SIG)
    assert locality_radius(nested, ["x"]) == 2
    free_ranging = parse_formula("exists y. E(x,y)", SIG)
    assert locality_radius(free_ranging, ["x"]) is None
    assert is_local(guarded, ["x"], 2)
    assert not is_local(guarded, ["x"], 1)


def test_locality_radius_allows_anchor_distance_atoms():
    # between two anchors the bound may reach 2r+1
    f = DistAtom("x", "y", 3)
    assert locality_radius(f, ["x", "y"]) == 1
    assert locality_radius(DistAtom("x", "y", 1), ["x", "y"]) == 0


def test_basic_term_validation():
    p2 = PatternGraph.of(2, [(1, 2)])
    with pytest.raises(InputError):
        BasicClTerm(("x",), 1, PatternGraph.of(1, []),
                    Atom("P", ("x",)), unary=True)  # unary needs width 2
    with pytest.raises(InputError):
        BasicClTerm(("x", "y"), 1, PatternGraph.of(2, []),
                    Truth(), unary=False)  # disconnected pattern
    with pytest.raises(InputError):
        BasicClTerm(("x", "y"), 1, p2, Atom("P", ("z",)), unary=False)
    with pytest.raises(InputError):
        vars5 = tuple(f"v{i}" for i in range(MAX_WIDTH + 1))
        edges = [(i, i + 1) for i in range(1, MAX_WIDTH + 1)]
        BasicClTerm(vars5, 1, PatternGraph.of(MAX_WIDTH + 1, edges),
                    Truth(), unary=False)
    term = BasicClTerm(("x", "y"), 1, p2, Atom("P", ("y",)), unary=True)
    assert term.threshold == 3
    assert term.eval_radius == 1 + 3
    term.check_local()
    bad = BasicClTerm(("x", "y"), 0, p2,
                      Exists("z", Atom("E", ("y", "z"))), unary=True)
    with pytest.raises(UnsupportedFragmentError):
        bad.check_local()


def brute_basic(structure, term, anchor):
    """Independent count: enumerate tuples with the anchor pinned first,
    match the pattern, check psi."""
    me = MemoEval(structure)
    total = 0
    for rest in product(structure.universe, repeat=term.k - 1):
        tup = (anchor,) + rest
        if pattern_graph(structure, tup, term.threshold) != term.pattern:
            continue
        if me.evaluate(term.psi, dict(zip(term.vars, tup))):
            total += 1
    return total


def _random_connected_pattern(rng, k):
    while True:
        p = rng.choice(all_patterns(k))
        if p.is_connected():
            return p


def test_eval_basic_cl_matches_brute_force():
    rng = random.Random(13)
    for _ in range(25):
        s = random_structure(rng, rng.randint(2, 7), edge_prob=0.3)
        k = rng.randint(2, 3)
        pattern = _random_connected_pattern(rng, k)
        vars = tuple(f"v{i}" for i in range(1, k + 1))
        psi = and_(Atom("P", (vars[0],)), Atom("Q", (vars[-1],)))
        unary = rng.random() < 0.5
        term = BasicClTerm(vars, rng.randint(0, 1), pattern, psi, unary)
        if unary:
            for a in s.universe:
                assert eval_basic_cl(s, term, a) == brute_basic(s, term, a)
        else:
            want = sum(brute_basic(s, term, a) for a in s.universe)
            assert eval_basic_cl(s, term) == want


def test_basic_cl_term_is_R_local():
    rng = random.Random(19)
    for _ in range(20):
        s = random_structure(rng, rng.randint(3, 9), edge_prob=0.25)
        pattern = PatternGraph.of(2, [(1, 2)])
        term = BasicClTerm(("x", "y"), 1, pattern,
                           Atom("Q", ("y",)), unary=True)
        for a in s.universe:
            inside = s.neighborhood(a, term.eval_radius)
            assert eval_basic_cl(s, term, a) == eval_basic_cl(inside, term, a)


def test_count_pattern_partition_is_n_to_the_k():
    rng = random.Random(23)
    for _ in range(12):
        s = random_structure(rng, rng.randint(2, 6), edge_prob=0.35)
        n = len(s.universe)
        for k in (1, 2, 3):
            for radius in (0, 1):
                total = sum(count_pattern(s, p, radius)
                            for p in all_patterns(k))
                assert total == n ** k


def test_count_pattern_matches_enumeration():
    rng = random.Random(31)
    for _ in range(10):
        s = random_structure(rng, rng.randint(2, 6), edge_prob=0.35)
        for k in (2, 3):
            for pattern in all_patterns(k):
                radius = 1
                got = count_pattern(s, pattern, radius)
                want = sum(
                    1 for tup in product(s.universe, repeat=k)
                    if pattern_graph(s, tup, 2 * radius + 1) == pattern)
                assert got == want, (k, sorted(pattern.edges))


def test_count_pattern_anchor_consistency():
    rng = random.Random(37)
    s = random_structure(rng, 6, edge_prob=0.4)
    for pattern in all_patterns(2):
        ground = count_pattern(s, pattern, 1)
        split = sum(count_pattern(s, pattern, 1, anchor=a)
                    for a in s.universe)
        assert ground == split


def test_count_pattern_component_factors():
    rng = random.Random(41)
    s = random_structure(rng, 6, edge_prob=0.3)
    pattern = PatternGraph.of(2, [])  # two far-apart positions
    cond = {frozenset({1}): parse_formula("P(y1)", SIG),
            frozenset({2}): parse_formula("Q(y2)", SIG)}
    got = count_pattern(s, pattern, 0, cond)
    ev = Evaluator(s)
    want = sum(
        1 for tup in product(s.universe, repeat=2)
        if pattern_graph(s, tup, 1) == pattern
        and ev.evaluate(cond[frozenset({1})], {"y1": tup[0]})
        and ev.evaluate(cond[frozenset({2})], {"y2": tup[1]}))
    assert got == want
    with pytest.raises(InputError):
        count_pattern(s, pattern, 0, {frozenset({1, 2}): Truth()})


def test_dispatch_sentences():
    s = random_structure(random.Random(43), 5, edge_prob=0.5)
    phi = parse_formula(
        "(geq1(#(x). P(x)) & !geq1(#(y). Q(y)))", SIG)
    true_idx, residual = dispatch_sentences(phi, s)
    ev = Evaluator(s)
    p_any = ev.evaluate(parse_formula("geq1(#(x). P(x))", SIG))
    q_any = ev.evaluate(parse_formula("geq1(#(y). Q(y))", SIG))
    want = {i for i, v in enumerate((p_any, q_any)) if v}
    assert true_idx == frozenset(want)
    assert ev.evaluate(residual) == (p_any and not q_any)


def test_decomposition_needs_closed_input():
    with pytest.raises(InputError):
        cl_decompose(parse("P(x)", SIG), SIG)


def test_decompose_then_evaluate_equals_reference():
    rng = random.Random(47)
    ok = 0
    for _ in range(60):
        s = random_structure(rng, rng.randint(2, 9), edge_prob=0.3)
        e = ExpressionSampler(random.Random(rng.randrange(10 ** 9)),
                              size_hint=8).expression()
        want = eval_reference(e, s)
        decomp = cl_decompose(e, s.signature)
        got = eval_decomposition(decomp, s)
        assert got == want
        ok += 1
    assert ok == 60


def test_decompose_handles_nested_counts_and_sentences():
    cases = [
        "#(x). P(x)",
        "eq(#(x). eq(#(y). (dist(x,y) <= 1 & E(x,y)), 1), 2)",
        "(#(x). P(x) * #(y). Q(y))",
        "(#(x). (P(x) & exists y. (dist(x,y) <= 1 & Q(y))) + 3)",
        "(#(x). Q(x) >= 1 | prime(#(y). P(y)))",
    ]
    rng = random.Random(53)
    for text in cases:
        e = parse(text, SIG)
        for _ in range(5):
            s = random_structure(rng, rng.randint(2, 8), edge_prob=0.4)
            assert eval_decomposition(cl_decompose(e, SIG), s) == \
                eval_reference(e, s), text


def test_layer_symbols_have_bounded_count_depth():
    e = parse("eq(#(x). eq(#(y). (dist(x,y) <= 1 & E(x,y)), 1), 2)", SIG)
    decomp = cl_decompose(e, SIG)
    assert decomp.symbol_count() >= 2
    for layer in decomp.layers:
        for sym in layer.symbols:
            for arg in sym.args:
                for basic in arg.basics():
                    basic.check_local()
