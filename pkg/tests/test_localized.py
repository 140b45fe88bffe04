"""The cover-and-remove evaluation engine against direct counting."""
import random

import pytest

from focount.cldecomp import BasicClTerm, eval_basic_cl
from focount.errors import InputError
from focount.generators import (ExpressionSampler, make_family, path_graph,
                                star_graph)
from focount.localeval import (EvalConfig, evaluate, localized_ground,
                               localized_unary)
from focount.logic import Atom, DistAtom, Eq, Exists, and_
from focount.naive import eval_reference
from focount.structures import PatternGraph

from helpers import random_structure

EDGE2 = PatternGraph.of(2, [(1, 2)])

# with these thresholds every cluster takes the removal path on any graph
# that has a vertex of degree two or more
FORCED = dict(brute_force_threshold=1, cluster_direct_max=1,
              hub_degree_threshold=1)


def unary_q_term(radius: int) -> BasicClTerm:
    return BasicClTerm(("x", "y"), radius, EDGE2, Atom("Q", ("y",)),
                       unary=True)


def test_forced_removal_agrees_with_direct_counting():
    rng = random.Random(97)
    cfg = EvalConfig(**FORCED, cross_check=True)
    removal_seen = False
    for _ in range(12):
        s = random_structure(rng, rng.randint(8, 14), edge_prob=0.3)
        term = unary_q_term(rng.randint(0, 1))
        values, stats = localized_unary(s, term, cfg)
        for a in s.universe:
            assert values[a] == eval_basic_cl(s, term, a)
        removal_seen = removal_seen or stats.removal_steps > 0
    assert removal_seen


def test_removal_depth_stays_under_the_exact_game_value():
    rng = random.Random(101)
    cfg = EvalConfig(**FORCED)
    checks = 0
    for _ in range(8):
        s = random_structure(rng, rng.randint(9, 14), edge_prob=0.35)
        _, stats = localized_unary(s, unary_q_term(0), cfg)
        checks += stats.depth_bound_checks
    # the engine asserts depth <= value - 1 whenever the exact value is known
    assert checks > 0


def test_default_config_on_midsize_structures():
    rng = random.Random(103)
    for _ in range(6):
        s = random_structure(rng, rng.randint(36, 44), edge_prob=0.06)
        term = unary_q_term(1)
        values, _ = localized_unary(s, term)
        spot = rng.sample(s.universe, 8)
        for a in spot:
            assert values[a] == eval_basic_cl(s, term, a)


def test_localized_ground_matches_basic():
    rng = random.Random(107)
    s = random_structure(rng, 40, edge_prob=0.05)
    term = BasicClTerm(("x", "y"), 1, EDGE2, Atom("P", ("y",)), unary=False)
    value, _ = localized_ground(s, term)
    assert value == eval_basic_cl(s, term)
    k1 = BasicClTerm(("x",), 1, PatternGraph.of(1, []), Atom("P", ("x",)),
                     unary=False)
    v1, stats = localized_ground(s, k1)
    assert v1 == eval_basic_cl(s, k1)
    assert stats.clusters == 0  # width-1 ground terms are counted directly


def test_unfactorized_cross_position_condition_falls_back():
    star = star_graph(40)
    term = BasicClTerm(("x", "y"), 1, EDGE2, DistAtom("x", "y", 2),
                       unary=True)
    values, stats = localized_unary(star, term, EvalConfig(cross_check=True))
    assert "unfactorized condition on a high-degree cluster: direct counting" \
        in stats.fallbacks
    for a in star.universe:
        assert values[a] == eval_basic_cl(star, term, a)


def test_indicator_terms_avoid_tuple_counting():
    s = random_structure(random.Random(109), 40, edge_prob=0.05)
    near_p = Exists("z", and_(DistAtom("x", "z", 1), Atom("P", ("z",))))
    padded = BasicClTerm(("x", "y"), 1, EDGE2,
                         and_(Eq("x", "y"), near_p), unary=True)
    values, stats = localized_unary(s, padded)
    assert stats.direct_clusters == stats.clusters
    for a in s.universe:
        assert values[a] in (0, 1)
        assert values[a] == eval_basic_cl(s, padded, a)


def test_exhausted_budget_is_flagged_but_correct():
    base = path_graph(20)
    s = base.expand(
        {"C": (1, [(e,) for i, e in enumerate(base.universe) if i % 3 == 0])})
    term = BasicClTerm(("x", "y"), 0, EDGE2, Atom("C", ("y",)), unary=True)
    cfg = EvalConfig(**FORCED, rounds_fn=lambda radius: 0, cross_check=True)
    values, stats = localized_unary(s, term, cfg)
    assert "recursion budget exhausted: direct counting" in stats.fallbacks
    for a in s.universe:
        assert values[a] == eval_basic_cl(s, term, a)


def test_materialized_markers_do_not_touch_the_input():
    s = random_structure(random.Random(113), 12, edge_prob=0.3)
    before = (s.universe, {k: frozenset(v) for k, v in s.relations.items()})
    cond = Exists("z", and_(DistAtom("y", "z", 1), Atom("E", ("y", "z"))))
    term = BasicClTerm(("x", "y"), 1, EDGE2, cond, unary=True)
    localized_unary(s, term, EvalConfig(**FORCED, cross_check=True))
    assert before == (s.universe,
                      {k: frozenset(v) for k, v in s.relations.items()})


def test_parallel_clusters_match_serial():
    s = make_family("two-trees", 44, seed=9)
    s = s.expand({"Q": (1, [(e,) for i, e in enumerate(s.universe)
                            if i % 3 == 0]),
                  "P": (1, [])})
    term = unary_q_term(1)
    serial, _ = localized_unary(s, term, EvalConfig(jobs=1))
    parallel, _ = localized_unary(s, term, EvalConfig(jobs=2))
    assert serial == parallel


def test_every_element_gets_a_value():
    s = random_structure(random.Random(127), 36, edge_prob=0.05)
    values, _ = localized_unary(s, unary_q_term(0))
    assert set(values) == set(s.universe)
    assert all(isinstance(v, int) and v >= 0 for v in values.values())


def test_kind_and_config_checks():
    s = random_structure(random.Random(131), 6)
    unary = unary_q_term(0)
    ground = BasicClTerm(("x", "y"), 0, EDGE2, Atom("P", ("x",)),
                         unary=False)
    with pytest.raises(InputError):
        localized_unary(s, ground)
    with pytest.raises(InputError):
        localized_ground(s, unary)
    with pytest.raises(InputError):
        EvalConfig(recursion_cap=0)
    with pytest.raises(InputError):
        EvalConfig(epsilon=0.0)


def test_cluster_log_records_locality():
    s = random_structure(random.Random(137), 40, edge_prob=0.05)
    term = unary_q_term(1)
    _, stats = localized_unary(s, term, EvalConfig(track_access=True))
    assert stats.cluster_log
    for entry in stats.cluster_log:
        assert entry["inside_cluster"]
        assert entry["work_universe"] <= entry["cluster_size"]
    as_json = stats.to_json()
    for key in ("clusters", "direct_clusters", "removal_clusters",
                "removal_steps", "max_depth", "depth_histogram", "fallbacks",
                "depth_bound_checks"):
        assert key in as_json


def test_end_to_end_evaluation_matches_reference():
    rng = random.Random(139)
    for _ in range(10):
        s = random_structure(rng, rng.randint(33, 42), edge_prob=0.05)
        sampler = ExpressionSampler(random.Random(rng.randrange(10 ** 9)),
                                    width=2, size_hint=42)
        e = sampler.expression()
        value, decomp, stats = evaluate(e, s)
        assert value == eval_reference(e, s)
        assert decomp.symbol_count() >= 0
        assert stats.clusters >= 0
