from fractions import Fraction

import numpy as np
import pytest

from riskprof.errors import AverageCaseNotSupported, InvariantViolation
from riskprof.greedy_flow import FlowProblem, greedy_flow, worst_case_two_stock
from riskprof.oracle import exhaustive_two_stock_optimum
from riskprof.portfolio_sweep import (
    EventKind,
    FlowTree,
    SlopeEvent,
    _LeafSequence,
    _plan,
    enumerate_slope_events,
    sweep_flows,
    sweep_optimal_portfolio,
    tree_flow_value,
)
from riskprof.return_model import (
    ALL_OBJECTIVES,
    Case,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    ReturnGrid,
    Sense,
)

from conftest import random_alpha, random_grid, random_marginal

RA_W = Objective.parse("ra_w")


def test_coin_grid_events(coin):
    g, s1, s2 = coin
    events = enumerate_slope_events(s1, s2, 50.0)
    # (0,0) is always inside and (100,100) always outside
    assert sorted(e.point for e in events) == [(0.0, 100.0), (100.0, 0.0)]
    assert all(e.slope == -1.0 and e.breakpoint == Fraction(1, 2) for e in events)
    kinds = {e.point: e.kind for e in events}
    assert kinds[(0.0, 100.0)] is EventKind.ENTER
    assert kinds[(100.0, 0.0)] is EventKind.LEAVE


@pytest.mark.parametrize("alpha", [250.0, -1.0])
def test_no_events_outside_grid(alpha):
    g = ReturnGrid(100.0, 0, 2)
    s = MarginalDistribution(g, [0.2, 0.3, 0.5])
    for sense in Sense:
        for strict in (False, True):
            assert enumerate_slope_events(s, s, alpha, sense, strict) == []


def test_events_sorted_by_descending_slope(rng):
    for _ in range(30):
        g = random_grid(rng, int(rng.integers(2, 9)))
        s1, s2 = random_marginal(rng, g), random_marginal(rng, g)
        ev = enumerate_slope_events(s1, s2, random_alpha(rng, g), Sense.LOWER, bool(rng.integers(2)))
        slopes = [e.slope for e in ev]
        assert slopes == sorted(slopes, reverse=True)
        assert len({e.levels for e in ev}) == len(ev)


def test_parent_rule_identity_padding():
    t = FlowTree([(-0.3, 0.2)])
    assert t.root == (-0.3, 0.2)
    t = FlowTree([(-0.3, 0.2), (0.0, 0.0), (0.0, 0.0)])
    assert t.root == (-0.3, 0.2)


def test_tree_value_examples():
    c = [0.25, 0.25, 0.5]
    r = [0.6, 0.4]
    # every column leaf before every row leaf: the whole region is open
    full = FlowTree([(0.0, x) for x in c] + [(-x, 0.0) for x in r])
    assert tree_flow_value(full) == pytest.approx(1.0)
    # all supply arrives before any capacity: nothing flows
    blocked = FlowTree([(-1.0, 0.0)] + [(0.0, x) for x in c])
    assert tree_flow_value(blocked) == pytest.approx(0.0)
    # a sequence without row leaves has no supply and is inconsistent
    with pytest.raises(InvariantViolation):
        tree_flow_value(FlowTree([(0.0, x) for x in c]))


def test_coin_pair_tree_matches_greedy(coin):
    g, s1, s2 = coin
    stages = sweep_flows(s1, s2, 50.0)
    mid = [sv for sv in stages if sv.stage.closed and sv.stage.lo == Fraction(1, 2)]
    assert len(mid) == 1 and mid[0].flow == pytest.approx(1.0)


def test_replay_matches_greedy(rng):
    for _ in range(60):
        g = random_grid(rng, int(rng.integers(2, 11)))
        s1, s2 = random_marginal(rng, g), random_marginal(rng, g)
        alpha = random_alpha(rng, g)
        for sense in Sense:
            for strict in (False, True):
                seen = []

                def hook(stage, tree, flow):
                    tree.check(tol=1e-12)
                    spec = RegionSpec(alpha, stage.portfolio, sense, strict)
                    assert flow == pytest.approx(greedy_flow(FlowProblem(s1, s2, spec)).value, abs=1e-9)
                    seen.append(stage.index)

                stages = sweep_flows(s1, s2, alpha, sense, strict, on_stage=hook)
                assert seen == list(range(1, len(stages) - 1))


def test_non_adjacent_event_is_rejected():
    g = ReturnGrid(1.0, 0, 3)
    s = MarginalDistribution(g, [0.25] * 4)
    plan = _plan(s, s, 1.5, Sense.LOWER, False)
    seq = _LeafSequence(plan)
    late = [e for e in plan.events if e.stage > 2][-1]
    with pytest.raises(InvariantViolation):
        seq.apply(late)


def test_optimize_constant_objective():
    g = ReturnGrid(100.0, 0, 1)
    s = MarginalDistribution(g, [0.3, 0.7])
    r = sweep_optimal_portfolio(s, s, 100.0, RA_W)
    assert r.value == 1.0
    assert r.portfolio.tolist() == [0.0, 1.0]


def test_dominating_stock():
    g = ReturnGrid(100.0, 0, 1)
    s1 = MarginalDistribution(g, [0.0, 1.0])
    s2 = MarginalDistribution(g, [1.0, 0.0])
    r = sweep_optimal_portfolio(s1, s2, 50.0, RA_W)
    assert r.value == 0.0
    # every x1 > 1/2 is optimal; the open interval's midpoint is returned
    assert r.x1_interval == (0.5, 1.0)
    assert r.portfolio.tolist() == [0.75, 0.25]
    assert worst_case_two_stock(s1, s2, Portfolio([1.0, 0.0]), 50.0, RA_W) == 0.0


def test_average_rejected(coin):
    g, s1, s2 = coin
    with pytest.raises(AverageCaseNotSupported):
        sweep_optimal_portfolio(s1, s2, 50.0, Objective.parse("ag_a"))


def test_matches_exhaustive(rng):
    objectives = [o for o in ALL_OBJECTIVES if o.case is not Case.AVERAGE]
    for _ in range(60):
        g = random_grid(rng, int(rng.integers(2, 9)))
        s1, s2 = random_marginal(rng, g), random_marginal(rng, g)
        alpha = random_alpha(rng, g)
        for obj in objectives:
            r = sweep_optimal_portfolio(s1, s2, alpha, obj)
            e = exhaustive_two_stock_optimum(s1, s2, alpha, obj)
            assert r.value == pytest.approx(e.value, abs=1e-9)
            assert r.portfolio == e.portfolio
            assert worst_case_two_stock(s1, s2, r.portfolio, alpha, obj) == pytest.approx(r.value, abs=1e-9)
            scaled = Portfolio.normalized(r.portfolio.weights * 3.7)
            assert worst_case_two_stock(s1, s2, scaled, alpha, obj) == pytest.approx(r.value, abs=1e-9)


def test_random_m6_against_exhaustive():
    rng = np.random.default_rng(6)
    g = ReturnGrid(1.0, 0, 5)
    s1 = MarginalDistribution(g, rng.dirichlet(np.ones(6)))
    s2 = MarginalDistribution(g, rng.dirichlet(np.ones(6)))
    r = sweep_optimal_portfolio(s1, s2, 2.5, RA_W)
    e = exhaustive_two_stock_optimum(s1, s2, 2.5, RA_W)
    assert r.value == pytest.approx(e.value, abs=1e-12)


def test_profile_covers_simplex(coin):
    g, s1, s2 = coin
    r = sweep_optimal_portfolio(s1, s2, 50.0, RA_W)
    assert r.profile[0][:2] == (0.0, 0.0) and r.profile[-1][:2] == (1.0, 1.0)
    for (a, b, _), (c, d, _) in zip(r.profile, r.profile[1:]):
        assert b == c
