import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from riskprof.errors import BudgetExceeded, Infeasible, NotOnCentLattice, Unbounded
from riskprof.greedy_flow import worst_case_two_stock
from riskprof.k_stock import (
    LpProblem,
    build_exact_lp,
    cent_units,
    cents_worst_case_exact,
    lp_worst_case_exact,
    optimal_portfolio_fixed_k,
    solve_lp,
    striping_plan,
    striping_worst_case,
)
from riskprof.oracle import lp_vertex_enumeration
from riskprof.portfolio_sweep import sweep_flows, sweep_optimal_portfolio
from riskprof.return_model import (
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    ReturnGrid,
    Sense,
    region_mask,
)

from conftest import random_alpha, random_grid, random_marginal, random_two_portfolio

RA_W = Objective.parse("ra_w")
HALF = Portfolio([0.5, 0.5])


# -- simplex -----------------------------------------------------------------

def test_simplex_examples():
    sol = solve_lp(LpProblem([1.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], maximize=True))
    assert sol.value == pytest.approx(1.0)
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-12)
    sol = solve_lp(LpProblem([0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    assert sol.value == 0.0 and sum(sol.x) == pytest.approx(1.0)
    with pytest.raises(Infeasible):
        solve_lp(LpProblem([1.0], A_eq=[[1.0]], b_eq=[-1.0]))
    with pytest.raises(Unbounded):
        solve_lp(LpProblem([-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0]))


def test_simplex_against_scipy(rng):
    for _ in range(150):
        n, me, mu = int(rng.integers(2, 9)), int(rng.integers(0, 4)), int(rng.integers(0, 4))
        x0 = rng.random(n) * (rng.random(n) < 0.7)
        A_eq = rng.integers(-2, 3, size=(me, n)).astype(float)
        A_ub = rng.integers(-2, 3, size=(mu, n)).astype(float)
        b_eq, b_ub = A_eq @ x0, A_ub @ x0 + rng.random(mu) * (rng.random(mu) < 0.5)
        # a bounding row keeps every instance bounded
        A_ub = np.vstack([A_ub, np.ones(n)])
        b_ub = np.append(b_ub, n)
        c = rng.integers(-3, 4, size=n).astype(float)
        maximize = bool(rng.integers(2))
        prob = LpProblem(c, A_eq if me else None, b_eq if me else None, A_ub, b_ub, maximize=maximize)
        ref = linprog(-c if maximize else c, A_ub=A_ub, b_ub=b_ub,
                      A_eq=A_eq if me else None, b_eq=b_eq if me else None, method="highs")
        sol = solve_lp(prob)
        want = -ref.fun if maximize else ref.fun
        assert sol.value == pytest.approx(want, abs=1e-8)
        assert prob.violation(sol.x) <= 1e-9
        if n + len(b_ub) <= 12:
            assert lp_vertex_enumeration(prob) == pytest.approx(want, abs=1e-8)


def test_degenerate_transportation_lp():
    # many ties in the ratio test; must terminate at the optimum
    g = ReturnGrid(1.0, 0, 5)
    s = MarginalDistribution(g, [1 / 6] * 6)
    v = lp_worst_case_exact([s, s], HALF, 2.5)
    assert v == pytest.approx(worst_case_two_stock(s, s, HALF, 2.5, RA_W), abs=1e-12)


# -- exact LP ----------------------------------------------------------------

def test_exact_examples(coin):
    g, s1, s2 = coin
    assert lp_worst_case_exact([s1, s2], HALF, 50.0) == pytest.approx(1.0)
    g3 = ReturnGrid(1.0, 0, 2)
    point = MarginalDistribution(g3, [1.0, 0.0, 0.0])
    assert lp_worst_case_exact([point] * 3, Portfolio([0.2, 0.3, 0.5]), 0.0) == 1.0


def test_exact_equals_greedy(rng):
    for _ in range(150):
        g = random_grid(rng, int(rng.integers(2, 11)))
        d = [random_marginal(rng, g), random_marginal(rng, g)]
        pf, alpha = random_two_portfolio(rng), random_alpha(rng, g)
        for name in ("ra_w", "ra_b", "ag_w", "ag_b_strict"):
            obj = Objective.parse(name)
            assert lp_worst_case_exact(d, pf, alpha, obj) == pytest.approx(
                worst_case_two_stock(d[0], d[1], pf, alpha, obj), abs=1e-8)


def test_exact_k3_against_vertex_enumeration(rng):
    g = ReturnGrid(1.0, 0, 2)
    done = 0
    while done < 20:
        d = [random_marginal(rng, g, zero_frac=0.4) for _ in range(3)]
        model = build_exact_lp(d)
        if len(model.cells) > 12:
            continue
        pf = Portfolio.normalized(rng.random(3))
        alpha = float(rng.uniform(0, 2))
        spec = RegionSpec(alpha, pf, Sense.LOWER, False)
        prob = LpProblem(model.mask(spec).astype(float), model.A_eq, model.b_eq, maximize=True)
        assert lp_worst_case_exact(d, pf, alpha) == pytest.approx(lp_vertex_enumeration(prob), abs=1e-8)
        done += 1


def test_exact_primal_respects_margins(rng):
    for _ in range(30):
        k = int(rng.integers(2, 4))
        g = random_grid(rng, int(rng.integers(2, 5)))
        d = [random_marginal(rng, g) for _ in range(k)]
        model = build_exact_lp(d)
        pf = Portfolio.normalized(rng.random(k))
        mask = model.mask(RegionSpec(random_alpha(rng, g), pf, Sense.LOWER, False))
        if mask.all() or not mask.any():
            continue
        sol = model.solve(mask, True)
        table = model.table(sol.x)
        assert table.min() >= 0
        for axis in range(k):
            other = tuple(a for a in range(k) if a != axis)
            np.testing.assert_allclose(table.sum(axis=other), d[axis].probs, atol=1e-9)


def test_budget():
    g = ReturnGrid(1.0, 0, 9)
    s = MarginalDistribution(g, [0.1] * 10)
    with pytest.raises(BudgetExceeded):
        lp_worst_case_exact([s] * 4, Portfolio([0.25] * 4), 5.0, budget=1000)


# -- striping ----------------------------------------------------------------

def test_striping_plan():
    plan = striping_plan(4, 4, 0.1)
    assert plan.strip_count == 80
    assert plan.pairing == ((0, 1), (2, 3))
    plan = striping_plan(3, 5, 0.5)
    assert plan.padded_k == 4 and plan.strip_count == 20
    assert plan.pairing == ((0, 1), (2, None))


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_striping_two_stocks_exact(coin, eps):
    g, s1, s2 = coin
    assert striping_worst_case([s1, s2], HALF, 50.0, eps) == pytest.approx(1.0)


def test_striping_empty_region(rng):
    g = random_grid(rng, 3)
    d = [random_marginal(rng, g) for _ in range(4)]
    assert striping_worst_case(d, Portfolio([0.25] * 4), g.lowest - 1.0, 0.1) == 0.0


def test_striping_one_sided(rng):
    # strips are represented by their lower edge, so W never understates RA_w
    for _ in range(40):
        k = int(rng.choice([3, 4]))
        g = random_grid(rng, 3)
        d = [random_marginal(rng, g) for _ in range(k)]
        pf = Portfolio.normalized(rng.random(k))
        alpha = random_alpha(rng, g)
        assert striping_worst_case(d, pf, alpha, 0.25) >= lp_worst_case_exact(d, pf, alpha) - 1e-9


def test_striping_k4_m3_example():
    rng = np.random.default_rng(2024)
    g = ReturnGrid(1.0, 0, 2)
    d = [MarginalDistribution(g, rng.dirichlet(np.ones(3))) for _ in range(4)]
    pf = Portfolio.normalized(rng.random(4))
    W = striping_worst_case(d, pf, 1.0, 0.5)
    assert abs(W - lp_worst_case_exact(d, pf, 1.0)) <= 0.5


def test_striping_can_exceed_epsilon():
    # four 50/50 stocks on {0, 1}: RA_w is 2/3 just below alpha = 0.5, but the
    # strip holding partial return 0.25 starts below 0.25 and pulls it inside
    g = ReturnGrid(1.0, 0, 3)
    s = MarginalDistribution(g, [0.5, 0.5, 0.0, 0.0])
    pf = Portfolio([0.25] * 4)
    exact = lp_worst_case_exact([s] * 4, pf, 0.499)
    assert exact == pytest.approx(2 / 3)
    assert striping_worst_case([s] * 4, pf, 0.499, 0.25) - exact > 0.25


# -- cents -------------------------------------------------------------------

def test_cent_units():
    assert cent_units(Portfolio([0.5, 0.25, 0.25]), 100) == [50, 25, 25]
    with pytest.raises(NotOnCentLattice):
        cent_units(Portfolio([0.333, 0.667]), 100)
    with pytest.raises(NotOnCentLattice):
        cent_units(Portfolio([0.5, 0.5]), 0)


def test_cents_examples(rng):
    g = ReturnGrid(1.0, 0, 3)
    d = [random_marginal(rng, g) for _ in range(3)]
    pf = Portfolio([0.5, 0.25, 0.25])
    for alpha in (0.5, 1.0, 1.25, 2.0):
        assert cents_worst_case_exact(d, pf, alpha, 100) == pytest.approx(
            lp_worst_case_exact(d, pf, alpha), abs=1e-8)
    # all in one stock: the stock's own CDF
    one = Portfolio([0.0, 1.0, 0.0])
    assert cents_worst_case_exact(d, one, 1.0, 1) == pytest.approx(d[1].cdf(1.0), abs=1e-12)


def test_cents_two_stocks_equal_greedy(rng):
    for _ in range(50):
        g = random_grid(rng, int(rng.integers(2, 8)))
        d = [random_marginal(rng, g), random_marginal(rng, g)]
        c = int(rng.choice([1, 4, 10, 100]))
        u = int(rng.integers(0, c + 1))
        pf = Portfolio([u / c, (c - u) / c])
        alpha = random_alpha(rng, g)
        for name in ("ra_w", "ra_w_strict", "ag_b"):
            obj = Objective.parse(name)
            assert cents_worst_case_exact(d, pf, alpha, c, obj) == pytest.approx(
                worst_case_two_stock(d[0], d[1], pf, alpha, obj), abs=1e-8)


# -- portfolio search --------------------------------------------------------

def test_search_two_stocks_matches_sweep(rng):
    for _ in range(30):
        g = random_grid(rng, int(rng.integers(2, 7)))
        d = [random_marginal(rng, g), random_marginal(rng, g)]
        alpha = random_alpha(rng, g)
        for name in ("ra_w", "ra_b_strict", "ag_w", "ag_b"):
            obj = Objective.parse(name)
            r = optimal_portfolio_fixed_k(d, alpha, obj)
            s = sweep_optimal_portfolio(d[0], d[1], alpha, obj)
            assert r.value == pytest.approx(s.value, abs=1e-9)


def test_candidates_cover_every_sweep_region(rng):
    from riskprof.k_stock import _hyperplane_candidates
    for _ in range(20):
        g = random_grid(rng, int(rng.integers(2, 7)))
        d = [random_marginal(rng, g), random_marginal(rng, g)]
        alpha = random_alpha(rng, g)
        support = np.outer(d[0].probs > 0, d[1].probs > 0)
        cands = _hyperplane_candidates(d, alpha, 10**6)
        for strict in (False, True):
            got = {(region_mask(RegionSpec(alpha, pf, Sense.LOWER, strict), g) & support).tobytes()
                   for pf in cands}
            for sv in sweep_flows(d[0], d[1], alpha, Sense.LOWER, strict):
                spec = RegionSpec(alpha, sv.stage.portfolio, Sense.LOWER, strict)
                assert (region_mask(spec, g) & support).tobytes() in got


def test_search_dominating_stock():
    g = ReturnGrid(1.0, 0, 2)
    top = MarginalDistribution(g, [0.0, 0.0, 1.0])
    other = MarginalDistribution(g, [0.5, 0.5, 0.0])
    for mode in ("candidate_hyperplanes", "cents"):
        r = optimal_portfolio_fixed_k([other, top, other], 1.5, RA_W, mode=mode, c=4)
        assert r.value == 0.0
    # the unit vector is among the (tied) optima
    assert lp_worst_case_exact([other, top, other], Portfolio([0.0, 1.0, 0.0]), 1.5) == 0.0


def test_cent_grid_search_matches_enumeration(rng):
    g = ReturnGrid(1.0, 0, 2)
    d = [random_marginal(rng, g) for _ in range(3)]
    alpha = 1.0
    r = optimal_portfolio_fixed_k(d, alpha, RA_W, mode="cents", c=4)
    assert r.candidates == math.comb(6, 2) == 15
    values = []
    for u in itertools.product(range(5), repeat=3):
        if sum(u) == 4:
            values.append(lp_worst_case_exact(d, Portfolio([x / 4 for x in u]), alpha))
    assert r.value == pytest.approx(min(values), abs=1e-8)


def test_search_k3_not_worse_than_cent_grid(rng):
    for _ in range(5):
        g = ReturnGrid(1.0, 0, 2)
        d = [random_marginal(rng, g) for _ in range(3)]
        alpha = float(rng.choice([0.5, 1.0, 1.5]))
        exact = optimal_portfolio_fixed_k(d, alpha, RA_W)
        lattice = optimal_portfolio_fixed_k(d, alpha, RA_W, mode="cents", c=6)
        assert exact.value <= lattice.value + 1e-9
        assert lp_worst_case_exact(d, exact.portfolio, alpha) == pytest.approx(exact.value, abs=1e-9)
