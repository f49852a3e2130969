"""Slow, independent reference computations used to cross-check the fast paths.

Nothing here is clever on purpose: an explicit network with exact rational
augmenting paths, brute-force evaluation at every distinct slope, a closed
form for the one-dimensional 2 x 2 polytope, and basic-solution enumeration
for tiny LPs.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import AverageCaseNotSupported, BudgetExceeded, Infeasible
from .greedy_flow import FlowProblem, greedy_flow
from .return_model import (
    Case,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    Sense,
    region_mask,
    region_membership,
    reduce_objective,
    same_grid,
)
from .simplex import LpProblem


@dataclass
class ExplicitFlowNetwork:
    """Directed network with all O(m^2) middle edges materialized."""

    nodes: list
    capacity: dict = field(default_factory=dict)  # (u, v) -> Fraction
    source: object = "s"
    sink: object = "t"

    def add_edge(self, u, v, cap) -> None:
        self.capacity[(u, v)] = self.capacity.get((u, v), Fraction(0)) + Fraction(cap)

    @classmethod
    def from_problem(cls, problem: FlowProblem) -> "ExplicitFlowNetwork":
        grid = problem.s1.grid
        levels = list(range(grid.m1, grid.m2 + 1))
        net = cls(nodes=["s", "t"] + [("v", i) for i in levels] + [("w", j) for j in levels])
        for idx, i in enumerate(levels):
            net.add_edge("s", ("v", i), problem.s1.probs[idx])
            net.add_edge(("w", i), "t", problem.s2.probs[idx])
        for i in levels:
            for j in levels:
                if region_membership(problem.spec, (grid.value(i), grid.value(j))):
                    net.add_edge(("v", i), ("w", j), 1)
        return net

    def permuted(self, mapping: dict) -> "ExplicitFlowNetwork":
        """Same network with nodes renamed through ``mapping`` (identity for missing)."""
        ren = lambda u: mapping.get(u, u)
        net = ExplicitFlowNetwork(nodes=[ren(u) for u in self.nodes],
                                  source=ren(self.source), sink=ren(self.sink))
        for (u, v), cap in self.capacity.items():
            net.add_edge(ren(u), ren(v), cap)
        return net


def maxflow_reference(net: ExplicitFlowNetwork) -> float:
    """Edmonds-Karp on exact rationals (float inputs convert losslessly)."""
    residual: dict = {}
    adj: dict = {u: [] for u in net.nodes}
    for (u, v), cap in net.capacity.items():
        if (u, v) not in residual:
            adj[u].append(v)
            adj[v].append(u)
            residual.setdefault((v, u), Fraction(0))
        residual[(u, v)] = residual.get((u, v), Fraction(0)) + cap
    s, t = net.source, net.sink
    flow = Fraction(0)
    while True:
        parent = {s: None}
        queue = deque([s])
        while queue and t not in parent:
            u = queue.popleft()
            for v in adj[u]:
                if v not in parent and residual[(u, v)] > 0:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            return float(flow)
        bottleneck = None
        v = t
        while parent[v] is not None:
            u = parent[v]
            cap = residual[(u, v)]
            bottleneck = cap if bottleneck is None else min(bottleneck, cap)
            v = u
        v = t
        while parent[v] is not None:
            u = parent[v]
            residual[(u, v)] -= bottleneck
            residual[(v, u)] += bottleneck
            v = u
        flow += bottleneck


def reference_max_mass(s1: MarginalDistribution, s2: MarginalDistribution, spec: RegionSpec) -> float:
    return maxflow_reference(ExplicitFlowNetwork.from_problem(FlowProblem(s1, s2, spec)))


def reference_objective(s1: MarginalDistribution, s2: MarginalDistribution,
                        portfolio: Portfolio, alpha: float, objective: Objective,
                        flow=None) -> float:
    """Objective value straight from its definition, no complement rewriting.

    RA is the mass of L (or L**), AG the mass of U (or U**); worst/best pick the
    max or min over joint tables.  The minimum mass of a region is obtained
    as total mass minus the maximum mass of its complement.
    """
    flow = flow or (lambda spec: greedy_flow(FlowProblem(s1, s2, spec)).value)
    if objective.case is Case.AVERAGE:
        raise AverageCaseNotSupported("no exact reference for the average case")
    sense = Sense.LOWER if objective.investor.value == "ra" else Sense.UPPER
    spec = RegionSpec(alpha, portfolio, sense, objective.strict)
    want_max = (objective.investor.value == "ra") == (objective.case is Case.WORST)
    if want_max:
        return flow(spec)
    return 1.0 - flow(spec.complement())


def distinct_breakpoints(grid, alpha: float) -> list[Fraction]:
    """Sorted weights ``x1`` in (0, 1) at which some grid pair lies on the line."""
    A = Fraction(alpha) / Fraction(grid.mu)
    levels = range(grid.m1, grid.m2 + 1)
    out = set()
    for i in levels:
        for j in levels:
            if i != j:
                t = (A - j) / (i - j)
                if 0 < t < 1:
                    out.add(t)
    return sorted(out)


def slope_candidates(grid, alpha: float) -> list[float]:
    """x1 = 0, then each open gap midpoint and breakpoint in increasing order, then 1."""
    bps = [Fraction(0)] + distinct_breakpoints(grid, alpha) + [Fraction(1)]
    cands = [0.0]
    for lo, hi in zip(bps, bps[1:]):
        cands.append(float((lo + hi) / 2))
        cands.append(float(hi))
    return cands


@dataclass
class ExhaustiveResult:
    portfolio: Portfolio
    value: float
    evaluations: int


def exhaustive_two_stock_optimum(s1: MarginalDistribution, s2: MarginalDistribution,
                                 alpha: float, objective: Objective,
                                 tie_tol: float = 1e-12) -> ExhaustiveResult:
    """Evaluate the objective at one portfolio per distinct region; keep the best.

    Ties are broken toward the smallest ``x1`` (first candidate within
    ``tie_tol`` of the optimum).
    """
    grid = same_grid([s1, s2])
    sign = -1.0 if objective.maximize else 1.0
    best_val, best_x, count = None, None, 0
    values = []
    for x1 in slope_candidates(grid, alpha):
        pf = Portfolio.two(x1)
        v = reference_objective(s1, s2, pf, alpha, objective)
        values.append((x1, v))
        count += 1
    target = min(sign * v for _, v in values)
    for x1, v in values:
        if sign * v <= target + tie_tol:
            best_x, best_val = x1, v
            break
    return ExhaustiveResult(Portfolio.two(best_x), best_val, count)


def analytic_2x2_average(r, c, alpha: float, portfolio: Portfolio, grid,
                         sense: Sense = Sense.LOWER, strict: bool = False) -> float:
    """Exact mean region mass over the segment of 2 x 2 tables.

    Tables are ``[[a, r0 - a], [c0 - a, 1 - r0 - c0 + a]]`` with ``a`` in
    ``[max(0, r0 + c0 - 1), min(r0, c0)]``; region mass is affine in ``a`` so
    the mean is its value at the midpoint.  A degenerate segment (single
    table) yields that table's mass.
    """
    if grid.m != 2:
        raise ValueError("closed form needs a two-point grid")
    r0, c0 = float(r[0]), float(c[0])
    lo, hi = max(0.0, r0 + c0 - 1.0), min(r0, c0)
    a = 0.5 * (lo + hi)
    table = np.array([[a, r0 - a], [c0 - a, 1.0 - r0 - c0 + a]])
    mask = region_mask(RegionSpec(alpha, portfolio, sense, strict), grid)
    return float(table[mask].sum())


def lp_vertex_enumeration(problem: LpProblem, max_vars: int = 12) -> float:
    """Optimum over all basic feasible solutions (inequalities get slacks)."""
    n = problem.n
    m_ub = problem.A_ub.shape[0]
    total = n + m_ub
    if n > max_vars:
        raise BudgetExceeded(f"{n} variables exceed the enumeration budget of {max_vars}")
    A = np.zeros((problem.A_eq.shape[0] + m_ub, total))
    A[: problem.A_eq.shape[0], :n] = problem.A_eq
    A[problem.A_eq.shape[0]:, :n] = problem.A_ub
    A[problem.A_eq.shape[0]:, n:] = np.eye(m_ub)
    b = np.concatenate([problem.b_eq, problem.b_ub])
    c = np.concatenate([problem.c, np.zeros(m_ub)])

    # keep a maximal set of independent rows
    keep: list[int] = []
    for i in range(A.shape[0]):
        if np.linalg.matrix_rank(A[keep + [i]]) > len(keep):
            keep.append(i)
    if A.shape[0] and len(keep) < A.shape[0]:
        sol, *_ = np.linalg.lstsq(A[keep], b[keep], rcond=None)
        if np.max(np.abs(A @ sol - b)) > 1e-9:
            raise Infeasible("inconsistent equality system")
    A, b = A[keep], b[keep]
    rank = A.shape[0]

    best: Optional[float] = None
    sign = -1.0 if problem.maximize else 1.0
    if rank == 0:
        return 0.0 if np.all(sign * c >= 0) else math.inf
    for cols in itertools.combinations(range(total), rank):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.any(xb < -1e-9):
            continue
        x = np.zeros(total)
        x[list(cols)] = xb
        val = float(c @ x)
        if best is None or sign * val < sign * best:
            best = val
    if best is None:
        raise Infeasible("no basic feasible solution")
    return best
