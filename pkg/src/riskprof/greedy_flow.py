"""Two-stock extreme probabilities by greedy flow on a staircase network.

The network has a source feeding one node per return of stock 1 (capacity
``S1``), one node per return of stock 2 draining into the sink (capacity
``S2``), and a unit edge between ``(i, j)`` whenever the return pair lies in
the region.  Its maximum flow is the largest mass any joint distribution can
put into the region.

Because the weights are nonnegative, a lower region is closed downward in
both coordinates, so every row's admissible columns form a prefix and the
prefixes are nested.  Scanning rows from the top and columns from the bottom
and pushing greedily is then optimal and takes at most ``2m - 1`` steps.
Upper regions are closed upward; reversing both axes turns them into the
lower case, which is how they are handled here.

Internally everything runs in *rank* coordinates ``p, q = 0..m-1`` where the
region is closed downward; ``_Oriented`` maps ranks back to grid levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AverageCaseNotSupported, DimensionMismatch
from .return_model import (
    BOUNDARY_TOL,
    Case,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    Sense,
    reduce_objective,
    same_grid,
)

RESIDUAL_EPS = 1e-15

# arithmetic operations charged per loop step: capacity query (2 mul, 1 add,
# 1 sub, 1 compare), the cw <= cv test, and the push bookkeeping
_OPS_QUERY = 5
_OPS_PUSH = 6


@dataclass(frozen=True)
class FlowProblem:
    s1: MarginalDistribution
    s2: MarginalDistribution
    spec: RegionSpec

    def __post_init__(self) -> None:
        if self.spec.k != 2:
            raise DimensionMismatch(f"greedy flow needs a 2-stock portfolio, got k={self.spec.k}")
        same_grid([self.s1, self.s2])


@dataclass
class FlowResult:
    value: float
    witness: Optional[list[tuple[int, int, float]]] = None
    iterations: int = 0
    ops: int = 0


@dataclass
class _Oriented:
    """Rank-ordered view of a flow problem in which the region is a down-set."""

    r: list[float]
    c: list[float]
    ret1: list[float]
    ret2: list[float]
    level1: list[int]
    level2: list[int]
    x1: float
    x2: float
    alpha: float
    sign: float
    strict: bool

    @property
    def m(self) -> int:
        return len(self.r)

    def inside(self, p: int, q: int) -> bool:
        h = self.sign * ((self.x1 * self.ret1[p] + self.x2 * self.ret2[q]) - self.alpha)
        return h < -BOUNDARY_TOL if self.strict else h <= BOUNDARY_TOL


def orient(problem: FlowProblem) -> _Oriented:
    grid = problem.s1.grid
    levels = list(range(grid.m1, grid.m2 + 1))
    order = list(range(grid.m))
    sign = 1.0
    if problem.spec.sense is Sense.UPPER:
        order.reverse()
        sign = -1.0
    rets = grid.returns.astype(float)
    w = problem.spec.portfolio.weights
    return _Oriented(
        r=[float(problem.s1.probs[o]) for o in order],
        c=[float(problem.s2.probs[o]) for o in order],
        ret1=[float(rets[o]) for o in order],
        ret2=[float(rets[o]) for o in order],
        level1=[levels[o] for o in order],
        level2=[levels[o] for o in order],
        x1=float(w[0]), x2=float(w[1]),
        alpha=float(problem.spec.alpha), sign=sign, strict=problem.spec.strict,
    )


def greedy_flow(problem: FlowProblem, witness: bool = False) -> FlowResult:
    """Maximum flow of the staircase network in at most ``2m - 1`` steps.

    Capacities of the middle edges are evaluated on demand; the O(m^2) edge
    set is never built.  With ``witness=True`` the pushed masses are returned
    as ``(level1, level2, mass)`` triples, a partial joint table whose region
    mass equals the flow value.
    """
    o = orient(problem)
    m = o.m
    r, c, a, b = o.r, o.c, o.ret1, o.ret2
    x1, x2, alpha, sign, strict = o.x1, o.x2, o.alpha, o.sign, o.strict
    tol = BOUNDARY_TOL
    pushes: Optional[list[tuple[int, int, float]]] = [] if witness else None

    # Kahan-compensated running total
    total = 0.0
    comp = 0.0
    iterations = 0
    ops = 0
    p = m - 1
    q = 0
    cv = r[p]
    cw = c[q]
    while True:
        iterations += 1
        h = sign * ((x1 * a[p] + x2 * b[q]) - alpha)
        edge = h < -tol if strict else h <= tol
        ops += _OPS_QUERY
        if edge and cw <= cv:
            y = cw - comp
            t = total + y
            comp = (t - total) - y
            total = t
            cv -= cw
            if cv < RESIDUAL_EPS:
                cv = 0.0
            if pushes is not None and cw > 0:
                pushes.append((p, q, cw))
            ops += _OPS_PUSH
            q += 1
            if q >= m:
                break
            cw = c[q]
        else:
            if edge:
                y = cv - comp
                t = total + y
                comp = (t - total) - y
                total = t
                cw -= cv
                if cw < RESIDUAL_EPS:
                    cw = 0.0
                if pushes is not None and cv > 0:
                    pushes.append((p, q, cv))
                ops += _OPS_PUSH
            p -= 1
            if p < 0:
                break
            cv = r[p]

    value = min(1.0, max(0.0, total))
    wit = None
    if pushes is not None:
        wit = [(o.level1[pp], o.level2[qq], mass) for pp, qq, mass in pushes]
    return FlowResult(value, wit, iterations, ops)


def witness_table(problem: FlowProblem, result: FlowResult) -> np.ndarray:
    """Dense m x m array of the witness masses (rows: stock 1, cols: stock 2)."""
    if result.witness is None:
        raise ValueError("flow was computed without a witness")
    grid = problem.s1.grid
    table = np.zeros((grid.m, grid.m))
    for i, j, mass in result.witness:
        table[i - grid.m1, j - grid.m1] += mass
    return table


@dataclass
class MinCut:
    """Source side of an s-t cut and its capacity.

    ``rows``/``cols`` are grid levels of the stock-1/stock-2 nodes on the
    source side; ``crossing_edges`` counts unit middle edges leaving it (zero
    by construction).
    """

    rows: list[int]
    cols: list[int]
    capacity: float
    crossing_edges: int


def min_cut_certificate(problem: FlowProblem) -> MinCut:
    """Minimum cut of the staircase network in O(m).

    Every cut of the form "rows ranked ``k`` and above, plus all columns
    those rows can reach" has no unit edge leaving the source side, so its
    capacity is ``sum(r[:k]) + sum(c[:J(k)])`` with ``J(k)`` the prefix length
    of row ``k``.  The nested prefixes make the cheapest such cut a minimum
    cut; comparing its capacity with the greedy value certifies the flow.
    """
    o = orient(problem)
    m = o.m
    # prefix length per row, nonincreasing in p, via one monotone pointer
    prefix = [0] * (m + 1)
    q = m
    for p in range(m):
        while q > 0 and not o.inside(p, q - 1):
            q -= 1
        prefix[p] = q
    row_sum = [0.0] * (m + 1)
    for p in range(m):
        row_sum[p + 1] = row_sum[p] + o.r[p]
    col_sum = [0.0] * (m + 1)
    for q in range(m):
        col_sum[q + 1] = col_sum[q] + o.c[q]
    best_k = min(range(m + 1), key=lambda k: row_sum[k] + col_sum[prefix[k]])
    ell = prefix[best_k]
    crossing = sum(1 for p in range(best_k, m) for qq in range(ell, m) if o.inside(p, qq))
    return MinCut(
        rows=sorted(o.level1[p] for p in range(best_k, m)),
        cols=sorted(o.level2[qq] for qq in range(ell)),
        capacity=row_sum[best_k] + col_sum[ell] + crossing,
        crossing_edges=crossing,
    )


def max_region_mass(s1: MarginalDistribution, s2: MarginalDistribution, spec: RegionSpec) -> float:
    return greedy_flow(FlowProblem(s1, s2, spec)).value


def canonical_two_stock(s1: MarginalDistribution, s2: MarginalDistribution,
                        portfolio: Portfolio, alpha: float, case: Case, strict: bool) -> float:
    """Max (WORST) or min (BEST) mass of the lower region ``L`` / ``L**``.

    The minimum mass in a region is one minus the maximum mass in its
    complement, so both cases are a single greedy run.
    """
    lower = RegionSpec(alpha, portfolio, Sense.LOWER, strict)
    if case is Case.WORST:
        return max_region_mass(s1, s2, lower)
    if case is Case.BEST:
        return 1.0 - max_region_mass(s1, s2, lower.complement())
    raise AverageCaseNotSupported("average case needs the sampler")


def worst_case_two_stock(s1: MarginalDistribution, s2: MarginalDistribution,
                         portfolio: Portfolio, alpha: float, objective: Objective) -> float:
    """Value of a best- or worst-case objective at a fixed two-stock portfolio."""
    if objective.case is Case.AVERAGE:
        raise AverageCaseNotSupported(f"{objective.name} is an average-case objective")
    task = reduce_objective(objective)
    value = canonical_two_stock(s1, s2, portfolio, alpha, task.case, task.strict)
    return min(1.0, max(0.0, task.finish(value)))
