"""Worst/best-case probabilities and portfolio search for k stocks.

Three evaluators, all linear programs over joint tables:

* ``lp_worst_case_exact`` - one variable per support cell of the full
  k-dimensional table, one equality per (stock, level).  Exponential in k.
* ``striping_worst_case`` - stocks are combined pairwise up a balanced
  binary tree.  A pair node holds the joint table of its two children's
  bins; its cells are then grouped into equal-width strips of partial
  combined return, and only the strip masses are passed up.
* ``cents_worst_case_exact`` - the same tree, but with one bin per distinct
  partial return.  When every weight is a multiple of ``1/c`` the partial
  returns lie on an integer lattice, so nothing is lost.

Partial returns are kept unnormalized (``sum_{i in node} x_i d_i``), so the
root compares directly against ``alpha``.

Any LP solution of the tree model extends to a genuine k-dimensional joint
table (glue the children conditionally independently inside each bin), so
the tree LP optimizes over exactly the feasible joints, only with the region
test applied to bin representatives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AverageCaseNotSupported,
    BudgetExceeded,
    DimensionMismatch,
    Infeasible,
    NotOnCentLattice,
)
from .return_model import (
    BOUNDARY_TOL,
    Case,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    Sense,
    classify,
    reduce_objective,
    region_mask,
    same_grid,
)
from .simplex import LpProblem, LpSolution, solve_lp

__all__ = [
    "LpProblem", "LpSolution", "solve_lp", "ExactModel", "build_exact_lp",
    "lp_worst_case_exact", "StripingPlan", "striping_plan", "striping_worst_case",
    "cents_worst_case_exact", "cent_units", "PortfolioSearchResult",
    "optimal_portfolio_fixed_k",
]

DEFAULT_BUDGET = 10**6
RA_W = Objective.parse("ra_w")


def _task(objective: Objective):
    if objective.case is Case.AVERAGE:
        raise AverageCaseNotSupported(f"{objective.name} is an average-case objective")
    return reduce_objective(objective)


def _check_inputs(dists: Sequence[MarginalDistribution], portfolio: Portfolio):
    if len(dists) != portfolio.k:
        raise DimensionMismatch(f"{len(dists)} stocks but {portfolio.k} weights")
    if portfolio.k < 2:
        raise DimensionMismatch("need at least two stocks")
    return same_grid(dists)


# ---------------------------------------------------------------------------
# exact LP over the full table

@dataclass
class ExactModel:
    """Transportation LP over the support cells of a k-dimensional table.

    ``cells[n]`` holds the grid indices of variable ``n``; the equality rows
    are the per-(stock, level) marginal constraints.
    """

    cells: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    grid: object

    def mask(self, spec: RegionSpec) -> np.ndarray:
        full = region_mask(spec, self.grid)
        return full[tuple(self.cells.T)]

    def solve(self, mask: np.ndarray, maximize: bool) -> LpSolution:
        if not mask.any() or mask.all():
            # constant objective: skip the simplex
            x = np.zeros(len(mask))
            return LpSolution(1.0 if mask.all() else 0.0, x, 0)
        return solve_lp(LpProblem(mask.astype(float), self.A_eq, self.b_eq, maximize=maximize))

    def table(self, x: np.ndarray) -> np.ndarray:
        m, k = self.grid.m, self.cells.shape[1]
        out = np.zeros((m,) * k)
        out[tuple(self.cells.T)] = x
        return out


def build_exact_lp(dists: Sequence[MarginalDistribution], budget: int = DEFAULT_BUDGET) -> ExactModel:
    grid = same_grid(dists)
    k = len(dists)
    if grid.m ** k > budget:
        raise BudgetExceeded(f"m^k = {grid.m}^{k} exceeds the budget of {budget}",
                             m=grid.m, k=k, budget=budget)
    support = [np.nonzero(d.probs > 0)[0] for d in dists]
    cells = np.array(list(itertools.product(*support)), dtype=int).reshape(-1, k)
    rows, rhs = [], []
    for a, d in enumerate(dists):
        for lvl in support[a]:
            rows.append((cells[:, a] == lvl).astype(float))
            rhs.append(float(d.probs[lvl]))
    return ExactModel(cells, np.array(rows), np.array(rhs), grid)


def lp_worst_case_exact(dists: Sequence[MarginalDistribution], portfolio: Portfolio, alpha: float,
                        objective: Objective = RA_W, budget: int = DEFAULT_BUDGET) -> float:
    """Exact best/worst-case value: optimize the region mass over all joint tables."""
    _check_inputs(dists, portfolio)
    task = _task(objective)
    model = build_exact_lp(dists, budget)
    sol = model.solve(model.mask(task.region(alpha, portfolio)), task.case is Case.WORST)
    return min(1.0, max(0.0, task.finish(sol.value)))


# ---------------------------------------------------------------------------
# pairwise aggregation tree

@dataclass
class _Bin:
    value: object  # representative partial return (float, or int for cents)
    const: float = 0.0  # leaf mass
    terms: list = field(default_factory=list)  # variables summing to the bin mass


class _TreeLp:
    def __init__(self) -> None:
        self.n = 0
        self.rows: list[tuple[dict, float]] = []

    def combine(self, left: list[_Bin], right: list[_Bin]):
        """Joint variables of two bin lists plus their marginal constraints."""
        ids = np.arange(self.n, self.n + len(left) * len(right)).reshape(len(left), len(right))
        self.n += ids.size
        for side, bins in ((0, left), (1, right)):
            for u, b in enumerate(bins):
                row: dict = {}
                for v in (ids[u, :] if side == 0 else ids[:, u]):
                    row[int(v)] = 1.0
                for t in b.terms:
                    row[t] = row.get(t, 0.0) - 1.0
                self.rows.append((row, b.const))
        cells = [(int(ids[u, v]), left[u].value + right[v].value)
                 for u in range(len(left)) for v in range(len(right))]
        return cells

    def problem(self, objective: np.ndarray, maximize: bool) -> LpProblem:
        A = np.zeros((len(self.rows), self.n))
        b = np.zeros(len(self.rows))
        for r, (row, rhs) in enumerate(self.rows):
            for j, coef in row.items():
                A[r, j] += coef
            b[r] = rhs
        return LpProblem(objective, A, b, maximize=maximize)


def _pad_pow2(count: int) -> int:
    size = 1
    while size < count:
        size *= 2
    return size


def _tree_value(leaves: list[list[_Bin]], bin_fn: Callable, inside_fn: Callable,
                maximize: bool) -> tuple[float, _TreeLp]:
    """Build and solve the tree LP; ``bin_fn`` groups a node's cells into bins."""
    dummy = [_Bin(0 if isinstance(leaves[0][0].value, int) else 0.0, 1.0)]
    level = leaves + [dummy] * (_pad_pow2(len(leaves)) - len(leaves))
    lp = _TreeLp()
    while len(level) > 2:
        nxt = []
        for a in range(0, len(level), 2):
            cells = lp.combine(level[a], level[a + 1])
            nxt.append(bin_fn(cells))
        level = nxt
    cells = lp.combine(level[0], level[1])
    c = np.zeros(lp.n)
    for var, value in cells:
        if inside_fn(value):
            c[var] = 1.0
    if not c.any() or all(c[var] for var, _ in cells):
        # region empty or all of the root table: the total mass is 1
        return (1.0 if c.any() else 0.0), lp
    sol = solve_lp(lp.problem(c, maximize))
    return sol.value, lp


def _leaf_bins(dist: MarginalDistribution, value_of: Callable[[int], object]) -> list[_Bin]:
    return [_Bin(value_of(i), float(dist.probs[i])) for i in np.nonzero(dist.probs > 0)[0]]


@dataclass(frozen=True)
class StripingPlan:
    epsilon: float
    strip_count: int
    k: int
    padded_k: int

    @property
    def pairing(self):
        """Nested tuples of stock indices (``None`` for padding), root first."""
        level = [i if i < self.k else None for i in range(self.padded_k)]
        while len(level) > 1:
            level = [(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        return level[0]


def striping_plan(k: int, m: int, epsilon: float) -> StripingPlan:
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    kk = _pad_pow2(k)
    ell = max(1, math.ceil(m * math.log2(kk) / epsilon))
    return StripingPlan(epsilon, ell, k, kk)


def _strip_bins(ell: int):
    def bin_fn(cells):
        values = [v for _, v in cells]
        lo, hi = min(values), max(values)
        width = (hi - lo) / ell
        groups: dict[int, _Bin] = {}
        for var, v in cells:
            # half-open strips [lo + s w, lo + (s+1) w), last one closed
            s = min(int((v - lo) / width), ell - 1) if width > 0 else 0
            b = groups.get(s)
            if b is None:
                b = groups[s] = _Bin(lo + s * width)
            b.terms.append(var)
        return [groups[s] for s in sorted(groups)]
    return bin_fn


def striping_worst_case(dists: Sequence[MarginalDistribution], portfolio: Portfolio, alpha: float,
                        epsilon: float, objective: Objective = RA_W) -> float:
    """Approximate best/worst-case value with strip-aggregated pair tables.

    Each internal node keeps ``ceil(m log2 k / eps)`` equal-width strips of
    its attainable partial-return range; a strip is represented by its lower
    edge, so no cell's return is overstated.  The approximate lower region
    therefore contains the true one and, for the worst case, ``W >= RA_w``.
    With two stocks the root pairs the raw marginals and the result is exact.
    """
    grid = _check_inputs(dists, portfolio)
    task = _task(objective)
    plan = striping_plan(len(dists), grid.m, epsilon)
    rets = grid.returns
    leaves = [_leaf_bins(d, lambda i, w=float(w): w * float(rets[i]))
              for d, w in zip(dists, portfolio.weights)]
    strict = task.strict
    inside = lambda v: bool(classify(v - alpha, Sense.LOWER, strict))
    value, _ = _tree_value(leaves, _strip_bins(plan.strip_count), inside, task.case is Case.WORST)
    return min(1.0, max(0.0, task.finish(value)))


def cent_units(portfolio: Portfolio, c: int, tol: float = 1e-9) -> list[int]:
    """Integer units ``c_i`` with ``x_i = c_i / c``; raises if off the lattice."""
    if int(c) != c or c < 1:
        raise NotOnCentLattice(f"unit count must be a positive integer, got {c}", c=c)
    units = [int(round(float(w) * c)) for w in portfolio.weights]
    for i, (w, u) in enumerate(zip(portfolio.weights, units)):
        if abs(float(w) * c - u) > tol:
            raise NotOnCentLattice(f"weight {w!r} of stock {i} is not a multiple of 1/{c}",
                                   stock=i, weight=float(w), c=int(c))
    if sum(units) != c:
        raise NotOnCentLattice(f"units sum to {sum(units)}, not {c}", c=int(c))
    return units


def _distinct_bins(cells):
    groups: dict[int, _Bin] = {}
    for var, v in cells:
        b = groups.get(v)
        if b is None:
            b = groups[v] = _Bin(v)
        b.terms.append(var)
    return [groups[v] for v in sorted(groups)]


def cents_worst_case_exact(dists: Sequence[MarginalDistribution], portfolio: Portfolio, alpha: float,
                           c: int, objective: Objective = RA_W) -> float:
    """Exact best/worst-case value for a portfolio of ``c`` equal units.

    Partial returns ``sum c_i l_i`` are integers (in units of ``mu / c``), so
    binning by exact value aggregates without error; the region test at the
    root is done in rational arithmetic.
    """
    grid = _check_inputs(dists, portfolio)
    task = _task(objective)
    units = cent_units(portfolio, c)
    levels = grid.levels
    leaves = [_leaf_bins(d, lambda i, u=u: u * int(levels[i])) for d, u in zip(dists, units)]
    scale = Fraction(grid.mu) / int(c)
    A = Fraction(alpha)
    strict = task.strict
    inside = lambda t: (t * scale < A) if strict else (t * scale <= A)
    value, _ = _tree_value(leaves, _distinct_bins, inside, task.case is Case.WORST)
    return min(1.0, max(0.0, task.finish(value)))


# ---------------------------------------------------------------------------
# portfolio search

@dataclass
class PortfolioSearchResult:
    portfolio: Portfolio
    value: float
    candidates: int
    regions: int


def _compositions(c: int, k: int):
    if k == 1:
        yield (c,)
        return
    for first in range(c, -1, -1):
        for rest in _compositions(c - first, k - 1):
            yield (first,) + rest


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> Optional[list[Fraction]]:
    """Gaussian elimination over the rationals; None if singular."""
    n = len(A)
    M = [row[:] + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / pv
                M[r] = [a - f * p for a, p in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _normal_key(a: Sequence[Fraction]) -> tuple:
    lead = next(x for x in a if x != 0)
    s = abs(lead)
    return tuple(x / s for x in a)


def _cone_cells(normals: list[np.ndarray], facets: list[np.ndarray], dim: int) -> list[np.ndarray]:
    """One interior direction for every open cell of a central arrangement.

    Cells are refined one hyperplane at a time; a sign pattern survives if
    the LP ``sign_h * n_h . y >= 1`` is feasible.  ``facets`` must be
    positive on every returned direction.
    """
    def feasible(constraints: list[np.ndarray]) -> Optional[np.ndarray]:
        # y = y_plus - y_minus, constraints g . y >= 1
        G = np.array(constraints).reshape(-1, dim)
        A_ub = -np.hstack([G, -G])
        try:
            sol = solve_lp(LpProblem(np.zeros(2 * dim), A_ub=A_ub, b_ub=-np.ones(len(G))))
        except Infeasible:
            return None
        return sol.x[:dim] - sol.x[dim:]

    cells: list[list[np.ndarray]] = [list(facets)]
    for n in normals:
        nxt = []
        for cons in cells:
            for sgn in (1.0, -1.0):
                if feasible(cons + [sgn * n]) is not None:
                    nxt.append(cons + [sgn * n])
        cells = nxt
    out = []
    for cons in cells:
        y = feasible(cons) if cons else np.ones(dim)
        if y is not None:
            out.append(y)
    return out


def _hyperplane_candidates(dists, alpha: float, budget: int) -> list[Portfolio]:
    """Portfolios covering every region the simplex can induce.

    Each support cell ``d`` defines ``sum x_i (d_i - alpha) = 0`` on the
    simplex.  Vertices of the arrangement (with the facets ``x_i = 0``) give
    every strict region; points just off each vertex, one per adjacent open
    cell, give every non-strict region.
    """
    grid = same_grid(dists)
    k = len(dists)
    mu, A = Fraction(grid.mu), Fraction(alpha)
    support = [np.nonzero(d.probs > 0)[0] for d in dists]
    levels = grid.levels
    planes: dict[tuple, list[Fraction]] = {}
    for cell in itertools.product(*support):
        a = [int(levels[i]) * mu - A for i in cell]
        if any(x != 0 for x in a):
            planes.setdefault(_normal_key(a), a)
    hyper = list(planes.values())
    facets = [[Fraction(int(i == j)) for j in range(k)] for i in range(k)]
    constraints = hyper + facets
    n_combos = math.comb(len(constraints), k - 1)
    if n_combos > budget:
        raise BudgetExceeded(f"{n_combos} vertex systems exceed the budget of {budget}",
                             k=k, hyperplanes=len(hyper), budget=budget)
    ones = [Fraction(1)] * k

    vertices: dict[tuple, list[Fraction]] = {}
    for combo in itertools.combinations(range(len(constraints)), k - 1):
        rows = [constraints[i] for i in combo] + [ones]
        rhs = [Fraction(0)] * (k - 1) + [Fraction(1)]
        x = _solve_exact(rows, rhs)
        if x is None or any(v < 0 for v in x):
            continue
        vertices.setdefault(tuple(x), x)

    # directions within sum(d) = 0, in the basis e_i - e_k
    basis = np.zeros((k, k - 1))
    for i in range(k - 1):
        basis[i, i], basis[k - 1, i] = 1.0, -1.0
    out: list[Portfolio] = []
    for key in sorted(vertices):
        v = vertices[key]
        out.append(Portfolio([float(t) for t in v]))
        active = [a for a in hyper if sum(ai * vi for ai, vi in zip(a, v)) == 0]
        dirs: dict[tuple, np.ndarray] = {}
        for a in active:
            n = np.array([float(t) for t in a]) @ basis
            nrm = np.abs(n).max()
            if nrm > 0:
                dirs.setdefault(tuple(np.round(n / nrm, 12)), n / nrm)
        zero = [np.eye(k)[i] @ basis for i in range(k) if v[i] == 0]
        for y in _cone_cells(list(dirs.values()), zero, k - 1):
            d = [Fraction(float(t)) for t in basis @ y]
            # largest step that crosses no other hyperplane and stays feasible
            limit = Fraction(1)
            for a in hyper:
                av = sum(ai * vi for ai, vi in zip(a, v))
                ad = sum(ai * di for ai, di in zip(a, d))
                if av != 0 and ad != 0 and (av > 0) != (ad > 0):
                    limit = min(limit, abs(av / ad))
            for vi, di in zip(v, d):
                if di < 0:
                    limit = min(limit, vi / -di)
            x = [vi + limit / 2 * di for vi, di in zip(v, d)]
            out.append(Portfolio.normalized([max(0.0, float(t)) for t in x]))
    return out


def optimal_portfolio_fixed_k(dists: Sequence[MarginalDistribution], alpha: float,
                              objective: Objective = RA_W, mode: str = "candidate_hyperplanes",
                              c: int = 100, budget: int = DEFAULT_BUDGET) -> PortfolioSearchResult:
    """Best portfolio for a best- or worst-case objective.

    ``mode="cents"`` tries every portfolio of ``c`` equal units, which is exact
    on that lattice.  ``mode="candidate_hyperplanes"`` tries one portfolio per
    face of the hyperplane arrangement induced by the support cells, which
    is exact over the whole simplex.  Candidates inducing the same region are
    solved once.  Ties go to the first candidate found.
    """
    grid = same_grid(dists)
    k = len(dists)
    task = _task(objective)
    maximize = task.case is Case.WORST
    if mode == "cents":
        n = math.comb(c + k - 1, k - 1)
        if n > budget:
            raise BudgetExceeded(f"{n} lattice portfolios exceed the budget of {budget}")
        best = None
        count = 0
        for units in _compositions(int(c), k):
            pf = Portfolio([u / c for u in units])
            canon = task.finish(cents_worst_case_exact(dists, pf, alpha, c, objective))
            count += 1
            if best is None or canon < best[1] - BOUNDARY_TOL:
                best = (pf, canon)
        return PortfolioSearchResult(best[0], min(1.0, max(0.0, task.finish(best[1]))), count, count)
    if mode != "candidate_hyperplanes":
        raise ValueError(f"unknown search mode {mode!r}")

    model = build_exact_lp(dists, budget)
    candidates = _hyperplane_candidates(dists, alpha, budget)
    seen: dict[bytes, float] = {}
    best = None
    for pf in candidates:
        mask = model.mask(task.region(alpha, pf))
        key = np.packbits(mask).tobytes()
        canon = seen.get(key)
        if canon is None:
            canon = seen[key] = model.solve(mask, maximize).value
        if best is None or canon < best[1] - BOUNDARY_TOL:
            best = (pf, canon)
    value = min(1.0, max(0.0, task.finish(best[1])))
    return PortfolioSearchResult(best[0], value, len(candidates), len(seen))
