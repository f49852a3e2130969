"""Uniform sampling of two-stock joint tables and the average-case estimator.

The feasible joint tables of two stocks form the transportation polytope
``P(r, c)``: nonnegative m x m matrices with row sums ``r`` and column sums
``c``.  Its affine hull is ``T0 + V`` with ``V`` the zero-margin matrices,
spanned by the checkerboard moves ``b(ij)`` (+1 at (i,j) and (i+1,j+1), -1
at (i,j+1) and (i+1,j)).

Sampling is hit-and-run inside the hull: draw a direction uniformly on the
unit sphere of ``V``, intersect the line with the nonnegative orthant (a
min-ratio test over the entries) and jump to a uniform point of the chord.
Many independent walks advance together as one numpy batch.

The average-case objective is the region mass averaged over the uniform
law on ``P(r, c)``; :func:`estimate_average` draws
``N = ceil(100 / (eps^2 delta))`` tables, each from its own walk restarted
at the warm start, and returns the sample mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    AverageCaseNotSupported,
    DimensionMismatch,
    InfeasibleStart,
    InvalidTolerance,
    SumNotOne,
)
from .return_model import (
    PROB_TOL,
    Case,
    JointTable,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    ReturnGrid,
    Sense,
    reduce_objective,
    region_mask,
    same_grid,
)

MEMBERSHIP_TOL = 1e-12
START_SHRINK = 1e-6
# entries per numpy batch (walks x active cells)
_BATCH_CELLS = 1 << 21


@dataclass
class TransportationPolytope:
    """``P(r, c)`` restricted to the rows and columns with positive mass.

    Zero-mass rows and columns force whole lines of the table to zero, so
    they are dropped; ``rows``/``cols`` index the surviving ones.
    """

    grid: ReturnGrid
    r: np.ndarray
    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_marginals(cls, s1: MarginalDistribution, s2: MarginalDistribution) -> "TransportationPolytope":
        return cls.from_sums(same_grid([s1, s2]), s1.probs, s2.probs)

    @classmethod
    def from_sums(cls, grid: ReturnGrid, r, c) -> "TransportationPolytope":
        r = np.asarray(r, dtype=float)
        c = np.asarray(c, dtype=float)
        if r.shape != (grid.m,) or c.shape != (grid.m,):
            raise DimensionMismatch(f"margins of length {r.shape}, {c.shape} for a grid of {grid.m}")
        for name, v in (("rows", r), ("columns", c)):
            if abs(v.sum() - 1.0) > PROB_TOL:
                raise SumNotOne(f"{name} sum to {v.sum()!r}", total=float(v.sum()),
                                deviation=float(v.sum() - 1.0))
        return cls(grid, r, c, np.nonzero(r > 0)[0], np.nonzero(c > 0)[0])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)

    @property
    def dimension(self) -> int:
        a, b = self.shape
        return (a - 1) * (b - 1)

    def independence_point(self) -> np.ndarray:
        return np.outer(self.r[self.rows], self.c[self.cols])

    def expand(self, sub: np.ndarray) -> np.ndarray:
        """Embed active-cell tables (..., a, b) into full (..., m, m) tables."""
        m = self.grid.m
        out = np.zeros(sub.shape[:-2] + (m, m))
        out[..., self.rows[:, None], self.cols[None, :]] = sub
        return out

    def restrict(self, table: np.ndarray) -> np.ndarray:
        return np.asarray(table, dtype=float)[self.rows[:, None], self.cols[None, :]]

    def margin_error(self, table: np.ndarray) -> float:
        t = np.asarray(table, dtype=float)
        return float(max(np.abs(t.sum(axis=-1) - self.r).max(), np.abs(t.sum(axis=-2) - self.c).max()))


def membership(r, c, point, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff the table is nonnegative within ``tol``.

    ``point`` is assumed to satisfy the margins (walks never leave the affine
    hull), so only the m^2 sign checks are made.
    """
    return bool(np.all(np.asarray(point, dtype=float) >= -tol))


class MoveBasis:
    """The ``(a-1)(b-1)`` checkerboard generators of the zero-margin space."""

    def __init__(self, a: int, b: int) -> None:
        self.a, self.b = a, b

    @property
    def size(self) -> int:
        return (self.a - 1) * (self.b - 1)

    def generator(self, i: int, j: int) -> np.ndarray:
        g = np.zeros((self.a, self.b))
        g[i, j] = g[i + 1, j + 1] = 1.0
        g[i, j + 1] = g[i + 1, j] = -1.0
        return g

    @property
    def generators(self) -> list[np.ndarray]:
        return [self.generator(i, j) for i in range(self.a - 1) for j in range(self.b - 1)]

    def matrix(self) -> np.ndarray:
        """Generators as rows of a ``size x (a*b)`` matrix."""
        if self.size == 0:
            return np.zeros((0, self.a * self.b))
        return np.stack([g.ravel() for g in self.generators])

    def combine(self, coeffs: np.ndarray) -> np.ndarray:
        """``sum lambda_ij b(ij)`` for coefficients shaped (..., a-1, b-1)."""
        lam = np.asarray(coeffs, dtype=float)
        out = np.zeros(lam.shape[:-2] + (self.a, self.b))
        out[..., :-1, :-1] += lam
        out[..., 1:, 1:] += lam
        out[..., :-1, 1:] -= lam
        out[..., 1:, :-1] -= lam
        return out

    def coefficients(self, move: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`combine`: the 2-D prefix sums of a zero-margin matrix."""
        d = np.asarray(move, dtype=float)
        return np.cumsum(np.cumsum(d, axis=-2), axis=-1)[..., :-1, :-1]


def _project(g: np.ndarray) -> np.ndarray:
    # orthogonal projection onto zero row and column sums
    return (g - g.mean(axis=-1, keepdims=True) - g.mean(axis=-2, keepdims=True)
            + g.mean(axis=(-2, -1), keepdims=True))


def default_steps(dimension: int) -> int:
    """Walk length per emitted sample.

    On a segment any hit-and-run step lands uniformly on the whole polytope,
    so one step is exact; otherwise ``64 * dimension``.
    """
    return 1 if dimension <= 1 else 64 * dimension


@dataclass
class WalkConfig:
    steps_per_sample: Optional[int] = None
    rng_seed: int = 0
    warm_start: Optional[JointTable] = None

    def steps_for(self, polytope: TransportationPolytope) -> int:
        if self.steps_per_sample is not None:
            if self.steps_per_sample < 1:
                raise ValueError("steps_per_sample must be positive")
            return int(self.steps_per_sample)
        return default_steps(polytope.dimension)


def ball_radius_hint(polytope: TransportationPolytope) -> float:
    """Smallest positive margin entry; the walk does not depend on it."""
    return float(min(polytope.r[polytope.rows].min(), polytope.c[polytope.cols].min()))


def _start_point(polytope: TransportationPolytope, config: WalkConfig) -> np.ndarray:
    center = polytope.independence_point()
    if config.warm_start is None:
        return center
    full = np.asarray(config.warm_start.entries, dtype=float)
    if full.shape != (polytope.grid.m,) * 2:
        raise InfeasibleStart(f"warm start has shape {full.shape}")
    err = polytope.margin_error(full)
    if err > PROB_TOL:
        raise InfeasibleStart(f"warm start misses the margins by {err:.3e}", deviation=err)
    if not membership(polytope.r, polytope.c, full):
        raise InfeasibleStart(f"warm start has a negative entry {full.min():.3e}")
    inactive = full.sum() - polytope.restrict(full).sum()
    if abs(inactive) > PROB_TOL:
        raise InfeasibleStart("warm start puts mass on a zero-margin row or column")
    # nudge boundary starts into the relative interior
    return (1.0 - START_SHRINK) * polytope.restrict(full) + START_SHRINK * center


def _walk(x: np.ndarray, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Advance a batch of points ``x`` (B, a, b) by ``steps`` hit-and-run moves."""
    B = x.shape[0]
    for _ in range(steps):
        d = _project(rng.standard_normal(x.shape))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = -x / d
        # the line x + t d stays nonnegative for t in [lo, hi]
        hi = np.where(d < 0, ratio, np.inf).reshape(B, -1).min(axis=1)
        lo = np.where(d > 0, ratio, -np.inf).reshape(B, -1).max(axis=1)
        hi = np.maximum(hi, 0.0)
        lo = np.minimum(lo, 0.0)
        t = lo + (hi - lo) * rng.random(B)
        x = x + t[:, None, None] * d
        np.maximum(x, 0.0, out=x)
    return x


def sample_tables(polytope: TransportationPolytope, n: int, config: Optional[WalkConfig] = None,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``n`` independent draws as full (n, m, m) tables."""
    config = config or WalkConfig()
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    start = _start_point(polytope, config)
    out = np.empty((n, polytope.grid.m, polytope.grid.m))
    for lo, sub in _batches(polytope, n, config, rng, start):
        out[lo:lo + len(sub)] = polytope.expand(sub)
    return out


def _batches(polytope, n, config, rng, start):
    if polytope.dimension == 0:
        # a single feasible table
        for lo in range(0, n, 1 << 16):
            yield lo, np.broadcast_to(start, (min(1 << 16, n - lo),) + start.shape).copy()
        return
    steps = config.steps_for(polytope)
    size = max(1, _BATCH_CELLS // start.size)
    for lo in range(0, n, size):
        b = min(size, n - lo)
        yield lo, _walk(np.broadcast_to(start, (b,) + start.shape).copy(), steps, rng)


def sample_table(polytope: TransportationPolytope, basis: Optional[MoveBasis] = None,
                 config: Optional[WalkConfig] = None) -> JointTable:
    """One draw from ``P(r, c)``.

    ``basis`` is accepted for symmetry with the generator representation;
    directions are drawn isotropically in the same span.
    """
    table = sample_tables(polytope, 1, config)[0]
    return JointTable(polytope.grid, table)


@dataclass
class AverageEstimate:
    value: float
    n_samples: int
    chains: int
    steps_per_sample: int
    seed: int

    def __float__(self) -> float:
        return self.value


def sample_count(epsilon: float, delta: float) -> int:
    for name, v in (("epsilon", epsilon), ("delta", delta)):
        if not (0.0 < v < 1.0):
            raise InvalidTolerance(f"{name} must lie in (0, 1), got {v}", **{name: v})
    return math.ceil(100.0 / (epsilon * epsilon * delta))


def estimate_average(polytope: TransportationPolytope, alpha: float, portfolio: Portfolio,
                     epsilon: float, delta: float, config: Optional[WalkConfig] = None,
                     sense: Sense = Sense.LOWER, strict: bool = False) -> AverageEstimate:
    """Mean region mass over ``N = ceil(100/(eps^2 delta))`` sampled tables.

    With exactly uniform samples the mean is within ``eps`` of the true
    average with probability at least ``1 - delta`` (Chebyshev, single-sample
    variance at most 1).  A region covering all or none of the support gives
    1.0 or 0.0 without sampling.
    """
    config = config or WalkConfig()
    n = sample_count(epsilon, delta)
    if portfolio.k != 2:
        raise DimensionMismatch(f"average case needs two stocks, got k={portfolio.k}")
    mask = polytope.restrict(region_mask(RegionSpec(alpha, portfolio, sense, strict), polytope.grid))
    steps = 0 if polytope.dimension == 0 else config.steps_for(polytope)
    if mask.all() or not mask.any():
        return AverageEstimate(1.0 if mask.all() else 0.0, n, 0, 0, config.rng_seed)
    rng = np.random.default_rng(config.rng_seed)
    start = _start_point(polytope, config)
    flat = mask.ravel().astype(float)
    total = 0.0
    for _, sub in _batches(polytope, n, config, rng, start):
        total += float(np.sum(sub.reshape(len(sub), -1) @ flat))
    value = min(1.0, max(0.0, total / n))
    return AverageEstimate(value, n, n, steps, config.rng_seed)


def average_objective(s1: MarginalDistribution, s2: MarginalDistribution, alpha: float,
                      portfolio: Portfolio, objective: Objective, epsilon: float, delta: float,
                      config: Optional[WalkConfig] = None) -> AverageEstimate:
    """Any average-case objective through its canonical lower-region estimate.

    ``AG_a`` and the strict variants are complements of a lower-region
    average with flipped strictness.
    """
    if objective.case is not Case.AVERAGE:
        raise AverageCaseNotSupported(f"{objective.name} is not an average-case objective")
    task = reduce_objective(objective)
    est = estimate_average(TransportationPolytope.from_marginals(s1, s2), alpha, portfolio,
                           epsilon, delta, config, Sense.LOWER, task.strict)
    est.value = min(1.0, max(0.0, task.finish(est.value)))
    return est
