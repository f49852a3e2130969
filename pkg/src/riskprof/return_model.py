"""Domain model: return grid, marginals, portfolios, regions and objectives.

Returns live on the grid ``{l * mu : l = m1..m2}`` (percent).  A joint
distribution of ``k`` stocks is a k-dimensional table indexed by grid levels
whose axis-slices sum to the stock marginals.

All twelve investor objectives reduce to one of three canonical
computations on a *lower* region (``sum x_i d_i <= alpha`` or ``< alpha``):

* WORST  - maximum region mass over feasible tables,
* BEST   - minimum region mass over feasible tables,
* AVERAGE - mean region mass under the uniform law on feasible tables,

optionally complemented (``1 - value``).  The canonical quantity is always
*minimized* over portfolios; an aggressive investor's maximization becomes a
minimization through the complement.  See :func:`reduce_objective`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BelowFloor,
    DimensionMismatch,
    GridMismatch,
    InvalidGrid,
    InvalidPortfolio,
    NegativeProbability,
    SumNotOne,
)

PROB_TOL = 1e-9
WEIGHT_TOL = 1e-12
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class ReturnGrid:
    mu: float
    m1: int
    m2: int

    def __post_init__(self) -> None:
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise InvalidGrid(f"mu must be positive, got {self.mu}", mu=self.mu)
        if int(self.m1) != self.m1 or int(self.m2) != self.m2:
            raise InvalidGrid("m1 and m2 must be integers", m1=self.m1, m2=self.m2)
        object.__setattr__(self, "m1", int(self.m1))
        object.__setattr__(self, "m2", int(self.m2))
        if self.m1 >= self.m2:
            raise InvalidGrid(f"need m1 < m2, got {self.m1} >= {self.m2}",
                              m1=self.m1, m2=self.m2)

    @property
    def m(self) -> int:
        return self.m2 - self.m1 + 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.m1, self.m2 + 1)

    @property
    def returns(self) -> np.ndarray:
        """Grid returns in percent, ``levels * mu``."""
        return self.levels * self.mu

    def index(self, level: int) -> int:
        if not self.m1 <= level <= self.m2:
            raise GridMismatch(f"level {level} outside [{self.m1}, {self.m2}]")
        return level - self.m1

    def value(self, level: int) -> float:
        return level * self.mu

    @property
    def lowest(self) -> float:
        return self.m1 * self.mu

    @property
    def highest(self) -> float:
        return self.m2 * self.mu


@dataclass(frozen=True, eq=False)
class MarginalDistribution:
    """Probability vector of one stock over the grid, indexed by ``l - m1``.

    Construction only checks the shape; call :func:`validate_marginal` for the
    probability axioms.
    """

    grid: ReturnGrid
    probs: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.shape[0] != self.grid.m:
            raise GridMismatch(
                f"expected {self.grid.m} probabilities, got {probs.shape[0]}",
                stock=self.name, expected=self.grid.m, got=int(probs.shape[0]))
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def prob(self, level: int) -> float:
        return float(self.probs[self.grid.index(level)])

    def cdf(self, alpha: float) -> float:
        """P(return <= alpha) with the usual boundary tolerance."""
        mask = self.grid.returns <= alpha + BOUNDARY_TOL
        return float(np.sum(self.probs[mask]))


def validate_marginal(dist: MarginalDistribution, floor: float = 0.0) -> MarginalDistribution:
    """Check nonnegativity, unit mass and the optional floor on nonzero entries."""
    probs = dist.probs
    if np.any(probs < 0):
        idx = int(np.argmin(probs))
        raise NegativeProbability(
            f"stock {dist.name!r}: probability {probs[idx]} at level {dist.grid.m1 + idx}",
            stock=dist.name, level=dist.grid.m1 + idx, value=float(probs[idx]))
    total = math.fsum(probs.tolist())
    if abs(total - 1.0) > PROB_TOL:
        raise SumNotOne(
            f"stock {dist.name!r}: probabilities sum to {total!r}",
            stock=dist.name, total=total, deviation=total - 1.0)
    if floor > 0:
        nz = probs[probs > 0]
        if nz.size and nz.min() < floor:
            raise BelowFloor(
                f"stock {dist.name!r}: nonzero probability {nz.min()} below floor {floor}",
                stock=dist.name, value=float(nz.min()), floor=floor)
    return dist


def same_grid(dists: Sequence[MarginalDistribution]) -> ReturnGrid:
    if not dists:
        raise DimensionMismatch("need at least one marginal")
    grid = dists[0].grid
    for d in dists[1:]:
        if d.grid != grid:
            raise GridMismatch("marginals are defined on different grids",
                               stock=d.name)
    return grid


@dataclass(frozen=True, eq=False)
class Portfolio:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise InvalidPortfolio("empty portfolio")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidPortfolio(f"weights must be finite and nonnegative: {w.tolist()}")
        if abs(math.fsum(w.tolist()) - 1.0) > WEIGHT_TOL:
            raise InvalidPortfolio(f"weights sum to {math.fsum(w.tolist())!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, raw: Sequence[float]) -> "Portfolio":
        w = np.asarray(raw, dtype=float)
        total = math.fsum(w.tolist())
        if total <= 0:
            raise InvalidPortfolio("weights must have positive total")
        w = w / total
        # push the rounding residue onto the largest weight
        w[int(np.argmax(w))] += 1.0 - math.fsum(w.tolist())
        return cls(np.clip(w, 0.0, None))

    @classmethod
    def two(cls, x1: float) -> "Portfolio":
        return cls([x1, 1.0 - x1])

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    def __getitem__(self, i: int) -> float:
        return float(self.weights[i])

    def tolist(self) -> list[float]:
        return [float(v) for v in self.weights]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Portfolio) and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash(tuple(self.weights.tolist()))

    def __repr__(self) -> str:
        return f"Portfolio({self.tolist()})"


class Sense(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class RegionSpec:
    """(Lower, False) is L, (Lower, True) is L**, (Upper, False) is U, (Upper, True) is U**."""

    alpha: float
    portfolio: Portfolio
    sense: Sense = Sense.LOWER
    strict: bool = False

    @property
    def k(self) -> int:
        return self.portfolio.k

    def complement(self) -> "RegionSpec":
        other = Sense.UPPER if self.sense is Sense.LOWER else Sense.LOWER
        return RegionSpec(self.alpha, self.portfolio, other, not self.strict)


def combined_return(weights: Sequence[float], deltas: Sequence[float]) -> float:
    """``sum x_i * d_i`` accumulated left to right.

    :func:`region_mask` performs the identical sequence of float operations so
    scalar and vectorized classification never disagree.
    """
    total = 0.0
    for w, d in zip(weights, deltas):
        total = total + float(w) * float(d)
    return total


def classify(diff, sense: Sense, strict: bool):
    """Membership from ``combined - alpha``; ties within 1e-12 sit on the line."""
    if sense is Sense.LOWER:
        return diff < -BOUNDARY_TOL if strict else diff <= BOUNDARY_TOL
    return diff > BOUNDARY_TOL if strict else diff >= -BOUNDARY_TOL


def region_membership(spec: RegionSpec, delta: Sequence[float]) -> bool:
    if len(delta) != spec.k:
        raise DimensionMismatch(f"return vector has {len(delta)} entries, portfolio has {spec.k}")
    diff = combined_return(spec.portfolio.weights, delta) - spec.alpha
    return bool(classify(diff, spec.sense, spec.strict))


def region_mask(spec: RegionSpec, grid: ReturnGrid) -> np.ndarray:
    """Boolean k-dimensional array over the grid, True inside the region."""
    k = spec.k
    rets = grid.returns.astype(float)
    total = np.zeros((1,) * k)
    for axis, w in enumerate(spec.portfolio.weights):
        shape = [1] * k
        shape[axis] = grid.m
        total = total + float(w) * rets.reshape(shape)
    total = np.broadcast_to(total, (grid.m,) * k)
    return classify(total - spec.alpha, spec.sense, spec.strict)


@dataclass(frozen=True, eq=False)
class JointTable:
    """Joint distribution table; axis ``a`` is indexed by stock ``a``'s grid level."""

    grid: ReturnGrid
    entries: np.ndarray

    def __post_init__(self) -> None:
        e = np.array(self.entries, dtype=float)
        if e.ndim < 1 or any(s != self.grid.m for s in e.shape):
            raise GridMismatch(f"table shape {e.shape} does not match grid size {self.grid.m}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def k(self) -> int:
        return self.entries.ndim

    def marginal(self, axis: int) -> np.ndarray:
        other = tuple(a for a in range(self.k) if a != axis)
        return self.entries.sum(axis=other) if other else self.entries.copy()

    def check(self, dists: Sequence[MarginalDistribution] | None = None,
              tol: float = PROB_TOL, neg_tol: float = 0.0) -> None:
        """Raise if the table is not a joint distribution with the given marginals."""
        if np.any(self.entries < -neg_tol):
            raise NegativeProbability(f"table entry {self.entries.min()} is negative")
        total = float(self.entries.sum())
        if abs(total - 1.0) > tol:
            raise SumNotOne(f"table sums to {total!r}", total=total, deviation=total - 1.0)
        if dists is None:
            return
        if len(dists) != self.k:
            raise DimensionMismatch(f"{len(dists)} marginals for a {self.k}-dimensional table")
        for axis, d in enumerate(dists):
            dev = float(np.max(np.abs(self.marginal(axis) - d.probs)))
            if dev > tol:
                raise SumNotOne(f"axis {axis} marginal deviates by {dev}",
                                stock=d.name, axis=axis, deviation=dev)


def independence_table(dists: Sequence[MarginalDistribution]) -> JointTable:
    grid = same_grid(dists)
    table = np.ones((1,) * len(dists))
    for axis, d in enumerate(dists):
        shape = [1] * len(dists)
        shape[axis] = grid.m
        table = table * d.probs.reshape(shape)
    return JointTable(grid, table)


def region_mass(table: JointTable, spec: RegionSpec) -> float:
    if table.k != spec.k:
        raise DimensionMismatch(f"table has {table.k} axes, portfolio has {spec.k} weights")
    mask = region_mask(spec, table.grid)
    mass = math.fsum(table.entries[mask].tolist())
    return min(1.0, max(0.0, mass))


# ---------------------------------------------------------------------------
# objectives

class Investor(enum.Enum):
    RISK_AVERSE = "ra"
    AGGRESSIVE = "ag"


class Case(enum.Enum):
    BEST = "b"
    WORST = "w"
    AVERAGE = "a"


@dataclass(frozen=True)
class Objective:
    investor: Investor
    case: Case
    strict: bool = False

    @classmethod
    def parse(cls, name: str) -> "Objective":
        """Parse ``ra_w``, ``ag_b_strict``, ``RA**_w`` style names."""
        text = name.strip().lower().replace("**", "").replace("-", "_")
        strict = "**" in name or text.endswith("_strict")
        text = text.removesuffix("_strict")
        try:
            inv, case = text.split("_")
            return cls(Investor(inv), Case(case), strict)
        except ValueError:
            raise ValueError(f"unknown objective {name!r}") from None

    @property
    def name(self) -> str:
        base = f"{self.investor.value}_{self.case.value}"
        return base + "_strict" if self.strict else base

    @property
    def maximize(self) -> bool:
        """Aggressive investors maximize their objective, risk-averse ones minimize."""
        return self.investor is Investor.AGGRESSIVE


ALL_OBJECTIVES = tuple(Objective(i, c, s) for i in Investor for c in Case for s in (False, True))


@dataclass(frozen=True)
class CanonicalTask:
    """A risk-averse-type computation on a lower region, possibly complemented.

    ``value(objective) = 1 - canonical`` when ``complement`` is set, and
    optimizing the objective over portfolios always means *minimizing* the
    canonical value.
    """

    case: Case
    strict: bool
    complement: bool

    def region(self, alpha: float, portfolio: Portfolio) -> RegionSpec:
        return RegionSpec(alpha, portfolio, Sense.LOWER, self.strict)

    def finish(self, canonical_value: float) -> float:
        return 1.0 - canonical_value if self.complement else canonical_value


def reduce_objective(obj: Objective) -> CanonicalTask:
    """Route an objective to its canonical computation.

    Risk-averse objectives are already canonical.  For aggressive ones the
    complementary region flips strictness (U = complement of L**, U** =
    complement of L) and best/worst keep their meaning on the lower region:

        max AG_b  = 1 - min RA**_b        max AG**_b = 1 - min RA_b
        max AG_w  = 1 - min RA**_w        max AG**_w = 1 - min RA_w
        max AG_a  = 1 - min RA**_a        max AG**_a = 1 - min RA_a
    """
    if obj.investor is Investor.RISK_AVERSE:
        return CanonicalTask(obj.case, obj.strict, complement=False)
    return CanonicalTask(obj.case, not obj.strict, complement=True)
