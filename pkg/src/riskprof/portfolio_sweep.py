"""Optimal two-stock portfolio by rotating the boundary line about (alpha, alpha).

Every portfolio ``(x1, 1 - x1)`` defines the line ``x1*d1 + (1-x1)*d2 = alpha``
through ``(alpha, alpha)``.  As ``x1`` goes from 0 to 1 a grid pair changes
side at most once, at the exact rational breakpoint where it lies on the line.
Between consecutive breakpoints the region is constant, so the optimum is
found among O(m^2) *stages*: each breakpoint itself (closed) and each open gap
between breakpoints, plus the two end portfolios.

The greedy flow is replayed by a segment tree over a leaf sequence that
interleaves column leaves ``(0, S2)`` and row leaves ``(-S1, 0)``; a column
leaf precedes a row leaf exactly when the pair is in the region.  A pair
crossing the line swaps two adjacent leaves, so each membership change costs
one O(log m) path update and the whole sweep O(m^2 log m).

Coordinates follow :mod:`riskprof.greedy_flow`: ranks ``p, q`` in which the
region is closed downward (upper regions are handled by reversing both axes).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .errors import AverageCaseNotSupported, InvariantViolation
from .greedy_flow import FlowProblem, greedy_flow
from .return_model import (
    Case,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    Sense,
    reduce_objective,
    same_grid,
)

TREE_TOL = 1e-9


class EventKind(enum.Enum):
    ENTER = "enter"
    LEAVE = "leave"


@dataclass(frozen=True)
class SlopeEvent:
    point: tuple[float, float]
    levels: tuple[int, int]
    rank: tuple[int, int]
    breakpoint: Fraction
    slope: float
    kind: EventKind
    stage: int


def _slope(t: Fraction) -> float:
    # boundary line slope for portfolio (t, 1 - t)
    return float("-inf") if t == 1 else float(-t / (1 - t))


@dataclass(frozen=True)
class Stage:
    """Index ``2k`` is the closed breakpoint ``bp[k]``; ``2k+1`` the open gap after it."""

    index: int
    lo: Fraction
    hi: Fraction

    @property
    def closed(self) -> bool:
        return self.index % 2 == 0

    @property
    def x1(self) -> float:
        return float(self.lo) if self.closed else float((self.lo + self.hi) / 2)

    @property
    def portfolio(self) -> Portfolio:
        return Portfolio.two(self.x1)

    @property
    def slope_interval(self) -> tuple[float, float]:
        return (_slope(self.lo), _slope(self.hi))


@dataclass
class _Plan:
    m: int
    breakpoints: list[Fraction]  # 0, interior breakpoints ascending, 1
    events: list[SlopeEvent]
    prefix: list[int]  # row prefix lengths during stage 1
    r: list[float]
    c: list[float]
    level1: list[int]
    level2: list[int]

    def stage(self, index: int) -> Stage:
        bp = self.breakpoints
        k = index // 2
        if index % 2 == 0:
            return Stage(index, bp[k], bp[k])
        return Stage(index, bp[k], bp[k + 1])

    @property
    def last_stage(self) -> int:
        return 2 * (len(self.breakpoints) - 1)


def _plan(s1: MarginalDistribution, s2: MarginalDistribution, alpha: float,
          sense: Sense, strict: bool) -> _Plan:
    grid = same_grid([s1, s2])
    m = grid.m
    levels = list(range(grid.m1, grid.m2 + 1))
    order = list(range(m))
    sgn = 1
    if sense is Sense.UPPER:
        order.reverse()
        sgn = -1
    lv = [levels[o] for o in order]
    A = Fraction(alpha) / Fraction(grid.mu)

    # membership h(t) = a + t*b <= 0 (or < 0), in units of mu
    raw = []
    interior: set[Fraction] = set()
    for p in range(m):
        i = lv[p]
        for q in range(m):
            j = lv[q]
            a = sgn * (j - A)
            b = sgn * (i - j)
            if b == 0:
                continue
            t = -a / b
            if 0 <= t <= 1:
                raw.append((p, q, t, b > 0))
                if 0 < t < 1:
                    interior.add(t)
    bps = [Fraction(0)] + sorted(interior) + [Fraction(1)]
    where = {t: k for k, t in enumerate(bps)}
    last = 2 * (len(bps) - 1)

    events = []
    for p, q, t, leaves in raw:
        k = where[t]
        if not strict:
            if leaves and t < 1:
                kind, stage = EventKind.LEAVE, 2 * k + 1
            elif not leaves and t > 0:
                kind, stage = EventKind.ENTER, 2 * k
            else:
                continue
        else:
            if leaves and t > 0:
                kind, stage = EventKind.LEAVE, 2 * k
            elif not leaves and t < 1:
                kind, stage = EventKind.ENTER, 2 * k + 1
            else:
                continue
        d1, d2 = lv[p] * grid.mu, lv[q] * grid.mu
        events.append(SlopeEvent((d1, d2), (lv[p], lv[q]), (p, q), t, _slope(t), kind, stage))
    events.sort(key=lambda e: (e.stage, e.rank))

    # stage-1 membership, exact, at the midpoint of the first open gap
    t1 = bps[1] / 2
    prefix = [0] * m
    for p in range(m):
        i = lv[p]
        count = 0
        for q in range(m):
            h = sgn * ((lv[q] - A) + t1 * (i - lv[q]))
            if (h < 0) if strict else (h <= 0):
                count = q + 1
            else:
                break
        prefix[p] = count

    return _Plan(
        m=m, breakpoints=bps, events=events, prefix=prefix,
        r=[float(s1.probs[o]) for o in order], c=[float(s2.probs[o]) for o in order],
        level1=lv, level2=lv,
    )


def enumerate_slope_events(s1: MarginalDistribution, s2: MarginalDistribution, alpha: float,
                           sense: Sense = Sense.LOWER, strict: bool = False) -> list[SlopeEvent]:
    """Membership changes of grid pairs as ``x1`` sweeps [0, 1] (slope descending).

    Pairs whose side never changes are omitted.  Events sharing a stage lie
    on one line through ``(alpha, alpha)`` and are applied together.
    """
    return _plan(s1, s2, alpha, sense, strict).events


class FlowTree:
    """Complete binary tree over ``(e1, e2)`` labels combined by

        parent[(e1, e2), (f1, f2)] = (e1 + min(e2 + f1, 0), max(e2 + f1, 0) + f2)

    ``-e1`` is supply still looking for capacity, ``e2`` capacity left over
    for leaves further right.  Padding leaves are ``(0, 0)``, an identity.
    """

    def __init__(self, labels: list[tuple[float, float]]) -> None:
        size = 1
        while size < max(1, len(labels)):
            size *= 2
        self.size = size
        self.e1 = [0.0] * (2 * size)
        self.e2 = [0.0] * (2 * size)
        for pos, (a, b) in enumerate(labels):
            self.e1[size + pos] = a
            self.e2[size + pos] = b
        for v in range(size - 1, 0, -1):
            self._pull(v)
        self.updates = 0

    def _pull(self, v: int) -> None:
        e1, e2 = self.e1, self.e2
        left, right = 2 * v, 2 * v + 1
        s = e2[left] + e1[right]
        if s < 0:
            e1[v] = e1[left] + s
            e2[v] = e2[right]
        else:
            e1[v] = e1[left]
            e2[v] = s + e2[right]

    def leaf(self, pos: int) -> tuple[float, float]:
        return self.e1[self.size + pos], self.e2[self.size + pos]

    def swap(self, pos_a: int, pos_b: int) -> None:
        """Exchange two leaves and refresh both root paths."""
        e1, e2, size = self.e1, self.e2, self.size
        a, b = size + pos_a, size + pos_b
        e1[a], e1[b] = e1[b], e1[a]
        e2[a], e2[b] = e2[b], e2[a]
        a //= 2
        b //= 2
        while a >= 1:
            self._pull(a)
            if b != a:
                self._pull(b)
            a //= 2
            b //= 2
            self.updates += 1

    @property
    def root(self) -> tuple[float, float]:
        return self.e1[1], self.e2[1]

    def check(self, tol: float = 0.0) -> None:
        """Verify every internal node against the parent rule."""
        for v in range(1, self.size):
            l, r = 2 * v, 2 * v + 1
            s = self.e2[l] + self.e1[r]
            want = (self.e1[l] + min(s, 0.0), max(s, 0.0) + self.e2[r])
            if abs(want[0] - self.e1[v]) > tol or abs(want[1] - self.e2[v]) > tol:
                raise InvariantViolation(f"node {v} violates the parent rule")


def tree_flow_value(tree: FlowTree) -> float:
    r1, r2 = tree.root
    lo, hi = 1.0 + r1, 1.0 - r2
    if abs(lo - hi) > TREE_TOL:
        raise InvariantViolation(f"root ({r1}, {r2}) is inconsistent: 1+r1={lo}, 1-r2={hi}")
    return min(1.0, max(0.0, lo))


class _LeafSequence:
    """Leaf order plus positions of each row (v) and column (w) leaf."""

    def __init__(self, plan: _Plan) -> None:
        m = plan.m
        labels = []
        self.pos_v = [0] * m
        self.pos_w = [0] * m
        q = 0
        for p in range(m - 1, -1, -1):
            while q < plan.prefix[p]:
                self.pos_w[q] = len(labels)
                labels.append((0.0, plan.c[q]))
                q += 1
            self.pos_v[p] = len(labels)
            labels.append((-plan.r[p], 0.0))
        while q < m:
            self.pos_w[q] = len(labels)
            labels.append((0.0, plan.c[q]))
            q += 1
        self.tree = FlowTree(labels)

    def apply(self, event: SlopeEvent) -> None:
        p, q = event.rank
        pv, pw = self.pos_v[p], self.pos_w[q]
        want = pv + 1 if event.kind is EventKind.ENTER else pv - 1
        if pw != want:
            raise InvariantViolation(
                f"{event.kind.value} of {event.levels} is not an adjacent transposition "
                f"(row leaf at {pv}, column leaf at {pw})")
        self.tree.swap(pv, pw)
        self.pos_v[p], self.pos_w[q] = pw, pv


@dataclass
class StageValue:
    stage: Stage
    flow: float


def sweep_flows(s1: MarginalDistribution, s2: MarginalDistribution, alpha: float,
                sense: Sense = Sense.LOWER, strict: bool = False,
                on_stage: Optional[Callable[[Stage, FlowTree, float], None]] = None,
                ) -> list[StageValue]:
    """Maximum region mass at every stage, in increasing ``x1`` order.

    The two end portfolios are evaluated by direct greedy runs; all other
    stages come from the tree.  ``on_stage`` sees every tree-evaluated stage.
    """
    plan = _plan(s1, s2, alpha, sense, strict)
    last = plan.last_stage

    def direct(stage: Stage) -> float:
        spec = RegionSpec(alpha, stage.portfolio, sense, strict)
        return greedy_flow(FlowProblem(s1, s2, spec)).value

    out = [StageValue(plan.stage(0), direct(plan.stage(0)))]
    seq = _LeafSequence(plan)
    events = plan.events
    e = 0
    while e < len(events) and events[e].stage <= 1:
        e += 1  # already reflected in the stage-1 leaf order
    for index in range(1, last):
        while e < len(events) and events[e].stage == index:
            seq.apply(events[e])
            e += 1
        stage = plan.stage(index)
        flow = tree_flow_value(seq.tree)
        if on_stage is not None:
            on_stage(stage, seq.tree, flow)
        out.append(StageValue(stage, flow))
    out.append(StageValue(plan.stage(last), direct(plan.stage(last))))
    return out


@dataclass
class SweepResult:
    portfolio: Portfolio
    value: float
    stage: Stage
    x1_interval: tuple[float, float]
    slope_interval: tuple[float, float]
    profile: list[tuple[float, float, float]] = field(default_factory=list, repr=False)


def sweep_optimal_portfolio(s1: MarginalDistribution, s2: MarginalDistribution, alpha: float,
                            objective: Objective, tie_tol: float = 1e-12) -> SweepResult:
    """Optimal portfolio for a best- or worst-case objective.

    The objective is reduced to a canonical lower-region computation which is
    minimized; a best-case canonical value is one minus the maximum mass of
    the complementary upper region, so a single sweep serves every case.
    Open gaps report the midpoint ``x1``; ties go to the smallest ``x1``.
    ``profile`` lists ``(x1_lo, x1_hi, objective value)`` per stage.
    """
    if objective.case is Case.AVERAGE:
        raise AverageCaseNotSupported(f"{objective.name} is an average-case objective")
    task = reduce_objective(objective)
    if task.case is Case.WORST:
        stages = sweep_flows(s1, s2, alpha, Sense.LOWER, task.strict)
        canon = [sv.flow for sv in stages]
    else:
        stages = sweep_flows(s1, s2, alpha, Sense.UPPER, not task.strict)
        canon = [1.0 - sv.flow for sv in stages]
    target = min(canon)
    pick = next(i for i, v in enumerate(canon) if v <= target + tie_tol)
    stage = stages[pick].stage
    value = min(1.0, max(0.0, task.finish(canon[pick])))
    profile = [(float(sv.stage.lo), float(sv.stage.hi), task.finish(v))
               for sv, v in zip(stages, canon)]
    return SweepResult(
        portfolio=stage.portfolio,
        value=value,
        stage=stage,
        x1_interval=(float(stage.lo), float(stage.hi)),
        slope_interval=stage.slope_interval,
        profile=profile,
    )
