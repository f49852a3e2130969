"""Dense two-phase tableau simplex.

Variables are nonnegative.  The entering column is chosen by Dantzig's rule
(most negative reduced cost); after a degenerate pivot the solver switches to
Bland's rule until the objective moves again, which rules out cycling while
keeping the usual pivot counts on the well-behaved majority of steps.  The
pivot sequence is a deterministic function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Infeasible, Unbounded


@dataclass
class LpProblem:
    """``opt c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0``."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    maximize: bool = False
    labels: Optional[list] = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.shape[0]
        self.A_eq, self.b_eq = _coerce(self.A_eq, self.b_eq, n)
        self.A_ub, self.b_ub = _coerce(self.A_ub, self.b_ub, n)

    @property
    def n(self) -> int:
        return int(self.c.shape[0])

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (bounds included)."""
        worst = max(0.0, float(-x.min())) if x.size else 0.0
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_ub.shape[0]:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub)))
        return worst


def _coerce(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"{A.shape[0]} constraint rows but {b.shape[0]} right-hand sides")
    return A, b


@dataclass
class LpSolution:
    value: float
    x: np.ndarray
    iterations: int = 0


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int], tol: float) -> None:
        rows, cols = A.shape
        self.T = np.zeros((rows + 1, cols + 1))
        self.T[:rows, :cols] = A
        self.T[:rows, -1] = b
        self.basis = list(basis)
        self.tol = tol
        self.iterations = 0

    def set_objective(self, cost: np.ndarray) -> None:
        # reduced costs in the last row; minimization
        T = self.T
        T[-1, :] = 0.0
        T[-1, : cost.shape[0]] = cost
        for r, j in enumerate(self.basis):
            if T[-1, j] != 0.0:
                T[-1, :] -= T[-1, j] * T[r, :]

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r, :] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz, :] -= np.outer(col[nz], T[r, :])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> None:
        T = self.T
        tol = self.tol
        bland = False
        rows = T.shape[0] - 1
        while True:
            if self.iterations >= max_iter:
                raise RuntimeError(f"simplex did not converge in {max_iter} pivots")
            reduced = T[-1, :-1]
            candidates = np.nonzero((reduced < -tol) & allowed)[0]
            if candidates.size == 0:
                return
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmin(reduced[candidates])])
            col = T[:rows, j]
            pos = np.nonzero(col > tol)[0]
            if pos.size == 0:
                raise Unbounded("objective is unbounded below on the feasible region")
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            # smallest basic variable index among tied rows (Bland's leaving rule)
            r = int(min(ties, key=lambda i: self.basis[i]))
            bland = T[r, -1] <= tol
            self.pivot(r, j)


def solve_lp(problem: LpProblem, tol: float = 1e-9, max_iter: Optional[int] = None) -> LpSolution:
    """Optimal value and a primal solution; raises Infeasible / Unbounded."""
    n = problem.n
    m_eq = problem.A_eq.shape[0]
    m_ub = problem.A_ub.shape[0]
    rows = m_eq + m_ub
    cols = n + m_ub
    A = np.zeros((rows, cols))
    b = np.zeros(rows)
    A[:m_eq, :n] = problem.A_eq
    b[:m_eq] = problem.b_eq
    A[m_eq:, :n] = problem.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b[m_eq:] = problem.b_ub
    cost = np.zeros(cols)
    cost[:n] = -problem.c if problem.maximize else problem.c
    if max_iter is None:
        max_iter = 50 * (rows + cols) + 1000

    if rows == 0:
        if np.any(cost < -tol):
            raise Unbounded("unconstrained problem with a descent direction")
        return LpSolution(0.0, np.zeros(n))

    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: slacks of <= rows with b >= 0 start basic, others get artificials
    basis: list[int] = []
    art_rows = []
    for r in range(rows):
        if r >= m_eq and not neg[r]:
            basis.append(n + (r - m_eq))
        else:
            basis.append(-1)
            art_rows.append(r)
    n_art = len(art_rows)
    A1 = np.hstack([A, np.zeros((rows, n_art))])
    for a, r in enumerate(art_rows):
        A1[r, cols + a] = 1.0
        basis[r] = cols + a
    tab = _Tableau(A1, b, basis, tol)
    allowed = np.ones(cols + n_art, dtype=bool)
    if n_art:
        phase1 = np.zeros(cols + n_art)
        phase1[cols:] = 1.0
        tab.set_objective(phase1)
        tab.run(allowed, max_iter)
        infeas = -tab.T[-1, -1]
        if infeas > max(tol, 1e-7) * max(1.0, float(np.abs(b).max())):
            raise Infeasible(f"constraints are infeasible (phase-1 residual {infeas:.3e})")
        # drive remaining artificials out of the basis; drop redundant rows
        keep = []
        for r in range(rows):
            if tab.basis[r] >= cols:
                row = tab.T[r, :cols]
                cand = np.nonzero(np.abs(row) > 1e-9)[0]
                if cand.size:
                    tab.pivot(r, int(cand[np.argmax(np.abs(row[cand]))]))
                    keep.append(r)
            else:
                keep.append(r)
        if len(keep) < rows:
            T = tab.T
            tab.T = np.vstack([T[keep], T[-1:]])
            tab.basis = [tab.basis[r] for r in keep]
        allowed[cols:] = False

    tab.set_objective(np.concatenate([cost, np.zeros(n_art)]))
    tab.run(allowed, max_iter)

    x_full = np.zeros(cols + n_art)
    for r, j in enumerate(tab.basis):
        x_full[j] = tab.T[r, -1]
    x = np.clip(x_full[:n], 0.0, None)
    value = float(problem.c @ x)
    return LpSolution(value, x, tab.iterations)
