"""Dense bounded-variable primal simplex.

Solves small linear programs of the form::

    minimize / maximize   c @ x
    subject to            A_eq @ x == b_eq
                          lower <= x <= upper

which is the only LP shape the set operations need (the factor vector of a
constrained zonotope lives in a box and satisfies linear equalities).

The solver is a revised simplex that refactorizes the basis at every
iteration, so there is no drift from rank-one updates. Entering variables
are chosen by Dantzig's rule; after a streak of degenerate pivots the
solver falls back to Bland's smallest-index rule until progress resumes,
which rules out cycling while keeping iteration counts low. Everything is
deterministic: identical inputs give bitwise identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-12
_OPT_TOL = 1e-10
_DEGENERATE_STREAK = 8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LPError(RuntimeError):
    """Raised on numerical breakdown inside the simplex."""


@dataclass(frozen=True)
class LinearProgram:
    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_vector: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "minimize"

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        n = c.shape[0]
        A = np.asarray(self.eq_matrix, dtype=float)
        if A.size == 0:
            A = np.zeros((A.shape[0] if A.ndim == 2 else 0, n))
        b = np.asarray(self.eq_vector, dtype=float).reshape(-1)
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        up = np.asarray(self.upper, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"eq_matrix must have {n} columns, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise ValueError("eq_vector length must equal the number of equality rows")
        if lo.shape[0] != n or up.shape[0] != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")
        if not np.all(np.isfinite(lo)):
            raise ValueError("lower bounds must be finite")
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"unknown sense {self.sense!r}")
        for name, val in (("objective", c), ("eq_matrix", A), ("eq_vector", b), ("lower", lo), ("upper", up)):
            object.__setattr__(self, name, val)

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: str
    point: Optional[np.ndarray] = None
    value: Optional[float] = None
    residual: float = 0.0
    iterations: int = field(default=0, compare=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class _Simplex:
    """Bounded simplex over ``Af @ s == r`` with ``0 <= s <= cap``.

    ``Af`` already contains one artificial column per row so the identity
    is always an available starting basis.
    """

    def __init__(self, Af: np.ndarray, r: np.ndarray, cap: np.ndarray, basis: np.ndarray,
                 at_upper: np.ndarray, max_iter: int):
        self.Af = Af
        self.r = r
        self.cap = cap
        self.basis = basis
        self.at_upper = at_upper
        self.max_iter = max_iter
        self.iterations = 0

    def _values(self, lu):
        m, N = self.Af.shape
        x = np.where(self.at_upper, self.cap, 0.0)
        x[self.basis] = 0.0
        xB = lu_solve(lu, self.r - self.Af @ x, check_finite=False)
        x[self.basis] = xB
        return x, xB

    def _factor(self, stage: str):
        Bm = self.Af[:, self.basis]
        lu, piv = lu_factor(Bm, check_finite=False)
        scale = max(1.0, float(np.abs(Bm).max()))
        if np.abs(np.diag(lu)).min() < PIVOT_TOL * scale:
            raise LPError(f"singular basis during {stage} (pivot below {PIVOT_TOL:g})")
        return lu, piv

    def run(self, cost: np.ndarray, stage: str) -> str:
        m, N = self.Af.shape
        opt_tol = _OPT_TOL * max(1.0, float(np.abs(cost).max(initial=0.0)))
        degenerate = 0
        in_basis = np.zeros(N, dtype=bool)
        while True:
            if self.iterations >= self.max_iter:
                raise LPError(f"iteration limit reached during {stage}")
            lu = self._factor(stage)
            x, xB = self._values(lu)
            y = lu_solve(lu, cost[self.basis], trans=1, check_finite=False)
            d = cost - self.Af.T @ y
            in_basis[:] = False
            in_basis[self.basis] = True
            movable = (~in_basis) & (self.cap > 0.0)
            # improving: increase from lower when d < 0, decrease from upper when d > 0
            score = np.where(self.at_upper, d, -d)
            candidates = np.flatnonzero(movable & (score > opt_tol))
            if candidates.size == 0:
                return OPTIMAL
            bland = degenerate >= _DEGENERATE_STREAK
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(score[candidates])])
            sigma = -1.0 if self.at_upper[j] else 1.0
            w = lu_solve(lu, self.Af[:, j], check_finite=False)
            # basic values move as xB - sigma * t * w
            delta = -sigma * w
            lo_b = np.zeros(m)
            up_b = self.cap[self.basis]
            t_best = self.cap[j]
            leave = -1
            leave_to_upper = False
            dec = delta < -PIVOT_TOL
            inc = (delta > PIVOT_TOL) & np.isfinite(up_b)
            ratios = np.full(m, np.inf)
            ratios[dec] = np.maximum(xB[dec] - lo_b[dec], 0.0) / (-delta[dec])
            ratios[inc] = np.maximum(up_b[inc] - xB[inc], 0.0) / delta[inc]
            if np.any(np.isfinite(ratios)):
                t_min = ratios.min()
                if t_min < t_best:
                    ties = np.flatnonzero(ratios <= t_min + 1e-12 * max(1.0, t_min))
                    if bland:
                        rows = ties[np.argsort(self.basis[ties], kind="stable")]
                        row = int(rows[0])
                    else:
                        row = int(ties[np.argmax(np.abs(delta[ties]))])
                    t_best = t_min
                    leave = row
                    leave_to_upper = bool(inc[row])
            if not np.isfinite(t_best):
                return UNBOUNDED
            self.iterations += 1
            degenerate = degenerate + 1 if t_best <= 1e-12 else 0
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            out = int(self.basis[leave])
            self.at_upper[out] = leave_to_upper
            self.at_upper[j] = False
            self.basis[leave] = j


def _prepare(A, b, lower, upper):
    m, n = A.shape
    cap = upper - lower
    r = b - A @ lower
    sign = np.where(r < 0.0, -1.0, 1.0)
    Af = np.hstack([A * sign[:, None], np.eye(m)])
    rr = r * sign
    cap_full = np.concatenate([cap, np.full(m, np.inf)])
    basis = np.arange(n, n + m)
    at_upper = np.zeros(n + m, dtype=bool)
    return Af, rr, cap_full, basis, at_upper


class _Feasible:
    """Result of phase one, reusable for several phase-two objectives."""

    def __init__(self, A, b, lower, upper, max_iter=None):
        self.A, self.b, self.lower, self.upper = A, b, lower, upper
        m, n = A.shape
        self.n = n
        self.m = m
        max_iter = max_iter or 50 * (n + m) + 1000
        Af, rr, cap, basis, at_upper = _prepare(A, b, lower, upper)
        self.simplex = _Simplex(Af, rr, cap, basis, at_upper, max_iter)
        phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
        if m:
            self.simplex.run(phase1_cost, "phase one")
            lu = self.simplex._factor("phase one")
            s, _ = self.simplex._values(lu)
        else:
            s = np.where(at_upper, cap, 0.0)
        self.point = self._to_point(s)
        self.residual = self._residual(self.point)
        self.feasible = self.residual <= FEAS_TOL

    def _to_point(self, s):
        x = self.lower + s[: self.n]
        return np.clip(x, self.lower, self.upper)

    def _residual(self, x):
        if self.m == 0:
            return 0.0
        return float(np.abs(self.A @ x - self.b).max())

    def optimize(self, cost: np.ndarray) -> LpSolution:
        if not self.feasible:
            return LpSolution(INFEASIBLE, residual=self.residual, iterations=self.simplex.iterations)
        if self.m == 0:
            if np.any((cost < 0.0) & ~np.isfinite(self.upper)):
                return LpSolution(UNBOUNDED)
            x = np.where(cost < 0.0, self.upper, self.lower)
            return LpSolution(OPTIMAL, x, float(cost @ x), 0.0, 0)
        sim = self.simplex
        # artificials are pinned at zero for phase two
        cap = sim.cap.copy()
        cap[self.n:] = 0.0
        phase2 = _Simplex(sim.Af, sim.r, cap, sim.basis.copy(), sim.at_upper.copy(), sim.max_iter)
        full_cost = np.concatenate([cost, np.zeros(self.m)])
        status = phase2.run(full_cost, "phase two")
        iters = sim.iterations + phase2.iterations
        if status == UNBOUNDED:
            return LpSolution(UNBOUNDED, residual=self.residual, iterations=iters)
        lu = phase2._factor("phase two")
        s, _ = phase2._values(lu)
        x = self._to_point(s)
        res = self._residual(x)
        if res > FEAS_TOL:
            raise LPError(f"phase two lost feasibility (residual {res:.3e})")
        return LpSolution(OPTIMAL, x, float(cost @ x), res, iters)


def _as_problem(eq_matrix, eq_vector, lower, upper):
    lower = np.asarray(lower, dtype=float).reshape(-1)
    n = lower.shape[0]
    A = np.asarray(eq_matrix, dtype=float)
    A = A.reshape(-1, n) if A.size else np.zeros((0, n))
    b = np.asarray(eq_vector, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    return A, b, lower, upper


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` and report status, optimizer, value and equality residual."""
    sign = -1.0 if lp.sense == "maximize" else 1.0
    feas = _Feasible(lp.eq_matrix, lp.eq_vector, lp.lower, lp.upper)
    sol = feas.optimize(sign * lp.objective)
    if sol.status == OPTIMAL and sign < 0:
        sol = LpSolution(sol.status, sol.point, -sol.value, sol.residual, sol.iterations)
    return sol


def feasible(eq_matrix, eq_vector, lower, upper) -> bool:
    """True iff ``{x : eq_matrix @ x == eq_vector, lower <= x <= upper}`` is nonempty."""
    A, b, lo, up = _as_problem(eq_matrix, eq_vector, lower, upper)
    if A.shape[0] == 0:
        return True
    return _Feasible(A, b, lo, up).feasible


def optimize_many(eq_matrix, eq_vector, lower, upper,
                  objectives: Sequence[np.ndarray], sense: str = "maximize") -> list[LpSolution]:
    """Optimize several objectives over one feasible region.

    Phase one runs once; every objective then starts from the same phase-one
    basis, so each result is independent of the order of ``objectives``.
    """
    A, b, lo, up = _as_problem(eq_matrix, eq_vector, lower, upper)
    sign = -1.0 if sense == "maximize" else 1.0
    feas = _Feasible(A, b, lo, up)
    out = []
    for c in objectives:
        sol = feas.optimize(sign * np.asarray(c, dtype=float))
        if sol.status == OPTIMAL and sign < 0:
            sol = LpSolution(sol.status, sol.point, -sol.value, sol.residual, sol.iterations)
        out.append(sol)
    return out
