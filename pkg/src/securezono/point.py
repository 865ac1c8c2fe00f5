"""Secure point estimate from a bank of Luenberger observers, and the radius schedule.

One observer runs per sensor subset. The fused estimate is the
coordinate-wise lower median over observers whose subsets avoid every sensor
currently identified as attacked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.signal import place_poles

from .sets import radius

SCHUR_MARGIN = 1e-6


class ObserverDesignError(ValueError):
    pass


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)), initial=0.0))


def observer_gain(A: np.ndarray, C: np.ndarray, pole_radius: float = 0.5) -> np.ndarray:
    """Gain ``L`` placing the eigenvalues of ``A - L C`` on distinct reals in ``[0.9 r, r]``.

    Redundant output rows are removed first so that pole placement sees a
    full-row-rank output map; the gain is mapped back to all rows.
    """
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if not 0.0 <= pole_radius < 1.0:
        raise ObserverDesignError("pole radius must lie in [0, 1)")
    U, sv, _ = np.linalg.svd(C, full_matrices=False)
    tol = max(C.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    r = int(np.sum(sv > tol))
    if r == 0:
        raise ObserverDesignError("output map is zero")
    Ur = U[:, :r]
    Cr = Ur.T @ C
    poles = pole_radius * np.linspace(1.0, 0.9, n)
    if pole_radius == 0.0:
        poles = np.linspace(0.0, 1e-3, n)
    try:
        res = place_poles(A.T, Cr.T, poles)
    except ValueError as exc:
        raise ObserverDesignError(f"pole placement failed: {exc}") from exc
    L = res.gain_matrix.T @ Ur.T
    sr = spectral_radius(A - L @ C)
    if sr >= 1.0 - SCHUR_MARGIN:
        raise ObserverDesignError(f"observer error dynamics not Schur stable (spectral radius {sr:.6g})")
    return L


def lower_median(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Coordinate-wise median; for an even count the lower middle value."""
    v = np.sort(np.asarray(values, dtype=float), axis=axis)
    k = (v.shape[axis] - 1) // 2
    return np.take(v, k, axis=axis)


def fuse(estimates: Sequence, combos: Sequence[Sequence[int]] = (), excluded: Iterable[int] = ()) -> np.ndarray:
    """Lower median over the estimates whose sensor subset avoids ``excluded``."""
    excluded = set(excluded)
    if combos:
        chosen = [x for x, J in zip(estimates, combos) if not excluded.intersection(J)]
    else:
        chosen = list(estimates)
    if not chosen:
        raise ObserverDesignError("no observer is eligible: every sensor subset contains an identified attacked sensor")
    return lower_median(np.vstack([np.asarray(x, dtype=float).reshape(-1) for x in chosen]))


@dataclass
class MultiObserver:
    A: np.ndarray
    B: np.ndarray
    combos: list
    outputs: list            # stacked C_J per combo
    gains: list              # L_h per combo
    states: list = field(default_factory=list)
    fused: Optional[np.ndarray] = None

    @classmethod
    def design(cls, A, B, Cs: Sequence, combos: Sequence[Sequence[int]], pole_radius: float = 0.5,
               x0=None) -> "MultiObserver":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        B = np.asarray(B, dtype=float).reshape(n, -1) if np.size(B) else np.zeros((n, 0))
        outputs = [np.vstack([np.atleast_2d(Cs[j]) for j in J]) for J in combos]
        gains = [observer_gain(A, CJ, pole_radius) for CJ in outputs]
        bank = cls(A, B, [tuple(J) for J in combos], outputs, gains)
        bank.reset(np.zeros(n) if x0 is None else x0)
        return bank

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def reset(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        self.states = [x0.copy() for _ in self.combos]
        self.fused = x0.copy()

    def closed_loop_radii(self) -> list[float]:
        return [spectral_radius(self.A - L @ C) for L, C in zip(self.gains, self.outputs)]

    def _drive(self, u) -> np.ndarray:
        if self.B.shape[1] == 0 or u is None:
            return np.zeros(self.n)
        return self.B @ np.asarray(u, dtype=float).reshape(-1)

    def observer_step(self, h: int, x_h, u, y_J) -> np.ndarray:
        x_h = np.asarray(x_h, dtype=float)
        innov = np.asarray(y_J, dtype=float).reshape(-1) - self.outputs[h] @ x_h
        return self.A @ x_h + self._drive(u) + self.gains[h] @ innov

    def predict(self, u) -> np.ndarray:
        """Open-loop advance of every observer, used before any measurement arrives."""
        drive = self._drive(u)
        self.states = [self.A @ x + drive for x in self.states]
        self.fused = self.A @ self.fused + drive
        return self.fused

    def update(self, u, measurements: Sequence, excluded: Iterable[int] = ()) -> np.ndarray:
        """Consume ``y(k)`` and ``u(k)``; return the fused estimate of ``x(k+1)``.

        Observers whose subset contains an excluded sensor skip the reading
        and run open loop. Re-seeding them from the fused value instead would
        switch between gains, and a product of individually stable error maps
        can diverge.
        """
        excluded = set(excluded)
        eligible = [h for h, J in enumerate(self.combos) if not excluded.intersection(J)]
        if not eligible:
            raise ObserverDesignError("no observer is eligible: every sensor subset contains an identified attacked sensor")
        drive = self._drive(u)
        new = []
        for h, x_h in enumerate(self.states):
            if h in eligible:
                y_J = np.concatenate([np.asarray(measurements[j], dtype=float).reshape(-1) for j in self.combos[h]])
                new.append(self.observer_step(h, x_h, u, y_J))
            else:
                new.append(self.A @ x_h + drive)
        self.states = new
        self.fused = lower_median(np.vstack([new[h] for h in eligible]))
        return self.fused


@dataclass(frozen=True)
class DeltaSchedule:
    """``delta(k) = c0 * r0 * rho**k + alpha * max(w_bar, v_bar)``."""

    beta_coeff: float
    beta_rate: float
    alpha: float
    w_bar: float
    v_bar: float
    initial_error: float

    def __post_init__(self):
        if self.beta_coeff < 0 or self.alpha < 0 or self.w_bar < 0 or self.v_bar < 0 or self.initial_error < 0:
            raise ValueError("schedule constants must be nonnegative")
        if not 0.0 <= self.beta_rate < 1.0:
            raise ValueError("beta_rate must lie in [0, 1)")

    @property
    def floor(self) -> float:
        return self.alpha * max(self.w_bar, self.v_bar)

    def delta(self, k: int) -> float:
        if k < 0:
            raise ValueError("k must be nonnegative")
        return self.beta_coeff * self.initial_error * self.beta_rate ** k + self.floor

    def to_dict(self) -> dict:
        return {
            "beta_coeff": self.beta_coeff,
            "beta_rate": self.beta_rate,
            "alpha": self.alpha,
            "w_bar": self.w_bar,
            "v_bar": self.v_bar,
            "initial_error": self.initial_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeltaSchedule":
        return cls(float(d["beta_coeff"]), float(d["beta_rate"]), float(d["alpha"]),
                   float(d["w_bar"]), float(d["v_bar"]), float(d["initial_error"]))


def delta(schedule: DeltaSchedule, k: int) -> float:
    return schedule.delta(k)


def noise_levels(W, V: Sequence) -> tuple[float, float]:
    """Euclidean noise bounds from max-norm radii of ``W`` and every ``V_i``."""
    w_bar = float(np.sqrt(W.dim) * radius(W))
    v_bar = max(float(np.sqrt(Vi.dim) * radius(Vi)) for Vi in V)
    return w_bar, v_bar


def fit_schedule(errors: np.ndarray, rate: float, w_bar: float, v_bar: float, initial_error: float,
                 safety: float = 2.0, tail_start: Optional[int] = None) -> DeltaSchedule:
    """Fit a geometric envelope over error traces of shape ``(runs, steps + 1)``.

    The floor comes from the largest error from ``tail_start`` on; by default
    that is the first step where the initial-error envelope ``r0 * rate**k``
    has dropped below a tenth of the largest observed error. The transient
    coefficient is the smallest ``c0`` that lifts the envelope over every
    earlier excess. Both are multiplied by ``safety``.
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    T = errors.shape[1]
    if tail_start is None:
        scale = 0.1 * float(errors.max())
        k_all = np.arange(T)
        below = np.flatnonzero(initial_error * rate ** k_all <= scale)
        tail_start = int(below[0]) if below.size else T - 1
    tail_start = max(1, min(tail_start, T - 1))
    noise = max(w_bar, v_bar)
    tail_max = float(errors[:, tail_start:].max())
    alpha_raw = tail_max / noise if noise > 0 else 0.0
    k = np.arange(T)
    excess = np.maximum(errors.max(axis=0) - alpha_raw * noise, 0.0)
    denom = max(initial_error, 1e-300) * rate ** k
    c0_raw = float(np.max(excess / denom)) if np.any(excess > 0) else 0.0
    return DeltaSchedule(safety * c0_raw, rate, safety * alpha_raw, w_bar, v_bar, initial_error)
