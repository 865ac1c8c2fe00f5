"""LTI plant description, redundant-observability check and the two example plants."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .sets import Zonotope, as_constrained, from_dict, to_dict


@dataclass(frozen=True)
class Sensor:
    """One sensor: output map ``C`` and noise zonotope ``V``."""

    C: np.ndarray
    V: Zonotope

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        V = as_constrained(self.V)
        if not V.is_zonotope:
            raise ValueError("sensor noise set must be an unconstrained zonotope")
        if V.dim != C.shape[0]:
            raise ValueError(f"noise set dimension {V.dim} does not match {C.shape[0]} output rows")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "V", V)

    @property
    def num_outputs(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class PlantModel:
    """``x(k+1) = A x + B u + w``, ``y_i = C_i x + v_i (+ a_i)``."""

    A: np.ndarray
    B: np.ndarray
    W: Zonotope
    sensors: tuple

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float)
        B = B.reshape(n, -1) if B.size else np.zeros((n, 0))
        W = as_constrained(self.W)
        if W.dim != n or not W.is_zonotope:
            raise ValueError("process-noise set must be an unconstrained zonotope of state dimension")
        sensors = tuple(s if isinstance(s, Sensor) else Sensor(*s) for s in self.sensors)
        if not sensors:
            raise ValueError("a plant needs at least one sensor")
        for i, s in enumerate(sensors):
            if s.C.shape[1] != n:
                raise ValueError(f"sensor {i + 1}: C has {s.C.shape[1]} columns, state dimension is {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "sensors", sensors)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def num_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return len(self.sensors)

    @property
    def C(self) -> list:
        return [s.C for s in self.sensors]

    @property
    def V(self) -> list:
        return [s.V for s in self.sensors]

    def stacked_output(self, combo: Sequence[int]) -> np.ndarray:
        """Rows of all sensors in ``combo`` (0-based indices)."""
        return np.vstack([self.sensors[i].C for i in combo])

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "W": to_dict(self.W),
            "sensors": [{"C": s.C.tolist(), "V": to_dict(s.V)} for s in self.sensors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantModel":
        A = np.asarray(d["A"], dtype=float)
        B = np.asarray(d.get("B", []), dtype=float)
        sensors = tuple(Sensor(np.asarray(s["C"], dtype=float), from_dict(s["V"])) for s in d["sensors"])
        return cls(A, B, from_dict(d["W"]), sensors)


def sensor_combos(p: int, size: int) -> list[tuple[int, ...]]:
    """All size-``size`` subsets of ``0..p-1`` in lexicographic order."""
    if not 1 <= size <= p:
        raise ValueError(f"combination size must lie in [1, {p}], got {size}")
    return list(combinations(range(p), size))


# ---------------------------------------------------------------------------
# observability
# ---------------------------------------------------------------------------

def observability_matrix(A: np.ndarray, C: np.ndarray, horizon: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    horizon = A.shape[0] if horizon is None else horizon
    blocks = [C]
    for _ in range(horizon - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


@dataclass(frozen=True)
class ComboObservability:
    combo: tuple          # 1-based sensor indices
    rank: int
    sigma_min: float
    passed: bool


@dataclass(frozen=True)
class ObservabilityReport:
    combo_size: int
    obs_tol: float
    combos: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.combos)

    @property
    def failing(self) -> list:
        return [c.combo for c in self.combos if not c.passed]

    def raise_if_failed(self):
        if not self.passed:
            listed = ", ".join(str(c) for c in self.failing)
            raise ObservabilityError(
                f"redundant observability fails for size-{self.combo_size} sensor sets: {listed}")

    def to_dict(self) -> dict:
        return {
            "combo_size": self.combo_size,
            "obs_tol": self.obs_tol,
            "passed": self.passed,
            "combos": [
                {"combo": list(c.combo), "rank": c.rank, "sigma_min": c.sigma_min, "passed": c.passed}
                for c in self.combos
            ],
        }


class ObservabilityError(ValueError):
    pass


def check_redundant_observability(A, sensors, combo_size: int, obs_tol: float = 1e-8) -> ObservabilityReport:
    """Rank and smallest singular value of the observability matrix of every sensor subset.

    ``sensors`` is a sequence of output matrices or :class:`Sensor` objects.
    A subset passes when its observability matrix has full column rank and
    its smallest singular value is at least ``obs_tol``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    Cs = [s.C if isinstance(s, Sensor) else np.atleast_2d(np.asarray(s, dtype=float)) for s in sensors]
    rows = []
    for combo in sensor_combos(len(Cs), combo_size):
        O = observability_matrix(A, np.vstack([Cs[i] for i in combo]))
        sv = np.linalg.svd(O, compute_uv=False)
        smin = float(sv[n - 1]) if sv.shape[0] >= n else 0.0
        rank = int(np.linalg.matrix_rank(O))
        rows.append(ComboObservability(tuple(i + 1 for i in combo), rank, smin, rank == n and smin >= obs_tol))
    return ObservabilityReport(combo_size, obs_tol, tuple(rows))


# ---------------------------------------------------------------------------
# example plants
# ---------------------------------------------------------------------------

def box_noise(dim: int, sigma: float) -> Zonotope:
    return Zonotope(np.zeros(dim), sigma * np.eye(dim))


def build_planar_model(sigma_w: float = 0.02, sigma_v: float = 1.0) -> PlantModel:
    """Two-state example with four two-output sensors and no input."""
    A = np.array([[1.0, 0.0], [1.0, 1.0]])
    Cs = [
        np.eye(2),
        np.array([[1.0, 1.0], [1.0, 0.0]]),
        np.array([[0.0, 1.0], [1.0, 0.0]]),
        np.array([[1.0, 2.0], [2.0, 1.0]]),
    ]
    sensors = tuple(Sensor(C, box_noise(2, sigma_v)) for C in Cs)
    return PlantModel(A, np.zeros((2, 1)), box_noise(2, sigma_w), sensors)


BUILDING_MASS = np.diag([478350.0, 478350.0, 517790.0])
BUILDING_DAMPING = 1e5 * np.array([
    [7.7626, -3.7304, 0.6514],
    [-3.7304, 5.8284, -2.0266],
    [0.6514, -2.0266, 2.4458],
])
BUILDING_STIFFNESS = 1e8 * np.array([
    [4.3651, -2.3730, 0.4144],
    [-2.3730, 3.1347, -1.2892],
    [0.4144, -1.2892, 0.9358],
])
BUILDING_INPUT = np.array([478350.0, 478350.0, 517790.0])
BUILDING_SENSORS = (
    np.array([[1, -1, 0, 0, 0, 0], [1, 0, -1, 0, 0, 0], [0, 0, 0, 1, 0, 0]], dtype=float),
    np.array([[-1, 1, 0, 0, 0, 0], [0, 1, -1, 0, 0, 0], [0, 0, 0, 0, 1, 0]], dtype=float),
    np.array([[-1, 0, 1, 0, 0, 0], [0, -1, 1, 0, 0, 0], [0, 0, 0, 0, 0, 1]], dtype=float),
)


def building_continuous() -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ``(A_c, B_c)`` of the three-story structure, state ``(q, q_dot)``."""
    Minv = np.linalg.inv(BUILDING_MASS)
    Ac = np.block([
        [np.zeros((3, 3)), np.eye(3)],
        [-Minv @ BUILDING_STIFFNESS, -Minv @ BUILDING_DAMPING],
    ])
    Bc = np.concatenate([np.zeros(3), -Minv @ BUILDING_INPUT]).reshape(6, 1)
    return Ac, Bc


def discretize(Ac: np.ndarray, Bc: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization ``A = exp(Ac dt)``, ``B = Ac^{-1}(A - I) Bc``."""
    if dt <= 0:
        raise ValueError("sample time must be positive")
    if np.linalg.cond(Ac) > 1e14:
        raise ValueError("continuous-time state matrix is singular")
    A = expm(Ac * dt)
    B = np.linalg.solve(Ac, (A - np.eye(Ac.shape[0])) @ Bc)
    return A, B


def build_building_model(dt: float = 1e-3, sigma_w: float = 0.02, sigma_v: float = 1.0) -> PlantModel:
    Ac, Bc = building_continuous()
    A, B = discretize(Ac, Bc, dt)
    sensors = tuple(Sensor(C, box_noise(3, sigma_v)) for C in BUILDING_SENSORS)
    return PlantModel(A, B, box_noise(6, sigma_w), sensors)
