"""Attack detection, identification thresholds, filtering test and safe-sensor bookkeeping.

Agreement and measurement-update arguments may be given per combo (or per
sensor) as a single constrained zonotope, ``None`` for a set already known to
be empty, or a list of pieces whose union is the set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sets as S


def _pieces(entry) -> list:
    if entry is None:
        return []
    if isinstance(entry, (list, tuple)):
        return [Z for Z in entry if Z is not None]
    return [entry]


def _nonempty_pieces(entry) -> list:
    return [Z for Z in _pieces(entry) if not S.is_empty(Z)]


def entry_is_empty(entry) -> bool:
    return not _nonempty_pieces(entry)


def detect_attack(agreement: Sequence) -> bool:
    """True iff the agreement sets of all combos have no common point.

    With union-valued agreement sets this searches over one piece per combo,
    pruning a branch as soon as the running intersection is empty.
    """
    groups = [_nonempty_pieces(e) for e in agreement]
    if not groups:
        return False
    if any(not g for g in groups):
        return True
    order = sorted(range(len(groups)), key=lambda h: len(groups[h]))
    groups = [groups[h] for h in order]

    def search(level: int, acc) -> bool:
        if level == len(groups):
            return True
        for Z in groups[level]:
            nxt = Z if acc is None else S.intersection(acc, Z)
            if acc is not None and S.is_empty(nxt):
                continue
            if search(level + 1, nxt):
                return True
        return False

    return not search(0, None)


def _threshold_terms(C, X_pred_overbound, V, x_true, v_true):
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Xb = S.as_constrained(X_pred_overbound)
    V = S.as_constrained(V)
    reach = np.sqrt(C.shape[0]) * (S.radius(S.linear_map(C, Xb)) + S.radius(V))
    offset = C @ (np.asarray(x_true, dtype=float) - Xb.center) + np.asarray(v_true, dtype=float) - V.center
    return float(reach), float(np.linalg.norm(offset))


def identification_threshold(C, X_pred_overbound, V, x_true, v_true) -> float:
    """Attack size beyond which the sensor's measurement update must be empty.

    ``X_pred_overbound`` is any zonotope containing the time update. The
    bound is ``sqrt(m) * (rad(C Xbar) + rad(V)) + |C (x - c_x) + v - c_v|``;
    it holds for every attack direction.
    """
    reach, offset = _threshold_terms(C, X_pred_overbound, V, x_true, v_true)
    return reach + offset


def aligned_identification_threshold(C, X_pred_overbound, V, x_true, v_true) -> float:
    """Same reach minus the offset norm.

    Sufficient only for attacks pointing along the offset
    ``C (x - c_x) + v - c_v``; other directions can exceed it and still leave
    the measurement update nonempty.
    """
    reach, offset = _threshold_terms(C, X_pred_overbound, V, x_true, v_true)
    return reach - offset


def stealth_bound(C, X_pred_overbound, x_true) -> float:
    """Noise-free part of the aligned threshold: ``sqrt(m) rad(C Xbar) - |C (x - c_x)|``.

    Attacks above this size can trip the aligned test for some noise
    realization; an attacker that wants to stay unnoticed keeps below it.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Xb = S.as_constrained(X_pred_overbound)
    m = C.shape[0]
    offset = C @ (np.asarray(x_true, dtype=float) - Xb.center)
    return float(np.sqrt(m) * S.radius(S.linear_map(C, Xb)) - np.linalg.norm(offset))


@dataclass(frozen=True)
class ThresholdReport:
    sensor: int              # 0-based
    identification_threshold: float
    stealth_bound: float
    attack_norm: float

    @property
    def exceeds_threshold(self) -> bool:
        return self.attack_norm > self.identification_threshold

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor + 1,
            "identification_threshold": self.identification_threshold,
            "stealth_bound": self.stealth_bound,
            "attack_norm": self.attack_norm,
        }


def threshold_report(sensor: int, C, X_pred_overbound, V, x_true, v_true, attack) -> ThresholdReport:
    return ThresholdReport(
        sensor,
        identification_threshold(C, X_pred_overbound, V, x_true, v_true),
        stealth_bound(C, X_pred_overbound, x_true),
        float(np.linalg.norm(np.asarray(attack, dtype=float))),
    )


def _box_center_radius(Z) -> tuple[np.ndarray, float]:
    box = S.interval_hull(Z)
    return box.center, float(np.max(box.half_widths, initial=0.0))


def filtering_condition(I_attacked, I_safe, n_x: int | None = None) -> bool:
    """Sufficient test that two agreement sets do not meet.

    Both sets are boxed; the test fires when the box centers are farther
    apart (Euclidean) than ``sqrt(n_x)`` times the sum of the box radii.
    """
    cA, rA = _box_center_radius(I_attacked)
    cS, rS = _box_center_radius(I_safe)
    n_x = cA.shape[0] if n_x is None else n_x
    return bool(np.linalg.norm(cA - cS) > np.sqrt(n_x) * (rA + rS))


@dataclass(frozen=True)
class DetectionVerdict:
    attack_detected: bool
    empty_measurement_sensors: frozenset
    estimated_safe: frozenset
    identified_attacked: frozenset

    def __post_init__(self):
        if self.estimated_safe & self.identified_attacked:
            raise ValueError("a sensor cannot be both estimated safe and identified attacked")

    def to_dict(self) -> dict:
        return {
            "attack_detected": self.attack_detected,
            "empty_measurement_sensors": sorted(i + 1 for i in self.empty_measurement_sensors),
            "estimated_safe": sorted(i + 1 for i in self.estimated_safe),
            "identified_attacked": sorted(i + 1 for i in self.identified_attacked),
        }


def identify_from_flags(measurement_empty: Sequence[bool], agreement_empty: Sequence[bool],
                        combos: Sequence[Sequence[int]], attack_detected: bool = False) -> DetectionVerdict:
    """Safe/attacked bookkeeping from emptiness flags alone."""
    p = len(measurement_empty)
    empty_meas = frozenset(i for i, e in enumerate(measurement_empty) if e)
    safe: set = set()
    for combo, empty in zip(combos, agreement_empty):
        if not empty:
            safe.update(combo)
    attacked = set(empty_meas) | (set(range(p)) - safe)
    return DetectionVerdict(bool(attack_detected), empty_meas, frozenset(safe), frozenset(attacked))


def identify(meas: Sequence, agreement: Sequence, combos: Sequence[Sequence[int]]) -> DetectionVerdict:
    meas_empty = [entry_is_empty(e) for e in meas]
    agree_empty = [entry_is_empty(e) for e in agreement]
    return identify_from_flags(meas_empty, agree_empty, combos, detect_attack(agreement))
