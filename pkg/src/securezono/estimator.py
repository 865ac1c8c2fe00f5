"""Secure set-based state estimation over a union of constrained zonotopes.

Each step runs a time update, one measurement update per sensor, the
agreement protocol over every size-``c_J`` sensor subset, and takes the union
of the nonempty agreement sets as the new estimate. Pruning keeps the size of
that union under control; an optional hypercube around a point estimate
bounds its radius.

Sensor indices are 0-based in code and 1-based in serialized output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np

from . import sets as S
from .model import PlantModel, check_redundant_observability, sensor_combos
from .sets import ConstrainedZonotope, SetCollection, Zonotope

PRUNING_STRATEGIES = ("none", "drop_empty_and_subsets", "merge_intersecting", "overbound_all", "reduce_order")


class EstimatorContractError(RuntimeError):
    """The estimate became empty although the standing assumptions promise otherwise."""


def parse_pruning(text: str) -> tuple[str, Optional[int]]:
    """Accept ``"merge_intersecting"`` or ``"reduce_order(20)"`` style names."""
    m = re.fullmatch(r"\s*(\w+)\s*(?:[(:]\s*(\d+)\s*\)?)?\s*", text)
    if not m or m.group(1) not in PRUNING_STRATEGIES:
        raise ValueError(f"unknown pruning strategy {text!r}; choose from {', '.join(PRUNING_STRATEGIES)}")
    return m.group(1), (int(m.group(2)) if m.group(2) else None)


@dataclass(frozen=True)
class EstimatorConfig:
    num_sensors: int
    max_attacked: int
    agreement_size: int
    pruning: str = "merge_intersecting"
    max_generators: Optional[int] = None
    modified_estimate_enabled: bool = False

    def __post_init__(self):
        name, gens = parse_pruning(self.pruning)
        object.__setattr__(self, "pruning", name)
        if gens is not None:
            object.__setattr__(self, "max_generators", gens)
        p, q, cj = self.num_sensors, self.max_attacked, self.agreement_size
        if p < 1:
            raise ValueError("need at least one sensor")
        if not 0 <= q <= p - 1:
            raise ValueError(f"max_attacked must lie in [0, {p - 1}], got {q}")
        if not 1 <= cj <= p - q:
            raise ValueError(f"agreement_size must lie in [1, {p - q}], got {cj}")
        if self.pruning == "reduce_order" and (self.max_generators is None or self.max_generators < 1):
            raise ValueError("reduce_order pruning needs a positive max_generators")

    @property
    def combos(self) -> list[tuple[int, ...]]:
        return sensor_combos(self.num_sensors, self.agreement_size)

    @property
    def num_combos(self) -> int:
        return comb(self.num_sensors, self.agreement_size)

    @property
    def pruning_label(self) -> str:
        if self.pruning == "reduce_order":
            return f"reduce_order({self.max_generators})"
        return self.pruning

    def to_dict(self) -> dict:
        return {
            "num_sensors": self.num_sensors,
            "max_attacked": self.max_attacked,
            "agreement_size": self.agreement_size,
            "pruning": self.pruning,
            "max_generators": self.max_generators,
            "modified_estimate_enabled": self.modified_estimate_enabled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        return cls(
            int(d["num_sensors"]), int(d["max_attacked"]), int(d["agreement_size"]),
            d.get("pruning", "merge_intersecting"), d.get("max_generators"),
            bool(d.get("modified_estimate_enabled", False)),
        )


def validate_config(config: EstimatorConfig, plant: PlantModel, obs_tol: float = 1e-8):
    """Reject configurations whose sensor subsets are not all observable."""
    if config.num_sensors != plant.p:
        raise ValueError(f"config lists {config.num_sensors} sensors, plant has {plant.p}")
    check_redundant_observability(plant.A, plant.sensors, config.agreement_size, obs_tol).raise_if_failed()


@dataclass(frozen=True)
class EstimateState:
    collection: SetCollection
    step: int
    combos: tuple

    @classmethod
    def initial(cls, X0, config: EstimatorConfig) -> "EstimateState":
        return cls(SetCollection([X0]), 0, tuple(config.combos))


@dataclass
class StepReport:
    """Everything one estimation step produced.

    ``measurement_updates[i]`` and ``agreement_sets[h]`` hold one piece per
    time-update member; the union of the pieces is the set in question.
    """

    step: int
    time_update: SetCollection
    measurement_updates: list
    measurement_empty: list
    agreement_sets: list
    agreement_empty: list
    estimate: SetCollection
    overbound: Zonotope
    radius: float
    pre_prune_count: int = 0
    modified: bool = False
    measurement_flags: list = field(default_factory=list)
    agreement_flags: list = field(default_factory=list)

    def nonempty_agreement(self) -> list[list[ConstrainedZonotope]]:
        """Nonempty pieces per combo."""
        return [[Z for Z, e in zip(pieces, flags) if not e]
                for pieces, flags in zip(self.agreement_sets, self.agreement_flags)]

    def nonempty_measurement(self) -> list[list[ConstrainedZonotope]]:
        return [[Z for Z, e in zip(pieces, flags) if not e]
                for pieces, flags in zip(self.measurement_updates, self.measurement_flags)]

    def to_record(self, include_sets: bool = True) -> dict:
        rec = {
            "step": self.step,
            "time_update_count": len(self.time_update),
            "measurement_empty": [bool(e) for e in self.measurement_empty],
            "agreement_empty": [bool(e) for e in self.agreement_empty],
            "pre_prune_count": self.pre_prune_count,
            "member_count": len(self.estimate),
            "radius": self.radius,
            "overbound": S.to_dict(self.overbound),
            "modified": self.modified,
        }
        if include_sets:
            rec["estimate"] = [S.to_dict(Z) for Z in self.estimate]
        return rec


# ---------------------------------------------------------------------------
# the four steps
# ---------------------------------------------------------------------------

def time_update(prev: SetCollection, A, B, u, W) -> SetCollection:
    """Member-wise ``A Z + B u + W``."""
    prev = prev if isinstance(prev, SetCollection) else SetCollection(prev)
    if len(prev) == 0:
        raise S.EmptySetError("time update of an empty estimate")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    shift = np.zeros(A.shape[0])
    if B is not None and np.size(B):
        B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
        u = np.zeros(B.shape[1]) if u is None else np.asarray(u, dtype=float).reshape(-1)
        shift = B @ u
    W = S.as_constrained(W)
    out = []
    for Z in prev:
        out.append(S.minkowski_sum(S.translate(S.linear_map(A, Z), shift), W))
    return SetCollection(out)


def output_set(y, V) -> Zonotope:
    """Set of noise-free outputs consistent with reading ``y``."""
    V = S.as_constrained(V)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != V.dim:
        raise ValueError(f"measurement of length {y.shape[0]} against a {V.dim}-dimensional noise set")
    return Zonotope(y - V.center, V.generators)


def measurement_update(X_pred, C, Y) -> ConstrainedZonotope:
    return S.generalized_intersection(X_pred, Y, C)


def agreement_sets(meas: Sequence, combos: Sequence[Sequence[int]]) -> list[ConstrainedZonotope]:
    """Fold the plain intersection over each combo in ascending sensor order.

    An empty measurement update short-circuits the combo to an empty set
    (returned as ``None``).
    """
    empty = [S.is_empty(Z) for Z in meas]
    out = []
    for combo in combos:
        idx = sorted(combo)
        if any(empty[j] for j in idx):
            out.append(None)
            continue
        acc = meas[idx[0]]
        for j in idx[1:]:
            acc = S.intersection(acc, meas[j])
        out.append(acc)
    return out


def chained_agreement(X_pred, Cs: Sequence, Ys: Sequence, combo: Sequence[int]) -> ConstrainedZonotope:
    """``X_pred`` restricted by every sensor of ``combo`` in one chain.

    Set-equal to intersecting the per-sensor measurement updates but avoids
    repeating the prediction's generators once per sensor.
    """
    acc = X_pred
    for j in sorted(combo):
        acc = S.generalized_intersection(acc, Ys[j], Cs[j])
    return acc


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

def _drop_subsets(members: list) -> list:
    kept: list = []
    for Z in members:
        if any(S.certified_subset(Z, K) for K in kept):
            continue
        kept = [K for K in kept if not S.certified_subset(K, Z)]
        kept.append(Z)
    return kept


def _components(members: list) -> list[list[int]]:
    """Connected components of the 'intersects' graph, ordered by first member."""
    r = len(members)
    parent = list(range(r))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    hulls = [S.interval_hull(Z) for Z in members]
    for i in range(r):
        for j in range(i + 1, r):
            if find(i) == find(j):
                continue
            if np.any(hulls[i].upper < hulls[j].lower) or np.any(hulls[j].upper < hulls[i].lower):
                continue
            if not S.is_empty(S.intersection(members[i], members[j])):
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(r):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _reduce_member(Z: ConstrainedZonotope, max_generators: int) -> Zonotope:
    if not Z.is_zonotope:
        if Z.num_generators <= max_generators:
            return Z
        Z = S.interval_hull(Z).to_zonotope()
    return S.reduce_order(Z, max(max_generators, Z.dim))


def prune(collection, strategy: str = "merge_intersecting", config: Optional[EstimatorConfig] = None,
          max_generators: Optional[int] = None) -> SetCollection:
    """Shrink the representation of a union while keeping every point of it."""
    name, gens = parse_pruning(strategy)
    if gens is None:
        gens = max_generators if max_generators is not None else (config.max_generators if config else None)
    members = [S.normalize(Z) for Z in collection if not S.is_empty(Z)]
    if not members or name == "none":
        return SetCollection(members)
    if name == "drop_empty_and_subsets":
        return SetCollection(_drop_subsets(members))
    if name == "overbound_all":
        return SetCollection([S.overbound_collection(members)])
    if name == "merge_intersecting":
        out = []
        for group in _components(members):
            out.append(S.overbound_collection([members[i] for i in group]))
        return SetCollection(out)
    if gens is None:
        raise ValueError("reduce_order pruning needs max_generators")
    return SetCollection([_reduce_member(Z, gens) for Z in members])


def modified_estimate(estimate, x_hat, delta_k: float) -> SetCollection:
    """Clip every member to the cube of half-width ``delta_k`` around ``x_hat``."""
    if delta_k < 0:
        raise ValueError("delta_k must be nonnegative")
    cube = S.hypercube(x_hat, delta_k)
    out = []
    for Z in estimate:
        clipped = S.intersection(Z, cube)
        if not S.is_empty(clipped):
            out.append(clipped)
    if not out:
        raise EstimatorContractError("modified estimate empty: point estimator contract violated")
    return SetCollection(out)


def overbound_radius(collection) -> tuple[Zonotope, float]:
    ob = S.overbound_collection(collection)
    return ob, float(np.max(np.abs(ob.generators).sum(axis=1), initial=0.0))


# ---------------------------------------------------------------------------
# one full step
# ---------------------------------------------------------------------------

def estimate_step(state: EstimateState, A, B, u, W, measurements: Sequence, C: Sequence, V: Sequence,
                  config: EstimatorConfig, x_hat=None, delta_k: Optional[float] = None):
    """Advance the estimate by one sample.

    ``measurements[i]`` is the reading of sensor ``i`` at the new step and
    ``u`` the input applied during the previous step. When the config enables
    the modified estimate, ``x_hat`` and ``delta_k`` must be given.
    """
    p = config.num_sensors
    if not (len(measurements) == len(C) == len(V) == p):
        raise ValueError(f"expected {p} measurements, output maps and noise sets")
    pred = time_update(state.collection, A, B, u, W)
    Ys = [output_set(y, Vi) for y, Vi in zip(measurements, V)]
    Cs = [np.atleast_2d(np.asarray(Ci, dtype=float)) for Ci in C]

    meas, meas_flags = [], []
    for i in range(p):
        pieces = [measurement_update(X, Cs[i], Ys[i]) for X in pred]
        flags = [S.is_empty(Z) for Z in pieces]
        meas.append(pieces)
        meas_flags.append(flags)

    agree, agree_flags = [], []
    for combo in state.combos:
        pieces, flags = [], []
        for r, X in enumerate(pred):
            if any(meas_flags[j][r] for j in combo):
                pieces.append(None)
                flags.append(True)
                continue
            Z = chained_agreement(X, Cs, Ys, combo)
            pieces.append(Z)
            flags.append(S.is_empty(Z))
        agree.append(pieces)
        agree_flags.append(flags)

    union = [Z for pieces, flags in zip(agree, agree_flags) for Z, e in zip(pieces, flags) if not e]
    if not union:
        raise EstimatorContractError("estimator contract violated: no nonempty agreement set")
    est = prune(SetCollection(union), config.pruning, config)
    modified = False
    if config.modified_estimate_enabled:
        if x_hat is None or delta_k is None:
            raise ValueError("modified estimate enabled but no point estimate or radius supplied")
        est = modified_estimate(est, x_hat, delta_k)
        modified = True
    ob, rad = overbound_radius(est)
    report = StepReport(
        step=state.step + 1,
        time_update=pred,
        measurement_updates=meas,
        measurement_empty=[all(f) for f in meas_flags],
        agreement_sets=agree,
        agreement_empty=[all(f) for f in agree_flags],
        estimate=est,
        overbound=ob,
        radius=rad,
        pre_prune_count=len(union),
        modified=modified,
        measurement_flags=meas_flags,
        agreement_flags=agree_flags,
    )
    return EstimateState(est, state.step + 1, state.combos), report
