"""Scenario engine: plant simulation, attack generation, estimator loop and trace output."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import butter, lfilter

from . import attacks as K
from . import estimator as E
from . import sets as S
from .model import PlantModel, build_building_model, build_planar_model, check_redundant_observability
from .point import DeltaSchedule, MultiObserver, ObserverDesignError, fit_schedule, noise_levels

ATTACK_MODES = ("none", "rotating_uniform", "fixed_subset_uniform", "random_subset_uniform", "custom_script")
PHI_KINDS = ("linear", "power", "geometric")
METRIC_COLUMNS = ("step", "member_count", "radius", "inclusion", "detected", "n_estimated_safe",
                  "n_identified_attacked", "delta", "step_time_us")


# ---------------------------------------------------------------------------
# attacks and inputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhiSchedule:
    """Strictly increasing attack growth with ``phi(1) = 1``."""

    kind: str = "linear"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in PHI_KINDS:
            raise ValueError(f"unknown phi kind {self.kind!r}")
        if self.kind == "power" and self.param <= 0:
            raise ValueError("power schedule needs a positive exponent")
        if self.kind == "geometric" and self.param <= 1:
            raise ValueError("geometric schedule needs a ratio above 1")

    def __call__(self, k: int) -> float:
        if self.kind == "linear":
            return float(k)
        if self.kind == "power":
            return float(k) ** self.param
        return float(self.param) ** (k - 1)


@dataclass(frozen=True)
class AttackSpec:
    mode: str = "rotating_uniform"
    q: int = 0
    phi: PhiSchedule = field(default_factory=PhiSchedule)
    scale: float = 1.0
    subset: tuple = ()          # 0-based, for fixed_subset_uniform
    script: dict = field(default_factory=dict)   # {step: {sensor (1-based): vector}}

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.q < 0:
            raise ValueError("q must be nonnegative")
        if self.mode == "fixed_subset_uniform" and len(self.subset) > self.q:
            raise ValueError("fixed attacked subset is larger than q")

    def attacked_set(self, k: int, p: int, rng: np.random.Generator) -> frozenset:
        if self.mode == "none" or self.q == 0:
            return frozenset()
        if self.mode == "rotating_uniform":
            return frozenset((k + j) % p for j in range(self.q))
        if self.mode == "fixed_subset_uniform":
            return frozenset(self.subset)
        if self.mode == "random_subset_uniform":
            return frozenset(int(i) for i in rng.choice(p, size=self.q, replace=False))
        entries = self.script.get(k, self.script.get(str(k), {}))
        chosen = frozenset(int(i) - 1 for i in entries)
        if len(chosen) > self.q:
            raise ValueError(f"scripted attack at step {k} touches more than q = {self.q} sensors")
        return chosen

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "q": self.q,
            "phi": {"kind": self.phi.kind, "param": self.phi.param},
            "scale": self.scale,
            "subset": [i + 1 for i in self.subset],
            "script": {str(k): {str(i): list(map(float, v)) for i, v in d.items()} for k, d in self.script.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        phi = d.get("phi", {})
        script = {int(k): {int(i): v for i, v in row.items()} for k, row in d.get("script", {}).items()}
        return cls(d.get("mode", "rotating_uniform"), int(d.get("q", 0)),
                   PhiSchedule(phi.get("kind", "linear"), float(phi.get("param", 1.0))),
                   float(d.get("scale", 1.0)), tuple(int(i) - 1 for i in d.get("subset", [])), script)


def gen_attack(spec: AttackSpec, k: int, dims, rng: np.random.Generator):
    """Attack vectors for step ``k`` and the attacked sensor set (0-based)."""
    if k < 1:
        raise ValueError("attacks start at step 1")
    p = len(dims)
    chosen = spec.attacked_set(k, p, rng)
    out = [np.zeros(m) for m in dims]
    if spec.mode == "custom_script":
        entries = spec.script.get(k, spec.script.get(str(k), {}))
        for i, v in entries.items():
            out[int(i) - 1] = np.asarray(v, dtype=float).reshape(dims[int(i) - 1])
        return out, chosen
    bound = spec.scale * spec.phi(k)
    for i in sorted(chosen):
        out[i] = rng.uniform(-bound, bound, size=dims[i])
    return out, chosen


def sample_zonotope(Z, rng: np.random.Generator) -> np.ndarray:
    """Uniform factor draw ``c + G beta``."""
    Z = S.as_constrained(Z)
    if not Z.is_zonotope:
        raise ValueError("sampling is defined for unconstrained zonotopes")
    beta = rng.uniform(-1.0, 1.0, size=Z.num_generators)
    return Z.center + Z.generators @ beta


@dataclass(frozen=True)
class InputSpec:
    """Known input sequence: all zeros, or seeded low-pass filtered noise."""

    kind: str = "zero"
    amplitude: float = 0.0
    cutoff: float = 0.05      # normalized to the Nyquist frequency

    def __post_init__(self):
        if self.kind not in ("zero", "band_limited"):
            raise ValueError(f"unknown input kind {self.kind!r}")

    def generate(self, steps: int, width: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "zero" or width == 0 or steps == 0:
            return np.zeros((steps, width))
        white = rng.standard_normal((steps + 200, width))
        b, a = butter(2, self.cutoff)
        sig = lfilter(b, a, white, axis=0)[200:]
        peak = float(np.max(np.abs(sig)))
        return self.amplitude * sig / peak if peak > 0 else sig

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "cutoff": self.cutoff}

    @classmethod
    def from_dict(cls, d: dict) -> "InputSpec":
        return cls(d.get("kind", "zero"), float(d.get("amplitude", 0.0)), float(d.get("cutoff", 0.05)))


@dataclass(frozen=True)
class PointConfig:
    pole_radius: float = 0.5
    schedule: Optional[DeltaSchedule] = None
    x_hat0: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "pole_radius": self.pole_radius,
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "x_hat0": None if self.x_hat0 is None else list(self.x_hat0),
        }

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> Optional["PointConfig"]:
        if d is None:
            return None
        sch = d.get("schedule")
        x0 = d.get("x_hat0")
        return cls(float(d.get("pole_radius", 0.5)), None if sch is None else DeltaSchedule.from_dict(sch),
                   None if x0 is None else tuple(float(v) for v in x0))


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: PlantModel
    initial_set: S.Zonotope
    true_x0: tuple
    steps: int
    estimator: E.EstimatorConfig
    attack: AttackSpec = field(default_factory=AttackSpec)
    seed: int = 0
    inputs: InputSpec = field(default_factory=InputSpec)
    point: Optional[PointConfig] = None
    out_dir: str = "out"
    obs_tol: float = 1e-8
    notes: str = ""

    def validate(self, check_observability: bool = True):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        x0 = np.asarray(self.true_x0, dtype=float)
        if x0.shape != (self.plant.n,):
            raise ValueError("true initial state has the wrong dimension")
        if not S.contains_point(self.initial_set, x0):
            raise ValueError("true initial state lies outside the initial set")
        if self.attack.q > self.estimator.max_attacked:
            raise ValueError("attack touches more sensors than the estimator tolerates")
        if self.estimator.modified_estimate_enabled and (self.point is None or self.point.schedule is None):
            raise ValueError("the modified estimate needs a point estimator with a radius schedule")
        if check_observability:
            E.validate_config(self.estimator, self.plant, self.obs_tol)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "notes": self.notes,
            "plant": self.plant.to_dict(),
            "initial_set": S.to_dict(self.initial_set),
            "true_x0": list(map(float, self.true_x0)),
            "steps": self.steps,
            "seed": self.seed,
            "estimator": self.estimator.to_dict(),
            "attack": self.attack.to_dict(),
            "inputs": self.inputs.to_dict(),
            "point": None if self.point is None else self.point.to_dict(),
            "out_dir": self.out_dir,
            "obs_tol": self.obs_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(
            name=d.get("name", "scenario"),
            plant=PlantModel.from_dict(d["plant"]),
            initial_set=S.from_dict(d["initial_set"]),
            true_x0=tuple(float(v) for v in d["true_x0"]),
            steps=int(d["steps"]),
            estimator=E.EstimatorConfig.from_dict(d["estimator"]),
            attack=AttackSpec.from_dict(d.get("attack", {"mode": "none"})),
            seed=int(d.get("seed", 0)),
            inputs=InputSpec.from_dict(d.get("inputs", {})),
            point=PointConfig.from_dict(d.get("point")),
            out_dir=d.get("out_dir", "out"),
            obs_tol=float(d.get("obs_tol", 1e-8)),
            notes=d.get("notes", ""),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def planar_scenario(seed: int = 7, steps: int = 50, pruning: str = "merge_intersecting",
                    attack_mode: str = "rotating_uniform") -> ScenarioConfig:
    plant = build_planar_model()
    est = E.EstimatorConfig(num_sensors=4, max_attacked=2, agreement_size=2, pruning=pruning)
    attack = AttackSpec(attack_mode, q=0 if attack_mode == "none" else 2)
    return ScenarioConfig(
        name="planar", plant=plant, initial_set=S.Zonotope(np.zeros(2), 5.0 * np.eye(2)),
        true_x0=(0.0, 0.0), steps=steps, estimator=est, attack=attack, seed=seed,
        out_dir="out/planar",
        notes="initial set, true initial state and seed are illustrative choices",
    )


def building_scenario(seed: int = 7, steps: int = 200, pruning: str = "merge_intersecting",
                      modified: bool = False, schedule: Optional[DeltaSchedule] = None,
                      pole_radius: float = 0.9) -> ScenarioConfig:
    plant = build_building_model()
    est = E.EstimatorConfig(num_sensors=3, max_attacked=1, agreement_size=2, pruning=pruning,
                            modified_estimate_enabled=modified)
    return ScenarioConfig(
        name="building", plant=plant, initial_set=S.Zonotope(np.zeros(6), np.eye(6)),
        true_x0=(0.0,) * 6, steps=steps, estimator=est, attack=AttackSpec("rotating_uniform", q=1), seed=seed,
        inputs=InputSpec("band_limited", amplitude=0.5, cutoff=0.05),
        point=PointConfig(pole_radius=pole_radius, schedule=schedule),
        out_dir="out/building",
        notes="initial set, true initial state, ground input and seed are illustrative choices",
    )


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class ScenarioTrace:
    records: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def inclusion_all(self) -> bool:
        return all(r["inclusion"] for r in self.records)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 2
        return 0 if self.inclusion_all else 1

    def jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.jsonl").write_text(self.jsonl())
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METRIC_COLUMNS)
            for row in self.metrics:
                w.writerow([row[c] for c in METRIC_COLUMNS])


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def initial_error_bound(X0, x_hat0) -> float:
    """Euclidean bound on ``x(0) - x_hat0`` over the initial set."""
    box = S.interval_hull(X0)
    x_hat0 = np.asarray(x_hat0, dtype=float)
    return float(np.linalg.norm(np.maximum(np.abs(box.lower - x_hat0), np.abs(box.upper - x_hat0))))


def _floats(v) -> list:
    return [float(t) for t in np.asarray(v, dtype=float).reshape(-1)]


def run_scenario(config: ScenarioConfig, record_sets: bool = True, check_observability: bool = True,
                 analysis: bool = True, on_step=None) -> ScenarioTrace:
    """Simulate the plant and run the estimator for ``config.steps`` steps.

    Noise, attacks and the input come from independent seeded streams, so
    runs that differ only in estimator settings see identical data.
    """
    config.validate(check_observability)
    plant, est_cfg = config.plant, config.estimator
    rng_w, rng_v, rng_a, rng_u = _streams(config.seed)
    n, p = plant.n, plant.p
    dims = [s.num_outputs for s in plant.sensors]
    U = config.inputs.generate(config.steps + 1, plant.num_inputs, rng_u)
    x = np.asarray(config.true_x0, dtype=float)

    bank = None
    schedule = config.point.schedule if config.point else None
    if config.point is not None:
        x_hat0 = config.point.x_hat0 if config.point.x_hat0 is not None else S.as_constrained(config.initial_set).center
        bank = MultiObserver.design(plant.A, plant.B, plant.C, est_cfg.combos, config.point.pole_radius, x_hat0)

    state = E.EstimateState.initial(config.initial_set, est_cfg)
    trace = ScenarioTrace()
    ob0, rad0 = E.overbound_radius(state.collection)
    rec0 = {
        "step": 0,
        "x": _floats(x),
        "inclusion": bool(state.collection.contains(x)),
        "member_count": 1,
        "radius": rad0,
        "x_hat": None if bank is None else _floats(bank.fused),
        "delta": None if schedule is None else schedule.delta(0),
    }
    if record_sets:
        rec0["estimate"] = [S.to_dict(Z) for Z in state.collection]
    trace.records.append(rec0)
    trace.metrics.append(_metric_row(rec0, None, 0))
    if bank is not None:
        bank.predict(U[0])

    for k in range(1, config.steps + 1):
        t0 = time.perf_counter_ns()
        w = sample_zonotope(plant.W, rng_w)
        x = plant.A @ x + (plant.B @ U[k - 1] if plant.num_inputs else 0.0) + w
        attack_vecs, attacked = gen_attack(config.attack, k, dims, rng_a)
        noise = [sample_zonotope(s.V, rng_v) for s in plant.sensors]
        ys = [s.C @ x + v + a for s, v, a in zip(plant.sensors, noise, attack_vecs)]
        x_hat = None if bank is None else bank.fused.copy()
        delta_k = None if schedule is None else schedule.delta(k)
        rec = {
            "step": k,
            "x": _floats(x),
            "u": _floats(U[k - 1]),
            "y": [_floats(y) for y in ys],
            "attack": [_floats(a) for a in attack_vecs],
            "attacked": sorted(i + 1 for i in attacked),
            "x_hat": None if x_hat is None else _floats(x_hat),
            "delta": delta_k,
        }
        try:
            state, report = E.estimate_step(state, plant.A, plant.B, U[k - 1], plant.W, ys, plant.C, plant.V,
                                            est_cfg, x_hat, delta_k)
        except (E.EstimatorContractError, S.EmptySetError) as exc:
            trace.error = f"step {k}: {exc}"
            rec["error"] = str(exc)
            rec["inclusion"] = False
            trace.records.append(rec)
            break
        detected = K.detect_attack(report.nonempty_agreement())
        verdict = K.identify_from_flags(report.measurement_empty, report.agreement_empty, state.combos, detected)
        rec.update(report.to_record(include_sets=record_sets))
        rec["verdict"] = verdict.to_dict()
        rec["inclusion"] = bool(state.collection.contains(x))
        if analysis and attacked:
            xbar = S.overbound_collection(report.time_update)
            rec["thresholds"] = [
                K.threshold_report(i, plant.sensors[i].C, xbar, plant.sensors[i].V, x, noise[i],
                                   attack_vecs[i]).to_dict()
                for i in sorted(attacked)
            ]
        if bank is not None:
            try:
                bank.update(U[k], ys, verdict.identified_attacked)
            except ObserverDesignError as exc:
                trace.error = f"step {k}: {exc}"
                rec["error"] = str(exc)
                trace.records.append(rec)
                break
        elapsed = (time.perf_counter_ns() - t0) // 1000
        trace.records.append(rec)
        trace.metrics.append(_metric_row(rec, verdict, elapsed))
        if on_step is not None:
            on_step(k, state, report, verdict, x)
    return trace


def _metric_row(rec: dict, verdict, elapsed_us: int) -> dict:
    return {
        "step": rec["step"],
        "member_count": rec.get("member_count", 0),
        "radius": rec.get("radius", ""),
        "inclusion": int(rec["inclusion"]),
        "detected": int(verdict.attack_detected) if verdict else 0,
        "n_estimated_safe": len(verdict.estimated_safe) if verdict else "",
        "n_identified_attacked": len(verdict.identified_attacked) if verdict else "",
        "delta": "" if rec.get("delta") is None else rec["delta"],
        "step_time_us": elapsed_us,
    }


def resolve_out_dir(config: ScenarioConfig, flag: Optional[str] = None) -> str:
    """Flag beats environment beats config."""
    if flag:
        return flag
    return os.environ.get("SECUREZONO_OUT_DIR") or config.out_dir


# ---------------------------------------------------------------------------
# radius-schedule calibration
# ---------------------------------------------------------------------------

def observer_errors(config: ScenarioConfig, seed: int, x0=None, excluded_fn=None) -> np.ndarray:
    """Point-estimate error norms ``|x_hat(k) - x(k)|`` for k = 0..steps.

    ``excluded_fn(k, attacked)`` supplies the sensors the bank must ignore at
    step ``k``; by default none are.
    """
    plant, est_cfg = config.plant, config.estimator
    pc = config.point or PointConfig()
    rng_w, rng_v, rng_a, rng_u = _streams(seed)
    dims = [s.num_outputs for s in plant.sensors]
    U = config.inputs.generate(config.steps + 1, plant.num_inputs, rng_u)
    x = np.asarray(config.true_x0 if x0 is None else x0, dtype=float)
    x_hat0 = pc.x_hat0 if pc.x_hat0 is not None else S.as_constrained(config.initial_set).center
    bank = MultiObserver.design(plant.A, plant.B, plant.C, est_cfg.combos, pc.pole_radius, x_hat0)
    errs = [np.linalg.norm(bank.fused - x)]
    bank.predict(U[0])
    for k in range(1, config.steps + 1):
        x = plant.A @ x + (plant.B @ U[k - 1] if plant.num_inputs else 0.0) + sample_zonotope(plant.W, rng_w)
        attack_vecs, attacked = gen_attack(config.attack, k, dims, rng_a)
        ys = [s.C @ x + sample_zonotope(s.V, rng_v) + a for s, a in zip(plant.sensors, attack_vecs)]
        errs.append(np.linalg.norm(bank.fused - x))
        excluded = excluded_fn(k, attacked) if excluded_fn else ()
        bank.update(U[k], ys, excluded)
    return np.asarray(errs)


def calibrate_schedule(config: ScenarioConfig, runs: int = 20, seed: int = 1000, safety: float = 2.0,
                       attack_free: bool = True) -> DeltaSchedule:
    """Fit the radius schedule on Monte Carlo runs of the observer bank.

    Initial states are drawn from the initial set. With ``attack_free`` the
    attack model is switched off, otherwise the configured attacks are applied
    and the full estimator loop supplies the excluded sensors.
    """
    pc = config.point or PointConfig()
    plant = config.plant
    base = replace(config, point=pc, estimator=replace(config.estimator, modified_estimate_enabled=False))
    if attack_free:
        base = replace(base, attack=AttackSpec("none"))
    x_hat0 = pc.x_hat0 if pc.x_hat0 is not None else S.as_constrained(config.initial_set).center
    r0 = initial_error_bound(config.initial_set, x_hat0)
    w_bar, v_bar = noise_levels(plant.W, plant.V)
    bank = MultiObserver.design(plant.A, plant.B, plant.C, config.estimator.combos, pc.pole_radius)
    rate = 0.5 * (1.0 + max(bank.closed_loop_radii()))
    ss = np.random.SeedSequence(seed)
    traces = []
    for child in ss.spawn(runs):
        rng = np.random.default_rng(child)
        x0 = sample_zonotope(config.initial_set, rng)
        run_seed = int(rng.integers(2 ** 31))
        if attack_free:
            traces.append(observer_errors(base, run_seed, x0))
        else:
            cfg = replace(base, true_x0=tuple(x0), seed=run_seed)
            tr = run_scenario(cfg, record_sets=False, check_observability=False, analysis=False)
            errs = [np.linalg.norm(np.asarray(r["x_hat"]) - np.asarray(r["x"])) for r in tr.records]
            traces.append(np.asarray(errs))
    L = min(len(t) for t in traces)
    return fit_schedule(np.vstack([t[:L] for t in traces]), rate, w_bar, v_bar, r0, safety)
