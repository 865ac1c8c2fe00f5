import json
from dataclasses import replace
from math import factorial

import numpy as np
import pytest

from securezono import cli
from securezono import sets as S
from securezono import sim
from securezono.model import (BUILDING_MASS, PlantModel, build_building_model, build_planar_model,
                              building_continuous, check_redundant_observability, discretize)


def taylor_discretization(Ac, Bc, dt, terms=40):
    n = Ac.shape[0]
    A = np.zeros((n, n))
    Phi = np.zeros((n, n))
    term = np.eye(n)
    for k in range(terms):
        A += term / factorial(k)
        Phi += term * dt / factorial(k + 1)
        term = term @ (Ac * dt)
    return A, Phi @ Bc


# --- attacks ---------------------------------------------------------------------------

def test_rotating_subsets_for_four_sensors():
    spec = sim.AttackSpec("rotating_uniform", q=2)
    rng = np.random.default_rng(0)
    got = [sorted(i + 1 for i in spec.attacked_set(k, 4, rng)) for k in (1, 2, 3)]
    assert got == [[2, 3], [3, 4], [1, 4]]


def test_rotating_single_sensor_building():
    spec = sim.AttackSpec("rotating_uniform", q=1)
    rng = np.random.default_rng(0)
    assert [sorted(spec.attacked_set(k, 3, rng)) for k in (1, 2, 3)] == [[1], [2], [0]]


def test_no_attack_mode_is_zero():
    vecs, chosen = sim.gen_attack(sim.AttackSpec("none"), 5, [2, 2, 2], np.random.default_rng(1))
    assert not chosen and all(not v.any() for v in vecs)


def test_first_step_attack_within_unit_interval():
    rng = np.random.default_rng(3)
    spec = sim.AttackSpec("rotating_uniform", q=2)
    for _ in range(200):
        vecs, chosen = sim.gen_attack(spec, 1, [2, 2, 2, 2], rng)
        for i in chosen:
            assert np.all(np.abs(vecs[i]) < 1)
        for i in set(range(4)) - chosen:
            assert not vecs[i].any()


def test_attack_grows_with_phi():
    rng = np.random.default_rng(3)
    spec = sim.AttackSpec("fixed_subset_uniform", q=1, subset=(0,), phi=sim.PhiSchedule("power", 2.0))
    big = max(np.abs(sim.gen_attack(spec, 10, [2, 2], rng)[0][0]).max() for _ in range(50))
    assert 50 < big <= 100


def test_phi_schedules():
    assert sim.PhiSchedule("linear")(3) == 3.0
    assert sim.PhiSchedule("power", 2.0)(3) == 9.0
    assert sim.PhiSchedule("geometric", 2.0)(1) == 1.0
    with pytest.raises(ValueError):
        sim.PhiSchedule("geometric", 1.0)


def test_random_subset_cardinality():
    spec = sim.AttackSpec("random_subset_uniform", q=2)
    rng = np.random.default_rng(9)
    assert all(len(spec.attacked_set(k, 4, rng)) == 2 for k in range(1, 50))


def test_custom_script_attack():
    spec = sim.AttackSpec("custom_script", q=1, script={2: {3: [1.0, -1.0]}})
    vecs, chosen = sim.gen_attack(spec, 2, [2, 2, 2], np.random.default_rng(0))
    assert chosen == {2} and vecs[2].tolist() == [1.0, -1.0]
    with pytest.raises(ValueError):
        sim.AttackSpec("custom_script", q=1, script={1: {1: [0.0], 2: [0.0]}}).attacked_set(1, 2, None)


def test_attack_spec_round_trip():
    spec = sim.AttackSpec("fixed_subset_uniform", q=2, subset=(0, 3), phi=sim.PhiSchedule("power", 1.5), scale=0.5)
    assert sim.AttackSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_gen_attack_requires_positive_step():
    with pytest.raises(ValueError):
        sim.gen_attack(sim.AttackSpec(), 0, [1], np.random.default_rng(0))


# --- sampling --------------------------------------------------------------------

def test_sample_singleton_is_center():
    assert sim.sample_zonotope(S.singleton([1.0, 2.0]), np.random.default_rng(0)).tolist() == [1.0, 2.0]


def test_samples_lie_in_zonotope():
    rng = np.random.default_rng(1)
    Z = S.Zonotope([1.0, -1.0], [[1.0, 0.5, 0.2], [0.0, 1.0, -0.3]])
    assert all(S.contains_point(Z, sim.sample_zonotope(Z, rng)) for _ in range(50))


def test_sample_mean_converges_to_center():
    rng = np.random.default_rng(2)
    Z = S.Zonotope([3.0, -2.0], [[1.0, 0.5], [0.0, 2.0]])
    draws = np.array([sim.sample_zonotope(Z, rng) for _ in range(100_000)])
    sigma = np.sqrt((Z.generators ** 2).sum(axis=1) / 3 / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - Z.center) < 3 * sigma)


def test_sampling_rejects_constrained_sets():
    with pytest.raises(ValueError):
        sim.sample_zonotope(S.ConstrainedZonotope([0.0], [[1.0]], [[1.0]], [0.0]), np.random.default_rng(0))


# --- plant models ----------------------------------------------------------------

def test_building_mass_values():
    assert np.diag(BUILDING_MASS).tolist() == [478350.0, 478350.0, 517790.0]


def test_building_discretization_matches_taylor_series():
    Ac, Bc = building_continuous()
    A, B = discretize(Ac, Bc, 1e-3)
    At, Bt = taylor_discretization(Ac, Bc, 1e-3)
    assert np.allclose(A, At, rtol=1e-10, atol=1e-12)
    assert np.allclose(B, Bt, rtol=1e-8, atol=1e-14)


def test_building_discretization_tends_to_identity():
    Ac, Bc = building_continuous()
    A, _ = discretize(Ac, Bc, 1e-9)
    assert np.linalg.norm(A - np.eye(6)) < 1e-3


def test_building_is_schur_stable():
    A = build_building_model().A
    assert np.max(np.abs(np.linalg.eigvals(A))) <= 1 + 1e-9


def test_discretize_rejects_bad_input():
    with pytest.raises(ValueError):
        discretize(np.eye(2), np.ones((2, 1)), 0.0)
    with pytest.raises(ValueError):
        discretize(np.zeros((2, 2)), np.ones((2, 1)), 1e-3)


def test_planar_pairs_observable():
    plant = build_planar_model()
    rep = check_redundant_observability(plant.A, plant.sensors, 2)
    assert rep.passed and len(rep.combos) == 6


def test_observability_rejects_blind_sensor_set():
    A = np.eye(2)
    rep = check_redundant_observability(A, [np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]])], 2)
    assert not rep.passed and rep.failing == [(1, 2)]
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        rep.raise_if_failed()


def test_plant_round_trip():
    plant = build_building_model()
    back = PlantModel.from_dict(json.loads(json.dumps(plant.to_dict())))
    assert np.array_equal(back.A, plant.A) and len(back.sensors) == 3


# --- inputs ----------------------------------------------------------------------

def test_band_limited_input_is_bounded_and_seeded():
    spec = sim.InputSpec("band_limited", amplitude=0.5)
    a = spec.generate(100, 1, np.random.default_rng(1))
    b = spec.generate(100, 1, np.random.default_rng(1))
    assert np.array_equal(a, b) and np.abs(a).max() == pytest.approx(0.5)
    assert not sim.InputSpec().generate(10, 1, np.random.default_rng(0)).any()


# --- scenarios -----------------------------------------------------------------------

def test_zero_step_trace_has_only_initial_record():
    tr = sim.run_scenario(sim.planar_scenario(steps=0))
    assert len(tr.records) == 1 and tr.records[0]["step"] == 0 and tr.exit_code == 0


def test_planar_seed7_short_run_keeps_truth(tmp_path):
    tr = sim.run_scenario(sim.planar_scenario(seed=7, steps=15))
    assert tr.inclusion_all and tr.exit_code == 0
    for rec in tr.records[1:]:
        assert set(rec["verdict"]["identified_attacked"]) <= set(rec["attacked"])
    tr.write(tmp_path)
    lines = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert len(lines) == 16
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header.split(",") == list(sim.METRIC_COLUMNS)


def test_traces_exclude_wall_clock():
    tr = sim.run_scenario(sim.planar_scenario(steps=3))
    assert "step_time_us" not in tr.jsonl()


def test_config_validation():
    cfg = sim.planar_scenario()
    with pytest.raises(ValueError):
        replace(cfg, true_x0=(50.0, 0.0)).validate()
    with pytest.raises(ValueError):
        replace(cfg, steps=-1).validate()
    with pytest.raises(ValueError):
        sim.building_scenario(modified=True).validate(check_observability=False)


def test_scenario_config_round_trip(tmp_path):
    cfg = sim.building_scenario(steps=5)
    cfg.save(tmp_path / "b.json")
    back = sim.ScenarioConfig.load(tmp_path / "b.json")
    assert back.to_dict() == cfg.to_dict()


def test_out_dir_precedence(monkeypatch):
    cfg = sim.planar_scenario()
    monkeypatch.delenv("SECUREZONO_OUT_DIR", raising=False)
    assert sim.resolve_out_dir(cfg) == "out/planar"
    monkeypatch.setenv("SECUREZONO_OUT_DIR", "/tmp/env")
    assert sim.resolve_out_dir(cfg) == "/tmp/env"
    assert sim.resolve_out_dir(cfg, "/tmp/flag") == "/tmp/flag"


def test_contract_violation_stops_with_nonzero_exit(monkeypatch):
    real = sim.E.estimate_step

    def failing(state, *args, **kw):
        if state.step == 2:
            raise sim.E.EstimatorContractError("estimator contract violated: no nonempty agreement set")
        return real(state, *args, **kw)

    monkeypatch.setattr(sim.E, "estimate_step", failing)
    tr = sim.run_scenario(sim.planar_scenario(steps=6))
    assert tr.exit_code == 2
    assert [r["step"] for r in tr.records] == [0, 1, 2, 3]
    assert "no nonempty agreement set" in tr.records[-1]["error"]


# --- command line ----------------------------------------------------------------

def test_cli_run_and_check(tmp_path, capsys):
    cfg = sim.planar_scenario(steps=4)
    path = tmp_path / "planar.json"
    cfg.save(path)
    assert cli.main(["run", str(path), "--out-dir", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert (tmp_path / "o" / "trace.jsonl").exists()
    assert cli.main(["check-observability", str(path)]) == 0
    capsys.readouterr()
    assert cli.main(["check-observability", str(path), "--combo-size", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_building_singletons_report(tmp_path, capsys):
    path = tmp_path / "b.json"
    sim.building_scenario(steps=2).save(path)
    cli.main(["check-observability", str(path), "--combo-size", "2"])
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] is True and len(out["combos"]) == 3


def test_cli_env_out_dir(tmp_path, monkeypatch):
    path = tmp_path / "p.json"
    sim.planar_scenario(steps=2).save(path)
    monkeypatch.setenv("SECUREZONO_OUT_DIR", str(tmp_path / "env"))
    assert cli.main(["run", str(path), "--no-sets"]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_cli_build_scenarios(tmp_path):
    assert cli.main(["build-scenarios", "--out-dir", str(tmp_path), "--calibration-runs", "1"]) == 0
    b = sim.ScenarioConfig.load(tmp_path / "building.json")
    assert b.estimator.modified_estimate_enabled and b.point.schedule is not None
    assert (tmp_path / "planar.json").exists()
