import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from securezono import lp
from conftest import enumerate_vertices, highs_feasible


def test_unconstrained_minimum_at_lower_bound():
    sol = lp.solve(lp.LinearProgram([1.0], np.zeros((0, 1)), [], [-1.0], [1.0]))
    assert sol.status == lp.OPTIMAL
    assert sol.point.tolist() == [-1.0]
    assert sol.value == -1.0


def test_equality_outside_box_is_infeasible():
    sol = lp.solve(lp.LinearProgram([0.0], [[1.0]], [2.0], [-1.0], [1.0]))
    assert sol.status == lp.INFEASIBLE
    assert sol.point is None


def test_maximize_row_of_generator_matrix():
    G = np.array([[1.0, 1.0], [0.0, 1.0]])
    sol = lp.solve(lp.LinearProgram(G[0], np.zeros((0, 2)), [], -np.ones(2), np.ones(2), "maximize"))
    assert sol.is_optimal
    assert sol.value == pytest.approx(2.0)
    assert sol.point.tolist() == [1.0, 1.0]


def test_feasible_trivial_cases():
    assert lp.feasible(np.zeros((0, 3)), [], -np.ones(3), np.ones(3))
    assert not lp.feasible([[0.0]], [1.0], [-1.0], [1.0])


def test_unbounded_detected():
    sol = lp.solve(lp.LinearProgram([-1.0, 0.0], [[1.0, -1.0]], [0.0], [0.0, 0.0], [np.inf, np.inf]))
    assert sol.status == lp.UNBOUNDED


def test_validation_errors():
    with pytest.raises(ValueError):
        lp.LinearProgram([1.0], [[1.0, 2.0]], [1.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        lp.LinearProgram([1.0], np.zeros((0, 1)), [], [1.0], [0.0])
    with pytest.raises(ValueError):
        lp.LinearProgram([1.0], np.zeros((0, 1)), [], [0.0], [1.0], sense="sideways")


def test_constructive_feasible_systems(rng):
    for _ in range(200):
        xi = rng.integers(1, 12)
        m = rng.integers(1, xi + 1)
        A = rng.normal(size=(m, xi))
        beta = rng.uniform(-1, 1, size=xi)
        assert lp.feasible(A, A @ beta, -np.ones(xi), np.ones(xi))


def test_optimum_matches_vertex_enumeration(rng):
    checked = 0
    for _ in range(300):
        xi = int(rng.integers(1, 7))
        m = int(rng.integers(0, min(xi, 3) + 1))
        A = rng.normal(size=(m, xi))
        b = A @ rng.uniform(-1, 1, size=xi) if rng.random() < 0.7 else rng.normal(size=m) * 2
        c = rng.normal(size=xi)
        verts = enumerate_vertices(A, b)
        sol = lp.solve(lp.LinearProgram(c, A, b, -np.ones(xi), np.ones(xi)))
        if not verts:
            assert sol.status == lp.INFEASIBLE
            continue
        best = min(float(c @ v) for v in verts)
        assert sol.is_optimal
        assert sol.value == pytest.approx(best, rel=1e-7, abs=1e-9)
        assert np.all(sol.point >= -1) and np.all(sol.point <= 1)
        assert sol.residual <= lp.FEAS_TOL
        checked += 1
    assert checked > 150


def test_feasibility_matches_highs(rng):
    for _ in range(200):
        xi = int(rng.integers(1, 15))
        m = int(rng.integers(1, 8))
        A = rng.normal(size=(m, xi))
        b = rng.normal(size=m) * rng.uniform(0.1, 4)
        assert lp.feasible(A, b, -np.ones(xi), np.ones(xi)) == highs_feasible(A, b, -np.ones(xi), np.ones(xi))


def test_solves_are_bitwise_repeatable(rng):
    A = rng.normal(size=(5, 12))
    b = A @ rng.uniform(-1, 1, 12)
    c = rng.normal(size=12)
    prob = lp.LinearProgram(c, A, b, -np.ones(12), np.ones(12))
    first = lp.solve(prob)
    for _ in range(5):
        again = lp.solve(prob)
        assert again.point.tobytes() == first.point.tobytes()
        assert again.value == first.value


def test_optimize_many_independent_of_order(rng):
    A = rng.normal(size=(3, 9))
    b = A @ rng.uniform(-1, 1, 9)
    objs = [rng.normal(size=9) for _ in range(6)]
    fwd = lp.optimize_many(A, b, -np.ones(9), np.ones(9), objs)
    rev = lp.optimize_many(A, b, -np.ones(9), np.ones(9), objs[::-1])[::-1]
    assert [s.value for s in fwd] == [s.value for s in rev]


def test_degenerate_problem_terminates():
    # many redundant rows and a degenerate vertex at the origin
    A = np.vstack([np.ones((4, 6)), np.eye(6)[:2]])
    b = np.zeros(6)
    sol = lp.solve(lp.LinearProgram(-np.arange(1, 7, dtype=float), A, b, -np.ones(6), np.ones(6)))
    assert sol.is_optimal
    assert sol.residual <= lp.FEAS_TOL


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2 ** 31 - 1))
def test_property_optimal_points_respect_bounds(xi, m, seed):
    m = min(m, xi)
    r = np.random.default_rng(seed)
    A = r.normal(size=(m, xi))
    b = A @ r.uniform(-1, 1, size=xi)
    sol = lp.solve(lp.LinearProgram(r.normal(size=xi), A, b, -np.ones(xi), np.ones(xi)))
    assert sol.is_optimal
    assert np.all(sol.point >= -1.0) and np.all(sol.point <= 1.0)
    assert sol.residual <= lp.FEAS_TOL
