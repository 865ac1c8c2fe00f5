"""Shared oracles and random instance builders.

The oracles here never call into the package's LP solver: they use vertex
enumeration, closed forms, or scipy's HiGHS solver.
"""

from itertools import combinations, product

import numpy as np
import pytest
from scipy.optimize import linprog

from securezono import sets as S


def enumerate_vertices(A, b, tol=1e-9):
    """Vertices of {beta in [-1, 1]^xi : A beta = b} for generic full-row-rank A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, xi = A.shape
    if m == 0:
        return [np.array(v, dtype=float) for v in product((-1.0, 1.0), repeat=xi)]
    verts = []
    for free in combinations(range(xi), m):
        fixed = [j for j in range(xi) if j not in free]
        Af = A[:, free]
        if abs(np.linalg.det(Af)) < 1e-12:
            continue
        for signs in product((-1.0, 1.0), repeat=len(fixed)):
            beta = np.zeros(xi)
            beta[fixed] = signs
            beta[list(free)] = np.linalg.solve(Af, b - A[:, fixed] @ np.array(signs))
            if np.all(np.abs(beta) <= 1.0 + tol):
                verts.append(beta)
    return verts


def highs_feasible(A_eq, b_eq, lo, up) -> bool:
    A_eq = np.atleast_2d(A_eq)
    n = len(lo)
    if A_eq.size == 0:
        return True
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=list(zip(lo, up)), method="highs")
    return res.status == 0


def highs_contains(Z, x) -> bool:
    Z = S.as_constrained(Z)
    Aeq = np.vstack([Z.generators, Z.con_matrix])
    beq = np.concatenate([np.asarray(x, float) - Z.center, Z.con_vector])
    xi = Z.num_generators
    return highs_feasible(Aeq, beq, -np.ones(xi), np.ones(xi))


def highs_support(Z, d) -> float:
    Z = S.as_constrained(Z)
    d = np.asarray(d, dtype=float)
    xi = Z.num_generators
    kw = {}
    if Z.num_constraints:
        kw = {"A_eq": Z.con_matrix, "b_eq": Z.con_vector}
    res = linprog(-(d @ Z.generators), bounds=[(-1, 1)] * xi, method="highs", **kw)
    assert res.status == 0
    return float(d @ Z.center - res.fun)


def random_zonotope(rng, n, xi, scale=1.0, center_scale=1.0):
    return S.Zonotope(center_scale * rng.normal(size=n), scale * rng.normal(size=(n, xi)))


def random_cz(rng, n, xi, m, feasible=True):
    """Constrained zonotope, nonempty by construction when ``feasible``."""
    c = rng.normal(size=n)
    G = rng.normal(size=(n, xi))
    A = rng.normal(size=(m, xi))
    if feasible:
        beta = rng.uniform(-0.9, 0.9, size=xi)
        b = A @ beta
    else:
        b = rng.normal(size=m) * 3 * xi
    return S.ConstrainedZonotope(c, G, A, b)


def sample_cz(rng, Z, count):
    """Points of a nonempty constrained zonotope: random vertices and convex mixes of them."""
    Z = S.as_constrained(Z)
    xi = Z.num_generators
    pts = []
    verts = []
    for _ in range(max(4, count // 4)):
        obj = rng.normal(size=xi)
        kw = {}
        if Z.num_constraints:
            kw = {"A_eq": Z.con_matrix, "b_eq": Z.con_vector}
        res = linprog(obj, bounds=[(-1, 1)] * xi, method="highs", **kw)
        assert res.status == 0
        verts.append(np.clip(res.x, -1, 1))
    verts = np.array(verts)
    for _ in range(count):
        w = rng.dirichlet(np.ones(len(verts)))
        beta = w @ verts
        pts.append(Z.center + Z.generators @ beta)
    return np.array(pts)


def zonotope_halfspaces_2d(Z):
    """Facet normals and offsets of a full-dimensional planar zonotope."""
    Z = S.as_constrained(Z)
    G = Z.generators[:, np.linalg.norm(Z.generators, axis=0) > 0]
    normals = np.stack([-G[1], G[0]], axis=1)
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    h = normals @ Z.center + np.abs(normals @ G).sum(axis=1)
    N = np.vstack([normals, -normals])
    H = np.concatenate([h, -normals @ Z.center + np.abs(normals @ G).sum(axis=1)])
    return N, H


def interval_contains_1d(Z, values):
    """Membership in a 1-D zonotope (an interval)."""
    Z = S.as_constrained(Z)
    half = np.abs(Z.generators).sum()
    return np.abs(np.asarray(values) - Z.center[0]) - half


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
