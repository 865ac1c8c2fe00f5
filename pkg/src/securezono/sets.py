"""Zonotopes and constrained zonotopes.

A constrained zonotope is stored as ``<c, G, A, b>`` and denotes::

    { c + G @ beta : beta in [-1, 1]^xi, A @ beta == b }

A plain zonotope is the special case with no equality rows. Both types are
immutable; every operation returns a new object. Queries that need an
optimization (emptiness, point membership, interval hull, support) go
through :mod:`securezono.lp`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import lp
from .lp import FEAS_TOL


class EmptySetError(ValueError):
    """Raised when a query is undefined on the empty set."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class ConstrainedZonotope:
    """Affine image of a linearly constrained unit hypercube."""

    __slots__ = ("center", "generators", "con_matrix", "con_vector")

    def __init__(self, center, generators=None, con_matrix=None, con_vector=None):
        c = np.asarray(center, dtype=float).reshape(-1)
        n = c.shape[0]
        if generators is None:
            G = np.zeros((n, 0))
        else:
            G = np.asarray(generators, dtype=float)
            if G.size == 0:
                G = np.zeros((n, G.shape[1] if G.ndim == 2 and G.shape[0] == n else 0))
            if G.ndim == 1 and n == 1:
                G = G.reshape(1, -1)
        if G.ndim != 2 or G.shape[0] != n:
            raise ValueError(f"generators must have {n} rows, got shape {G.shape}")
        xi = G.shape[1]
        if con_matrix is None:
            A = np.zeros((0, xi))
        else:
            A = np.asarray(con_matrix, dtype=float)
            if A.size == 0:
                A = np.zeros((A.shape[0] if A.ndim == 2 and A.shape[-1] == xi else 0, xi))
        b = np.zeros(0) if con_vector is None else np.asarray(con_vector, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[1] != xi:
            raise ValueError(f"con_matrix must have {xi} columns, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"con_vector must have {A.shape[0]} entries, got {b.shape[0]}")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "generators", _frozen(G))
        object.__setattr__(self, "con_matrix", _frozen(A))
        object.__setattr__(self, "con_vector", _frozen(b))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __reduce__(self):
        return (_restore, (type(self), self.center, self.generators, self.con_matrix, self.con_vector))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.con_matrix.shape[0]

    @property
    def is_zonotope(self) -> bool:
        return self.num_constraints == 0

    def __repr__(self):
        return (f"{type(self).__name__}(dim={self.dim}, generators={self.num_generators}, "
                f"constraints={self.num_constraints})")

    def same_representation(self, other: "ConstrainedZonotope") -> bool:
        return (
            self.center.shape == other.center.shape
            and self.generators.shape == other.generators.shape
            and self.con_matrix.shape == other.con_matrix.shape
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.generators, other.generators)
            and np.array_equal(self.con_matrix, other.con_matrix)
            and np.array_equal(self.con_vector, other.con_vector)
        )

    # convenience wrappers around the module-level operations
    def is_empty(self) -> bool:
        return is_empty(self)

    def contains(self, x) -> bool:
        return contains_point(self, x)

    def radius(self) -> float:
        return radius(self)

    def to_dict(self) -> dict:
        return to_dict(self)


class Zonotope(ConstrainedZonotope):
    """Affine image of the unit hypercube, ``<c, G>``."""

    __slots__ = ()

    def __init__(self, center, generators=None):
        super().__init__(center, generators)


def _restore(cls, c, G, A, b):
    if cls is Zonotope:
        return Zonotope(c, G)
    return cls(c, G, A, b)


@dataclass(frozen=True)
class Hypercube:
    """Axis-aligned cube ``<center, radius * I>``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("hypercube radius must be nonnegative")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, dtype=float).reshape(-1)))

    def to_zonotope(self) -> Zonotope:
        n = self.center.shape[0]
        return Zonotope(self.center, self.radius * np.eye(n))


@dataclass(frozen=True)
class Box:
    """Per-axis interval bounds ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.asarray(self.lower, dtype=float).reshape(-1))
        up = _frozen(np.asarray(self.upper, dtype=float).reshape(-1))
        if lo.shape != up.shape:
            raise ValueError("box bounds must have equal length")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def to_zonotope(self) -> Zonotope:
        return Zonotope(self.center, np.diag(self.half_widths))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def as_constrained(Z) -> ConstrainedZonotope:
    if isinstance(Z, ConstrainedZonotope):
        return Z
    if isinstance(Z, (Hypercube, Box)):
        return Z.to_zonotope()
    raise TypeError(f"expected a zonotope-like set, got {type(Z).__name__}")


def _rebuild(like: ConstrainedZonotope, c, G, A, b) -> ConstrainedZonotope:
    if isinstance(like, Zonotope) and A.shape[0] == 0:
        return Zonotope(c, G)
    return ConstrainedZonotope(c, G, A, b)


def hypercube(center, radius: float) -> Zonotope:
    return Hypercube(center, radius).to_zonotope()


def singleton(point) -> Zonotope:
    return Zonotope(point)


# ---------------------------------------------------------------------------
# exact operations
# ---------------------------------------------------------------------------

def linear_map(M, Z) -> ConstrainedZonotope:
    """Image ``M Z``; constraints are untouched."""
    Z = as_constrained(Z)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != Z.dim:
        raise ValueError(f"matrix with {M.shape[1]} columns cannot map a {Z.dim}-dimensional set")
    return _rebuild(Z, M @ Z.center, M @ Z.generators, Z.con_matrix, Z.con_vector)


def translate(Z, v) -> ConstrainedZonotope:
    Z = as_constrained(Z)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != Z.dim:
        raise ValueError("translation vector has the wrong dimension")
    return _rebuild(Z, Z.center + v, Z.generators, Z.con_matrix, Z.con_vector)


def minkowski_sum(Z1, Z2) -> ConstrainedZonotope:
    Z1, Z2 = as_constrained(Z1), as_constrained(Z2)
    if Z1.dim != Z2.dim:
        raise ValueError(f"dimension mismatch in Minkowski sum: {Z1.dim} vs {Z2.dim}")
    G = np.hstack([Z1.generators, Z2.generators])
    A = _block_diag(Z1.con_matrix, Z2.con_matrix)
    b = np.concatenate([Z1.con_vector, Z2.con_vector])
    c = Z1.center + Z2.center
    if isinstance(Z1, Zonotope) and isinstance(Z2, Zonotope):
        return Zonotope(c, G)
    return ConstrainedZonotope(c, G, A, b)


def cartesian_product(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    Z1, Z2 = as_constrained(Z1), as_constrained(Z2)
    if not (Z1.is_zonotope and Z2.is_zonotope):
        raise ValueError("cartesian_product is defined for unconstrained zonotopes")
    c = np.concatenate([Z1.center, Z2.center])
    return Zonotope(c, _block_diag(Z1.generators, Z2.generators))


def generalized_intersection(Z, Y, M=None) -> ConstrainedZonotope:
    """``{z in Z : M z in Y}``, exact.

    ``M`` defaults to the identity, giving the plain intersection.
    """
    Z, Y = as_constrained(Z), as_constrained(Y)
    if M is None:
        M = np.eye(Z.dim)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (Y.dim, Z.dim):
        raise ValueError(f"M must be {Y.dim}x{Z.dim}, got {M.shape}")
    xz, xy = Z.num_generators, Y.num_generators
    G = np.hstack([Z.generators, np.zeros((Z.dim, xy))])
    A = np.vstack([
        np.hstack([Z.con_matrix, np.zeros((Z.num_constraints, xy))]),
        np.hstack([np.zeros((Y.num_constraints, xz)), Y.con_matrix]),
        np.hstack([M @ Z.generators, -Y.generators]),
    ])
    b = np.concatenate([Z.con_vector, Y.con_vector, Y.center - M @ Z.center])
    return ConstrainedZonotope(Z.center, G, A, b)


def intersection(Z, Y) -> ConstrainedZonotope:
    return generalized_intersection(Z, Y, None)


def _block_diag(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    out = np.zeros((P.shape[0] + Q.shape[0], P.shape[1] + Q.shape[1]))
    out[: P.shape[0], : P.shape[1]] = P
    out[P.shape[0]:, P.shape[1]:] = Q
    return out


def normalize(Z) -> ConstrainedZonotope:
    """Drop factor columns that touch neither the set nor its constraints."""
    Z = as_constrained(Z)
    keep = np.any(Z.generators != 0.0, axis=0) | np.any(Z.con_matrix != 0.0, axis=0)
    if keep.all():
        return Z
    return _rebuild(Z, Z.center, Z.generators[:, keep], Z.con_matrix[:, keep], Z.con_vector)


# ---------------------------------------------------------------------------
# LP-backed queries
# ---------------------------------------------------------------------------

def _unit_bounds(xi: int):
    return -np.ones(xi), np.ones(xi)


def is_empty(Z) -> bool:
    """True iff no factor vector in the unit box meets the equality constraints."""
    Z = as_constrained(Z)
    if Z.num_constraints == 0:
        return False
    lo, up = _unit_bounds(Z.num_generators)
    return not lp.feasible(Z.con_matrix, Z.con_vector, lo, up)


def contains_point(Z, x) -> bool:
    Z = as_constrained(Z)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != Z.dim:
        raise ValueError(f"point of dimension {x.shape[0]} tested against a {Z.dim}-dimensional set")
    Aeq = np.vstack([Z.generators, Z.con_matrix])
    beq = np.concatenate([x - Z.center, Z.con_vector])
    lo, up = _unit_bounds(Z.num_generators)
    return lp.feasible(Aeq, beq, lo, up)


def contains_points(Z, X) -> np.ndarray:
    """Membership of every row of ``X``.

    Rows farther than the feasibility tolerance outside the interval hull are
    rejected without an LP.
    """
    Z = as_constrained(Z)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(X.shape[0], dtype=bool)
    if Z.num_constraints and is_empty(Z):
        return out
    box = interval_hull(Z)
    slack = FEAS_TOL * (1.0 + np.abs(Z.generators).sum(axis=1))
    inside = np.all((X >= box.lower - slack) & (X <= box.upper + slack), axis=1)
    for i in np.flatnonzero(inside):
        out[i] = contains_point(Z, X[i])
    return out


def support(Z, direction) -> float:
    """``max d @ x`` over ``Z``; raises on an empty set."""
    return support_many(Z, [direction])[0]


def support_many(Z, directions) -> list[float]:
    Z = as_constrained(Z)
    dirs = [np.asarray(d, dtype=float).reshape(-1) for d in directions]
    if Z.num_constraints == 0:
        return [float(d @ Z.center + np.abs(d @ Z.generators).sum()) for d in dirs]
    lo, up = _unit_bounds(Z.num_generators)
    sols = lp.optimize_many(Z.con_matrix, Z.con_vector, lo, up,
                            [d @ Z.generators for d in dirs], sense="maximize")
    if not sols[0].is_optimal:
        raise EmptySetError("support function of an empty set")
    return [float(d @ Z.center + s.value) for d, s in zip(dirs, sols)]


def interval_hull(Z) -> Box:
    """Tightest axis-aligned box around ``Z`` (2n LPs when constrained)."""
    Z = as_constrained(Z)
    n = Z.dim
    if Z.num_constraints == 0:
        half = np.abs(Z.generators).sum(axis=1)
        return Box(Z.center - half, Z.center + half)
    eye = np.eye(n)
    values = support_many(Z, list(eye) + list(-eye))
    upper = np.array(values[:n])
    lower = -np.array(values[n:])
    return Box(np.minimum(lower, upper), np.maximum(lower, upper))


def radius(Z) -> float:
    """Max-norm distance from the stored center to the farthest point of ``Z``."""
    Z = as_constrained(Z)
    if Z.num_constraints and is_empty(Z):
        raise EmptySetError("radius of empty set")
    box = interval_hull(Z)
    return float(np.max(np.maximum(box.upper - Z.center, Z.center - box.lower), initial=0.0))


def interval_hull_many(members: Iterable) -> Box:
    boxes = [interval_hull(Z) for Z in members]
    if not boxes:
        raise EmptySetError("interval hull of an empty collection")
    lower = np.min([b.lower for b in boxes], axis=0)
    upper = np.max([b.upper for b in boxes], axis=0)
    return Box(lower, upper)


def reduce_order(Z: Zonotope, max_generators: int) -> Zonotope:
    """Outer approximation with at most ``max_generators`` generators.

    The ``max_generators - n`` longest generators are kept; the remainder is
    replaced by its axis-aligned bounding box.
    """
    Z = as_constrained(Z)
    if not Z.is_zonotope:
        raise ValueError("reduce_order expects an unconstrained zonotope")
    n = Z.dim
    if max_generators < n:
        raise ValueError(f"cannot reduce a {n}-dimensional zonotope below {n} generators")
    G = Z.generators
    if G.shape[1] <= max_generators:
        return Zonotope(Z.center, G)
    norms = np.linalg.norm(G, axis=0)
    order = np.argsort(-norms, kind="stable")
    keep = order[: max_generators - n]
    rest = order[max_generators - n:]
    box = np.diag(np.abs(G[:, rest]).sum(axis=1))
    box = box[:, np.any(box != 0.0, axis=0)]
    return Zonotope(Z.center, np.hstack([G[:, np.sort(keep)], box]))


def certified_subset(inner, outer, tol: float = 1e-10) -> bool:
    """True only when ``inner`` is provably contained in ``outer``.

    A certificate exists when both sets share a representation, or when
    ``outer`` is an axis-aligned box or a full-dimensional parallelotope,
    whose facets are then checked with support functions. Any other case
    returns False, which is always safe for pruning.
    """
    inner, outer = as_constrained(inner), as_constrained(outer)
    if inner.same_representation(outer):
        return True
    if not outer.is_zonotope:
        return False
    G = outer.generators
    n = outer.dim
    if np.all(np.count_nonzero(G, axis=0) <= 1):
        box = interval_hull(outer)
        hull = interval_hull(inner)
        scale = max(1.0, float(np.abs(box.lower).max(initial=0)), float(np.abs(box.upper).max(initial=0)))
        return bool(np.all(hull.lower >= box.lower - tol * scale) and np.all(hull.upper <= box.upper + tol * scale))
    if G.shape[1] == n and np.linalg.cond(G) < 1e10:
        T = np.linalg.inv(G)
        dirs = list(T) + list(-T)
        vals = support_many(inner, dirs)
        offsets = [float(t @ outer.center) for t in T] + [float(-t @ outer.center) for t in T]
        return all(v - o <= 1.0 + tol for v, o in zip(vals, offsets))
    return False


# ---------------------------------------------------------------------------
# collections
# ---------------------------------------------------------------------------

class SetCollection(Sequence):
    """Ordered union of constrained zonotopes of equal dimension."""

    __slots__ = ("_members",)

    def __init__(self, members: Iterable = ()):
        ms = tuple(as_constrained(Z) for Z in members)
        if ms and len({Z.dim for Z in ms}) != 1:
            raise ValueError("all members of a collection must share one dimension")
        self._members = ms

    def __getitem__(self, i):
        return self._members[i]

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[ConstrainedZonotope]:
        return iter(self._members)

    def __repr__(self):
        return f"SetCollection({len(self)} members)"

    @property
    def dim(self) -> int:
        if not self._members:
            raise EmptySetError("empty collection has no dimension")
        return self._members[0].dim

    def normalized(self) -> "SetCollection":
        return SetCollection(Z for Z in self._members if not is_empty(Z))

    def contains(self, x) -> bool:
        return any(contains_point(Z, x) for Z in self._members)

    def interval_hull(self) -> Box:
        return interval_hull_many(self._members)


def overbound_collection(S) -> Zonotope:
    """Box zonotope containing every member of ``S``."""
    members = list(S)
    if not members:
        raise EmptySetError("cannot overbound an empty collection")
    return interval_hull_many(members).to_zonotope()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def to_dict(Z) -> dict:
    Z = as_constrained(Z)
    return {
        "center": Z.center.tolist(),
        "generators": Z.generators.tolist(),
        "con_matrix": Z.con_matrix.tolist(),
        "con_vector": Z.con_vector.tolist(),
    }


def from_dict(d: dict) -> ConstrainedZonotope:
    c = np.asarray(d["center"], dtype=float).reshape(-1)
    n = c.shape[0]
    G = np.asarray(d.get("generators", []), dtype=float)
    G = G.reshape(n, -1) if G.size else np.zeros((n, 0))
    xi = G.shape[1]
    A = np.asarray(d.get("con_matrix", []), dtype=float)
    A = A.reshape(-1, xi) if A.size else np.zeros((0, xi))
    b = np.asarray(d.get("con_vector", []), dtype=float).reshape(-1)
    if A.shape[0] == 0:
        return Zonotope(c, G)
    return ConstrainedZonotope(c, G, A, b)
