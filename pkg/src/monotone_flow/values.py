"""Compact convex set values: support functions and nearest points.

Values are what set-valued maps return at a point. All of them are
nonempty, convex and compact, and expose

* ``support(zeta)``  -- the support function ``sup <zeta, g>``,
* ``project(y)``     -- the nearest point of the value to ``y``,
* ``origin_projection()`` -- the minimal-norm element.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .geometry import as_vector

SUM_TOL = 1e-10
SUM_MAX_ITER = 10_000


class ConvexCompactValue:
    dim: int

    def support(self, zeta) -> float:
        raise NotImplementedError

    def project(self, y) -> np.ndarray:
        raise NotImplementedError

    def origin_projection(self) -> np.ndarray:
        return self.project(np.zeros(self.dim))

    def distance(self, y) -> float:
        y = as_vector(y, self.dim)
        return float(np.linalg.norm(y - self.project(y)))

    def as_ball(self):
        """``(center, radius)`` when the value is a ball or a point, else ``None``."""
        return None

    def max_norm(self) -> float:
        """Radius of the smallest origin-centred ball containing the value."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Singleton(ConvexCompactValue):
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", as_vector(self.p))

    @property
    def dim(self):
        return self.p.shape[0]

    def support(self, zeta):
        return float(np.asarray(zeta, dtype=float) @ self.p)

    def project(self, y):
        return self.p.copy()

    def as_ball(self):
        return self.p, 0.0

    def max_norm(self):
        return float(np.linalg.norm(self.p))

    def to_json(self):
        return {"value": "Singleton", "p": self.p.tolist()}


@dataclass(frozen=True, eq=False)
class BallValue(ConvexCompactValue):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValueError("radius must be finite and nonnegative")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def support(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return float(zeta @ self.center) + self.radius * float(np.linalg.norm(zeta))

    def project(self, y):
        d = np.asarray(y, dtype=float) - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return np.array(y, dtype=float)
        return self.center + d * (self.radius / nd)

    def as_ball(self):
        return self.center, self.radius

    def max_norm(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def to_json(self):
        return {"value": "Ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class ConeCapBall(ConvexCompactValue):
    """``N_S(x) ∩ B`` kept as a set reference plus base point."""

    S: geo.ConvexSet
    x: np.ndarray

    def __post_init__(self):
        x = as_vector(self.x, self.S.dim)
        if self.S.distance(x) > geo.TAU_SET:
            raise geo.DomainError("cone-cap base point must lie in the set")
        object.__setattr__(self, "x", x)

    @property
    def dim(self):
        return self.S.dim

    def support(self, zeta):
        return geo.cone_cap_ball_support(self.S, self.x, zeta)

    def project(self, y):
        return geo.cone_cap_ball_project(self.S, self.x, y)

    def origin_projection(self):
        return np.zeros(self.dim)

    def as_ball(self):
        # a point has the full normal cone; interior points have {0}
        if isinstance(self.S, geo.Point):
            return np.zeros(self.dim), 1.0
        if self.S.is_whole_space() or self._interior():
            return np.zeros(self.dim), 0.0
        return None

    def _interior(self):
        eye = np.eye(self.dim)
        for e in np.vstack([eye, -eye]):
            if np.any(self.S.tangent_project(self.x, e) != e):
                return False
        return True

    def max_norm(self):
        return 1.0

    def to_json(self):
        return {"value": "ConeCapBall", "set": self.S.to_json(), "x": self.x.tolist()}


@dataclass(frozen=True, eq=False)
class Polytope(ConvexCompactValue):
    """Convex hull of finitely many vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0 or not np.all(np.isfinite(V)):
            raise ValueError("polytope needs at least one finite vertex")
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def support(self, zeta):
        return float(np.max(self.vertices @ np.asarray(zeta, dtype=float)))

    def project(self, y):
        from scipy.optimize import minimize

        y = np.asarray(y, dtype=float)
        V = self.vertices
        m = V.shape[0]
        if m == 1:
            return V[0].copy()
        G = V @ V.T
        q = V @ y
        res = minimize(
            lambda w: 0.5 * w @ G @ w - q @ w,
            np.full(m, 1.0 / m),
            jac=lambda w: G @ w - q,
            bounds=[(0.0, None)] * m,
            constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(m)}],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 500},
        )
        w = np.clip(res.x, 0.0, None)
        w /= w.sum()
        return w @ V

    def max_norm(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def to_json(self):
        return {"value": "Polytope", "vertices": self.vertices.tolist()}


@dataclass(frozen=True, eq=False)
class Scaled(ConvexCompactValue):
    """``c * value`` for ``c >= 0``."""

    value: ConvexCompactValue
    c: float

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError("scale must be finite and nonnegative")

    @property
    def dim(self):
        return self.value.dim

    def support(self, zeta):
        return self.c * self.value.support(zeta)

    def project(self, y):
        if self.c == 0.0:
            return np.zeros(self.dim)
        return self.c * self.value.project(np.asarray(y, dtype=float) / self.c)

    def as_ball(self):
        b = self.value.as_ball()
        if b is None:
            return None
        return self.c * b[0], self.c * b[1]

    def max_norm(self):
        return self.c * self.value.max_norm()

    def to_json(self):
        return {"value": "Scaled", "c": self.c, "of": self.value.to_json()}


@dataclass(frozen=True, eq=False)
class MinkowskiSum(ConvexCompactValue):
    """Sum of values; supports add, nearest points by cyclic block projection."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("sum needs at least one term")
        dims = {t.dim for t in terms}
        if len(dims) != 1:
            raise ValueError("summands must share a dimension")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0].dim

    def support(self, zeta):
        return float(sum(t.support(zeta) for t in self.terms))

    def _reduced(self):
        """``(core, center, radius)`` with ball-like terms merged and polytopes summed.

        ``core`` is ``None`` when every term is ball-like.
        """
        center, radius = np.zeros(self.dim), 0.0
        others = []
        for t in self.terms:
            b = t.as_ball()
            if b is None:
                others.append(t)
            else:
                center = center + b[0]
                radius += b[1]
        if others and all(isinstance(t, Polytope) for t in others):
            V = others[0].vertices
            for t in others[1:]:
                V = (V[:, None, :] + t.vertices[None, :, :]).reshape(-1, self.dim)
            others = [Polytope(V)]
        core = others[0] if len(others) == 1 else (MinkowskiSum(tuple(others)) if others else None)
        return core, center, radius

    def project(self, y):
        y = np.asarray(y, dtype=float)
        core, c, r = self._reduced()
        if core is None:
            return BallValue(c, r).project(y) if r > 0 else c.copy()
        if len(self.terms) > 1 and not isinstance(core, MinkowskiSum):
            # nearest point of K + c + rB: shift, project onto K, step r toward y
            q = core.project(y - c) + c
            d = y - q
            nd = float(np.linalg.norm(d))
            return y.copy() if nd <= r else q + (r / nd) * d
        return self._cyclic_project(y)

    def _cyclic_project(self, y):
        parts = [t.origin_projection() for t in self.terms]
        total = np.sum(parts, axis=0)
        for _ in range(SUM_MAX_ITER):
            change = 0.0
            for i, t in enumerate(self.terms):
                rest = total - parts[i]
                new = t.project(y - rest)
                change += float(np.linalg.norm(new - parts[i]))
                parts[i] = new
                total = rest + new
            if change <= SUM_TOL:
                return total
        warnings.warn("Minkowski-sum projection hit its iteration cap", RuntimeWarning, stacklevel=2)
        return total

    def as_ball(self):
        balls = [t.as_ball() for t in self.terms]
        if any(b is None for b in balls):
            return None
        return np.sum([b[0] for b in balls], axis=0), float(sum(b[1] for b in balls))

    def max_norm(self):
        return float(sum(t.max_norm() for t in self.terms))

    def to_json(self):
        return {"value": "MinkowskiSum", "terms": [t.to_json() for t in self.terms]}


@dataclass(frozen=True, eq=False)
class ProductValue(ConvexCompactValue):
    """Cartesian product of values on consecutive coordinate blocks."""

    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self):
        return sum(b.dim for b in self.blocks)

    def _slices(self):
        start = 0
        for b in self.blocks:
            yield b, slice(start, start + b.dim)
            start += b.dim

    def support(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return float(sum(b.support(zeta[sl]) for b, sl in self._slices()))

    def project(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty(self.dim)
        for b, sl in self._slices():
            out[sl] = b.project(y[sl])
        return out

    def max_norm(self):
        return float(math.sqrt(sum(b.max_norm() ** 2 for b in self.blocks)))

    def to_json(self):
        return {"value": "Product", "blocks": [b.to_json() for b in self.blocks]}


def support(v: ConvexCompactValue, zeta) -> float:
    """Support function ``sup_{g in v} <zeta, g>``."""
    return v.support(as_vector(zeta, v.dim))


def support_many(v: ConvexCompactValue, Z) -> np.ndarray:
    """Support function on each row of ``Z``; vectorised for ball-shaped values."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    ball = v.as_ball()
    if ball is not None:
        return Z @ ball[0] + ball[1] * np.linalg.norm(Z, axis=1)
    return np.array([v.support(z) for z in Z])


def origin_projection(v: ConvexCompactValue) -> np.ndarray:
    """Minimal-norm element of ``v``."""
    return v.origin_projection()


def unit_directions(dim: int, n: int, seed: int = 0) -> np.ndarray:
    """``n`` seeded pseudo-random unit vectors in ``R^dim``, one per row."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, dim))
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return Z / norms


def hausdorff_excess(A: ConvexCompactValue, B: ConvexCompactValue, directions=None) -> float:
    """Excess ``sup_{a in A} d(a, B)``.

    Exact when both values are balls or points; otherwise the support
    difference is maximised over the supplied unit ``directions``.
    """
    ba, bb = A.as_ball(), B.as_ball()
    if ba is not None and bb is not None:
        return max(0.0, float(np.linalg.norm(ba[0] - bb[0])) + ba[1] - bb[1])
    if directions is None:
        directions = unit_directions(A.dim, 64)
    gaps = [A.support(z) - B.support(z) for z in directions]
    return max(0.0, float(max(gaps)))


def hausdorff_distance(A, B, directions=None) -> float:
    return max(hausdorff_excess(A, B, directions), hausdorff_excess(B, A, directions))
