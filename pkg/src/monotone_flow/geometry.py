"""Closed convex sets with exact projections and cone queries.

Every set exposes ``project``, membership by distance, and projection of a
direction onto the tangent cone at a point of the set. The module-level
functions are thin, validated wrappers used by the rest of the package.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    DegenerateDirectionError,
    DomainError,
    InfeasibleSetError,
    WitnessNotFoundError,
)

TAU_SET = 1e-10
TAU_DYKSTRA = 1e-12
DYKSTRA_MAX_ITER = 100_000
N_SEARCH = 1000


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float array, optionally checking its length."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr


class ConvexSet:
    """Base class for nonempty closed convex subsets of R^n."""

    dim: int

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_project(self, x: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        """Project ``zeta`` onto the tangent cone of the set at ``x``."""
        raise NotImplementedError

    def distance(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol: float = TAU_SET) -> bool:
        return self.distance(as_vector(x, self.dim)) <= tol

    def is_whole_space(self) -> bool:
        return False

    def to_json(self) -> dict:
        raise NotImplementedError

    def kernel_spec(self):
        """``(kind, a, b, r)`` for the compiled kernels, or ``None`` if unsupported."""
        return None


_EMPTY = np.zeros(0)


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    def project(self, x):
        return np.array(x, dtype=float)

    def tangent_project(self, x, zeta):
        return np.array(zeta, dtype=float)

    def is_whole_space(self):
        return True

    def to_json(self):
        return {"variant": "WholeSpace", "dim": self.dim}

    def kernel_spec(self):
        return (_kernels.K_WHOLE, _EMPTY, _EMPTY, 0.0)


@dataclass(frozen=True, eq=False)
class Point(ConvexSet):
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", as_vector(self.p))

    @property
    def dim(self):
        return self.p.shape[0]

    def project(self, x):
        return self.p.copy()

    def tangent_project(self, x, zeta):
        return np.zeros(self.dim)

    def to_json(self):
        return {"variant": "Point", "p": self.p.tolist()}

    def kernel_spec(self):
        return (_kernels.K_POINT, self.p, _EMPTY, 0.0)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("ball radius must be positive and finite")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, x):
        d = x - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return np.array(x, dtype=float)
        return self.center + d * (self.radius / nd)

    def tangent_project(self, x, zeta):
        d = x - self.center
        nd = float(np.linalg.norm(d))
        if self.radius - nd > TAU_SET:
            return np.array(zeta, dtype=float)
        n = d / nd
        return zeta - max(0.0, float(n @ zeta)) * n

    def to_json(self):
        return {"variant": "Ball", "center": self.center.tolist(), "radius": self.radius}

    def kernel_spec(self):
        return (_kernels.K_BALL, self.center, _EMPTY, self.radius)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    def project(self, x):
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def tangent_project(self, x, zeta):
        out = np.array(zeta, dtype=float)
        at_lo = x - self.lo <= TAU_SET
        at_hi = self.hi - x <= TAU_SET
        out[at_lo] = np.maximum(out[at_lo], 0.0)
        out[at_hi] = np.minimum(out[at_hi], 0.0)
        return out

    def to_json(self):
        def enc(v):
            return [None if not math.isfinite(t) else t for t in v.tolist()]

        return {"variant": "Box", "lo": enc(self.lo), "hi": enc(self.hi)}

    def kernel_spec(self):
        return (_kernels.K_BOX, self.lo, self.hi, 0.0)


class NonnegativeOrthant(Box):
    """The orthant ``{x : x >= 0}``, a box with infinite upper bounds."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("dimension must be positive")
        Box.__init__(self, np.zeros(n), np.full(n, np.inf))

    def __repr__(self):
        return f"NonnegativeOrthant({self.dim})"

    def to_json(self):
        return {"variant": "NonnegativeOrthant", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <normal, x> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = as_vector(self.normal)
        if not np.any(a != 0.0):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.shape[0]

    @cached_property
    def _a_sq(self):
        return float(self.normal @ self.normal)

    def project(self, x):
        s = float(self.normal @ x) - self.offset
        if s <= 0.0:
            return np.array(x, dtype=float)
        return x - (s / self._a_sq) * self.normal

    def tangent_project(self, x, zeta):
        slack = (self.offset - float(self.normal @ x)) / math.sqrt(self._a_sq)
        if slack > TAU_SET:
            return np.array(zeta, dtype=float)
        return zeta - (max(0.0, float(self.normal @ zeta)) / self._a_sq) * self.normal

    def to_json(self):
        return {"variant": "Halfspace", "normal": self.normal.tolist(), "offset": self.offset}

    def kernel_spec(self):
        return (_kernels.K_HALFSPACE, self.normal, _EMPTY, self.offset)


@dataclass(frozen=True, eq=False)
class Polyhedron(ConvexSet):
    """Intersection of finitely many halfspaces ``A x <= c``.

    Feasibility is checked on first use; an empty intersection raises
    :class:`InfeasibleSetError`.
    """

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if A.shape[0] != c.shape[0] or A.shape[0] == 0:
            raise ValueError("polyhedron needs one offset per row")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
            raise ValueError("polyhedron data must be finite")
        if np.any(np.linalg.norm(A, axis=1) == 0.0):
            raise ValueError("polyhedron rows must be nonzero")
        object.__setattr__(self, "A", np.ascontiguousarray(A))
        object.__setattr__(self, "c", np.ascontiguousarray(c))

    @classmethod
    def from_halfspaces(cls, halfspaces: Sequence[Halfspace]) -> "Polyhedron":
        return cls(np.array([h.normal for h in halfspaces]), np.array([h.offset for h in halfspaces]))

    @property
    def dim(self):
        return self.A.shape[1]

    @cached_property
    def _row_norms(self):
        return np.linalg.norm(self.A, axis=1)

    @cached_property
    def feasible(self) -> bool:
        from scipy.optimize import linprog

        res = linprog(np.zeros(self.dim), A_ub=self.A, b_ub=self.c,
                      bounds=[(None, None)] * self.dim, method="highs")
        return res.status == 0

    def _require_feasible(self):
        if not self.feasible:
            raise InfeasibleSetError("polyhedron has empty interior and no feasible point")

    def project(self, x):
        self._require_feasible()
        x = np.ascontiguousarray(x, dtype=float)
        if np.all(self.A @ x - self.c <= 0.0):
            return x.copy()
        p, _, ok = _kernels.dykstra(self.A, self.c, x, TAU_DYKSTRA, DYKSTRA_MAX_ITER)
        if not ok:
            warnings.warn("Dykstra projection hit its iteration cap", RuntimeWarning, stacklevel=2)
        return p

    def tangent_project(self, x, zeta):
        self._require_feasible()
        slack = (self.c - self.A @ x) / self._row_norms
        active = slack <= TAU_SET
        if not np.any(active):
            return np.array(zeta, dtype=float)
        A = np.ascontiguousarray(self.A[active])
        zeta = np.ascontiguousarray(zeta, dtype=float)
        if np.all(A @ zeta <= 0.0):
            return zeta.copy()
        p, _, ok = _kernels.dykstra(A, np.zeros(A.shape[0]), zeta, TAU_DYKSTRA, DYKSTRA_MAX_ITER)
        if not ok:
            warnings.warn("Dykstra projection hit its iteration cap", RuntimeWarning, stacklevel=2)
        return p

    def to_json(self):
        return {
            "variant": "Polyhedron",
            "halfspaces": [{"normal": a.tolist(), "offset": float(b)} for a, b in zip(self.A, self.c)],
        }


@dataclass(frozen=True, eq=False)
class Product(ConvexSet):
    """Cartesian product of sets acting on consecutive coordinate blocks."""

    factors: tuple

    def __post_init__(self):
        facs = tuple(self.factors)
        if not facs:
            raise ValueError("product needs at least one factor")
        object.__setattr__(self, "factors", facs)

    @property
    def dim(self):
        return sum(f.dim for f in self.factors)

    def _blocks(self):
        start = 0
        for f in self.factors:
            yield f, slice(start, start + f.dim)
            start += f.dim

    def project(self, x):
        out = np.empty(self.dim)
        for f, sl in self._blocks():
            out[sl] = f.project(x[sl])
        return out

    def tangent_project(self, x, zeta):
        out = np.empty(self.dim)
        for f, sl in self._blocks():
            out[sl] = f.tangent_project(x[sl], zeta[sl])
        return out

    def is_whole_space(self):
        return all(f.is_whole_space() for f in self.factors)

    def to_json(self):
        return {"variant": "Product", "factors": [f.to_json() for f in self.factors]}


def set_from_json(obj: dict) -> ConvexSet:
    """Build a set from its ``{"variant": ...}`` JSON form."""
    kind = obj.get("variant")
    if kind == "WholeSpace":
        return WholeSpace(int(obj["dim"]))
    if kind == "Point":
        return Point(obj["p"])
    if kind == "Ball":
        return Ball(obj["center"], obj["radius"])
    if kind == "Box":
        lo = [-np.inf if v is None else v for v in obj["lo"]]
        hi = [np.inf if v is None else v for v in obj["hi"]]
        return Box(lo, hi)
    if kind == "Halfspace":
        return Halfspace(obj["normal"], obj["offset"])
    if kind == "Polyhedron":
        hs = [Halfspace(h["normal"], h["offset"]) for h in obj["halfspaces"]]
        return Polyhedron.from_halfspaces(hs)
    if kind == "NonnegativeOrthant":
        return NonnegativeOrthant(int(obj["dim"]))
    if kind == "Product":
        return Product(tuple(set_from_json(f) for f in obj["factors"]))
    raise ValueError(f"unknown set variant {kind!r}")


def project(S: ConvexSet, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``S``."""
    return S.project(as_vector(x, S.dim))


def distance(S: ConvexSet, x) -> float:
    """Euclidean distance from ``x`` to ``S``."""
    return S.distance(as_vector(x, S.dim))


def prox_normal_direction(S: ConvexSet, x) -> np.ndarray:
    """Unit vector ``(x - P_S x) / d(x; S)`` for a point outside ``S``.

    This is the gradient of the distance function at every point of the
    open segment from ``P_S x`` to ``x``.

    Raises
    ------
    DegenerateDirectionError
        If ``x`` lies in ``S`` up to ``TAU_SET``.
    """
    x = as_vector(x, S.dim)
    v = x - S.project(x)
    nv = float(np.linalg.norm(v))
    if nv <= TAU_SET:
        raise DegenerateDirectionError("point lies in the set; no unique normal direction")
    return v / nv


def tangent_cone_project(S: ConvexSet, x, zeta) -> np.ndarray:
    """Projection of ``zeta`` onto the tangent cone ``T_S(x)``."""
    x = as_vector(x, S.dim)
    if S.distance(x) > TAU_SET:
        raise DomainError("tangent cone requested at a point outside the set")
    return S.tangent_project(x, as_vector(zeta, S.dim))


def normal_cone_project(S: ConvexSet, x, zeta) -> np.ndarray:
    """Projection of ``zeta`` onto the normal cone ``N_S(x)`` (Moreau decomposition)."""
    zeta = as_vector(zeta, S.dim)
    return zeta - tangent_cone_project(S, x, zeta)


def cone_cap_ball_support(S: ConvexSet, x, zeta) -> float:
    """Support function of ``N_S(x) ∩ B`` in direction ``zeta``.

    Equals the distance from ``zeta`` to the tangent cone at ``x``.

    Raises
    ------
    DomainError
        If ``x`` is not in ``S``.
    """
    return float(np.linalg.norm(normal_cone_project(S, x, zeta)))


def cone_cap_ball_project(S: ConvexSet, x, y) -> np.ndarray:
    """Nearest point of ``N_S(x) ∩ B`` to ``y``."""
    p = normal_cone_project(S, x, y)
    return p / max(1.0, float(np.linalg.norm(p)))


def dist_subgradient(S: ConvexSet, z) -> np.ndarray:
    """A proximal subgradient of ``d(.; S)`` at ``z``: the unit normal outside, zero inside."""
    z = as_vector(z, S.dim)
    if S.distance(z) > TAU_SET:
        return prox_normal_direction(S, z)
    return np.zeros(S.dim)


def mean_value_witness(S: ConvexSet, x, y, r: float, eps: float, seed: int = 0,
                       n_search: int = N_SEARCH):
    """Exhibit ``(z, zeta)`` for the mean value inequality of ``d(.; S)``.

    Searches the segment ``[x, y]`` (midpoint outward) and then points jittered
    by less than ``eps``, returning the first ``z`` whose distance
    subgradient ``zeta`` satisfies ``r < <zeta, y - x>``.

    Raises
    ------
    ValueError
        If ``r >= d(y; S) - d(x; S)``.
    WitnessNotFoundError
        If ``n_search`` candidates yield no witness.
    """
    x = as_vector(x, S.dim)
    y = as_vector(y, S.dim)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not r < S.distance(y) - S.distance(x):
        raise ValueError("precondition r < d(y;S) - d(x;S) violated")
    d = y - x
    n_seg = max(1, n_search // 2)
    ts = np.linspace(0.0, 1.0, n_seg)
    ts = ts[np.argsort(np.abs(ts - 0.5), kind="stable")]
    for t in ts:
        z = x + t * d
        zeta = dist_subgradient(S, z)
        if r < float(zeta @ d):
            return z, zeta
    rng = np.random.default_rng(seed)
    for _ in range(n_search - n_seg):
        u = rng.standard_normal(S.dim)
        u *= rng.uniform(0.0, 0.999) * eps / max(np.linalg.norm(u), 1e-300)
        z = x + rng.uniform() * d + u
        zeta = dist_subgradient(S, z)
        if r < float(zeta @ d):
            return z, zeta
    raise WitnessNotFoundError(f"no witness among {n_search} candidates")
