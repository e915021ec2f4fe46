"""Vector fields and scenarios: everything one regularized run needs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .errors import DomainError, ScenarioError
from .geometry import TAU_SET, as_vector
from .operators import OperatorDecomposition
from .selection import LipschitzFamily, family_for


class VectorField:
    """``f : R^n -> R^n``; the affine form is used by the compiled path."""

    dim: int
    affine: tuple | None = None

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self) -> float:
        return math.inf

    def bound_on_ball(self, center, rho, seed: int = 0) -> float:
        """Upper bound of ``|f|`` on ``B(center, rho)``."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AffineField(VectorField):
    M: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        c = as_vector(self.c, M.shape[0])
        if M.shape[0] != M.shape[1]:
            raise ScenarioError("field matrix must be square")
        object.__setattr__(self, "M", np.ascontiguousarray(M))
        object.__setattr__(self, "c", c)

    @property
    def dim(self):
        return self.M.shape[0]

    @property
    def affine(self):
        return self.M, self.c

    def __call__(self, x):
        return self.M @ np.asarray(x, dtype=float) + self.c

    def lipschitz(self):
        return float(np.linalg.norm(self.M, 2))

    def bound_on_ball(self, center, rho, seed=0):
        return float(np.linalg.norm(self(center))) + self.lipschitz() * rho

    def to_json(self):
        return {"field": "affine", "M": self.M.tolist(), "c": self.c.tolist()}


def constant_field(c) -> AffineField:
    c = as_vector(c)
    return AffineField(np.zeros((c.shape[0], c.shape[0])), c)


@dataclass(frozen=True, eq=False)
class CallableField(VectorField):
    """Field given by a Python callable with a declared Lipschitz constant."""

    fn: Callable[[np.ndarray], np.ndarray]
    n: int
    lip: float = math.inf
    name: str = "callable"

    @property
    def dim(self):
        return self.n

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def lipschitz(self):
        return self.lip

    def bound_on_ball(self, center, rho, seed=0):
        center = as_vector(center, self.n)
        if math.isfinite(self.lip):
            return float(np.linalg.norm(self(center))) + self.lip * rho
        rng = np.random.default_rng(seed)
        pts = center + rho * _unit_ball(rng, self.n, 512)
        return float(max(np.linalg.norm(self(p)) for p in np.vstack([center, pts])))

    def to_json(self):
        return {"field": "callable", "name": self.name}


def _unit_ball(rng, dim, n):
    u = rng.standard_normal((n, dim))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    return u * rng.uniform(size=(n, 1)) ** (1.0 / dim)


def field_from_json(obj: dict, dim: int | None = None) -> VectorField:
    kind = obj.get("field")
    if kind == "affine":
        return AffineField(obj["M"], obj["c"])
    if kind == "constant":
        return constant_field(obj["c"])
    raise ScenarioError(f"unknown field kind {kind!r}")


def map_bound_on_ball(dec: OperatorDecomposition, center, rho, seed: int = 0) -> float:
    """``b`` if declared finite, else a bound of ``|F|`` on ``B(center, rho)``."""
    if math.isfinite(dec.b):
        return dec.b
    if dec.F.affine is not None:
        M, c = dec.F.affine
        return float(np.linalg.norm(M @ center + c)) + float(np.linalg.norm(M, 2)) * rho
    rng = np.random.default_rng(seed)
    pts = center + rho * _unit_ball(rng, dec.dim, 512)
    pts = np.array([dec.C.project(p) for p in pts])
    return float(max(dec.F(p).max_norm() for p in np.vstack([center, pts])))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Data of one initial-value problem for the regularized system.

    Parameters
    ----------
    f : VectorField
    dec : OperatorDecomposition
        ``(F, C, b)``.
    x0 : array_like
        Initial point, must lie in ``C``.
    T : float
        Horizon.
    family : LipschitzFamily, optional
        Defaults to the distance construction when applicable, else ``F_k = F``.
    k : int
        Index of the approximation, ``delta_k = 1/k``.
    rho : float, optional
        Radius of the ball around ``x0`` on which ``M_f`` is taken.
    M_f : float, optional
        Declared bound of ``|f|`` on that ball, verified by sampling.
    """

    f: VectorField
    dec: OperatorDecomposition
    x0: np.ndarray
    T: float
    family: LipschitzFamily | None = None
    k: int = 1
    rho: float | None = None
    M_f: float | None = None
    name: str = "scenario"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x0 = as_vector(self.x0, self.dec.dim)
        object.__setattr__(self, "x0", x0)
        if self.f.dim != self.dec.dim:
            raise ScenarioError("field and operator dimensions differ")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ScenarioError("horizon T must be positive and finite")
        if int(self.k) < 1:
            raise ScenarioError("k must be at least 1")
        if self.dec.C.distance(x0) > TAU_SET:
            raise DomainError("initial point must lie in C")
        fam = self.family if self.family is not None else family_for(self.dec)
        object.__setattr__(self, "family", fam)
        rho = 1.0 + float(np.linalg.norm(x0)) if self.rho is None else float(self.rho)
        if not rho > 0:
            raise ScenarioError("rho must be positive")
        object.__setattr__(self, "rho", rho)
        measured = self.f.bound_on_ball(x0, rho)
        if self.M_f is None:
            object.__setattr__(self, "M_f", measured)
        else:
            rng = np.random.default_rng(0)
            pts = x0 + rho * _unit_ball(rng, self.dim, 256)
            worst = max(float(np.linalg.norm(self.f(p))) for p in np.vstack([x0, pts]))
            if worst > self.M_f * (1 + 1e-12):
                raise ScenarioError(f"declared M_f={self.M_f} is exceeded on the ball ({worst})")
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def dim(self):
        return self.dec.dim

    @property
    def C(self) -> geo.ConvexSet:
        return self.dec.C

    @property
    def b_local(self) -> float:
        return map_bound_on_ball(self.dec, self.x0, self.rho)

    @property
    def beta(self) -> float:
        """``M_f + b`` on the ball ``B(x0, rho)``."""
        return float(self.M_f) + self.b_local

    def psi(self, x) -> np.ndarray:
        return self.family.eval_psi(self.k, x)

    def velocity(self, x, lam: float) -> np.ndarray:
        """Right-hand side of the regularized system at ``x``."""
        x = np.asarray(x, dtype=float)
        out = self.f(x) - self.psi(x)
        if not self.C.is_whole_space():
            out -= (x - self.C.project(x)) / lam
        return out

    def with_(self, **changes) -> "Scenario":
        kw = dict(f=self.f, dec=self.dec, x0=self.x0, T=self.T, family=self.family, k=self.k,
                  rho=self.rho, M_f=None, name=self.name, meta=self.meta)
        kw.update(changes)
        return Scenario(**kw)
