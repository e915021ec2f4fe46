"""Prebuilt scenarios: inertial Newton-like dynamics, dry friction and a wall."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import ScenarioError
from .operators import (
    OperatorDecomposition,
    OperatorSpec,
    Quadratic,
    SetValuedMap,
    SmoothFunction,
    phi_from_json,
    scaled_quadratic,
)
from .scenario import AffineField, CallableField, Scenario, constant_field
from .selection import DistanceFamily, IdentityFamily
from .stability import TAU_EQ, LyapunovPair, equilibrium_residual
from .values import Singleton

FRICTION_K = 10**6


# ------------------------------------------------------------------- DIN


@dataclass(frozen=True)
class DinParams:
    """``x'' + alpha x' + beta Hess(Phi) x' + grad Phi = 0``."""

    phi: SmoothFunction
    alpha: float = 1.0
    beta: float = 1.0
    x0: tuple = (1.0,)
    v0: tuple | None = None
    T: float = 40.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ScenarioError("alpha and beta must be positive")


@dataclass(frozen=True, eq=False)
class DinCoupling(OperatorSpec):
    """``(x, v) -> (0, grad Phi(x) + beta Hess Phi(x) v)``; single valued."""

    phi: SmoothFunction
    beta: float

    @property
    def dim(self):
        return 2 * self.phi.dim

    def decompose(self):
        n, phi, beta = self.phi.dim, self.phi, self.beta

        def ev(y):
            x, v = y[:n], y[n:]
            return Singleton(np.concatenate([np.zeros(n), phi.grad(x) + beta * phi.hess(x) @ v]))

        affine = None
        qf = phi.quadratic_form()
        if qf is not None:
            Q, b = np.asarray(qf[0]), np.asarray(qf[1])
            M = np.zeros((2 * n, 2 * n))
            M[n:, :n] = Q
            M[n:, n:] = beta * Q
            c = np.concatenate([np.zeros(n), b])
            affine = (M, c)
        F = SetValuedMap(ev, math.inf, 2 * n, affine=affine, name="din")
        return OperatorDecomposition(F, self.domain(), math.inf, self)

    def to_json(self):
        return {"operator": "DinCoupling", "phi": self.phi.to_json(), "beta": self.beta}


def build_din(p: DinParams):
    """Scenario, Lyapunov pair and equilibrium descriptor for the inertial system.

    The state is ``y = (x, x')``; ``f(y) = (y2, -alpha y2)`` and the single
    valued part is ``(0, grad Phi + beta Hess Phi y2)``.
    """
    phi, a, b = p.phi, float(p.alpha), float(p.beta)
    n = phi.dim
    x0 = np.asarray(p.x0, dtype=float).reshape(n)
    v0 = np.zeros(n) if p.v0 is None else np.asarray(p.v0, dtype=float).reshape(n)
    try:
        phi.hess(x0)
    except NotImplementedError as exc:
        raise ScenarioError("the inertial system needs a Hessian oracle") from exc
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = np.eye(n)
    M[n:, n:] = -a * np.eye(n)
    f = AffineField(M, np.zeros(2 * n))
    dec = DinCoupling(phi, b).decompose()
    sc = Scenario(f, dec, np.concatenate([x0, v0]), p.T, IdentityFamily(dec), name="din",
                  meta={"alpha": a, "beta": b})

    def V(y):
        x, v = y[:n], y[n:]
        return (a * b + 1.0) * phi.value(x) + 0.5 * float(np.sum((v + b * phi.grad(x)) ** 2))

    def W(y):
        return a * float(np.sum(y[n:] ** 2))

    def dV(y):
        x, v = y[:n], y[n:]
        g = phi.grad(x)
        w = v + b * g
        return [np.concatenate([(a * b + 1.0) * g + b * phi.hess(x) @ w, w])]

    Q = np.zeros((2 * n, 2 * n))
    Q[n:, n:] = a * np.eye(n)
    zero = geo.Box(np.concatenate([np.full(n, -np.inf), np.zeros(n)]),
                   np.concatenate([np.full(n, np.inf), np.zeros(n)]))
    pair = LyapunovPair(V, W, dV, W_quadratic=Q, W_zero_set=zero,
                        W_many=lambda S: a * np.sum(S[:, n:] ** 2, axis=1))
    return sc, pair, equilibria_descriptor(sc)


# -------------------------------------------------------------- friction


@dataclass(frozen=True)
class FrictionParams:
    """``m x'' + alpha x' + beta x in -∂|x'|`` in ``R^n``."""

    m: float = 1.0
    alpha: float = 0.1
    beta: float = 1.0
    n: int = 1
    x0: tuple = (3.0,)
    v0: tuple | None = None
    T: float = 20.0
    ybar: tuple | None = None
    k: int = FRICTION_K

    def __post_init__(self):
        if not (self.m > 0 and self.alpha > 0 and self.beta > 0):
            raise ScenarioError("m, alpha and beta must be positive")
        if int(self.n) < 1:
            raise ScenarioError("dimension must be at least 1")
        if self.ybar is not None and self.beta * float(np.linalg.norm(self.ybar)) > 1.0:
            raise ScenarioError("ybar must satisfy |beta ybar| <= 1")


def build_friction(p: FrictionParams):
    """Scenario, Lyapunov pair and equilibrium descriptor for dry friction.

    ``1/m`` multiplies the friction subdifferential so that the declared
    bound of the set-valued part is ``b = 1/m``.
    """
    n, m, a, b = int(p.n), float(p.m), float(p.alpha), float(p.beta)
    x0 = np.asarray(p.x0, dtype=float).reshape(n)
    v0 = np.zeros(n) if p.v0 is None else np.asarray(p.v0, dtype=float).reshape(n)
    ybar = np.zeros(n) if p.ybar is None else np.asarray(p.ybar, dtype=float).reshape(n)
    I = np.eye(n)
    M = np.block([[np.zeros((n, n)), I], [-(b / m) * I, -(a / m) * I]])
    f = AffineField(M, np.zeros(2 * n))
    fam = DistanceFamily(geo.Point(np.zeros(n)), 1.0 / m, n, 2 * n)
    sc = Scenario(f, fam.dec, np.concatenate([x0, v0]), p.T, fam, k=p.k, name="friction",
                  meta={"m": m, "alpha": a, "beta": b, "ybar": ybar.tolist()})

    def V(y):
        return 0.5 * b / m * float(np.sum((y[:n] - ybar) ** 2)) + 0.5 * float(np.sum(y[n:] ** 2))

    def W(y):
        return a / m * float(np.sum(y[n:] ** 2))

    def dV(y):
        return [np.concatenate([(b / m) * (y[:n] - ybar), y[n:]])]

    Q = np.zeros((2 * n, 2 * n))
    Q[n:, n:] = (a / m) * I
    zero = geo.Box(np.concatenate([np.full(n, -np.inf), np.zeros(n)]),
                   np.concatenate([np.full(n, np.inf), np.zeros(n)]))
    pair = LyapunovPair(
        V, W, dV, W_quadratic=Q, W_zero_set=zero,
        V_many=lambda S: 0.5 * b / m * np.sum((S[:, :n] - ybar) ** 2, axis=1) + 0.5 * np.sum(S[:, n:] ** 2, axis=1),
        W_many=lambda S: a / m * np.sum(S[:, n:] ** 2, axis=1),
        meta={"ybar": ybar.tolist()})
    return sc, pair, equilibria_descriptor(sc)


# ------------------------------------------------------------------ wall


def build_wall(T: float = 2.0, x0: float = 0.0, push: float = 1.0) -> Scenario:
    """Constant push ``f = -push`` against the wall ``C = [0, inf)`` with ``F = 0``.

    The regularized solution from ``0`` is ``-lam push (1 - exp(-t/lam))``.
    """
    from .operators import NormalConeOp

    dec = NormalConeOp(geo.Box([0.0], [np.inf])).decompose()
    return Scenario(constant_field([-push]), dec, [x0], T, name="wall")


# ------------------------------------------------------------ equilibria


def equilibria_descriptor(sc: Scenario, samples=None, tau: float = TAU_EQ, seed: int = 0):
    """Equilibrium set of a scenario.

    Catalog systems get an exact set: the band ``{|beta x| <= 1} x {0}`` for
    friction (a box for ``n = 1``, a ball times ``{0}`` otherwise) and
    ``{grad Phi = 0} x {0}`` for a quadratic inertial system with
    nonsingular Hessian. Other scenarios return the subset of ``samples``
    (default: 512 seeded points of ``B(x0, rho) ∩ C``) whose residual is at
    most ``tau``, as an array; an empty result warns.
    """
    import warnings

    if sc.name == "friction":
        b = sc.meta["beta"]
        n = sc.dim // 2
        if n == 1:
            return geo.Box([-1.0 / b, 0.0], [1.0 / b, 0.0])
        return BandSet(n, 1.0 / b)
    if sc.name == "din" and sc.dec.F.affine is not None:
        phi = sc.dec.spec.phi
        Q, c = (np.asarray(v) for v in phi.quadratic_form())
        if np.linalg.matrix_rank(Q) == Q.shape[0]:
            xbar = np.linalg.solve(Q, -c)
            return geo.Point(np.concatenate([xbar, np.zeros_like(xbar)]))
    if samples is None:
        rng = np.random.default_rng(seed)
        U = rng.standard_normal((512, sc.dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        samples = sc.x0 + sc.rho * U * rng.uniform(size=(512, 1)) ** (1.0 / sc.dim)
    pts = [sc.C.project(np.asarray(x, dtype=float)) for x in samples]
    keep = [x for x in pts if equilibrium_residual(sc, x) <= tau]
    if not keep:
        warnings.warn("no equilibrium found among the samples", RuntimeWarning, stacklevel=2)
        return np.zeros((0, sc.dim))
    return np.array(keep)


class BandSet(geo.ConvexSet):
    """``{(x, 0): |x| <= r}`` in ``R^n x R^n``."""

    def __init__(self, n: int, r: float):
        self.n, self.r = int(n), float(r)
        self._ball = geo.Ball(np.zeros(self.n), self.r)
        self.dim = 2 * self.n

    def project(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([self._ball.project(x[: self.n]), np.zeros(self.n)])

    def tangent_project(self, x, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return np.concatenate([self._ball.tangent_project(x[: self.n], zeta[: self.n]), np.zeros(self.n)])

    def to_json(self):
        return {"set": "band", "dim": self.n, "radius": self.r}


# ------------------------------------------------------------- by name


def _coerce(v, n):
    return tuple(np.broadcast_to(np.asarray(v, dtype=float), (n,)).tolist())


def from_name(name: str, params: dict | None = None):
    """``(Scenario, LyapunovPair or None, descriptor or None)`` for a catalog name."""
    params = dict(params or {})
    if name == "friction-1d":
        x0 = _coerce(params.pop("x0", 3.0), 1)
        v0 = _coerce(params.pop("v0", 0.0), 1)
        ybar = params.pop("ybar", None)
        ybar = None if ybar is None else _coerce(ybar, 1)
        return build_friction(FrictionParams(x0=x0, v0=v0, ybar=ybar, n=1, **params))
    if name == "din-quadratic":
        scale = float(params.pop("phi_scale", 1.0))
        x0 = _coerce(params.pop("x0", 1.0), 1)
        v0 = _coerce(params.pop("v0", 0.0), 1)
        phi = params.pop("phi", None)
        phi = scaled_quadratic(scale, 1) if phi is None else phi_from_json(phi)
        if len(x0) != phi.dim:
            x0 = _coerce(x0[0], phi.dim)
            v0 = _coerce(v0[0], phi.dim)
        return build_din(DinParams(phi, x0=x0, v0=v0, **params))
    if name == "wall-1d":
        sc = build_wall(**params)
        return sc, None, geo.Point([0.0])
    raise ScenarioError(f"unknown catalog entry {name!r}")


CATALOG = ("din-quadratic", "friction-1d", "wall-1d")
