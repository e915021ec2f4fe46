"""Maximally monotone operators from a fixed catalog and their decomposition.

An operator ``A`` is split as ``A = F + N_C`` where ``F`` is the closed convex
hull of the limits of ``A`` over its single-valued points and ``C`` is the
closure of the domain. Only catalog operators are accepted because that
limit construction is not computable in general.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .errors import DomainError, DomainMismatchError, UnsupportedOperatorError
from .geometry import TAU_SET, as_vector
from .report import FAIL, PASS, Report
from .values import (
    BallValue,
    ConeCapBall,
    ConvexCompactValue,
    MinkowskiSum,
    Scaled,
    Singleton,
    ProductValue,
    hausdorff_excess,
    unit_directions,
)

TAU_USC = 1e-6


# ---------------------------------------------------------------- smooth Phi


class SmoothFunction:
    """Value, gradient and Hessian oracles of a ``C^2`` function."""

    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def quadratic_form(self):
        """``(Q, b)`` when the function is ``x'Qx/2 + b'x + const``, else ``None``."""
        return None

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Quadratic(SmoothFunction):
    """``x'Qx/2 + b'x + c`` with symmetric ``Q``."""

    Q: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise ValueError("Q must be square and symmetric")
        b = np.zeros(Q.shape[0]) if self.b is None else as_vector(self.b, Q.shape[0])
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self):
        return self.Q.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def grad(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.b

    def hess(self, x):
        return self.Q.copy()

    def quadratic_form(self):
        return self.Q, self.b

    def to_json(self):
        return {"phi": "quadratic", "Q": self.Q.tolist(), "b": self.b.tolist(), "c": self.c}


def scaled_quadratic(scale: float, dim: int) -> Quadratic:
    """``scale * ||x||^2 / 2``."""
    return Quadratic(scale * np.eye(dim))


@dataclass(frozen=True, eq=False)
class SeparablePolynomial(SmoothFunction):
    """``sum_i p(x_i)`` with ``p(t) = sum_j coeffs[j] t^j``."""

    coeffs: tuple
    n: int = 1

    def __post_init__(self):
        co = tuple(float(c) for c in self.coeffs)
        if not co:
            raise ValueError("polynomial needs coefficients")
        object.__setattr__(self, "coeffs", co)

    @property
    def dim(self):
        return self.n

    def _poly(self, order):
        p = np.polynomial.Polynomial(self.coeffs)
        return p.deriv(order) if order else p

    def value(self, x):
        return float(np.sum(self._poly(0)(np.asarray(x, dtype=float))))

    def grad(self, x):
        return self._poly(1)(np.asarray(x, dtype=float))

    def hess(self, x):
        return np.diag(np.atleast_1d(self._poly(2)(np.asarray(x, dtype=float))))

    def quadratic_form(self):
        if len(self.coeffs) <= 3:
            co = list(self.coeffs) + [0.0] * (3 - len(self.coeffs))
            return 2.0 * co[2] * np.eye(self.n), np.full(self.n, co[1])
        return None

    def to_json(self):
        return {"phi": "polynomial", "coeffs": list(self.coeffs), "dim": self.n}


def phi_from_json(obj: dict) -> SmoothFunction:
    kind = obj.get("phi")
    if kind == "quadratic":
        return Quadratic(obj["Q"], obj.get("b"), obj.get("c", 0.0))
    if kind == "scaled_quadratic":
        return scaled_quadratic(float(obj.get("scale", 1.0)), int(obj["dim"]))
    if kind == "polynomial":
        return SeparablePolynomial(tuple(obj["coeffs"]), int(obj.get("dim", 1)))
    raise UnsupportedOperatorError(f"unknown smooth function {kind!r}")


# ---------------------------------------------------------- set-valued maps


@dataclass(frozen=True, eq=False)
class SetValuedMap:
    """``x -> F(x)`` with a declared uniform bound ``F(x) ⊆ bound * B``.

    ``bound`` may be ``inf`` for maps that are only locally bounded; the
    integrator then measures a local bound on the ball of interest.
    ``affine`` is ``(M, c)`` when ``F(x) = {M x + c}`` everywhere.
    """

    evaluator: Callable[[np.ndarray], ConvexCompactValue]
    bound: float
    dim: int
    single_valued: Callable[[np.ndarray], bool] = field(default=lambda x: True)
    affine: tuple | None = None
    name: str = "custom"

    def __call__(self, x) -> ConvexCompactValue:
        return self.evaluator(as_vector(x, self.dim))

    def is_zero(self) -> bool:
        if self.affine is None:
            return False
        M, c = self.affine
        return not np.any(M) and not np.any(c)


@dataclass(frozen=True, eq=False)
class OperatorDecomposition:
    """``A = F + N_C`` with ``F ⊆ b B`` on ``C``."""

    F: SetValuedMap
    C: geo.ConvexSet
    b: float
    spec: object = None

    def __post_init__(self):
        if self.F.dim != self.C.dim:
            raise DomainMismatchError("F and C live in different dimensions")
        if not self.b >= 0:
            raise ValueError("bound must be nonnegative")

    @property
    def dim(self):
        return self.C.dim


def zero_map(dim: int) -> SetValuedMap:
    z = np.zeros(dim)
    return SetValuedMap(lambda x: Singleton(z), 0.0, dim, affine=(np.zeros((dim, dim)), z.copy()), name="zero")


# ------------------------------------------------------------ operator specs


class OperatorSpec:
    dim: int
    nonsmooth = False

    def domain(self) -> geo.ConvexSet:
        return geo.WholeSpace(self.dim)

    def decompose(self) -> OperatorDecomposition:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GradientOfSmooth(OperatorSpec):
    """``A = grad Phi`` for convex ``Phi``; ``bound`` is the declared sup of ``|grad Phi|``."""

    phi: SmoothFunction
    bound: float = math.inf

    @property
    def dim(self):
        return self.phi.dim

    def decompose(self):
        phi = self.phi
        qf = phi.quadratic_form()
        affine = (np.array(qf[0]), np.array(qf[1])) if qf is not None else None
        F = SetValuedMap(lambda x: Singleton(phi.grad(x)), self.bound, self.dim,
                         affine=affine, name="gradient")
        return OperatorDecomposition(F, self.domain(), self.bound, self)

    def to_json(self):
        out = {"operator": "GradientOfSmooth", "phi": self.phi.to_json()}
        if math.isfinite(self.bound):
            out["bound"] = self.bound
        return out


@dataclass(frozen=True, eq=False)
class SubdiffDistance(OperatorSpec):
    """Clarke subdifferential of ``d(.; target)``."""

    target: geo.ConvexSet
    nonsmooth = True

    @property
    def dim(self):
        return self.target.dim

    def value_at(self, x):
        x = as_vector(x, self.dim)
        v = x - self.target.project(x)
        nv = float(np.linalg.norm(v))
        if nv > TAU_SET:
            return Singleton(v / nv)
        return ConeCapBall(self.target, self.target.project(x) if nv > 0 else x)

    def is_single_valued(self, x):
        value = self.value_at(x)
        b = value.as_ball()
        return b is not None and b[1] == 0.0

    def decompose(self):
        F = SetValuedMap(self.value_at, 1.0, self.dim, single_valued=self.is_single_valued,
                         name="subdiff_distance")
        return OperatorDecomposition(F, self.domain(), 1.0, self)

    def to_json(self):
        return {"operator": "SubdiffDistance", "target": self.target.to_json()}


@dataclass(frozen=True, eq=False)
class SubdiffNorm(SubdiffDistance):
    """Subdifferential of the Euclidean norm: distance to the origin."""

    target: geo.ConvexSet = None
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "target", geo.Point(np.zeros(self.n)))

    def value_at(self, x):
        x = as_vector(x, self.dim)
        nx = float(np.linalg.norm(x))
        if nx > TAU_SET:
            return Singleton(x / nx)
        return BallValue(np.zeros(self.dim), 1.0)

    def to_json(self):
        return {"operator": "SubdiffNorm", "dim": self.n}


@dataclass(frozen=True, eq=False)
class NormalConeOp(OperatorSpec):
    """``A = N_S``: ``F = {0}`` and ``C = S``."""

    S: geo.ConvexSet

    @property
    def dim(self):
        return self.S.dim

    def domain(self):
        return self.S

    def decompose(self):
        return OperatorDecomposition(zero_map(self.dim), self.S, 0.0, self)

    def to_json(self):
        return {"operator": "NormalConeOp", "set": self.S.to_json()}


@dataclass(frozen=True, eq=False)
class BlockEmbed(OperatorSpec):
    """``scale * A`` acting on coordinates ``start:start+A.dim`` of ``R^total``; zero elsewhere."""

    op: OperatorSpec
    start: int
    total: int
    scale: float = 1.0

    def __post_init__(self):
        if self.start < 0 or self.start + self.op.dim > self.total:
            raise DomainMismatchError("embedded block does not fit")
        if not self.scale >= 0:
            raise ValueError("scale must be nonnegative")

    @property
    def dim(self):
        return self.total

    @property
    def nonsmooth(self):
        return self.op.nonsmooth

    def _split(self, x):
        sl = slice(self.start, self.start + self.op.dim)
        return sl

    def domain(self):
        inner = self.op.domain()
        if inner.is_whole_space():
            return geo.WholeSpace(self.total)
        parts = []
        if self.start:
            parts.append(geo.WholeSpace(self.start))
        parts.append(inner)
        rest = self.total - self.start - self.op.dim
        if rest:
            parts.append(geo.WholeSpace(rest))
        return geo.Product(tuple(parts))

    def decompose(self):
        inner = self.op.decompose()
        sl = self._split(None)
        before, after = self.start, self.total - self.start - self.op.dim
        scale = self.scale

        def ev(x):
            val = Scaled(inner.F(x[sl]), scale)
            blocks = []
            if before:
                blocks.append(Singleton(np.zeros(before)))
            blocks.append(val)
            if after:
                blocks.append(Singleton(np.zeros(after)))
            return ProductValue(tuple(blocks)) if len(blocks) > 1 else val

        affine = None
        if inner.F.affine is not None:
            M = np.zeros((self.total, self.total))
            c = np.zeros(self.total)
            M[sl, sl] = scale * inner.F.affine[0]
            c[sl] = scale * inner.F.affine[1]
            affine = (M, c)
        F = SetValuedMap(ev, scale * inner.b, self.total,
                         single_valued=lambda x: inner.F.single_valued(x[sl]),
                         affine=affine, name=f"embed({inner.F.name})")
        return OperatorDecomposition(F, self.domain(), scale * inner.b, self)

    def to_json(self):
        return {"operator": "BlockEmbed", "start": self.start, "dim": self.total,
                "scale": self.scale, "op": self.op.to_json()}


@dataclass(frozen=True, eq=False)
class ScaledSum(OperatorSpec):
    """``sum_i c_i A_i`` with ``c_i >= 0``.

    At most one summand may carry a nontrivial domain and at most one may be
    nonsmooth (the single-valued region of a sum of nonsmooth parts is not
    known in closed form).
    """

    terms: tuple  # of (coef, OperatorSpec)

    def __post_init__(self):
        terms = tuple((float(c), op) for c, op in self.terms)
        if not terms:
            raise ValueError("sum needs at least one term")
        if any(c < 0 for c, _ in terms):
            raise ValueError("coefficients must be nonnegative")
        if len({op.dim for _, op in terms}) != 1:
            raise DomainMismatchError("summands have different dimensions")
        if sum(1 for _, op in terms if op.nonsmooth) > 1:
            raise UnsupportedOperatorError("sums of several nonsmooth operators are not supported")
        restricted = [op.domain() for _, op in terms if not op.domain().is_whole_space()]
        if len(restricted) > 1:
            raise DomainMismatchError("at most one summand may restrict the domain")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0][1].dim

    @property
    def nonsmooth(self):
        return any(op.nonsmooth for _, op in self.terms)

    def domain(self):
        for _, op in self.terms:
            d = op.domain()
            if not d.is_whole_space():
                return d
        return geo.WholeSpace(self.dim)

    def decompose(self):
        parts = [(c, op.decompose()) for c, op in self.terms]
        C = self.domain()

        def ev(x):
            return MinkowskiSum(tuple(Scaled(d.F(x), c) for c, d in parts))

        affine = None
        if all(d.F.affine is not None for _, d in parts):
            affine = (sum(c * d.F.affine[0] for c, d in parts), sum(c * d.F.affine[1] for c, d in parts))
        b = float(sum(c * d.b for c, d in parts))
        F = SetValuedMap(ev, b, self.dim,
                         single_valued=lambda x: all(d.F.single_valued(x) for _, d in parts),
                         affine=affine, name="sum")
        return OperatorDecomposition(F, C, b, self)

    def to_json(self):
        return {"operator": "ScaledSum", "terms": [{"coef": c, "op": op.to_json()} for c, op in self.terms]}


def operator_from_json(obj: dict) -> OperatorSpec:
    kind = obj.get("operator")
    if kind == "GradientOfSmooth":
        return GradientOfSmooth(phi_from_json(obj["phi"]), float(obj.get("bound", math.inf)))
    if kind == "SubdiffNorm":
        return SubdiffNorm(n=int(obj["dim"]))
    if kind == "SubdiffDistance":
        return SubdiffDistance(geo.set_from_json(obj["target"]))
    if kind == "NormalConeOp":
        return NormalConeOp(geo.set_from_json(obj["set"]))
    if kind == "ScaledSum":
        return ScaledSum(tuple((t["coef"], operator_from_json(t["op"])) for t in obj["terms"]))
    if kind == "BlockEmbed":
        return BlockEmbed(operator_from_json(obj["op"]), int(obj["start"]), int(obj["dim"]),
                          float(obj.get("scale", 1.0)))
    raise UnsupportedOperatorError(f"operator {kind!r} is not in the catalog")


def decompose(spec: OperatorSpec) -> OperatorDecomposition:
    """Split a catalog operator into ``(F, C, b)``."""
    if not isinstance(spec, OperatorSpec):
        raise UnsupportedOperatorError("only catalog operators can be decomposed")
    return spec.decompose()


def clco_A0(dec: OperatorDecomposition, x) -> ConvexCompactValue:
    """Value of ``F`` at a point of ``C``.

    Raises
    ------
    DomainError
        If ``x`` is farther than ``TAU_SET`` from ``C``.
    """
    x = as_vector(x, dec.dim)
    if dec.C.distance(x) > TAU_SET:
        raise DomainError("point outside the closed domain")
    return dec.F(x)


def _ball_samples(rng, x, radius, n):
    d = x.shape[0]
    u = rng.standard_normal((n, d))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return x + u * r


def graph_regularity_probe(F: SetValuedMap, x, radius: float, n_samples: int, seed: int = 0,
                           n_shells: int = 6, tau: float = TAU_USC, C: geo.ConvexSet | None = None) -> Report:
    """Sample local boundedness and outer semicontinuity of ``F`` near ``x``.

    Points are drawn in shells of radius ``radius * 2**-j``; per shell the
    report gives the largest support-bound excess and the largest Hausdorff
    excess of ``F(y)`` over ``F(x) + tau B``. The excess sequence must be
    nonincreasing (up to ``tau``) as the shells shrink.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x = as_vector(x, F.dim)
    rng = np.random.default_rng(seed)
    dirs = unit_directions(F.dim, 64, seed)
    Fx = F(x)
    per = max(1, n_samples // n_shells)
    bound_excess = -math.inf
    shell_excess = []
    witness = None
    for j in range(n_shells):
        rad = radius * 2.0 ** (-j)
        ys = _ball_samples(rng, x, rad, per)
        if C is not None:
            ys = np.array([C.project(y) for y in ys])
        worst = 0.0
        for y in ys:
            Fy = F(y)
            if math.isfinite(F.bound):
                gap = max(Fy.support(z) for z in dirs) - F.bound
                if gap > bound_excess:
                    bound_excess = gap
                    if gap > 1e-9:
                        witness = y.tolist()
            e = max(0.0, hausdorff_excess(Fy, Fx, dirs) - tau)
            worst = max(worst, e)
        shell_excess.append(worst)
    monotone = all(b <= a + tau for a, b in zip(shell_excess, shell_excess[1:]))
    bound_ok = not math.isfinite(F.bound) or bound_excess <= 1e-9
    ok = monotone and bound_ok
    if not ok and witness is None:
        witness = x.tolist()
    return Report(
        "graph_regularity",
        PASS if ok else FAIL,
        max(bound_excess, max(b - a for a, b in zip(shell_excess, shell_excess[1:])) if n_shells > 1 else 0.0),
        witness if not ok else None,
        {"bound_excess": bound_excess, "shell_excess": shell_excess,
         "radii": [radius * 2.0 ** (-j) for j in range(n_shells)], "samples": per * n_shells},
    )
