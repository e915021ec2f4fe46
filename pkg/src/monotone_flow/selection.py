"""Nested Lipschitz approximations ``F_k`` and the selection ``psi_k``.

For the distance construction with ``delta = 1/k`` and ``v = x - P_C x``:

* ``|v| >= delta``      (outer): ``F_k = {u}``, ``u = v/|v|``;
* ``0 < |v| < delta``   (blend): ``F_k = Ball(alpha u, 1 - alpha)``, ``alpha = |v|/delta``;
* ``x in C``            (inner): ``F_k = N_C(x) ∩ B``.

``psi_k`` is the minimal-norm element of ``F_k``. In the blend region that is
``max(0, 2 alpha - 1) u``: for ``alpha <= 1/2`` the ball contains the origin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .geometry import TAU_SET, as_vector
from .operators import (
    BlockEmbed,
    OperatorDecomposition,
    SubdiffDistance,
    SubdiffNorm,
    decompose,
)
from .report import FAIL, INCONCLUSIVE, PASS, Report
from .values import (
    BallValue,
    ConeCapBall,
    ConvexCompactValue,
    ProductValue,
    Scaled,
    Singleton,
    hausdorff_excess,
    support_many,
    unit_directions,
)

N_DIR = 64
NEST_TOL = 1e-9

INNER = "inner"
BLEND = "blend"
OUTER = "outer"


def delta_k(k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    return 1.0 / k


class LipschitzFamily:
    """A nested sequence ``F_k`` approximating ``F`` from outside."""

    dec: OperatorDecomposition
    name = "family"

    @property
    def dim(self):
        return self.dec.dim

    def eval_Fk(self, k: int, x) -> ConvexCompactValue:
        raise NotImplementedError

    def eval_psi(self, k: int, x) -> np.ndarray:
        return self.eval_Fk(k, x).origin_projection()

    def lipschitz_bound(self, k: int) -> float:
        """Upper bound on the Lipschitz constant of ``psi_k`` (``inf`` if unknown)."""
        return math.inf

    def kernel_selection(self, k: int):
        """Description of ``psi_k`` for the compiled integrator, or ``None``."""
        return None

    def to_json(self) -> dict:
        return {"family": self.name}


@dataclass(frozen=True, eq=False)
class DistanceFamily(LipschitzFamily):
    """``scale * F_k`` for ``d(.; target)``, acting on a coordinate block.

    With ``start = 0`` and ``total = target.dim`` this is the plain
    construction; other values embed it into a larger state (zero
    elsewhere), as needed for velocity-dependent friction.
    """

    target: geo.ConvexSet
    scale: float = 1.0
    start: int = 0
    total: int | None = None
    dec: OperatorDecomposition = field(init=False, repr=False)
    name = "distance"

    def __post_init__(self):
        total = self.target.dim if self.total is None else int(self.total)
        object.__setattr__(self, "total", total)
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        base = self._base_spec()
        if self.start == 0 and total == self.target.dim and self.scale == 1.0:
            spec = base
        else:
            spec = BlockEmbed(base, self.start, total, self.scale)
        object.__setattr__(self, "dec", decompose(spec))

    def _base_spec(self):
        return SubdiffDistance(self.target)

    @property
    def _block(self):
        return slice(self.start, self.start + self.target.dim)

    # per-point helpers on the block
    def v(self, x):
        w = as_vector(x, self.total)[self._block]
        return w - self.target.project(w)

    def u(self, x):
        v = self.v(x)
        nv = float(np.linalg.norm(v))
        if nv <= TAU_SET:
            raise geo.DegenerateDirectionError("u(x) is undefined on the target set")
        return v / nv

    def alpha(self, k, x):
        return float(np.linalg.norm(self.v(x))) / delta_k(k)

    def beta(self, k, x):
        return 2.0 * self.alpha(k, x) - 1.0

    def region(self, k, x) -> str:
        r = float(np.linalg.norm(self.v(x)))
        if r <= TAU_SET:
            return INNER
        return OUTER if r >= delta_k(k) else BLEND

    def _embed(self, val):
        if self.start == 0 and self.total == self.target.dim and self.scale == 1.0:
            return val
        blocks = []
        if self.start:
            blocks.append(Singleton(np.zeros(self.start)))
        blocks.append(Scaled(val, self.scale))
        rest = self.total - self.start - self.target.dim
        if rest:
            blocks.append(Singleton(np.zeros(rest)))
        return ProductValue(tuple(blocks)) if len(blocks) > 1 else blocks[0]

    def _block_value(self, k, w):
        d = delta_k(k)
        p = self.target.project(w)
        v = w - p
        r = float(np.linalg.norm(v))
        if r <= TAU_SET:
            return self._inner_value(w, p)
        u = v / r
        if r >= d:
            return Singleton(u)
        a = r / d
        return BallValue(a * u, 1.0 - a)

    def _inner_value(self, w, p):
        if isinstance(self.target, geo.Point):
            return BallValue(np.zeros(self.target.dim), 1.0)
        return ConeCapBall(self.target, p if self.target.distance(w) > 0 else w)

    def eval_Fk(self, k, x):
        x = as_vector(x, self.total)
        return self._embed(self._block_value(k, x[self._block]))

    def eval_psi(self, k, x):
        x = as_vector(x, self.total)
        d = delta_k(k)
        w = x[self._block]
        v = w - self.target.project(w)
        r = float(np.linalg.norm(v))
        out = np.zeros(self.total)
        if r <= TAU_SET:
            return out
        if r >= d:
            coef = 1.0
        elif 2.0 * r > d:
            coef = 2.0 * r / d - 1.0
        else:
            coef = 0.0
        out[self._block] = self.scale * coef * (v / r)
        return out

    def lipschitz_bound(self, k):
        # radial slope 2/delta dominates the tangential slope 1/delta
        return 2.0 * self.scale / delta_k(k)

    def kernel_selection(self, k):
        spec = self.target.kernel_spec()
        if spec is None:
            return None
        kind, a, b, r = spec
        return {"start": self.start, "len": self.target.dim, "kind": kind, "a": a, "b": b, "r": r,
                "scale": self.scale, "delta": delta_k(k)}

    def to_json(self):
        out = {"family": self.name, "target": self.target.to_json()}
        if self.scale != 1.0:
            out["scale"] = self.scale
        if self.start or self.total != self.target.dim:
            out["start"] = self.start
            out["dim"] = self.total
        return out


@dataclass(frozen=True, eq=False)
class NormFamily(DistanceFamily):
    """Distance construction for ``C = {0}``: approximations of ``∂|.|``."""

    target: geo.ConvexSet = None
    n: int = 2
    name = "norm"

    def __post_init__(self):
        object.__setattr__(self, "target", geo.Point(np.zeros(self.n)))
        DistanceFamily.__post_init__(self)

    def _base_spec(self):
        return SubdiffNorm(n=self.n)

    def to_json(self):
        out = DistanceFamily.to_json(self)
        out.pop("target")
        out["n"] = self.n
        return out


@dataclass(frozen=True, eq=False)
class IdentityFamily(LipschitzFamily):
    """``F_k = F`` for a single-valued, locally Lipschitz ``F``."""

    dec: OperatorDecomposition
    name = "identity"

    def eval_Fk(self, k, x):
        delta_k(k)
        return self.dec.F(x)

    def lipschitz_bound(self, k):
        if self.dec.F.affine is not None:
            return float(np.linalg.norm(self.dec.F.affine[0], 2))
        return math.inf


@dataclass(frozen=True, eq=False)
class CustomFamily(LipschitzFamily):
    """User-supplied ``F_k``; construct through :func:`admit_custom_family`."""

    dec: OperatorDecomposition
    fk: Callable[[int, np.ndarray], ConvexCompactValue]
    lipschitz: Callable[[int], float] | None = None
    name = "custom"

    def eval_Fk(self, k, x):
        delta_k(k)
        return self.fk(k, as_vector(x, self.dim))

    def lipschitz_bound(self, k):
        return math.inf if self.lipschitz is None else float(self.lipschitz(k))


def eval_Fk(fam: LipschitzFamily, k: int, x) -> ConvexCompactValue:
    return fam.eval_Fk(k, x)


def eval_psi(fam: LipschitzFamily, k: int, x) -> np.ndarray:
    return fam.eval_psi(k, x)


def family_for(dec: OperatorDecomposition) -> LipschitzFamily:
    """Default family for a decomposition: the distance construction when
    ``F`` is a distance subdifferential, otherwise ``F_k = F``."""
    spec = dec.spec
    scale, start, total = 1.0, 0, dec.dim
    if isinstance(spec, BlockEmbed):
        scale, start, total = spec.scale, spec.start, spec.total
        spec = spec.op
    if isinstance(spec, SubdiffNorm):
        return NormFamily(n=spec.n, scale=scale, start=start, total=total)
    if isinstance(spec, SubdiffDistance):
        return DistanceFamily(spec.target, scale, start, total)
    return IdentityFamily(dec)


# ------------------------------------------------------------------ probes


@dataclass
class LipschitzScan:
    max_ratio: float
    worst_pair: tuple | None
    region_maxima: dict
    bounds: dict
    violations: dict
    skipped: int
    n_pairs: int

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def to_report(self) -> Report:
        margins = [self.region_maxima.get(key, -math.inf) - b for key, b in self.bounds.items()]
        return Report(
            "lipschitz_ratio_scan",
            PASS if self.ok else FAIL,
            max(margins),
            None if self.ok else [list(map(float, p)) for p in self.worst_pair],
            {"max_ratio": self.max_ratio, "region_maxima": self.region_maxima,
             "bounds": self.bounds, "violations": self.violations,
             "skipped": self.skipped, "pairs": self.n_pairs},
        )


def _region_key(a, b):
    return "-".join(sorted((a, b)))


def lipschitz_ratio_scan(fam: DistanceFamily, k: int, pairs) -> LipschitzScan:
    """Largest ``|psi_k(x) - psi_k(y)| / |x - y|`` overall and per region pair.

    Bounds checked: ``8/delta`` globally, ``4/delta`` for two outer points and
    ``1/delta`` for an inner point against an outer point. Coincident pairs
    are skipped and counted.
    """
    d = delta_k(k)
    s = getattr(fam, "scale", 1.0)
    bounds = {"global": 8.0 * s / d, "outer-outer": 4.0 * s / d, "inner-outer": 1.0 * s / d}
    maxima: dict = {}
    violations = {key: 0 for key in bounds}
    best, worst = -math.inf, None
    skipped = 0
    n = 0
    for x, y in pairs:
        x = as_vector(x, fam.dim)
        y = as_vector(y, fam.dim)
        dist = float(np.linalg.norm(x - y))
        if dist == 0.0:
            skipped += 1
            continue
        n += 1
        ratio = float(np.linalg.norm(fam.eval_psi(k, x) - fam.eval_psi(k, y))) / dist
        key = _region_key(fam.region(k, x), fam.region(k, y))
        maxima[key] = max(maxima.get(key, 0.0), ratio)
        maxima["global"] = max(maxima.get("global", 0.0), ratio)
        if ratio > best:
            best, worst = ratio, (x, y)
        for bkey in ("global", key):
            if bkey in bounds and ratio > bounds[bkey]:
                violations[bkey] += 1
    if skipped:
        warnings.warn(f"{skipped} coincident pairs skipped", RuntimeWarning, stacklevel=2)
    if n == 0:
        raise ValueError("no usable pairs")
    return LipschitzScan(best, worst, dict(sorted(maxima.items())), bounds, violations, skipped, n)


def nesting_check(fam: LipschitzFamily, x, k_max: int, directions: int = N_DIR, seed: int = 0,
                  tol: float = NEST_TOL) -> Report:
    """Check ``σ_F <= σ_{F_{k+1}} <= σ_{F_k} <= b|ζ|`` on sampled unit directions.

    ``worst_margin`` is the most negative gap, negated (so positive means a
    violation beyond zero); the verdict uses ``tol``.
    """
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    x = as_vector(x, fam.dim)
    Z = unit_directions(fam.dim, directions, seed)
    sF = support_many(fam.dec.F(x), Z)
    prev = support_many(fam.eval_Fk(1, x), Z)
    b = fam.dec.b
    worst = -math.inf
    witness = None
    min_gaps = {"F_in_Fk": math.inf, "nested": math.inf, "bounded": math.inf}

    def note(name, gaps, k):
        nonlocal worst, witness
        g = float(np.min(gaps))
        min_gaps[name] = min(min_gaps[name], g)
        if -g > worst:
            worst = -g
            if g < -tol:
                witness = {"x": x.tolist(), "k": k, "gap": name, "direction": Z[int(np.argmin(gaps))].tolist()}

    if math.isfinite(b):
        note("bounded", b - prev, 1)
    for k in range(1, k_max):
        nxt = support_many(fam.eval_Fk(k + 1, x), Z)
        note("F_in_Fk", nxt - sF, k + 1)
        note("nested", prev - nxt, k)
        if math.isfinite(b):
            note("bounded", b - nxt, k + 1)
        prev = nxt
    ok = worst <= tol
    return Report("nesting", PASS if ok else FAIL, worst, None if ok else witness,
                  {"min_gaps": min_gaps, "k_max": k_max, "directions": directions})


def admit_custom_family(dec: OperatorDecomposition, fk, sample_points, k_max: int = 5,
                        lipschitz=None, seed: int = 0) -> CustomFamily:
    """Wrap a user ``F_k`` after it passes :func:`nesting_check` at every sample point."""
    fam = CustomFamily(dec, fk, lipschitz)
    for x in sample_points:
        rep = nesting_check(fam, x, k_max, seed=seed)
        if not rep.passed:
            raise ValueError(f"custom family rejected: nesting fails at {rep.witness}")
    return fam


def graphical_convergence_probe(fam: LipschitzFamily, x, eps: float, k_max: int = 1000,
                                directions: int = N_DIR, seed: int = 0) -> Report:
    """Least ``k <= k_max`` with ``F_k(x) ⊆ F(x) + eps B`` on sampled directions."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = as_vector(x, fam.dim)
    Z = unit_directions(fam.dim, directions, seed)
    Fx = fam.dec.F(x)
    sF = support_many(Fx, Z) + eps
    worst = math.inf
    for k in range(1, k_max + 1):
        Fk = fam.eval_Fk(k, x)
        excess = float(np.max(support_many(Fk, Z) - sF))
        worst = min(worst, excess)
        if excess <= 0.0:
            return Report("graphical_convergence", PASS, excess, None,
                          {"k": k, "eps": eps, "x": x.tolist()})
    return Report("graphical_convergence", INCONCLUSIVE, worst, None,
                  {"k": None, "eps": eps, "x": x.tolist(), "max_excess": worst, "k_max": k_max})


def approximation_excess(fam: LipschitzFamily, k: int, x, directions=None) -> float:
    """Hausdorff excess of ``F_k(x)`` over ``F(x)`` (exact for ball/point pairs)."""
    x = as_vector(x, fam.dim)
    if directions is None:
        directions = unit_directions(fam.dim, N_DIR)
    return hausdorff_excess(fam.eval_Fk(k, x), fam.dec.F(x), directions)
