"""Fixed-step integration of the penalty-regularized system.

The regularized right-hand side is

    x' = f(x) - psi_k(x) - (x - P_C x) / lam

integrated by the classical 4-stage explicit scheme. Step sizes are clamped
by ``h_max``, by ``lam/4`` when the penalty is active and by the stability
limit of ``psi_k``. Affine fields with a catalog selection and a simple
domain go through the compiled kernel; everything else through a numpy
loop with the same arithmetic structure.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import BlowUpError, IntegratorDiagnosticError, MultiplierBoundError
from .scenario import Scenario
from .selection import DistanceFamily, IdentityFamily

TAU_VEL = 1e-6
TAU_PEN = 1e-6
TAU_MULT = 1e-6
# RK4 is stable on the negative real axis up to about 2.78
STAB_LIMIT = 2.5
DEFAULT_MAX_RECORDS = 20001


@dataclass
class Trajectory:
    """Samples of one run plus whole-run diagnostics.

    ``g`` and ``eta`` are filled by :func:`extract_multipliers`.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    penalty: np.ndarray
    dist_C: np.ndarray
    lam: float | None = None
    g: np.ndarray | None = None
    eta: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return self.times.shape[0]

    def interpolate(self, times) -> np.ndarray:
        """States linearly interpolated at ``times``."""
        times = np.asarray(times, dtype=float)
        return np.column_stack([np.interp(times, self.times, self.states[:, j]) for j in range(self.dim)])

    def to_csv(self) -> str:
        n = self.dim
        header = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
                  + ["penalty", "dist_C", "eta_norm"] + [f"g_{i + 1}" for i in range(n)])
        eta_norm = np.linalg.norm(self.eta, axis=1) if self.eta is not None else np.zeros(len(self))
        g = self.g if self.g is not None else np.full((len(self), n), np.nan)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for i in range(len(self)):
            row = [self.times[i], *self.states[i], *self.velocities[i], self.penalty[i],
                   self.dist_C[i], eta_norm[i], *g[i]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class StepPlan:
    h: float          # fine step
    block: int        # fine steps per coarse step
    n_blocks: int
    stride: int       # blocks between records
    coarse_rmin: float

    @property
    def H(self):
        return self.h * self.block


def plan_steps(sc: Scenario, lam: float, h_max: float, record_dt: float | None = None,
               max_records: int = DEFAULT_MAX_RECORDS, split: bool = False) -> StepPlan:
    """Choose fine and coarse step sizes for one run.

    The coarse step obeys ``h <= min(h_max, lam/4)``. The penalty clamp is
    skipped when ``C`` is the whole space, where the penalty vanishes, and in
    splitting mode, where the penalty is integrated exactly. The
    fine step also satisfies the stability limit ``2.5 / L`` of ``psi_k``;
    fine steps are only taken where that limit binds.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not h_max > 0:
        raise ValueError("h_max must be positive")
    H = h_max
    if not sc.C.is_whole_space() and not split:
        H = min(H, lam / 4.0)
    L = sc.family.lipschitz_bound(sc.k)
    h = min(H, STAB_LIMIT / L) if math.isfinite(L) and L > 0 else H
    block = max(1, int(math.ceil(H / h - 1e-9)))
    n_blocks = max(1, int(math.ceil(sc.T / H - 1e-9)))
    H = sc.T / n_blocks
    h = H / block
    if record_dt is None:
        stride = max(1, int(math.ceil(n_blocks / (max_records - 1))))
    else:
        stride = max(1, int(round(record_dt / H)))
    coarse_rmin = 0.0
    sel = sc.family.kernel_selection(sc.k) if isinstance(sc.family, DistanceFamily) else None
    if sel is not None:
        coarse_rmin = sel["delta"]
        if sel["len"] > 1:
            # the unit normal turns at rate scale/r: keep the coarse step stable
            coarse_rmin = max(coarse_rmin, H * sel["scale"] / STAB_LIMIT)
    return StepPlan(h, block, n_blocks, stride, coarse_rmin)


def _kernel_args(sc: Scenario, lam: float, plan: StepPlan, split: bool):
    """Arguments for the compiled kernel, or ``None`` if the scenario needs the generic path."""
    if sc.f.affine is None:
        return None
    M, c = (np.array(a, dtype=float) for a in sc.f.affine)
    fam = sc.family
    e = np.zeros(0)
    sel = dict(kind=-1, start=0, len=0, a=e, b=e, r=0.0, scale=0.0, delta=1.0)
    if isinstance(fam, IdentityFamily):
        if fam.dec.F.affine is None:
            return None
        MF, cF = fam.dec.F.affine
        M = M - MF
        c = c - cF
    elif isinstance(fam, DistanceFamily):
        ks = fam.kernel_selection(sc.k)
        if ks is None:
            return None
        sel = ks
    else:
        return None
    if sc.C.is_whole_space():
        pen = (0, e, e, 0.0)
    else:
        pen = sc.C.kernel_spec()
        if pen is None:
            return None
    return (np.ascontiguousarray(M), np.ascontiguousarray(c),
            int(sel["kind"]), int(sel["start"]), int(sel["len"]),
            np.ascontiguousarray(sel["a"], dtype=float), np.ascontiguousarray(sel["b"], dtype=float),
            float(sel["r"]), float(sel["scale"]), float(sel["delta"]),
            int(pen[0]), np.ascontiguousarray(pen[1], dtype=float), np.ascontiguousarray(pen[2], dtype=float),
            float(pen[3]), float(lam) if pen[0] > 0 else 0.0, int(bool(split)),
            np.ascontiguousarray(sc.x0, dtype=float), plan.h, plan.n_blocks, plan.block, plan.stride,
            sc.beta, plan.coarse_rmin)


class _NonFinite(Exception):
    pass


def _generic_run(sc: Scenario, lam: float, plan: StepPlan, split: bool) -> dict:
    """Numpy fallback for fields or sets the kernel does not cover (fine steps only)."""
    C = sc.C
    has_pen = not C.is_whole_space()
    inv_lam = 1.0 / lam

    def rhs(y, with_pen):
        if not np.all(np.isfinite(y)):
            raise _NonFinite
        out = sc.f(y) - sc.psi(y)
        p = C.project(y) if has_pen else y
        w = y - p
        if has_pen and with_pen:
            out = out - inv_lam * w
        return out, float(np.linalg.norm(w))

    h = plan.h
    n_steps = plan.n_blocks * plan.block
    rec_every = plan.stride * plan.block
    decay = math.exp(-h / lam)
    y = sc.x0.copy()
    times, states, vels, pens, dists = [], [], [], [], []
    max_vel = max_pen = 0.0
    max_excess = -math.inf
    status, fail = 0, -1
    for step in range(n_steps + 1):
        t = step * h
        vnow, d = rhs(y, True)
        vn = float(np.linalg.norm(vnow))
        p = inv_lam * d if has_pen else 0.0
        max_vel = max(max_vel, vn)
        max_pen = max(max_pen, p)
        if has_pen:
            max_excess = max(max_excess, p - sc.beta * (1.0 - math.exp(-t / lam)))
        if step % rec_every == 0 or step == n_steps:
            times.append(t)
            states.append(y.copy())
            vels.append(vnow)
            pens.append(p)
            dists.append(d)
        if step == n_steps:
            break
        try:
            k1 = rhs(y, False)[0] if split else vnow
            k2 = rhs(y + 0.5 * h * k1, not split)[0]
            k3 = rhs(y + 0.5 * h * k2, not split)[0]
            k4 = rhs(y + h * k3, not split)[0]
        except _NonFinite:
            status, fail = 1, step + 1
            break
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if split and has_pen:
            q = C.project(y)
            y = q + (y - q) * decay
        if not np.all(np.isfinite(y)):
            status, fail = 1, step + 1
            break
    return {
        "times": np.array(times), "states": np.array(states), "velocities": np.array(vels),
        "velocity_norm": np.linalg.norm(np.array(vels), axis=1), "penalty": np.array(pens),
        "dist": np.array(dists), "max_velocity": max_vel, "max_penalty": max_pen,
        "max_penalty_excess": max_excess if has_pen else 0.0, "status": status,
        "fail_block": fail, "coarse_steps": 0, "fine_steps": n_steps if status == 0 else fail,
    }


def integrate_regularized(sc: Scenario, lam: float, h_max: float, *, split: bool = False,
                          record_dt: float | None = None, max_records: int = DEFAULT_MAX_RECORDS,
                          backend: str = "auto", check_penalty: bool = True) -> Trajectory:
    """Integrate the regularized system on ``[0, T]``.

    Parameters
    ----------
    sc : Scenario
    lam : float
        Penalty parameter, ``> 0``.
    h_max : float
        Largest allowed step.
    split : bool
        Treat the penalty by exact exponential decay toward the projection
        frozen at the end of the explicit step.
    record_dt : float, optional
        Sampling interval of the stored trajectory (rounded to whole coarse steps).
    backend : {"auto", "compiled", "python", "generic"}

    Raises
    ------
    BlowUpError
        On a non-finite state.
    IntegratorDiagnosticError
        If the penalty exceeds ``beta (1 - exp(-t/lam)) + TAU_PEN``.
    """
    plan = plan_steps(sc, lam, h_max, record_dt, max_records, split)
    args = None if backend == "generic" else _kernel_args(sc, lam, plan, split)
    if args is not None:
        if backend == "python":
            kern = _kernels.python_backend
        elif backend == "compiled":
            if _kernels.compiled_backend is None:
                raise RuntimeError("compiled kernels are not available")
            kern = _kernels.compiled_backend
        else:
            kern = _kernels.backend
        out = kern.integrate_affine(*args)
        used = "compiled" if kern is _kernels.compiled_backend else "python"
    else:
        out = _generic_run(sc, lam, plan, split)
        used = "generic"
    if out["status"]:
        raise BlowUpError(f"non-finite state (block {out['fail_block']}) at lambda={lam}", lam=lam,
                          index=out["fail_block"])
    beta = sc.beta
    diag = {
        "backend": used,
        "lambda": lam,
        "h_fine": plan.h,
        "h_coarse": plan.H,
        "coarse_steps": int(out["coarse_steps"]),
        "fine_steps": int(out["fine_steps"]),
        "beta": beta,
        "velocity_bound": 2.0 * beta,
        "max_velocity": float(out["max_velocity"]),
        "velocity_margin": float(out["max_velocity"]) - 2.0 * beta * (1.0 + TAU_VEL),
        "max_penalty": float(out["max_penalty"]),
        "penalty_margin": float(out["max_penalty_excess"]) - TAU_PEN,
        "split": bool(split),
        "k": sc.k,
    }
    states = np.asarray(out["states"])
    left = float(np.max(np.linalg.norm(states - sc.x0, axis=1)))
    diag["max_excursion"] = left
    diag["inside_rho_ball"] = left <= sc.rho
    if check_penalty and diag["penalty_margin"] > 0:
        raise IntegratorDiagnosticError(
            f"penalty bound exceeded by {diag['penalty_margin']:.3e} at lambda={lam}",
            lam=lam, margin=diag["penalty_margin"])
    return Trajectory(np.asarray(out["times"]), states, np.asarray(out["velocities"]),
                      np.asarray(out["penalty"]), np.asarray(out["dist"]), lam, diagnostics=diag)


def sup_gap(a: Trajectory, b: Trajectory) -> float:
    """Sup-norm distance of two runs on the coarser of the two grids."""
    coarse, other = (a, b) if len(a) <= len(b) else (b, a)
    diff = coarse.states - other.interpolate(coarse.times)
    return float(np.max(np.linalg.norm(diff, axis=1)))


def empirical_orders(lams, gaps) -> list:
    """Order ``p`` per consecutive gap pair, assuming ``x_lam = x + c lam^p``.

    Solves ``g_i / g_{i+1} = (l_i^p - l_{i+1}^p) / (l_{i+1}^p - l_{i+2}^p)``.
    """
    orders = []
    for i in range(len(gaps) - 1):
        g0, g1 = gaps[i], gaps[i + 1]
        l0, l1, l2 = lams[i], lams[i + 1], lams[i + 2]
        if not (g0 > 0 and g1 > 0):
            orders.append(math.nan)
            continue
        target = math.log(g0 / g1)

        def fn(p):
            return math.log((l0 ** p - l1 ** p) / (l1 ** p - l2 ** p)) - target

        try:
            orders.append(brentq(fn, 1e-3, 10.0, xtol=1e-12))
        except ValueError:
            orders.append(math.nan)
    return orders


@dataclass
class Refinement:
    trajectory: Trajectory
    lambdas: list
    gaps: list
    orders: list
    flags: dict
    runs: list

    def to_json(self):
        return {"lambdas": self.lambdas, "gaps": self.gaps, "orders": self.orders, "flags": self.flags,
                "runs": [r.diagnostics for r in self.runs]}


def refine_lambda(sc: Scenario, schedule, h_max: float, **kw) -> Refinement:
    """Integrate along a decreasing ``lam`` schedule and measure consecutive gaps.

    When ``C`` is the whole space the penalty vanishes identically, so a
    single run serves every ``lam`` and all gaps are zero.
    """
    lams = [float(v) for v in schedule]
    if len(lams) < 2:
        raise ValueError("schedule needs at least two entries")
    if any(b >= a for a, b in zip(lams, lams[1:])) or lams[-1] <= 0:
        raise ValueError("schedule must be strictly decreasing and positive")
    flags = {"lambda_independent": sc.C.is_whole_space(), "nonmonotone_gaps": False}
    runs = []
    if flags["lambda_independent"]:
        base = integrate_regularized(sc, lams[-1], h_max, **kw)
        runs = [replace(base, lam=lam, diagnostics={**base.diagnostics, "lambda": lam}) for lam in lams]
        gaps = [0.0] * (len(lams) - 1)
    else:
        for lam in lams:
            try:
                runs.append(integrate_regularized(sc, lam, h_max, **kw))
            except IntegratorDiagnosticError as exc:
                exc.lam = lam
                raise
        gaps = [sup_gap(a, b) for a, b in zip(runs, runs[1:])]
        flags["nonmonotone_gaps"] = any(b >= a for a, b in zip(gaps, gaps[1:]))
    orders = [] if flags["lambda_independent"] else empirical_orders(lams, gaps)
    return Refinement(runs[-1], lams, gaps, orders, flags, runs)


def extract_multipliers(traj: Trajectory, sc: Scenario, tol: float = TAU_MULT, check: bool = True) -> Trajectory:
    """Fill ``g`` (nearest point of ``F`` to ``psi_k``) and ``eta`` (scaled penalty).

    ``F`` is evaluated at the projection onto ``C``, since the regularized
    state may sit slightly outside. Points with ``d(x; C) > lam * beta`` are
    counted as inconsistent in the diagnostics.

    Raises
    ------
    MultiplierBoundError
        If ``|eta| > |f - g| + tol`` somewhere (when ``check``).
    """
    lam = traj.lam if traj.lam is not None else math.inf
    C = sc.C
    n = len(traj)
    g = np.empty((n, sc.dim))
    eta = np.zeros((n, sc.dim))
    margins = np.empty(n)
    inconsistent = 0
    for i, x in enumerate(traj.states):
        p = C.project(x)
        g[i] = sc.dec.F(p).project(sc.psi(x))
        if not C.is_whole_space():
            eta[i] = (x - p) / lam
            if float(np.linalg.norm(x - p)) > lam * sc.beta:
                inconsistent += 1
        margins[i] = float(np.linalg.norm(eta[i])) - float(np.linalg.norm(sc.f(x) - g[i]))
    worst = int(np.argmax(margins))
    out = replace(traj, g=g, eta=eta, diagnostics={
        **traj.diagnostics,
        "multiplier_margin": float(margins[worst]) - tol,
        "multiplier_worst_index": worst,
        "inconsistent_regime_points": inconsistent,
    })
    if check and margins[worst] > tol:
        raise MultiplierBoundError(f"multiplier bound violated by {margins[worst]:.3e} at sample {worst}",
                                   index=worst, margin=float(margins[worst]))
    return out
