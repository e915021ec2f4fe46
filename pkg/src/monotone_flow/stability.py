"""Hamiltonian evaluation and trajectory-level Lyapunov diagnostics.

All checks sample; a PASS means no violation was found on the points tried.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from . import geometry as geo
from .errors import DomainError, InconsistencyError, StartOutsideError, UnsupportedOperatorError
from .geometry import TAU_SET, as_vector
from .integrate import Trajectory
from .report import FAIL, INCONCLUSIVE, PASS, Report, combine
from .scenario import Scenario
from .values import hausdorff_excess, unit_directions

TAU_CONE = 1e-9
TAU_H = 1e-9
TAU_LYAP = 1e-6
TAU_EQ = 1e-6
TAU_CONV = 1e-4
APPROX_SLACK = 1e-8
NEG_INF = -math.inf


def _threads() -> int:
    import os

    try:
        return max(1, int(os.environ.get("MONOTONE_FLOW_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class LyapunovPair:
    """Candidate pair ``(V, W)``.

    Parameters
    ----------
    V, W : callable
        Pointwise value oracles; ``W >= 0``.
    subgrad : callable
        ``x -> list`` of proximal subgradients of ``V`` (the gradient where
        ``V`` is smooth). An empty list marks a point that cannot be checked.
    domain : ConvexSet, optional
        ``dom V``; whole space when omitted.
    W_quadratic : array_like, optional
        ``Q`` with ``W(x) = x^T Q x``, enabling the closed-form envelope.
    W_zero_set : ConvexSet, optional
        Exact description of ``W^{-1}(0)`` when known.
    V_many, W_many : callable, optional
        Vectorised versions taking an ``(N, n)`` array.
    """

    V: Callable[[np.ndarray], float]
    W: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], list]
    domain: geo.ConvexSet | None = None
    W_quadratic: np.ndarray | None = None
    W_zero_set: geo.ConvexSet | None = None
    V_many: Callable | None = None
    W_many: Callable | None = None
    meta: dict = field(default_factory=dict)

    def values(self, states) -> tuple[np.ndarray, np.ndarray]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        V = self.V_many(states) if self.V_many else np.array([self.V(x) for x in states])
        W = self.W_many(states) if self.W_many else np.array([self.W(x) for x in states])
        return np.asarray(V, dtype=float), np.asarray(W, dtype=float)


# ------------------------------------------------------------ Hamiltonians


def _check_in_C(sc: Scenario, x) -> np.ndarray:
    x = as_vector(x, sc.dim)
    if sc.C.distance(x) > TAU_SET:
        raise DomainError("point outside C")
    return x


def _value(sc: Scenario, x, mode):
    if mode == "exact":
        return sc.dec.F(x)
    if isinstance(mode, tuple) and mode[0] == "approx":
        return sc.family.eval_Fk(int(mode[1]), x)
    raise ValueError(f"mode must be 'exact' or ('approx', k), got {mode!r}")


def hamiltonian(sc: Scenario, x, zeta, mode="exact") -> float:
    """Lower Hamiltonian ``inf <zeta, v>`` over ``v in f(x) - G(x) - N_C(x)``.

    ``G`` is ``F`` for ``mode="exact"`` and ``F_k`` for ``mode=("approx", k)``.
    Returns ``-inf`` when ``zeta`` has a normal component above ``TAU_CONE``
    (the infimum over the cone is unbounded).
    """
    x = _check_in_C(sc, x)
    zeta = as_vector(zeta, sc.dim)
    if not np.any(zeta):
        return 0.0
    if not sc.C.is_whole_space() and geo.cone_cap_ball_support(sc.C, x, zeta) > TAU_CONE:
        return NEG_INF
    G = _value(sc, x, mode)
    return float(zeta @ sc.f(x)) - G.support(zeta)


def approx_gap_check(sc: Scenario, k: int, x, zeta, directions: int = 64, seed: int = 0) -> Report:
    """Check ``h <= h_k + eps(x)|zeta| + 1e-8`` with ``eps`` the excess of ``F_k(x)`` over ``F(x)``.

    ``eps`` is exact for ball/point values and sampled otherwise; the
    direction of ``zeta`` is always among the samples.

    Raises
    ------
    InconsistencyError
        If exactly one of the two Hamiltonians is ``-inf``.
    """
    x = _check_in_C(sc, x)
    zeta = as_vector(zeta, sc.dim)
    h = hamiltonian(sc, x, zeta, "exact")
    hk = hamiltonian(sc, x, zeta, ("approx", k))
    if math.isinf(h) != math.isinf(hk):
        raise InconsistencyError("one Hamiltonian is -inf and the other is finite")
    nz = float(np.linalg.norm(zeta))
    if math.isinf(h):
        return Report("approx_gap", PASS, NEG_INF, None, {"h": h, "h_k": hk, "eps": 0.0, "k": k})
    Z = unit_directions(sc.dim, directions, seed)
    if nz > 0:
        Z = np.vstack([zeta / nz, Z])
    eps = hausdorff_excess(sc.family.eval_Fk(k, x), sc.dec.F(x), Z)
    margin = h - (hk + eps * nz + APPROX_SLACK)
    ok = margin <= 0
    return Report("approx_gap", PASS if ok else FAIL, margin,
                  None if ok else {"x": x.tolist(), "zeta": zeta.tolist()},
                  {"h": h, "h_k": hk, "eps": eps, "k": k})


def check_condition(sc: Scenario, pair: LyapunovPair, points, mode: str = "H2", tau: float = TAU_H) -> Report:
    """Sampled check of ``h(x, zeta) <= 0`` (H1) or ``<= -W(x)`` (H2) for ``zeta`` in ``∂V(x)``."""
    if mode not in ("H1", "H2"):
        raise ValueError("mode must be 'H1' or 'H2'")
    worst, witness = NEG_INF, None
    checked = skipped = 0
    for x in points:
        x = _check_in_C(sc, x)
        if pair.domain is not None and not pair.domain.contains(x):
            raise DomainError("point outside dom V")
        zetas = pair.subgrad(x)
        if not zetas:
            skipped += 1
            continue
        w = pair.W(x) if mode == "H2" else 0.0
        for z in zetas:
            h = hamiltonian(sc, x, z, "exact")
            checked += 1
            if math.isinf(h):
                continue
            m = h + w
            if m > worst:
                worst = m
                witness = {"x": x.tolist(), "zeta": np.asarray(z, dtype=float).tolist(), "h": h}
    if skipped:
        warnings.warn(f"{skipped} points without subgradients skipped", RuntimeWarning, stacklevel=2)
    ok = worst <= tau
    return Report(f"condition_{mode}", PASS if ok else FAIL, worst, None if ok else witness,
                  {"checked": checked, "skipped": skipped, "points": len(points),
                   "statement": f"no violation found on {checked} (point, subgradient) pairs"})


# ---------------------------------------------------------- along a run


def lyapunov_decrease(traj: Trajectory, pair: LyapunovPair, tau: float = TAU_LYAP) -> tuple[Report, np.ndarray]:
    """``V(x_i) + int_0^{t_i} W - V(x_0)`` per sample with trapezoidal quadrature.

    Returns the report (``worst_margin`` is the largest value of the series)
    and the series itself.
    """
    V, W = pair.values(traj.states)
    dt = np.diff(traj.times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (W[1:] + W[:-1]))])
    series = V + integral - V[0]
    i = int(np.argmax(series))
    worst = float(series[i])
    ok = worst <= tau
    return (Report("lyapunov_decrease", PASS if ok else FAIL, worst,
                   None if ok else {"t": float(traj.times[i]), "x": traj.states[i].tolist()},
                   {"samples": len(traj), "min_W": float(W.min()), "tau": tau}),
            series)


def sublevel_invariance(traj: Trajectory, pair: LyapunovPair, alpha: float, tau: float = TAU_LYAP) -> Report:
    """``V(x_i) <= alpha + tau`` along the run.

    Raises
    ------
    StartOutsideError
        If ``V(x_0) > alpha``.
    """
    V, _ = pair.values(traj.states)
    if V[0] > alpha:
        raise StartOutsideError(f"V(x0) = {V[0]} exceeds alpha = {alpha}")
    i = int(np.argmax(V))
    margin = float(V[i] - alpha)
    ok = margin <= tau
    return Report("sublevel_invariance", PASS if ok else FAIL, margin,
                  None if ok else {"t": float(traj.times[i]), "x": traj.states[i].tolist()},
                  {"alpha": alpha})


def _distance_to_sum(y, G, C: geo.ConvexSet, x, tol=1e-14, max_iter=10_000) -> float:
    """``d(y, G + N_C(x))`` by alternating projections between ``G`` and ``y - N_C(x)``."""
    g = G.project(y)
    prev = math.inf
    d = math.inf
    for _ in range(max_iter):
        # nearest point of y - N to g is y - proj_N(y - g)
        q = y - geo.normal_cone_project(C, x, y - g)
        g = G.project(q)
        d = float(np.linalg.norm(q - g))
        if prev - d <= tol:
            break
        prev = d
    return d


def equilibrium_residual(sc: Scenario, x) -> float:
    """``d(f(x), F(x) + N_C(x))``; zero exactly on the equilibrium set."""
    x = _check_in_C(sc, x)
    y = sc.f(x)
    G = sc.dec.F(sc.C.project(x))
    if sc.C.is_whole_space():
        return G.distance(y)
    return _distance_to_sum(y, G, sc.C, sc.C.project(x))


def tail_oscillation(traj: Trajectory, frac: float = 0.1) -> float:
    """Diameter of the states on the last ``frac`` of the horizon."""
    t0 = traj.times[-1] - frac * (traj.times[-1] - traj.times[0])
    tail = traj.states[traj.times >= t0 - 1e-12]
    if tail.shape[0] > 2000:
        tail = tail[:: int(math.ceil(tail.shape[0] / 2000))]
    if tail.shape[0] < 2:
        return 0.0
    return float(np.max(pdist(tail)))


# ------------------------------------------------------- PAS / semistability


def sample_set(Z, n: int, seed: int = 0) -> np.ndarray:
    """Points of a descriptor: a list of points is returned as is; a bounded
    Box or Ball gives its center, its extreme points along coordinates and
    seeded interior samples."""
    if not isinstance(Z, geo.ConvexSet):
        return np.atleast_2d(np.asarray(Z, dtype=float))
    rng = np.random.default_rng(seed)
    if isinstance(Z, geo.Point):
        return Z.p[None, :].copy()
    if isinstance(Z, geo.Box) and np.all(np.isfinite(Z.lo)) and np.all(np.isfinite(Z.hi)):
        lo, hi = Z.lo, Z.hi
        pts = [0.5 * (lo + hi)]
        for j in np.nonzero(hi > lo)[0]:
            for end in (lo[j], hi[j]):
                p = 0.5 * (lo + hi)
                p[j] = end
                pts.append(p)
        pts += list(lo + (hi - lo) * rng.uniform(size=(max(0, n - len(pts)), lo.shape[0])))
        return np.array(pts[:max(n, 1)])
    if isinstance(Z, geo.Ball):
        U = unit_directions(Z.dim, n, seed)
        r = Z.radius * rng.uniform(size=(n, 1))
        return np.vstack([Z.center, Z.center + r * U])[:max(n, 1)]
    raise UnsupportedOperatorError("cannot sample this descriptor; pass explicit points")


def _distance_to(Z, x) -> float:
    if isinstance(Z, geo.ConvexSet):
        return Z.distance(x)
    pts = np.atleast_2d(np.asarray(Z, dtype=float))
    return float(np.min(np.linalg.norm(pts - x, axis=1)))


def default_runner(sc: Scenario, lam: float = 1e-3, h_max: float = 1e-2, **kw):
    """Runner that integrates the regularized system from a given initial point."""
    from .integrate import integrate_regularized

    def run(x0):
        return integrate_regularized(sc.with_(x0=x0), lam, h_max, **kw)

    return run


def _map(fn, items):
    n = _threads()
    if n <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _stays_within(traj: Trajectory, z, eps) -> tuple[bool, float]:
    d = float(np.max(np.linalg.norm(traj.states - z, axis=1)))
    # starts on the sphere of radius eps carry rounding of order 1e-16
    return d <= eps * (1 + 1e-12), d


def find_delta(sc: Scenario, z, eps: float, runner, n_ring: int = 16, max_halvings: int = 30,
               seed: int = 0) -> tuple[float | None, dict]:
    """Largest ``delta = eps / 2^j`` such that every sampled start in ``B(z, delta) ∩ C``
    stays in ``B(z, eps)``.

    Starts are ``z`` itself, ``n_ring`` seeded directions at radius ``delta``
    and the same directions at ``delta/2``, all projected onto ``C``.
    """
    z = as_vector(z, sc.dim)
    U = unit_directions(sc.dim, n_ring, seed)
    if sc.dim == 1:
        U = np.array([[1.0], [-1.0]])
    delta = eps
    worst = None
    for j in range(max_halvings + 1):
        starts = np.vstack([z, z + delta * U, z + 0.5 * delta * U])
        starts = np.array([sc.C.project(s) for s in starts])
        runs = _map(runner, list(starts))
        excursions = [_stays_within(tr, z, eps) for tr in runs]
        if all(ok for ok, _ in excursions):
            return delta, {"halvings": j, "max_excursion": max(d for _, d in excursions)}
        i = int(np.argmax([d for _, d in excursions]))
        worst = {"start": starts[i].tolist(), "excursion": excursions[i][1], "delta": delta}
        delta *= 0.5
    return None, {"halvings": max_halvings, "witness": worst}


def pas_probe(sc: Scenario, Z, x0_grid, eps_list=(0.5, 0.1), runner=None, z_points=None,
              n_z: int = 5, seed: int = 0, tau_eq: float = TAU_EQ, tau_conv: float = TAU_CONV,
              check_stability: bool = True) -> Report:
    """Probe pointwise asymptotic stability of ``Z``.

    (A1) for each tested ``z`` and ``eps`` a ``delta`` is sought (see
    :func:`find_delta`). (A2) each run from ``x0_grid`` must settle (tail
    oscillation ``<= tau_conv``) at a point of ``Z`` with equilibrium
    residual ``<= tau_eq``. A run that has not settled makes the verdict
    INCONCLUSIVE rather than FAIL.

    ``runner`` maps an initial point to a :class:`Trajectory`; the default
    integrates the regularized system.
    """
    runner = runner or default_runner(sc)
    zs = sample_set(Z, n_z, seed) if z_points is None else np.atleast_2d(np.asarray(z_points, dtype=float))
    parts = []
    for z in zs:
        r = equilibrium_residual(sc, z)
        if r > tau_eq:
            raise ValueError(f"target point {z.tolist()} is not an equilibrium (residual {r:.3e})")
    a1 = []
    if check_stability:
        for z in zs:
            for eps in eps_list:
                delta, info = find_delta(sc, z, eps, runner, seed=seed)
                entry = {"z": z.tolist(), "eps": eps, "delta": delta, **info}
                a1.append(entry)
                if delta is None:
                    parts.append(Report("pas_A1", FAIL, info["witness"]["excursion"] - eps, entry))
                else:
                    parts.append(Report("pas_A1", PASS, info["max_excursion"] - eps, None, entry))
    a2 = []
    grid = [as_vector(x, sc.dim) for x in x0_grid]
    runs = _map(runner, grid)
    for x0, tr in zip(grid, runs):
        osc = tail_oscillation(tr)
        lim = tr.final
        res = equilibrium_residual(sc, sc.C.project(lim))
        dz = _distance_to(Z, lim)
        entry = {"x0": x0.tolist(), "limit": lim.tolist(), "tail_oscillation": osc,
                 "residual": res, "distance_to_Z": dz}
        a2.append(entry)
        if osc > tau_conv:
            parts.append(Report("pas_A2", INCONCLUSIVE, osc - tau_conv, None, entry))
        else:
            m = max(res - tau_eq, dz - tau_conv)
            parts.append(Report("pas_A2", PASS if m <= 0 else FAIL, m, None if m <= 0 else entry, entry))
    limits = sorted({tuple(np.round(e["limit"], 6)) for e in a2})
    details = {"A1": a1, "A2": a2, "distinct_limits": len(limits), "seed": seed}
    return _flatten(combine("pas_probe", parts), details)


def _flatten(rep: Report, details: dict) -> Report:
    # per-point tables already carry everything the sub-reports would
    return Report(rep.check, rep.verdict, rep.worst_margin, rep.witness, details)


def semistability_report(sc: Scenario, pair: LyapunovPair, x0_grid, E, runner=None, seed_points=None,
                         n_z: int = 5, eps_list=(0.5, 0.1), seed: int = 0) -> Report:
    """Checks behind semistability of the equilibrium set ``E``.

    Gate: (H2) on ``seed_points`` (defaults to ``x0_grid``). Then ``W`` must
    vanish on sampled equilibria, those equilibria are probed for PAS, and
    every run must end near ``W^{-1}(0)`` with ``W`` decaying on the tail.
    """
    seed_points = x0_grid if seed_points is None else seed_points
    gate = check_condition(sc, pair, seed_points, "H2")
    if not gate.passed:
        return Report("semistability", FAIL, gate.worst_margin, gate.witness, {"gate": gate.to_json()})
    zs = sample_set(E, n_z, seed)
    Wz = np.array([pair.W(z) for z in zs])
    e_in_zero = Report("E_in_W_zero", PASS if Wz.max() <= TAU_EQ else FAIL, float(Wz.max() - TAU_EQ),
                       None if Wz.max() <= TAU_EQ else zs[int(np.argmax(Wz))].tolist())
    runner = runner or default_runner(sc)
    pas = pas_probe(sc, E, x0_grid, eps_list, runner, z_points=zs, seed=seed)
    tails = []
    Zw = pair.W_zero_set if pair.W_zero_set is not None else E
    for x0 in x0_grid:
        tr = runner(as_vector(x0, sc.dim))
        d = _distance_to(Zw, tr.final)
        _, W = pair.values(tr.states[tr.times >= 0.9 * tr.times[-1]])
        m = max(d, float(W.max())) - TAU_CONV
        tails.append(Report("W_decay", PASS if m <= 0 else FAIL, m,
                            None if m <= 0 else {"x0": list(map(float, x0))},
                            {"distance_to_W_zero": d, "tail_max_W": float(W.max())}))
    out = combine("semistability", [gate, e_in_zero, pas] + tails)
    return _flatten(out, {"gate": gate.to_json(), "E_in_W_zero": e_in_zero.to_json(),
                          "pas": pas.to_json(), "tails": [t.to_json() for t in tails]})


# ------------------------------------------------------------ envelope


def moreau_envelope(W, n: float, x, Q=None, tol: float = 1e-8, grid: int = 21) -> float:
    """``inf_y W(y) + n |x - y|^2``.

    ``W`` is a callable or a :class:`LyapunovPair`. With ``Q`` (or a pair
    carrying ``W_quadratic``) the closed form ``n x^T Q (Q + n I)^{-1} x``
    is used; otherwise a grid on the ball that must contain the minimiser,
    refined by local descent (dimension at most 3).
    """
    if not n > 0:
        raise ValueError("n must be positive")
    if isinstance(W, LyapunovPair):
        Q = W.W_quadratic if Q is None else Q
        W = W.W
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if Q is not None:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        y = np.linalg.solve(Q + n * np.eye(x.shape[0]), x)
        return max(0.0, float(n * (x @ (Q @ y))))
    w0 = float(W(x))
    if w0 <= 0.0:
        return 0.0
    if x.shape[0] > 3:
        raise UnsupportedOperatorError("grid search for the envelope needs dimension <= 3")

    def obj(y):
        return float(W(y)) + n * float(np.sum((x - y) ** 2))

    # any minimiser satisfies n|x - y|^2 <= W(x)
    R = math.sqrt(w0 / n)
    axes = [np.linspace(-R, R, grid)] * x.shape[0]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, x.shape[0])
    pts = pts[np.sum(pts ** 2, axis=1) <= R * R + 1e-300] + x
    vals = np.array([obj(p) for p in pts])
    y0 = pts[int(np.argmin(vals))]
    res = minimize(obj, y0, method="Nelder-Mead",
                   options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": 20_000})
    return max(0.0, min(w0, float(res.fun), float(vals.min())))
