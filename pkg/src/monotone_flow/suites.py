"""Seeded invariant suites shared by ``monotone-flow verify`` and the test-suite.

Each suite returns a :class:`~monotone_flow.report.Report` whose JSON form is
a pure function of the seed (no timings, no host data).
"""

from __future__ import annotations

import math

import numpy as np

from . import catalog as cat
from . import geometry as geo
from .friction_oracle import solve_friction
from .integrate import extract_multipliers, integrate_regularized, refine_lambda, sup_gap
from .operators import NormalConeOp, ScaledSum, SubdiffDistance, scaled_quadratic
from .report import FAIL, PASS, Report, combine
from .scenario import AffineField, Scenario
from .selection import (
    DistanceFamily,
    NormFamily,
    delta_k,
    graphical_convergence_probe,
    lipschitz_ratio_scan,
    nesting_check,
)
from .stability import (
    TAU_LYAP,
    approx_gap_check,
    lyapunov_decrease,
    moreau_envelope,
    pas_probe,
)
from .values import hausdorff_distance, unit_directions

FD_STEP = 1e-4
FD_TOL = 1e-6
FRICTION_T = 12.0
FRICTION_RECORD_DT = 2.5e-4
WALL_LAMBDAS = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3)


def _annulus(rng, n, dim, lo, hi):
    """``n`` points with log-uniform norm in ``[lo, hi]`` and uniform direction."""
    U = unit_directions(dim, n, int(rng.integers(2**31)))
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(n, 1)))
    return U * r


# ---------------------------------------------------------- selection


def lipschitz_constants(seed: int = 0, n_pairs: int = 10_000, deltas=(0.1, 0.01)) -> Report:
    """Ratio bounds of the norm-family selection on seeded pairs.

    A tenth of the pairs pin one end at the origin (the inner region),
    half are close pairs probing local slopes, the rest are spread pairs.
    """
    fam = NormFamily(n=2)
    rng = np.random.default_rng(seed)
    parts = []
    for d in deltas:
        k = int(round(1.0 / d))
        n0 = n_pairs // 10
        n1 = n_pairs // 2
        n2 = n_pairs - n0 - n1
        X0 = np.zeros((n0, 2))
        Y0 = _annulus(rng, n0, 2, d / 4, 4 * d)
        X1 = _annulus(rng, n1, 2, d / 4, 4 * d)
        Y1 = X1 + _annulus(rng, n1, 2, d * 1e-4, d * 1e-1)
        X2 = _annulus(rng, n2, 2, d / 4, 4 * d)
        Y2 = _annulus(rng, n2, 2, d / 4, 4 * d)
        pairs = zip(np.vstack([X0, X1, X2]), np.vstack([Y0, Y1, Y2]))
        rep = lipschitz_ratio_scan(fam, k, pairs).to_report()
        rep.details["delta"] = d
        parts.append(rep)
    return combine("lipschitz_constants", parts, {"seed": seed, "pairs_per_delta": n_pairs})


def _families():
    box = geo.Box([-0.5, -0.25], [0.5, 0.25])
    return [("norm", NormFamily(n=2), geo.Point([0.0, 0.0])),
            ("distance-box", DistanceFamily(box), box)]


def approximation_contract(seed: int = 0, n_points: int = 1000, k_max: int = 20,
                           directions: int = 64) -> Report:
    """Nesting of ``F_k`` for ``k = 1..k_max`` and exact agreement ``F_k = F`` once ``delta_k <= d(x; C)``."""
    rng = np.random.default_rng(seed)
    parts = []
    for name, fam, C in _families():
        X = C.project(np.zeros(2)) + _annulus(rng, n_points, 2, 1e-3, 2.0)
        worst_nest = -math.inf
        nest_fail = None
        exact_viol = 0
        exact_worst = 0.0
        exact_checked = 0
        for i, x in enumerate(X):
            rep = nesting_check(fam, x, k_max, directions, seed=seed + i)
            if rep.worst_margin > worst_nest:
                worst_nest = rep.worst_margin
            if not rep.passed and nest_fail is None:
                nest_fail = rep.witness
            r = C.distance(x)
            Fx = fam.dec.F(x)
            for k in range(1, k_max + 1):
                if delta_k(k) <= r:
                    exact_checked += 1
                    gap = hausdorff_distance(fam.eval_Fk(k, x), Fx)
                    exact_worst = max(exact_worst, gap)
                    if gap != 0.0:
                        exact_viol += 1
        ok_n = worst_nest <= 1e-9
        parts.append(Report(f"nesting[{name}]", PASS if ok_n else FAIL, worst_nest, nest_fail,
                            {"points": n_points, "k_max": k_max, "directions": directions}))
        ok_e = exact_viol == 0
        parts.append(Report(f"graphical_exact[{name}]", PASS if ok_e else FAIL, exact_worst,
                            None if ok_e else {"violations": exact_viol},
                            {"checked": exact_checked, "violations": exact_viol}))
        # first k reaching a loose tolerance at a sample of blend-heavy points
        probe = graphical_convergence_probe(fam, X[0], 1e-3, k_max=1000)
        parts.append(probe)
    return combine("approximation_contract", parts, {"seed": seed})


# -------------------------------------------------------- hamiltonian


def _catalog_scenarios():
    """Scenarios carrying every catalog family, each with a good sampling scale."""
    out = []
    for name, fam, C in _families():
        f = AffineField([[0.0, 1.0], [-1.0, -0.2]], [0.3, -0.1])
        out.append((name, Scenario(f, fam.dec, C.project(np.zeros(2)), 1.0, fam), C))
    sc, _, _ = cat.build_friction(cat.FrictionParams(k=10))
    out.append(("friction", sc, geo.WholeSpace(2)))
    sc, _, _ = cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1)))
    out.append(("din", sc, geo.WholeSpace(2)))
    return out


def hamiltonian_gap(seed: int = 0, n: int = 1000) -> Report:
    """``h <= h_k + eps(x)|zeta| + 1e-8`` on seeded ``(x, zeta, k)`` per catalog family."""
    rng = np.random.default_rng(seed)
    parts = []
    for name, sc, C in _catalog_scenarios():
        worst, witness, viol = -math.inf, None, 0
        for i in range(n):
            k = int(rng.integers(1, 21))
            d = delta_k(k)
            x = C.project(np.zeros(sc.dim)) + _annulus(rng, 1, sc.dim, d / 20, 20 * d)[0]
            if name == "friction":
                x = np.array([rng.uniform(-3, 3), x[1]])
            x = sc.C.project(x)
            zeta = rng.standard_normal(sc.dim)
            rep = approx_gap_check(sc, k, x, zeta, seed=seed + i)
            if rep.worst_margin > worst:
                worst = rep.worst_margin
            if not rep.passed:
                viol += 1
                witness = witness or rep.witness
        ok = viol == 0
        parts.append(Report(f"approx_gap[{name}]", PASS if ok else FAIL, worst, witness,
                            {"samples": n, "violations": viol}))
    return combine("hamiltonian_gap", parts, {"seed": seed})


# ------------------------------------------------------------- runs


def _run_bounds(name, traj, sc) -> Report:
    tr = extract_multipliers(traj, sc, check=False)
    d = tr.diagnostics
    m = max(d["velocity_margin"], d["penalty_margin"], d["multiplier_margin"])
    ok = m <= 0
    return Report(f"bounds[{name}]", PASS if ok else FAIL, m,
                  None if ok else {"run": name, "lambda": d["lambda"]},
                  {"velocity_margin": d["velocity_margin"], "penalty_margin": d["penalty_margin"],
                   "multiplier_margin": d["multiplier_margin"], "samples": len(tr),
                   "inconsistent_regime_points": d["inconsistent_regime_points"]})


def wall_consistency(seed: int = 0, lambdas=WALL_LAMBDAS, h_max: float = 1e-3) -> tuple[Report, list]:
    """Steady state ``-lam`` and first-order gaps for the constant push against a wall.

    Returns the report and the runs (reused by the bound checks).
    """
    sc = cat.build_wall()
    ref = refine_lambda(sc, lambdas, h_max)
    parts = []
    worst = -math.inf
    for lam, tr in zip(lambdas, ref.runs):
        rel = abs(tr.final[0] + lam) / lam
        worst = max(worst, rel - 1e-6)
    parts.append(Report("steady_state", PASS if worst <= 0 else FAIL, worst,
                        None if worst <= 0 else {"lambdas": list(lambdas)},
                        {"finals": [float(r.final[0]) for r in ref.runs]}))
    om = min(ref.orders)
    parts.append(Report("refinement_order", PASS if om >= 0.9 else FAIL, 0.9 - om,
                        None if om >= 0.9 else {"orders": ref.orders},
                        {"gaps": ref.gaps, "orders": ref.orders}))
    return combine("wall_consistency", parts, {"lambdas": list(lambdas), "seed": seed}), ref.runs


def din_example(seed: int = 0, h_max: float = 1e-3) -> Report:
    """Inertial system with ``Phi = x^2/2``, ``alpha = beta = 1`` from ``(1, 0)``."""
    sc, pair, E = cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1), 1.0, 1.0, (1.0,), (0.0,), 40.0))
    tr = integrate_regularized(sc, 1.0, h_max, record_dt=1e-2)
    m = tr.times <= 20.0 + 1e-12
    exact = (1.0 + tr.times[m]) * np.exp(-tr.times[m])
    err = float(np.max(np.abs(tr.states[m, 0] - exact)))
    lyap, _ = lyapunov_decrease(tr, pair)
    w_end = pair.W(tr.final)
    dist = abs(float(tr.final[0]))
    parts = [
        Report("closed_form", PASS if err <= 1e-6 else FAIL, err - 1e-6, None if err <= 1e-6 else {"sup": err}),
        lyap,
        Report("W_at_T", PASS if w_end <= 1e-4 else FAIL, w_end - 1e-4, None if w_end <= 1e-4 else tr.final.tolist()),
        Report("argmin_distance", PASS if dist <= 1e-4 else FAIL, dist - 1e-4,
               None if dist <= 1e-4 else tr.final.tolist()),
        _run_bounds("din", tr, sc),
    ]
    return combine("din_example", parts, {"sup_error": err, "final": tr.final.tolist(), "seed": seed})


def friction_grid(seed: int = 0, n: int = 20):
    """Seeded initial conditions ``x0 in [-4, 4]``, ``v0 in {-1, 0, 1}``."""
    rng = np.random.default_rng(seed)
    return [(float(rng.uniform(-4.0, 4.0)), float(rng.choice([-1.0, 0.0, 1.0]))) for _ in range(n)]


def oracle_runner(m, alpha, beta, T, n_samples=1201):
    def run(y0):
        sol = solve_friction(m, alpha, beta, float(y0[0]), float(y0[1]), T)
        return sol.trajectory(np.linspace(0.0, T, n_samples))
    return run


def friction_example(seed: int = 0, n: int = 20, T: float = FRICTION_T, h_max: float = 1e-3,
                     bound_runs: int = 2) -> Report:
    """Refined runs of the dry-friction oscillator against the exact oracle.

    ``bound_runs`` of the runs also go through the velocity, penalty and
    multiplier bound checks.
    """
    p = cat.FrictionParams(m=1.0, alpha=0.1, beta=1.0, T=T)
    sc, pair, E = cat.build_friction(p)
    grid = friction_grid(seed, n)
    rows, parts = [], []
    for j, (x0, v0) in enumerate(grid):
        s = sc.with_(x0=[x0, v0])
        ref = refine_lambda(s, (1e-2, 1e-3), h_max, record_dt=FRICTION_RECORD_DT)
        tr = ref.trajectory
        sol = solve_friction(p.m, p.alpha, p.beta, x0, v0, T)
        gap = float(np.max(np.linalg.norm(tr.states - sol.state(tr.times), axis=1)))
        lyap, _ = lyapunov_decrease(tr, pair)
        xf, vf = (float(v) for v in tr.final)
        row = {"x0": x0, "v0": v0, "final": [xf, vf], "oracle_limit": sol.limit.tolist(),
               "oracle_gap": gap, "lyapunov_violation": lyap.worst_margin, "events": sol.events}
        rows.append(row)
        margin = max(abs(vf) - 1e-6, abs(p.beta * xf) - (1 + 1e-6), gap - 1e-4, lyap.worst_margin - TAU_LYAP)
        parts.append(Report(f"run[{j}]", PASS if margin <= 0 else FAIL, margin,
                            None if margin <= 0 else row, row))
        if j < bound_runs:
            parts.append(_run_bounds(f"friction[{j}]", tr, s))
    limits = sorted({round(r["final"][0], 3) for r in rows})
    distinct = len(limits)
    parts.append(Report("distinct_limits", PASS if distinct >= 2 else FAIL, 2 - distinct,
                        None if distinct >= 2 else limits, {"count": distinct}))
    zs = [[-1.0, 0.0], [1.0, 0.0], [0.0, 0.0]] + [[r["oracle_limit"][0], 0.0] for r in rows[:2]]
    run = oracle_runner(p.m, p.alpha, p.beta, T)
    pas = pas_probe(sc, E, [[x, v] for x, v in grid], (0.5, 0.1), runner=run, z_points=zs, seed=seed)
    a1_ok = all(e["delta"] is not None and e["delta"] > 0 for e in pas.details["A1"])
    parts.append(Report("pas_A1", PASS if a1_ok else FAIL, 0.0 if a1_ok else 1.0,
                        None if a1_ok else pas.details["A1"], {"A1": pas.details["A1"]}))
    parts.append(Report("pas_A2", pas.verdict, pas.worst_margin, pas.witness,
                        {"A2": pas.details["A2"], "distinct_limits": pas.details["distinct_limits"]}))
    return combine("friction_example", parts, {"seed": seed, "T": T, "grid": grid})


def trajectory_bounds(seed: int = 0, wall_runs=None) -> Report:
    """Velocity, penalty and multiplier bounds on wall, ball-constrained and inertial runs."""
    parts = []
    if wall_runs is None:
        _, wall_runs = wall_consistency(seed)
    sc_w = cat.build_wall()
    for tr in wall_runs:
        parts.append(_run_bounds(f"wall[{tr.lam:g}]", tr, sc_w))
    # rotation pushed out of a disk, with the distance selection toward a box
    box = geo.Box([-0.2, -0.2], [0.2, 0.2])
    spec = ScaledSum(((1.0, SubdiffDistance(box)), (1.0, NormalConeOp(geo.Ball([0.0, 0.0], 1.0)))))
    dec = spec.decompose()
    f = AffineField([[0.5, -1.0], [1.0, 0.5]], [0.0, 0.0])
    fam = DistanceFamily(box)
    sc = Scenario(f, dec, [0.5, 0.0], 4.0, fam, k=20)
    for lam in (1e-1, 1e-2):
        parts.append(_run_bounds(f"disk[{lam:g}]", integrate_regularized(sc, lam, 1e-3), sc))
    sc_d, _, _ = cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1)))
    parts.append(_run_bounds("din", integrate_regularized(sc_d, 1.0, 1e-2), sc_d))
    return combine("trajectory_bounds", parts, {"seed": seed})


# ------------------------------------------------------------ geometry


def _random_set(rng, kind):
    dim = int(rng.integers(1, 4))
    if kind == "WholeSpace":
        return geo.WholeSpace(dim)
    if kind == "Point":
        return geo.Point(rng.normal(size=dim))
    if kind == "Ball":
        return geo.Ball(rng.normal(size=dim), rng.uniform(0.2, 1.5))
    if kind == "Box":
        lo = rng.normal(size=dim)
        return geo.Box(lo, lo + rng.uniform(0.1, 2.0, size=dim))
    if kind == "Halfspace":
        return geo.Halfspace(rng.normal(size=dim), float(rng.normal()))
    if kind == "NonnegativeOrthant":
        return geo.NonnegativeOrthant(dim)
    if kind == "Polyhedron":
        dim = max(dim, 2)
        A = rng.normal(size=(dim + 2, dim))
        return geo.Polyhedron(A, np.abs(rng.normal(size=dim + 2)) + 0.2)
    if kind == "Product":
        return geo.Product((geo.Ball(rng.normal(size=1), 0.5), geo.Halfspace([1.0, -1.0], 0.3)))
    raise ValueError(kind)


SET_KINDS = ("WholeSpace", "Point", "Ball", "Box", "Halfspace", "NonnegativeOrthant", "Polyhedron", "Product")


def prox_distance(seed: int = 0, n: int = 100) -> Report:
    """Distance subgradient against central differences along seeded directions."""
    rng = np.random.default_rng(seed)
    worst, witness = -math.inf, None
    per_kind = {}
    for i in range(n):
        kind = SET_KINDS[i % len(SET_KINDS)]
        S = _random_set(rng, kind)
        for _ in range(100):
            x = rng.normal(scale=2.0, size=S.dim)
            if S.is_whole_space() or S.distance(x) > 0.1:
                break
        s = rng.normal(size=S.dim)
        s /= np.linalg.norm(s)
        fd = (S.distance(x + FD_STEP * s) - S.distance(x - FD_STEP * s)) / (2 * FD_STEP)
        an = float(geo.dist_subgradient(S, x) @ s)
        err = abs(fd - an)
        per_kind[kind] = max(per_kind.get(kind, 0.0), err)
        if err - FD_TOL > worst:
            worst = err - FD_TOL
            witness = {"set": S.to_json(), "x": x.tolist(), "s": s.tolist(), "fd": fd, "formula": an}
    ok = worst <= 0
    return Report("prox_distance", PASS if ok else FAIL, worst, None if ok else witness,
                  {"samples": n, "max_error_by_set": per_kind, "seed": seed})


def geometry_invariants(seed: int = 0, n: int = 200) -> Report:
    """Projection idempotence, nonexpansiveness and the Moreau split on every set variant."""
    rng = np.random.default_rng(seed)
    worst, witness = -math.inf, None
    for i in range(n):
        S = _random_set(rng, SET_KINDS[i % len(SET_KINDS)])
        x, y = rng.normal(scale=2.0, size=(2, S.dim))
        px, py = S.project(x), S.project(y)
        m1 = float(np.linalg.norm(S.project(px) - px)) - 1e-9
        m2 = float(np.linalg.norm(px - py) - np.linalg.norm(x - y)) - 1e-9
        z = rng.normal(size=S.dim)
        t = geo.tangent_cone_project(S, px, z)
        nz = geo.normal_cone_project(S, px, z)
        m3 = abs(float(t @ nz)) - 1e-7
        m = max(m1, m2, m3)
        if m > worst:
            worst = m
            witness = {"set": S.to_json(), "x": x.tolist(), "y": y.tolist()}
    ok = worst <= 0
    return Report("geometry_invariants", PASS if ok else FAIL, worst, None if ok else witness,
                  {"samples": n, "seed": seed})


# ------------------------------------------------------------ envelope


def envelope(seed: int = 0, n: int = 200) -> Report:
    """Closed-form envelope of ``c x^2``, monotonicity in ``n`` and the zero set."""
    rng = np.random.default_rng(seed)
    ns = np.array([0.1, 0.5, 1.0, 2.0, 10.0, 100.0])
    err_worst, mono_worst, zero_worst = 0.0, -math.inf, 0.0
    pos_fail = 0
    for _ in range(n):
        c = float(rng.uniform(0.1, 5.0))
        x = float(rng.normal(scale=2.0))
        vals = np.array([moreau_envelope(lambda y: c * float(y @ y), nn, [x], Q=[[c]]) for nn in ns])
        exact = c * ns / (c + ns) * x * x
        err_worst = max(err_worst, float(np.max(np.abs(vals - exact))))
        mono_worst = max(mono_worst, float(np.max(vals[:-1] - vals[1:])))
        zero_worst = max(zero_worst, moreau_envelope(lambda y: c * float(y @ y), float(ns[0]), [0.0], Q=[[c]]))
        if x != 0.0 and np.any(vals <= 0.0):
            pos_fail += 1
    # grid + descent path on the friction dissipation
    _, pair, _ = cat.build_friction(cat.FrictionParams())
    W = pair.W
    num_err, num_zero = 0.0, 0.0
    for _ in range(20):
        y = rng.normal(size=2)
        # the pair carries Q (closed form); the bare callable takes the grid path
        a = moreau_envelope(pair, 2.0, y)
        b = moreau_envelope(W, 2.0, y)
        num_err = max(num_err, abs(a - b))
        num_zero = max(num_zero, moreau_envelope(pair, 2.0, [y[0], 0.0]), moreau_envelope(W, 2.0, [y[0], 0.0]))
    parts = [
        Report("closed_form", PASS if err_worst <= 1e-10 else FAIL, err_worst - 1e-10,
               None if err_worst <= 1e-10 else {"error": err_worst}),
        Report("monotone_in_n", PASS if mono_worst <= 0 else FAIL, mono_worst,
               None if mono_worst <= 0 else {"drop": mono_worst}),
        Report("zero_set", PASS if zero_worst == 0.0 and num_zero == 0.0 else FAIL, max(zero_worst, num_zero),
               None if zero_worst == 0.0 and num_zero == 0.0 else {"value": max(zero_worst, num_zero)}),
        Report("sign_preserved", PASS if pos_fail == 0 else FAIL, float(pos_fail),
               None if pos_fail == 0 else {"count": pos_fail}),
        Report("grid_descent", PASS if num_err <= 1e-8 else FAIL, num_err - 1e-8,
               None if num_err <= 1e-8 else {"error": num_err}),
    ]
    return combine("envelope", parts, {"samples": n, "seed": seed})


SUITES = {
    "geometry": lambda seed: combine("geometry", [prox_distance(seed), geometry_invariants(seed)]),
    "selection": lambda seed: combine("selection", [lipschitz_constants(seed), approximation_contract(seed)]),
    "hamiltonian": lambda seed: hamiltonian_gap(seed),
    "multipliers": lambda seed: trajectory_bounds(seed),
}
