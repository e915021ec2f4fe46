"""Command-line entry point: ``monotone-flow {run, verify, sweep}``.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad configuration or
arguments, 3 integration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, resolve_scenario
from .errors import ConfigError, DomainError, IntegratorDiagnosticError, MonotoneFlowError, ScenarioError
from .friction_oracle import solve_friction
from .integrate import extract_multipliers, integrate_regularized, refine_lambda, sup_gap
from .plots import line_plot
from .report import FAIL, PASS, combine, dumps
from .stability import lyapunov_decrease
from .values import support_many, unit_directions

log = logging.getLogger("monotone_flow")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTEGRATION = 0, 1, 2, 3
SUITE_NAMES = ("geometry", "selection", "hamiltonian", "multipliers", "all")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("MONOTONE_FLOW_THREADS", "1")))
    except ValueError:
        return 1


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _check(enabled, margin):
    return {"enabled": bool(enabled), "margin": margin, "pass": (not enabled) or margin <= 0}


def _distance(E, x):
    if E is None:
        return math.nan
    if hasattr(E, "distance"):
        return E.distance(x)
    E = np.atleast_2d(E)
    return float(np.min(np.linalg.norm(E - x, axis=1))) if E.size else math.inf


def _integrate(sc, cfg: RunConfig, lam_list=None):
    lams = cfg.lambdas if lam_list is None else lam_list
    kw = dict(record_dt=cfg.record_dt, max_records=cfg.max_records, check_penalty=False)
    if len(lams) >= 2:
        ref = refine_lambda(sc, lams, cfg.h_max, **kw)
        return ref.trajectory, ref
    return integrate_regularized(sc, lams[0], cfg.h_max, **kw), None


def execute_run(cfg: RunConfig, out: Path) -> int:
    sc, pair, E, name = resolve_scenario(cfg)
    tol = cfg.tolerances
    tr, ref = _integrate(sc, cfg)
    tr = extract_multipliers(tr, sc, tol=tol["multiplier"], check=False)
    d = tr.diagnostics
    pen_excess = d["penalty_margin"] + 1e-6
    checks = {
        "velocity": _check(cfg.checks["velocity"],
                           d["max_velocity"] - d["velocity_bound"] * (1 + tol["velocity"])),
        "penalty": _check(cfg.checks["penalty"], pen_excess - tol["penalty"]),
        "multiplier": _check(cfg.checks["multiplier"], d["multiplier_margin"]),
    }
    report = {"scenario": name or "inline", "seed": cfg.seed, "config": cfg.to_json(), "diagnostics": d,
              "final_state": tr.final.tolist()}
    if ref is not None:
        report["refinement"] = {"lambdas": ref.lambdas, "gaps": ref.gaps, "orders": ref.orders, "flags": ref.flags}
    if E is not None:
        dist = _distance(E, tr.final)
        report["final_distance_to_E"] = dist
        report["final_in_E"] = bool(dist <= tol["convergence"])
    if pair is not None:
        lyap, series = lyapunov_decrease(tr, pair, tol["lyapunov"])
        checks["lyapunov"] = _check(cfg.checks["lyapunov"], lyap.worst_margin - tol["lyapunov"])
        report["decrease_pass"] = lyap.passed
        report["lyapunov_violation"] = lyap.worst_margin
    if name == "friction-1d" and cfg.checks["oracle"]:
        m, a, b = (sc.meta[key] for key in ("m", "alpha", "beta"))
        sol = solve_friction(m, a, b, float(sc.x0[0]), float(sc.x0[1]), sc.T)
        gap = float(np.max(np.linalg.norm(tr.states - sol.state(tr.times), axis=1)))
        checks["oracle"] = _check(True, gap - 1e-4)
        report["oracle"] = {"gap": gap, "limit": sol.limit.tolist(), "events": sol.events,
                            "stick_time": sol.stick_time}
    report["checks"] = checks
    ok = all(c["pass"] for c in checks.values())
    report["verdict"] = PASS if ok else FAIL

    _write(out / "trajectory.csv", tr.to_csv())
    _write(out / "report.json", dumps(report))
    labels = {f"x_{i + 1}": tr.states[:, i] for i in range(sc.dim)}
    _write(out / "state.svg", line_plot(tr.times, labels, "state"))
    if pair is not None:
        V, W = pair.values(tr.states)
        _write(out / "V.svg", line_plot(tr.times, {"V": V}, "V along the run"))
        _write(out / "W.svg", line_plot(tr.times, {"W": W}, "W along the run"))
    if E is not None:
        dE = np.array([_distance(E, x) for x in tr.states])
        _write(out / "dist_E.svg", line_plot(tr.times, {"d(x;E)": dE}, "distance to equilibria"))
    log.info("run %s: %s", name or "inline", report["verdict"])
    return EXIT_OK if ok else EXIT_FAIL


def _flatten_parts(rep: dict, prefix="") -> list:
    parts = rep.get("details", {}).get("parts")
    if not parts:
        d = rep.get("details", {})
        samples = d.get("samples", d.get("pairs", d.get("checked", d.get("points"))))
        return [{"invariant": prefix + rep["check"], "verdict": rep["verdict"],
                 "worst_margin": rep["worst_margin"], "samples": samples, "witness": rep["witness"]}]
    out = []
    for p in parts:
        out += _flatten_parts(p, prefix + rep["check"] + "/")
    return out


def execute_verify(suite: str, seed: int, out: Path | None) -> int:
    from . import suites

    names = ["geometry", "selection", "hamiltonian", "multipliers"] if suite == "all" else [suite]
    reports = [suites.SUITES[n](seed) for n in names]
    rep = combine(suite, reports).to_json()
    summary = {"suite": suite, "seed": seed, "verdict": rep["verdict"], "invariants": _flatten_parts(rep)}
    text = dumps(summary)
    sys.stdout.write(text)
    if out is not None:
        _write(out / f"verify_{suite}.json", text)
    return EXIT_OK if rep["verdict"] != FAIL else EXIT_FAIL


def _nesting_gap(sc, k_a, k_b, points, seed):
    Z = unit_directions(sc.dim, 64, seed)
    worst = math.inf
    for x in points:
        ga = support_many(sc.family.eval_Fk(k_a, x), Z)
        gb = support_many(sc.family.eval_Fk(k_b, x), Z)
        worst = min(worst, float(np.min(ga - gb)))
    return worst


def execute_sweep(cfg: RunConfig, out: Path) -> int:
    sw = cfg.sweep or {}
    lams, ks = sw.get("lambdas"), sw.get("ks")
    if bool(lams) == bool(ks):
        raise ConfigError("sweep needs exactly one non-empty grid: lambdas or ks", path="/sweep")
    sc, pair, E, name = resolve_scenario(cfg)
    axis = "lambda" if lams else "k"
    grid = [float(v) for v in lams] if lams else [int(v) for v in ks]

    def cell(i):
        val = grid[i]
        try:
            s = sc if axis == "lambda" else sc.with_(k=val)
            lam = val if axis == "lambda" else cfg.lambdas[-1]
            tr = integrate_regularized(s, lam, cfg.h_max, record_dt=cfg.record_dt,
                                       max_records=cfg.max_records, check_penalty=False)
            tr = extract_multipliers(tr, s, tol=cfg.tolerances["multiplier"], check=False)
            d = tr.diagnostics
            ok = (d["velocity_margin"] <= 0 and d["penalty_margin"] <= 0 and d["multiplier_margin"] <= 0)
            body = {"index": i, axis: val, "ok": ok, "diagnostics": d, "final_state": tr.final.tolist()}
            _write(out / f"cell_{i:03d}.csv", tr.to_csv())
            _write(out / f"cell_{i:03d}.json", dumps(body))
            return body, tr
        except MonotoneFlowError as exc:
            body = {"index": i, axis: val, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
            _write(out / f"cell_{i:03d}.json", dumps(body))
            return body, None

    n = threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(cell, range(len(grid))))
    else:
        results = [cell(i) for i in range(len(grid))]
    rows = []
    header = [axis, "sup_gap_to_previous"] + (["min_nesting_gap"] if axis == "k" else [])
    for i, (body, tr) in enumerate(results):
        row = {axis: grid[i], "sup_gap_to_previous": math.nan}
        prev = results[i - 1][1] if i else None
        if tr is not None and prev is not None:
            row["sup_gap_to_previous"] = sup_gap(prev, tr)
        if axis == "k":
            row["min_nesting_gap"] = math.nan
            if i and tr is not None:
                stride = max(1, len(tr) // 50)
                row["min_nesting_gap"] = _nesting_gap(sc, grid[i - 1], grid[i], tr.states[::stride], cfg.seed)
                if row["min_nesting_gap"] < -1e-9 and grid[i] > grid[i - 1]:
                    body["ok"] = False
        rows.append(row)
    def cell_text(v):
        return str(v) if isinstance(v, int) else repr(float(v))

    lines = [",".join(header)] + [",".join(cell_text(r[h]) for h in header) for r in rows]
    _write(out / "gaps.csv", "\n".join(lines) + "\n")
    ok = all(b["ok"] for b, _ in results)
    combined = {"scenario": name or "inline", "seed": cfg.seed, "axis": axis, "grid": grid,
                "cells": [b for b, _ in results], "gaps": rows, "verdict": PASS if ok else FAIL}
    _write(out / "sweep.json", dumps(combined))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monotone-flow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for cmd in ("run", "sweep"):
        s = sub.add_parser(cmd)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--out", metavar="DIR")
        s.add_argument("--seed", type=int)
    v = sub.add_parser("verify")
    v.add_argument("--suite", required=True, metavar="NAME")
    v.add_argument("--out", metavar="DIR")
    v.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            if args.suite not in SUITE_NAMES:
                print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}",
                      file=sys.stderr)
                return EXIT_CONFIG
            return execute_verify(args.suite, args.seed, Path(args.out) if args.out else None)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.output_dir)
        if args.command == "run":
            return execute_run(cfg, out)
        return execute_sweep(cfg, out)
    except ConfigError as exc:
        print(f"config error at {exc.path or '/'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegratorDiagnosticError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
