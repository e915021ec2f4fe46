"""Compiled vs pure-Python integration kernels on catalog workloads.

Usage: ``python benchmarks/bench_kernels.py [--repeat N] [--json]``.
Both backends run the same step sequence; the script also reports the
largest state difference between them (expected: exactly zero).
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from monotone_flow import _kernels
from monotone_flow import catalog as cat
from monotone_flow.integrate import integrate_regularized
from monotone_flow.operators import scaled_quadratic

WORKLOADS = {
    # name: (scenario factory, lam, h_max)
    "wall lam=1e-3": (lambda: cat.build_wall(), 1e-3, 1e-3),
    "din T=20": (lambda: cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1), T=20.0))[0], 1.0, 1e-3),
    "friction k=1e3 T=10": (lambda: cat.build_friction(cat.FrictionParams(x0=(3.0,), T=10.0, k=1000))[0],
                            1e-3, 1e-3),
    "friction k=1e4 T=2 stuck": (lambda: cat.build_friction(cat.FrictionParams(x0=(0.5,), T=2.0, k=10_000))[0],
                                 1e-3, 1e-3),
}


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print machine-readable results")
    args = ap.parse_args(argv)
    if _kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    rows = []
    for name, (make, lam, h) in WORKLOADS.items():
        sc = make()
        tc, a = _time(lambda: integrate_regularized(sc, lam, h, backend="compiled"), args.repeat)
        tp, b = _time(lambda: integrate_regularized(sc, lam, h, backend="python"), max(1, args.repeat // 3))
        diff = float(np.max(np.abs(a.states - b.states)))
        rows.append({"workload": name, "steps": a.diagnostics["coarse_steps"] + a.diagnostics["fine_steps"],
                     "compiled_s": tc, "python_s": tp, "speedup": tp / tc, "max_state_diff": diff})
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'workload':28s} {'steps':>10s} {'compiled':>10s} {'python':>10s} {'speedup':>8s} {'diff':>8s}")
    for r in rows:
        print(f"{r['workload']:28s} {r['steps']:10d} {r['compiled_s']:9.4f}s {r['python_s']:9.3f}s "
              f"{r['speedup']:7.1f}x {r['max_state_diff']:8.1e}")


if __name__ == "__main__":
    main()
