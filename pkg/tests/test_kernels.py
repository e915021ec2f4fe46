from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monotone_flow import _kernels
from monotone_flow import catalog as cat
from monotone_flow.integrate import integrate_regularized
from monotone_flow.operators import scaled_quadratic

compiled = pytest.mark.skipif(_kernels.compiled_backend is None, reason="compiled kernels not built")

WORKLOADS = [
    (lambda: cat.build_wall(T=0.5), 1e-3, 1e-3),
    (lambda: cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1), T=5.0))[0], 1.0, 1e-3),
    (lambda: cat.build_friction(cat.FrictionParams(T=5.0, k=1000))[0], 1e-3, 1e-3),
    (lambda: cat.build_friction(cat.FrictionParams(n=2, x0=(1.5, -1.0), T=3.0))[0], 1e-3, 1e-3),
]


def test_backend_selection():
    assert _kernels.BACKEND_NAME in ("compiled", "python")
    expected = _kernels.compiled_backend or _kernels.python_backend
    assert _kernels.backend is expected
    assert _kernels.integrate_affine is expected.integrate_affine


@compiled
@pytest.mark.parametrize("i", range(len(WORKLOADS)))
def test_backends_agree_bitwise(i):
    make, lam, h = WORKLOADS[i]
    sc = make()
    a = integrate_regularized(sc, lam, h, backend="compiled")
    b = integrate_regularized(sc, lam, h, backend="python")
    assert a.diagnostics["backend"] == "compiled" and b.diagnostics["backend"] == "python"
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)
    assert np.array_equal(a.penalty, b.penalty)


@compiled
@given(seed=st.integers(0, 2**16))
def test_dykstra_backends_agree(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 3))
    c = np.abs(rng.standard_normal(4))
    x = 3 * rng.standard_normal(3)
    pc, _, okc = _kernels.compiled_backend.dykstra(A, c, x, 1e-12, 10000)
    pp, _, okp = _kernels.python_backend.dykstra(A, c, x, 1e-12, 10000)
    assert okc == okp
    assert np.allclose(pc, pp, atol=1e-12, rtol=0)


def test_pure_flag_forces_fallback():
    env = dict(os.environ, MONOTONE_FLOW_PURE="1")
    code = ("from monotone_flow import _kernels as k; from monotone_flow import catalog as c;"
            "from monotone_flow.integrate import integrate_regularized as r;"
            "print(k.BACKEND_NAME, r(c.build_wall(T=0.1), 1e-2, 1e-3).diagnostics['backend'])")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["python", "python"]


def test_compiled_request_without_extension(monkeypatch):
    monkeypatch.setattr(_kernels, "compiled_backend", None)
    with pytest.raises(RuntimeError, match="not available"):
        integrate_regularized(cat.build_wall(T=0.1), 1e-2, 1e-3, backend="compiled")
