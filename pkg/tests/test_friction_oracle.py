from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from monotone_flow.errors import OracleFailureError
from monotone_flow.friction_oracle import integrate_friction_oracle, solve_friction


def test_stuck_start_is_constant():
    tr = integrate_friction_oracle(1.0, 0.1, 1.0, 0.5, 0.0, 5.0)
    assert np.all(tr.states[:, 0] == 0.5) and np.all(tr.states[:, 1] == 0.0)
    assert tr.diagnostics["events"] == 0
    assert tr.diagnostics["stick_time"] == 0.0


def test_start_at_three_sticks_in_the_band():
    sol = solve_friction(1.0, 0.1, 1.0, 3.0, 0.0, 20.0)
    x, v = sol.limit
    assert abs(x) <= 1.0 and v == 0.0
    assert 0 < sol.events < 50
    assert sol.stick_time is not None and sol.stick_time < 20.0
    np.testing.assert_allclose(sol.state(20.0), [x, 0.0])


def _slide(m, a, b, x, v, t_max):
    """Reference sliding phase by adaptive integration up to the first velocity zero."""
    s = np.sign(v) if v != 0 else np.sign(-b * x)

    def rhs(t, y):
        return [y[1], (-b * y[0] - a * y[1] - s) / m]

    def stop(t, y):
        return y[1] if t > 1e-9 else s

    stop.terminal = True
    stop.direction = -s
    return solve_ivp(rhs, (0.0, t_max), [x, v], events=stop, rtol=1e-12, atol=1e-13, dense_output=True)


@pytest.mark.parametrize("m,a,b,x0,v0", [
    (1.0, 0.1, 1.0, 3.0, 0.0),     # under-damped
    (1.0, 2.0, 1.0, 3.0, 1.0),     # critical
    (0.5, 3.0, 1.0, -4.0, -1.0),   # over-damped
    (2.0, 0.05, 3.0, 1.2, 0.0),
])
def test_first_segment_matches_adaptive_integration(m, a, b, x0, v0):
    sol = solve_friction(m, a, b, x0, v0, 30.0)
    ref = _slide(m, a, b, x0, v0, 30.0)
    seg = sol.segments[0]
    ts = np.linspace(0.0, seg.t1, 200)
    np.testing.assert_allclose(sol.state(ts), ref.sol(ts).T, atol=1e-8)
    if ref.t_events[0].size:
        assert seg.t1 == pytest.approx(ref.t_events[0][0], abs=1e-8)


def test_event_times_are_velocity_zeros():
    sol = solve_friction(1.0, 0.1, 1.0, 3.5, 0.0, 30.0)
    for prev, seg in zip(sol.segments, sol.segments[1:]):
        assert sol._eval(prev, seg.t0)[1] == pytest.approx(0.0, abs=1e-10)


@settings(max_examples=40)
@given(x0=st.floats(-4, 4), v0=st.sampled_from([-1.0, 0.0, 1.0]))
def test_energy_nonincreasing(x0, v0):
    tr = integrate_friction_oracle(1.0, 0.1, 1.0, x0, v0, 15.0, n_samples=3001)
    sol = tr.diagnostics["solution"]
    E = sol.energy(tr.states)
    assert np.all(np.diff(E) <= 1e-10)
    # with alpha > 0 every run sticks in the band
    assert abs(sol.limit[0]) <= 1.0 + 1e-12 and sol.stick_time is not None


def test_event_cap_raises():
    with pytest.raises(OracleFailureError):
        solve_friction(1.0, 0.0, 1.0, 40.0, 0.0, 200.0, event_cap=3)


def test_parameter_gates():
    with pytest.raises(ValueError):
        solve_friction(0.0, 0.1, 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        solve_friction(1.0, 0.1, 1.0, np.nan, 0.0, 1.0)


def test_trajectory_velocity_column_is_acceleration():
    sol = solve_friction(1.0, 0.1, 1.0, 3.0, 0.0, 5.0)
    t = np.linspace(0.1, 2.0, 50)
    tr = sol.trajectory(t)
    h = 1e-6
    fd = (sol.state(t + h)[:, 1] - sol.state(t - h)[:, 1]) / (2 * h)
    np.testing.assert_allclose(tr.velocities[:, 1], fd, atol=1e-6)
