from __future__ import annotations

import math

import numpy as np
import pytest

from monotone_flow import catalog as cat
from monotone_flow import geometry as geo
from monotone_flow.errors import BlowUpError, DomainError, MultiplierBoundError, ScenarioError
from monotone_flow.integrate import (
    STAB_LIMIT,
    empirical_orders,
    extract_multipliers,
    integrate_regularized,
    plan_steps,
    refine_lambda,
    sup_gap,
)
from monotone_flow.operators import NormalConeOp, SubdiffNorm, decompose
from monotone_flow.scenario import AffineField, CallableField, Scenario, constant_field


def _free(M, c, x0, T, **kw):
    dim = len(x0)
    return Scenario(AffineField(M, c), decompose(NormalConeOp(geo.WholeSpace(dim))), x0, T, **kw)


def rk4_amplification(z):
    return 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24


def test_step_clamp_is_stable_for_penalty_test_problem():
    # x' = -x/lam with h = lam/4 gives z = -1/4; all smaller steps too
    for z in np.linspace(-0.25, 0.0, 101)[:-1]:
        assert abs(rk4_amplification(z)) < 1
    # and the selection clamp sits inside the real stability interval of the scheme
    assert abs(rk4_amplification(-STAB_LIMIT)) < 1
    assert abs(rk4_amplification(-2.8)) > 1


def test_plan_respects_clamp():
    sc = cat.build_wall()
    for lam in (1e-1, 1e-2, 1e-3):
        plan = plan_steps(sc, lam, 1e-2)
        assert plan.H <= min(1e-2, lam / 4) * (1 + 1e-12)
        assert plan.n_blocks * plan.H == pytest.approx(sc.T)
    with pytest.raises(ValueError):
        plan_steps(sc, 0.0, 1e-3)
    with pytest.raises(ValueError):
        plan_steps(sc, 1e-3, -1.0)


def test_linear_decay_matches_exponential():
    sc = _free([[-1.0]], [0.0], [1.0], 5.0)
    tr = integrate_regularized(sc, 1.0, 1e-2)
    assert np.max(np.abs(tr.states[:, 0] - np.exp(-tr.times))) <= 1e-6
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(5.0)


def test_constant_trajectory_at_rest():
    S = geo.Box([-1, -1], [1, 1])
    sc = Scenario(constant_field([0.0, 0.0]), decompose(NormalConeOp(S)), [0.3, -0.2], 2.0)
    tr = integrate_regularized(sc, 1e-2, 1e-2)
    assert np.all(tr.states == np.array([0.3, -0.2]))
    assert np.all(tr.penalty == 0.0)


@pytest.mark.parametrize("lam", [1e-1, 1e-2, 1e-3])
def test_wall_steady_state_and_penalty(lam):
    sc = cat.build_wall()
    tr = integrate_regularized(sc, lam, 1e-3)
    assert tr.final[0] == pytest.approx(-lam, rel=1e-6)
    # closed form x(t) = -lam (1 - exp(-t/lam)); penalty -> beta = 1
    exact = -lam * (1 - np.exp(-tr.times / lam))
    # fourth-order local error at h = lam/4 bounds the transient
    assert np.max(np.abs(tr.states[:, 0] - exact)) <= 1e-4 * lam
    assert tr.penalty[-1] == pytest.approx(1.0, rel=1e-6)
    assert tr.diagnostics["penalty_margin"] <= 0


def test_velocity_bound_on_disk_scenario():
    spec = NormalConeOp(geo.Ball([0, 0], 1.0))
    sc = Scenario(AffineField([[0.5, -1.0], [1.0, 0.5]], [0, 0]), decompose(spec), [0.5, 0.0], 3.0)
    tr = integrate_regularized(sc, 1e-2, 1e-3)
    assert tr.diagnostics["velocity_margin"] <= 0
    assert np.all(np.linalg.norm(tr.velocities, axis=1) <= 2 * sc.beta * (1 + 1e-6))
    assert np.all(tr.dist_C <= 1e-2 * sc.beta + 1e-12)


def test_generic_path_matches_kernel_path():
    sc = cat.build_wall(T=0.5)
    a = integrate_regularized(sc, 1e-2, 1e-3)
    b = integrate_regularized(sc, 1e-2, 1e-3, backend="generic")
    assert a.diagnostics["backend"] in ("compiled", "python")
    assert b.diagnostics["backend"] == "generic"
    np.testing.assert_allclose(a.states, b.states, atol=1e-12)


def test_callable_field_takes_generic_path():
    f = CallableField(lambda x: -np.sin(x), 1, lip=1.0)
    sc = Scenario(f, decompose(NormalConeOp(geo.WholeSpace(1))), [1.0], 2.0)
    tr = integrate_regularized(sc, 1.0, 1e-2)
    # x' = -sin x has the closed form x = 2 arctan(tan(x0/2) e^{-t})
    exact = 2 * np.arctan(np.tan(0.5) * np.exp(-tr.times))
    assert np.max(np.abs(tr.states[:, 0] - exact)) <= 1e-8
    assert tr.diagnostics["backend"] == "generic"


def test_blow_up_is_reported():
    f = CallableField(lambda x: x**3, 1)
    sc = Scenario(f, decompose(NormalConeOp(geo.WholeSpace(1))), [2.0], 5.0, rho=1.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(BlowUpError):
        integrate_regularized(sc, 1.0, 1e-2)


def test_scenario_validation():
    dec = decompose(NormalConeOp(geo.Box([0], [1])))
    with pytest.raises(DomainError):
        Scenario(constant_field([1.0]), dec, [2.0], 1.0)
    with pytest.raises(ScenarioError):
        Scenario(constant_field([1.0]), dec, [0.5], -1.0)
    with pytest.raises(ScenarioError):
        Scenario(constant_field([1.0]), dec, [0.5], 1.0, M_f=0.5)


def test_refine_free_space_gaps_vanish():
    sc = _free([[0.0, 1.0], [-1.0, 0.0]], [0, 0], [1.0, 0.0], 2.0)
    ref = refine_lambda(sc, (1e-1, 1e-2, 1e-3), 1e-2)
    assert ref.gaps == [0.0, 0.0]
    assert ref.flags["lambda_independent"]


def test_refine_wall_is_first_order():
    sc = cat.build_wall()
    lams = (1e-1, 5e-2, 2.5e-2, 1.25e-2)
    ref = refine_lambda(sc, lams, 1e-3)
    for lam_a, lam_b, gap in zip(lams, lams[1:], ref.gaps):
        assert gap == pytest.approx(lam_a - lam_b, rel=1e-3)
    assert min(ref.orders) >= 0.9
    assert not ref.flags["nonmonotone_gaps"]
    with pytest.raises(ValueError):
        refine_lambda(sc, (1e-2, 1e-1), 1e-3)
    with pytest.raises(ValueError):
        refine_lambda(sc, (1e-2,), 1e-3)


def test_empirical_orders_recover_power_law():
    lams = [0.1 / 2**i for i in range(5)]
    for p in (0.5, 1.0, 2.0):
        xs = [lam**p for lam in lams]
        gaps = [abs(a - b) for a, b in zip(xs, xs[1:])]
        np.testing.assert_allclose(empirical_orders(lams, gaps), p, rtol=1e-8)
    assert math.isnan(empirical_orders([1, 0.5, 0.25], [0.0, 0.1])[0])


def test_sup_gap_uses_coarser_grid():
    sc = _free([[-1.0]], [0.0], [1.0], 1.0)
    a = integrate_regularized(sc, 1.0, 1e-2, record_dt=1e-1)
    b = integrate_regularized(sc, 1.0, 1e-3)
    assert sup_gap(a, b) <= 1e-6
    assert sup_gap(a, b) == sup_gap(b, a)


def test_multipliers_interior_are_zero():
    S = geo.Ball([0, 0], 2.0)
    sc = Scenario(AffineField([[-1.0, 0.0], [0.0, -1.0]], [0, 0]), decompose(NormalConeOp(S)), [1.0, 0.5], 1.0)
    tr = extract_multipliers(integrate_regularized(sc, 1e-2, 1e-2), sc)
    assert np.all(tr.eta == 0.0)


def test_multipliers_at_the_wall():
    sc = cat.build_wall()
    tr = extract_multipliers(integrate_regularized(sc, 1e-3, 1e-3), sc)
    assert tr.eta[-1, 0] == pytest.approx(-1.0, rel=1e-6)
    assert np.linalg.norm(tr.eta[-1]) == pytest.approx(np.linalg.norm(sc.f(tr.final) - tr.g[-1]), rel=1e-6)
    assert tr.diagnostics["multiplier_margin"] <= 0


def test_multiplier_selection_for_the_norm():
    dec = decompose(SubdiffNorm(n=2))
    sc = Scenario(AffineField([[0.0, -1.0], [1.0, 0.0]], [0, 0]), dec, [1.0, 1.0], 0.5, k=50)
    tr = extract_multipliers(integrate_regularized(sc, 1e-2, 1e-3), sc)
    for x, g in zip(tr.states, tr.g):
        np.testing.assert_allclose(g, x / np.linalg.norm(x), atol=1e-12)


def test_multiplier_bound_error_names_the_index():
    sc = cat.build_wall()
    tr = integrate_regularized(sc, 1e-3, 1e-3)
    tr.states[5] = [-1.0]  # far below lam * beta: the implied multiplier is huge
    with pytest.raises(MultiplierBoundError) as info:
        extract_multipliers(tr, sc)
    assert info.value.index == 5


def test_csv_header_and_rows():
    sc = cat.build_wall(T=0.01)
    tr = extract_multipliers(integrate_regularized(sc, 1e-2, 1e-3), sc)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,x_1,v_1,penalty,dist_C,eta_norm,g_1"
    assert len(lines) == len(tr) + 1


@pytest.mark.parametrize("h", [1e-2, 1e-4, 1e-5])
def test_split_mode_fixed_point(h):
    # explicit push by -h, then exact decay d toward the wall: x = (x - h) d
    lam = 1e-3
    sc = cat.build_wall()
    a = integrate_regularized(sc, lam, h, split=True)
    assert a.diagnostics["split"]
    d = math.exp(-h / lam)
    assert a.final[0] == pytest.approx(-h * d / (1 - d), rel=1e-9)
    if h <= lam / 100:
        assert a.final[0] == pytest.approx(-lam, rel=1e-2)
