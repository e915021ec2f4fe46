from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from monotone_flow import catalog as cat
from monotone_flow import geometry as geo
from monotone_flow.errors import DomainError, StartOutsideError, UnsupportedOperatorError
from monotone_flow.integrate import integrate_regularized
from monotone_flow.operators import GradientOfSmooth, NormalConeOp, SubdiffNorm, decompose, scaled_quadratic
from monotone_flow.report import INCONCLUSIVE, PASS
from monotone_flow.scenario import AffineField, Scenario, constant_field
from monotone_flow.selection import NormFamily
from monotone_flow.stability import (
    LyapunovPair,
    approx_gap_check,
    check_condition,
    equilibrium_residual,
    find_delta,
    hamiltonian,
    lyapunov_decrease,
    moreau_envelope,
    pas_probe,
    semistability_report,
    sublevel_invariance,
    tail_oscillation,
)
from monotone_flow.suites import oracle_runner

NEG_INF = -math.inf


@pytest.fixture(scope="module")
def friction():
    return cat.build_friction(cat.FrictionParams(T=12.0))


@pytest.fixture(scope="module")
def din():
    return cat.build_din(cat.DinParams(scaled_quadratic(1.0, 1)))


def _norm_scenario(k=10):
    dec = decompose(SubdiffNorm(n=2))
    return Scenario(AffineField([[0.0, 1.0], [-1.0, 0.0]], [0.2, 0.0]), dec, [0.0, 0.0], 1.0, NormFamily(n=2), k=k)


def test_hamiltonian_of_zero_direction_vanishes(friction):
    sc = _norm_scenario()
    for x in ([0, 0], [0.05, 0], [2.0, -1.0]):
        assert hamiltonian(sc, x, [0, 0]) == 0.0
        assert hamiltonian(sc, x, [0, 0], ("approx", 5)) == 0.0


def test_hamiltonian_interior_singleton():
    g = np.array([0.3, -0.1])
    dec = decompose(GradientOfSmooth(scaled_quadratic(0.0, 2).__class__(np.zeros((2, 2)), g)))
    sc = Scenario(constant_field([1.0, 2.0]), dec, [0, 0], 1.0)
    zeta = np.array([0.5, -2.0])
    assert hamiltonian(sc, [0.4, 0.4], zeta) == pytest.approx(zeta @ (np.array([1.0, 2.0]) - g))


def test_hamiltonian_on_halfspace_boundary():
    dec = decompose(NormalConeOp(geo.Halfspace([1, 0], 0.0)))
    sc = Scenario(constant_field([0.0, 0.0]), dec, [0, 0], 1.0)
    assert hamiltonian(sc, [0, 1.0], [1, 0]) == NEG_INF
    assert hamiltonian(sc, [0, 1.0], [-1, 0]) == 0.0
    with pytest.raises(DomainError):
        hamiltonian(sc, [1.0, 0.0], [1, 0])
    with pytest.raises(ValueError):
        hamiltonian(sc, [-1.0, 0], [1, 0], "approximately")


def test_approx_gap_examples():
    sc = _norm_scenario(k=10)
    rep = approx_gap_check(sc, 10, [2.0, 0.0], [1.0, 1.0])
    assert rep.passed and rep.details["eps"] == 0.0 and rep.details["h"] == rep.details["h_k"]
    rep = approx_gap_check(sc, 10, [0.0, 0.0], [0.3, -1.0])
    assert rep.details["eps"] == pytest.approx(0.0, abs=1e-12)
    # blend point: F_k = Ball((0.5, 0), 0.5) vs F = {(1, 0)}
    rep = approx_gap_check(sc, 10, [0.05, 0.0], [1.0, 0.0])
    assert rep.passed
    assert rep.details["h"] - rep.details["h_k"] == pytest.approx(0.0, abs=1e-12)
    # Hausdorff distance from the ball to (1, 0) is attained at the origin
    assert rep.details["eps"] == pytest.approx(1.0, abs=1e-12)


@given(x=st.lists(st.floats(-1, 1), min_size=2, max_size=2), z=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       k=st.integers(1, 40))
def test_approx_gap_holds_on_random_pairs(x, z, k):
    sc = _norm_scenario()
    assert approx_gap_check(sc, k, x, z).passed


def test_H2_equals_H1_when_W_vanishes(friction):
    sc, pair, _ = friction
    zero_W = LyapunovPair(pair.V, lambda y: 0.0, pair.subgrad)
    pts = [[x, v] for x in np.linspace(-3, 3, 7) for v in np.linspace(-2, 2, 5)]
    h1 = check_condition(sc, zero_W, pts, "H1")
    h2 = check_condition(sc, zero_W, pts, "H2")
    assert h1.verdict == h2.verdict and h1.worst_margin == h2.worst_margin
    with pytest.raises(ValueError):
        check_condition(sc, pair, pts, "H3")


def test_din_strict_decrease_on_sampled_states(din):
    sc, pair, _ = din
    pts = np.random.default_rng(0).uniform(-3, 3, size=(1000, 2))
    rep = check_condition(sc, pair, pts, "H2")
    assert rep.passed and rep.details["checked"] == 1000


def test_friction_H2_on_state_grid(friction):
    sc, pair, _ = friction
    g = np.linspace(-3, 3, 21)
    rep = check_condition(sc, pair, [[x, v] for x in g for v in g], "H2")
    assert rep.passed and rep.worst_margin <= 0


def test_empty_subgradient_is_skipped_with_warning(friction):
    sc, pair, _ = friction
    kinked = LyapunovPair(pair.V, pair.W, lambda y: [] if y[0] == 0 else pair.subgrad(y))
    with pytest.warns(RuntimeWarning):
        rep = check_condition(sc, kinked, [[0.0, 1.0], [1.0, 1.0]])
    assert rep.details["skipped"] == 1


def test_lyapunov_decrease_on_constant_equilibrium(friction):
    sc, pair, _ = friction
    tr = oracle_runner(1.0, 0.1, 1.0, 5.0)([0.5, 0.0])
    rep, series = lyapunov_decrease(tr, pair)
    assert rep.worst_margin == 0.0 and np.all(series == 0.0)


def test_lyapunov_decrease_on_din_run(din):
    sc, pair, _ = din
    tr = integrate_regularized(sc.with_(T=20.0), 1.0, 1e-3, record_dt=1e-2)
    rep, _ = lyapunov_decrease(tr, pair)
    assert rep.passed and rep.worst_margin <= 1e-6


def test_lyapunov_decrease_on_oracle_runs(friction):
    _, pair, _ = friction
    run = oracle_runner(1.0, 0.1, 1.0, 12.0, n_samples=20001)
    for y0 in ([3.0, 0.0], [-2.5, 1.0], [0.2, -1.0]):
        rep, _ = lyapunov_decrease(run(y0), pair)
        assert rep.worst_margin <= 1e-6


def test_sublevel_invariance_gates(friction):
    _, pair, _ = friction
    tr = oracle_runner(1.0, 0.1, 1.0, 12.0)([3.0, 0.0])
    v0 = pair.V(tr.states[0])
    assert sublevel_invariance(tr, pair, v0).passed
    with pytest.raises(StartOutsideError):
        sublevel_invariance(tr, pair, v0 - 1e-3)
    still = oracle_runner(1.0, 0.1, 1.0, 3.0)([0.5, 0.0])
    assert sublevel_invariance(still, pair, pair.V(np.array([0.5, 0.0])) + 1.0).passed


def test_equilibrium_residual_examples(friction, din):
    sc, _, _ = friction
    assert equilibrium_residual(sc, [0.5, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert equilibrium_residual(sc, [2.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    sd, _, _ = din
    assert equilibrium_residual(sd, [0.0, 0.0]) == 0.0
    wall = cat.build_wall()
    assert equilibrium_residual(wall, [0.0]) == pytest.approx(0.0, abs=1e-15)
    assert equilibrium_residual(wall, [1.0]) == pytest.approx(1.0)


def test_tail_oscillation():
    tr = integrate_regularized(cat.build_wall(T=1.0), 1e-2, 1e-3)
    assert tail_oscillation(tr) <= 1e-12


def test_find_delta_for_normal_contraction():
    M = -np.eye(2)
    sc = Scenario(AffineField(M, [0, 0]), decompose(NormalConeOp(geo.WholeSpace(2))), [0, 0], 5.0)
    delta, info = find_delta(sc, [0, 0], 0.5, lambda x0: integrate_regularized(sc.with_(x0=x0), 1.0, 1e-2))
    assert delta == 0.5 and info["halvings"] == 0


def test_find_delta_for_non_normal_flow():
    # transient growth kappa = sup_t |exp(Mt)| forces delta <= eps/kappa up to sampling
    M = np.array([[-1.0, 6.0], [0.0, -2.0]])
    kappa = max(np.linalg.norm(expm(M * t), 2) for t in np.linspace(0, 5, 501))
    assert kappa > 1.5
    sc = Scenario(AffineField(M, [0, 0]), decompose(NormalConeOp(geo.WholeSpace(2))), [0, 0], 5.0)
    delta, _ = find_delta(sc, [0, 0], 0.4, lambda x0: integrate_regularized(sc.with_(x0=x0), 1.0, 1e-2))
    assert 0.4 / (2 * kappa) <= delta <= 0.4 / 1.5 * 2


def test_pas_probe_on_friction_grid(friction):
    sc, _, E = friction
    run = oracle_runner(1.0, 0.1, 1.0, 12.0)
    grid = [[x, 0.0] for x in (3.0, -3.0, 2.0, -2.0, 1.5)]
    rep = pas_probe(sc, E, grid, runner=run, z_points=[[0.0, 0.0], [1.0, 0.0], [-0.4, 0.0]])
    assert rep.verdict == PASS
    assert all(abs(e["limit"][0]) <= 1.0 and e["distance_to_Z"] == 0.0 for e in rep.details["A2"])
    assert rep.details["distinct_limits"] >= 2
    assert all(e["delta"] > 0 for e in rep.details["A1"])


def test_pas_probe_start_in_Z_is_constant(friction):
    sc, _, E = friction
    run = oracle_runner(1.0, 0.1, 1.0, 4.0)
    rep = pas_probe(sc, E, [[0.7, 0.0]], runner=run, z_points=[[0.7, 0.0]], eps_list=(0.1,))
    assert rep.details["A2"][0]["limit"] == [0.7, 0.0]


def test_pas_probe_rejects_non_equilibrium_targets(friction):
    sc, _, E = friction
    with pytest.raises(ValueError, match="not an equilibrium"):
        pas_probe(sc, E, [[0.5, 0.0]], z_points=[[3.0, 0.0]], runner=oracle_runner(1, 0.1, 1, 2.0))


def test_unsettled_run_is_inconclusive():
    # an undamped oscillator never settles
    sc = Scenario(AffineField([[0.0, 1.0], [-1.0, 0.0]], [0, 0]), decompose(NormalConeOp(geo.WholeSpace(2))),
                  [0, 0], 6.0)
    run = lambda x0: integrate_regularized(sc.with_(x0=x0), 1.0, 1e-2)  # noqa: E731
    rep = pas_probe(sc, geo.Point([0, 0]), [[1.0, 0.0]], runner=run, check_stability=False)
    assert rep.verdict == INCONCLUSIVE


def test_semistability_of_trivial_system():
    sc = Scenario(constant_field([0.0, 0.0]), decompose(NormalConeOp(geo.WholeSpace(2))), [0, 0], 2.0)
    pair = LyapunovPair(lambda y: float(y @ y), lambda y: 0.0, lambda y: [2 * np.asarray(y)])
    run = lambda x0: integrate_regularized(sc.with_(x0=x0), 1.0, 1e-1)  # noqa: E731
    pts = [[0.3, 0.4], [-1.0, 2.0]]
    rep = semistability_report(sc, pair, pts, pts, runner=run, n_z=2, eps_list=(0.1,))
    assert rep.verdict == PASS
    assert all(e["tail_oscillation"] == 0.0 for e in rep.details["pas"]["details"]["A2"])


def test_semistability_of_friction(friction):
    sc, pair, E = friction
    run = oracle_runner(1.0, 0.1, 1.0, 12.0)
    grid = [[3.0, 0.0], [-2.0, 1.0]]
    rep = semistability_report(sc, pair, grid, E, runner=run, n_z=3, eps_list=(0.5,))
    assert rep.verdict == PASS
    assert rep.details["E_in_W_zero"]["verdict"] == PASS


def test_semistability_of_din(din):
    sc, pair, E = din
    run = lambda x0: integrate_regularized(sc.with_(x0=x0), 1.0, 1e-2)  # noqa: E731
    rep = semistability_report(sc, pair, [[1.0, 0.0], [-0.5, 1.0]], E, runner=run, n_z=1, eps_list=(0.5,))
    assert rep.verdict == PASS


def test_moreau_closed_form_and_sign():
    for c in (0.3, 1.0, 4.0):
        for n in (0.1, 1.0, 50.0):
            for x in (-2.0, 0.0, 0.7):
                W = lambda y, c=c: c * float(y @ y)  # noqa: E731
                exact = c * n / (c + n) * x * x
                assert moreau_envelope(W, n, [x], Q=[[c]]) == pytest.approx(exact, abs=1e-10)
                grid = moreau_envelope(W, n, [x])
                assert grid == pytest.approx(exact, abs=1e-8)
                assert (grid > 0) == (x != 0)


def test_moreau_monotone_in_n_and_zero_set(friction):
    _, pair, _ = friction
    y = np.array([0.4, -0.8])
    vals = [moreau_envelope(pair, n, y) for n in (0.1, 0.5, 2.0, 10.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    for x in np.linspace(-2, 2, 5):
        assert moreau_envelope(pair, 3.0, [x, 0.0]) == 0.0
        assert moreau_envelope(pair.W, 3.0, [x, 0.0]) == 0.0


def test_moreau_gates():
    with pytest.raises(ValueError):
        moreau_envelope(lambda y: 1.0, 0.0, [1.0])
    with pytest.raises(UnsupportedOperatorError):
        moreau_envelope(lambda y: float(y @ y), 1.0, np.ones(4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert moreau_envelope(lambda y: float(y @ y), 1.0, np.ones(4), Q=np.eye(4)) == pytest.approx(2.0)
