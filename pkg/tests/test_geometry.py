from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monotone_flow import geometry as geo
from monotone_flow.errors import (
    DegenerateDirectionError,
    DomainError,
    InfeasibleSetError,
)
from monotone_flow.suites import SET_KINDS, _random_set

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec2 = st.lists(coords, min_size=2, max_size=2).map(np.array)


def test_ball_projection_is_radial():
    np.testing.assert_allclose(geo.project(geo.Ball([0, 0], 1.0), [2, 0]), [1, 0])


def test_box_projection_clamps():
    np.testing.assert_allclose(geo.project(geo.Box([-1, -1], [1, 1]), [2, 3]), [1, 1])


def test_quadrant_projection_matches_grid_search():
    P = geo.Polyhedron([[1, 0], [0, 1]], [0, 0])
    p = geo.project(P, [1, 1])
    g = np.linspace(-2, 0, 2001)
    X, Y = np.meshgrid(g, g)
    d2 = (X - 1) ** 2 + (Y - 1) ** 2
    i = np.unravel_index(np.argmin(d2), d2.shape)
    np.testing.assert_allclose(p, [X[i], Y[i]], atol=1e-6)
    np.testing.assert_allclose(p, [0, 0], atol=1e-9)


def test_polyhedron_projection_matches_slsqp():
    from scipy.optimize import minimize

    A = np.array([[1.0, 1.0], [-1.0, 2.0], [0.0, -1.0]])
    c = np.array([1.0, 2.0, 0.5])
    P = geo.Polyhedron(A, c)
    rng = np.random.default_rng(3)
    for x in rng.normal(scale=3.0, size=(20, 2)):
        res = minimize(lambda y: float((y - x) @ (y - x)), np.zeros(2), method="SLSQP",
                       constraints=[{"type": "ineq", "fun": lambda y: c - A @ y}], tol=1e-14)
        np.testing.assert_allclose(P.project(x), res.x, atol=1e-6)


def test_empty_polyhedron_raises():
    P = geo.Polyhedron([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
    with pytest.raises(InfeasibleSetError):
        P.project(np.zeros(2))


def test_distances():
    assert geo.distance(geo.Ball([0, 0], 1.0), [2, 0]) == pytest.approx(1.0)
    assert geo.distance(geo.Point([0, 0]), [3, 4]) == pytest.approx(5.0)
    assert geo.distance(geo.Box([-1, -1], [1, 1]), [0.3, -0.2]) == 0.0


def test_prox_normal_direction_examples():
    np.testing.assert_allclose(geo.prox_normal_direction(geo.Ball([0, 0], 1.0), [2, 0]), [1, 0])
    np.testing.assert_allclose(geo.prox_normal_direction(geo.Point([0, 0]), [3, 4]), [0.6, 0.8])
    with pytest.raises(DegenerateDirectionError):
        geo.prox_normal_direction(geo.Ball([0, 0], 1.0), [0.5, 0])


def test_cone_cap_ball_support_examples():
    H = geo.Halfspace([1, 0], 0.0)
    assert geo.cone_cap_ball_support(H, [0, 0], [1, 0]) == pytest.approx(1.0)
    assert geo.cone_cap_ball_support(H, [0, 0], [-1, 0]) == pytest.approx(0.0)
    for z in ([1, 2], [-3, 0.5]):
        assert geo.cone_cap_ball_support(geo.Ball([0, 0], 1.0), [0.2, 0.1], z) == 0.0
    with pytest.raises(DomainError):
        geo.cone_cap_ball_support(H, [1, 0], [1, 0])


@pytest.mark.parametrize("S,x,gen", [
    (geo.Ball([0.0, 0.0], 1.0), [0.6, 0.8], [[0.6, 0.8]]),
    (geo.Box([-1.0, -1.0], [1.0, 1.0]), [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]]),
    (geo.Box([-1.0, -1.0], [1.0, 1.0]), [1.0, 0.3], [[1.0, 0.0]]),
    (geo.Halfspace([1.0, 1.0], 1.0), [0.5, 0.5], [[1.0, 1.0]]),
])
def test_cone_cap_ball_support_matches_sampling(S, x, gen):
    rng = np.random.default_rng(0)
    x = np.asarray(x)
    # conic combinations of the generators, kept only if x + eta projects back to x
    N = rng.uniform(0, 1, size=(10_000, len(gen))) @ np.asarray(gen)
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    assert all(np.allclose(S.project(x + eta), x, atol=1e-9) for eta in N[:200])
    for zeta in rng.normal(size=(10, 2)):
        brute = max(0.0, float(np.max(N @ zeta)))
        assert geo.cone_cap_ball_support(S, x, zeta) == pytest.approx(brute, abs=1e-3)


def test_mean_value_witness_examples():
    B = geo.Ball([0, 0], 1.0)
    z, zeta = geo.mean_value_witness(B, [2, 0], [3, 0], 0.9, 0.1)
    np.testing.assert_allclose(z, [2.5, 0], atol=1e-2)
    np.testing.assert_allclose(zeta, [1, 0])
    assert zeta @ np.array([1.0, 0.0]) > 0.9
    z, zeta = geo.mean_value_witness(B, [2, 0], [2, 0], -1.0, 0.1)
    assert zeta @ np.zeros(2) > -1.0
    with pytest.raises(ValueError):
        geo.mean_value_witness(B, [2, 0], [3, 0], 1.0, 0.1)


@pytest.mark.parametrize("kind", SET_KINDS)
def test_firm_nonexpansiveness(kind):
    rng = np.random.default_rng(SET_KINDS.index(kind))
    S = _random_set(rng, kind)
    n = 10_000 if kind != "Polyhedron" else 2000
    X = rng.normal(scale=3.0, size=(n, S.dim))
    Y = rng.normal(scale=3.0, size=(n, S.dim))
    for x, y in zip(X, Y):
        px, py = S.project(x), S.project(y)
        assert (px - py) @ (x - y) >= (px - py) @ (px - py) - 1e-9


@pytest.mark.parametrize("kind", SET_KINDS)
def test_projection_lands_in_set_and_is_idempotent(kind):
    rng = np.random.default_rng(7)
    S = _random_set(rng, kind)
    for x in rng.normal(scale=3.0, size=(50, S.dim)):
        p = S.project(x)
        assert S.contains(p)
        np.testing.assert_allclose(S.project(p), p, atol=1e-9)


@given(vec2, st.floats(0.01, 0.99))
def test_prox_distance_gradient_along_segment(x, s):
    S = geo.Box([-1.0, -0.5], [1.0, 0.5])
    if S.distance(x) < 1e-3:
        return
    z = S.project(x)
    y = z + s * (x - z)
    h = 1e-6 * max(1.0, S.distance(y))
    grad = np.array([(S.distance(y + h * e) - S.distance(y - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(grad, geo.prox_normal_direction(S, x), atol=1e-6)


@given(vec2, vec2)
def test_moreau_split_of_directions(x, zeta):
    S = geo.Halfspace([1.0, -2.0], 0.5)
    p = S.project(x)
    t = geo.tangent_cone_project(S, p, zeta)
    nz = geo.normal_cone_project(S, p, zeta)
    np.testing.assert_allclose(t + nz, zeta, atol=1e-9)
    assert abs(t @ nz) <= 1e-7 * max(1.0, zeta @ zeta)


@pytest.mark.parametrize("kind", SET_KINDS)
def test_json_round_trip(kind):
    S = _random_set(np.random.default_rng(11), kind)
    T = geo.set_from_json(S.to_json())
    x = np.random.default_rng(1).normal(size=S.dim) * 3
    np.testing.assert_allclose(T.project(x), S.project(x), atol=1e-12)
