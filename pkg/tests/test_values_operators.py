from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monotone_flow import geometry as geo
from monotone_flow.errors import DomainError, DomainMismatchError, UnsupportedOperatorError
from monotone_flow.operators import (
    GradientOfSmooth,
    NormalConeOp,
    ScaledSum,
    SubdiffDistance,
    SubdiffNorm,
    clco_A0,
    decompose,
    graph_regularity_probe,
    operator_from_json,
    scaled_quadratic,
)
from monotone_flow.values import (
    BallValue,
    ConeCapBall,
    MinkowskiSum,
    Polytope,
    Singleton,
    hausdorff_distance,
    origin_projection,
    support,
    unit_directions,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
vec2 = st.lists(finite, min_size=2, max_size=2).map(np.array)


def test_support_examples():
    assert support(Singleton([1, 2]), [3, 0]) == pytest.approx(3.0)
    assert support(BallValue([0.5, 0], 0.5), [1, 0]) == pytest.approx(1.0)
    cap = ConeCapBall(geo.Halfspace([1, 0], 0.0), [0, 0])
    assert support(cap, [2, 0]) == pytest.approx(2.0)


def test_cone_cap_support_against_sampled_eta():
    cap = ConeCapBall(geo.Halfspace([1, 0], 0.0), [0, 0])
    eta = np.c_[np.linspace(0, 1, 10_001), np.zeros(10_001)]
    for zeta in np.random.default_rng(0).normal(size=(20, 2)):
        assert cap.support(zeta) == pytest.approx(max(eta @ zeta), abs=1e-3)


def test_origin_projection_examples():
    np.testing.assert_allclose(origin_projection(BallValue([0.5, 0], 0.5)), [0, 0], atol=1e-15)
    np.testing.assert_allclose(origin_projection(Singleton([1, 0])), [1, 0])
    np.testing.assert_allclose(origin_projection(BallValue([2, 0], 0.5)), [1.5, 0])


def test_decompose_examples():
    Q = scaled_quadratic(2.0, 2)
    dec = decompose(GradientOfSmooth(Q))
    assert dec.C.is_whole_space()
    np.testing.assert_allclose(dec.F([1.0, -1.0]).origin_projection(), [2.0, -2.0])

    S = geo.Box([0, 0], [1, 1])
    dec = decompose(NormalConeOp(S))
    assert dec.C is S
    for x in ([0.5, 0.5], [1.0, 0.0]):
        np.testing.assert_array_equal(dec.F(x).origin_projection(), [0.0, 0.0])

    dec = decompose(SubdiffNorm(n=2))
    assert dec.C.is_whole_space() and dec.b == 1.0

    with pytest.raises(UnsupportedOperatorError):
        decompose(object())


def test_scaled_sum_rejects_mismatched_dimensions():
    with pytest.raises(DomainMismatchError):
        ScaledSum(((1.0, SubdiffNorm(n=2)), (1.0, SubdiffNorm(n=3)))).decompose()


def test_clco_A0_examples():
    dec = decompose(SubdiffNorm(n=2))
    v = clco_A0(dec, [0, 0])
    Z = unit_directions(2, 64)
    assert hausdorff_distance(v, BallValue([0, 0], 1.0), Z) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(clco_A0(dec, [3, 4]).origin_projection(), [0.6, 0.8])
    dd = decompose(SubdiffDistance(geo.Halfspace([1, 0], 0.0)))
    np.testing.assert_allclose(clco_A0(dd, [-1, 0]).origin_projection(), [0, 0])
    with pytest.raises(DomainError):
        clco_A0(decompose(NormalConeOp(geo.Ball([0, 0], 1.0))), [3, 0])


def test_graph_regularity_probe_examples():
    F = decompose(SubdiffNorm(n=2)).F
    rep = graph_regularity_probe(F, [0, 0], 1.0, 600, seed=1)
    assert rep.passed and rep.details["bound_excess"] <= 1e-9
    near = graph_regularity_probe(F, [0, 0], 0.1, 120, seed=2, n_shells=1)
    assert near.details["shell_excess"] == [0.0]
    const = decompose(GradientOfSmooth(scaled_quadratic(0.0, 2), bound=1.0)).F
    rep = graph_regularity_probe(const, [0.3, 0.1], 0.5, 100)
    assert rep.passed and max(rep.details["shell_excess"]) == 0.0


CATALOG_OPS = [
    SubdiffNorm(n=2),
    SubdiffDistance(geo.Box([-1, -0.5], [1, 0.5])),
    SubdiffDistance(geo.Ball([0.2, 0], 0.7)),
    NormalConeOp(geo.Halfspace([1, 1], 0.5)),
    ScaledSum(((0.5, SubdiffNorm(n=2)), (1.0, NormalConeOp(geo.Ball([0, 0], 2.0))))),
]


@pytest.mark.parametrize("op", CATALOG_OPS, ids=lambda o: type(o).__name__)
def test_uniform_bound(op):
    dec = decompose(op)
    rng = np.random.default_rng(0)
    Z = unit_directions(2, 64, seed=3)
    X = np.array([dec.C.project(x) for x in rng.normal(scale=2.0, size=(10_000, 2))])
    # a quarter of the samples land on the kink sets
    X[::4] = dec.C.project(np.zeros(2))
    for x in X[:2500]:
        v = dec.F(x)
        assert max(v.support(z) for z in Z[:8]) <= dec.b + 1e-9
    for x in X[2500::50]:
        v = dec.F(x)
        assert all(v.support(z) <= dec.b + 1e-9 for z in Z)


VALUES = [
    Singleton([0.3, -0.4]),
    BallValue([0.5, 0.1], 0.4),
    ConeCapBall(geo.Box([-1, -1], [1, 1]), [1, 1]),
    Polytope([[0, 0], [1, 0], [0.2, 0.9]]),
    MinkowskiSum((BallValue([1, 0], 0.2), Polytope([[0, 1], [0.5, -0.5], [-1, 0]]))),
]


@pytest.mark.parametrize("v", VALUES, ids=lambda v: type(v).__name__)
@given(z1=vec2, z2=vec2, t=st.floats(0, 10))
def test_support_is_sublinear(v, z1, z2, t):
    assert v.support(z1 + z2) <= v.support(z1) + v.support(z2) + 1e-9
    assert v.support(t * z1) == pytest.approx(t * v.support(z1), abs=1e-9)


@pytest.mark.parametrize("v", VALUES, ids=lambda v: type(v).__name__)
def test_origin_projection_lies_in_value(v):
    p = origin_projection(v)
    # a point lies in a closed convex set iff it satisfies every supporting halfspace
    for z in unit_directions(2, 256, seed=5):
        assert z @ p <= v.support(z) + 1e-9


@pytest.mark.parametrize("v", VALUES, ids=lambda v: type(v).__name__)
@given(y=vec2)
def test_value_projection_is_nearest(v, y):
    p = v.project(y)
    for z in unit_directions(2, 64, seed=5):
        assert z @ p <= v.support(z) + 1e-7
    # no boundary direction improves on the projection
    for z in unit_directions(2, 16, seed=6):
        q = v.project(p + 1e-3 * z)
        assert np.linalg.norm(y - q) >= np.linalg.norm(y - p) - 1e-7


@pytest.mark.parametrize("op", CATALOG_OPS, ids=lambda o: type(o).__name__)
def test_operator_json_round_trip(op):
    op2 = operator_from_json(op.to_json())
    x = np.array([0.9, -1.3])
    a, b = decompose(op).C, decompose(op2).C
    np.testing.assert_allclose(a.project(x), b.project(x))
    xc = a.project(x)
    Z = unit_directions(2, 32)
    assert hausdorff_distance(decompose(op).F(xc), decompose(op2).F(xc), Z) <= 1e-12


def test_hausdorff_is_exact_for_balls():
    A, B = BallValue([0, 0], 1.0), BallValue([3, 4], 0.5)
    assert hausdorff_distance(A, B) == pytest.approx(5.5, abs=1e-2)
    assert not math.isnan(hausdorff_distance(Singleton([0, 0]), A))
