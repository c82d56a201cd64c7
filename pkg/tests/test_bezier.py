import numpy as np
import pytest
from hypothesis import given, reject, settings
from hypothesis import strategies as st

from geospline import (
    BezierSpline,
    DomainError,
    Euclidean,
    GeometryError,
    Sphere,
    SplineConstructionError,
    SplineSpec,
    bernstein_eval,
    boundary_derivatives,
    control_from_boundary,
    cubic_decode,
    cubic_encode,
    decasteljau,
    derive_dependent_points,
    spline_differential,
)
from geospline.synthetic import random_spline

from helpers import flat_spline, random_control

S2 = Sphere(2)

degree_lists = st.lists(st.integers(1, 5), min_size=1, max_size=4)


def _rotation(rng, n=3):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


# -- spline types -------------------------------------------------------------------


@given(degree_lists)
def test_open_free_point_count(degrees):
    spec = SplineSpec(tuple(degrees))
    assert spec.n_free == sum(degrees) - len(degrees) + 2
    assert spec.program.n_nodes == sum(degrees) + 1
    assert len(spec.program.derived) == len(degrees) - 1


@given(st.lists(st.integers(3, 5), min_size=1, max_size=4))
def test_closed_free_point_count(degrees):
    spec = SplineSpec(tuple(degrees), closed=True)
    assert spec.n_free == sum(degrees) - len(degrees)
    assert spec.program.n_nodes == sum(degrees)


def test_invalid_specs():
    with pytest.raises(SplineConstructionError):
        SplineSpec(())
    with pytest.raises(SplineConstructionError):
        SplineSpec((0, 3))
    with pytest.raises(SplineConstructionError):
        SplineSpec((1, 1), closed=True)
    # every control point would be dependent on another dependent one
    with pytest.raises(SplineConstructionError):
        SplineSpec((2, 2), closed=True)
    with pytest.raises(SplineConstructionError):
        SplineSpec.parse("3,x")
    assert SplineSpec.parse("3, 2,4") == SplineSpec((3, 2, 4))


def test_high_degree_warns():
    with pytest.warns(UserWarning, match="degree 6"):
        SplineSpec((6,))


def test_wrong_point_count():
    with pytest.raises(GeometryError):
        BezierSpline(Euclidean(2), SplineSpec((3, 3)), np.zeros((5, 2)))


def test_points_are_read_only():
    B = flat_spline(np.random.default_rng(0))
    with pytest.raises(ValueError):
        B.points[0, 0] = 1.0


def test_far_apart_points_rejected():
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])
    with pytest.raises(SplineConstructionError):
        BezierSpline(S2, SplineSpec((3,)), pts)


# -- evaluation -----------------------------------------------------------------------


def test_single_segment_is_de_casteljau():
    rng = np.random.default_rng(1)
    P = random_control(S2, rng, 4)
    B = BezierSpline(S2, SplineSpec((4,)), P)
    t = np.linspace(0, 1, 11)
    assert np.allclose(B(t), decasteljau(S2, P, t), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(degree_lists, st.integers(0, 2**32 - 1))
def test_flat_spline_is_piecewise_bernstein(degrees, seed):
    rng = np.random.default_rng(seed)
    B = flat_spline(rng, tuple(degrees), dim=3)
    for i, grid in enumerate(derive_dependent_points(B)):
        local = np.linspace(0, 1, 7)
        assert np.allclose(B(i + local), bernstein_eval(grid, local), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(degree_lists, st.integers(0, 2**32 - 1))
def test_derived_points_satisfy_c1_condition(degrees, seed):
    rng = np.random.default_rng(seed)
    try:
        B = random_spline(S2, SplineSpec(tuple(degrees)), rng, S2.origin(), 0.05)
    except SplineConstructionError:
        reject()  # extrapolated dependent points left the convex ball
    g = B.grids
    for i in range(len(degrees) - 1):
        ki, kj = degrees[i], degrees[i + 1]
        joint = g[i][ki]
        assert np.allclose(g[i + 1][0], joint)
        left = -ki * S2.log(joint, g[i][ki - 1])
        right = kj * S2.log(joint, g[i + 1][1])
        assert np.allclose(left, right, atol=1e-12)


def test_knot_interpolation_and_shapes():
    rng = np.random.default_rng(2)
    B = random_spline(S2, SplineSpec((3, 2, 3)), rng, S2.origin(), 0.3)
    g = B.grids
    assert np.allclose(B(0.0), B.points[0])
    for i in range(3):
        assert np.allclose(B(float(i + 1)), g[i][-1])
    assert B(np.zeros((4, 5))).shape == (4, 5, 3)
    assert B(1.5).shape == (3,)
    with pytest.raises(DomainError):
        B(3.5)
    with pytest.raises(GeometryError):
        B(np.nan)


def test_closed_spline_is_periodic():
    rng = np.random.default_rng(3)
    B = random_spline(S2, SplineSpec((3, 3, 3), closed=True), rng, S2.origin(), 0.3)
    t = rng.uniform(0, 3, 20)
    assert np.allclose(B(t), B(t + 3.0), atol=1e-14)
    assert np.allclose(B(t), B(t - 6.0), atol=1e-14)
    assert np.allclose(B.grids[-1][-1], B.grids[0][0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_isometry_equivariance(seed, closed):
    rng = np.random.default_rng(seed)
    spec = SplineSpec((3, 2, 4), closed=closed)
    B = random_spline(S2, spec, rng, S2.random_point(rng, S2.origin(), 1.0), 0.2)
    R = _rotation(rng)
    RB = B.with_points(B.points @ R.T)
    t = np.linspace(0, 3, 13)
    assert np.allclose(RB(t), B(t) @ R.T, atol=1e-12)


# -- derivatives with respect to control points ------------------------------------


@pytest.mark.parametrize("closed", [False, True])
def test_field_matches_finite_differences(manifold, closed):
    rng = np.random.default_rng(4)
    spec = SplineSpec((3, 3), closed)
    B = random_spline(manifold, spec, rng, manifold.origin(), 0.3)
    gen = manifold.random_tangent(rng, B.points)
    t = np.linspace(0, 2, 17)
    h = 1e-6
    plus = B.with_points(manifold.exp(B.points, h * gen))(t)
    minus = B.with_points(manifold.exp(B.points, -h * gen))(t)
    assert np.allclose(B.field(gen, t), (plus - minus) / (2 * h), atol=1e-7)
    j = 2
    single = np.zeros_like(gen)
    single[j] = gen[j]
    assert np.allclose(spline_differential(B, j, gen[j], t), B.field(single, t))
    with pytest.raises(IndexError):
        spline_differential(B, spec.n_free, gen[0], t)


def test_pullback_is_adjoint_of_field(manifold):
    rng = np.random.default_rng(5)
    B = random_spline(manifold, SplineSpec((2, 4, 3)), rng, manifold.origin(), 0.3)
    t = rng.uniform(0, 3, 12)
    gen = manifold.random_tangent(rng, B.points)
    Z = manifold.random_tangent(rng, B(t))
    lhs = np.sum(B.field(gen, t) * Z)
    rhs = np.sum(gen * B.pullback(t, Z))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_jacobian_columns_are_basis_fields():
    rng = np.random.default_rng(6)
    B = random_spline(S2, SplineSpec((3, 3)), rng, S2.origin(), 0.3)
    t = np.array([0.1, 0.9, 1.7])
    J = B.jacobian(t)
    assert J.shape == (3, B.spec.n_free, 2, 3)
    basis = B.tangent_basis()
    gen = np.zeros(B.points.shape)
    gen[3] = basis[3, 1]
    assert np.allclose(J[:, 3, 1], B.field(gen, t))


def test_batched_fields():
    rng = np.random.default_rng(7)
    B = random_spline(S2, SplineSpec((3,)), rng, S2.origin(), 0.3)
    gens = np.stack([S2.random_tangent(rng, B.points) for _ in range(4)])
    t = np.linspace(0, 1, 5)
    batch = B.field(gens, t)
    assert batch.shape == (4, 5, 3)
    assert np.allclose(batch[2], B.field(gens[2], t))


# -- boundary derivatives and recovery ------------------------------------------------


def test_flat_boundary_derivatives_match_polynomial():
    rng = np.random.default_rng(8)
    for k in range(1, 6):
        P = rng.normal(size=(k + 1, 2))
        vel0, vel1, acc0, acc1 = boundary_derivatives(Euclidean(2), P)
        assert np.allclose(vel0, k * (P[1] - P[0]))
        assert np.allclose(vel1, k * (P[k] - P[k - 1]))
        if k >= 2:
            assert np.allclose(acc0, k * (k - 1) * (P[2] - 2 * P[1] + P[0]))
            assert np.allclose(acc1, k * (k - 1) * (P[k] - 2 * P[k - 1] + P[k - 2]))
        else:
            assert acc0 is None and acc1 is None


def test_recovery_with_coincident_points():
    rng = np.random.default_rng(9)
    P = random_control(S2, rng, 3, 0.4)
    P[1] = P[0]
    P[2] = P[3]
    vel0, vel1, acc0, acc1 = boundary_derivatives(S2, P)
    assert np.allclose(vel0, 0) and np.allclose(vel1, 0)
    p1, p2, pk1, pk2 = control_from_boundary(S2, P[0], vel0, acc0, P[3], vel1, acc1, 3)
    for got, want in ((p1, P[1]), (p2, P[2]), (pk1, P[2]), (pk2, P[1])):
        assert np.allclose(got, want, atol=1e-12)


def test_recovery_degree_two():
    rng = np.random.default_rng(10)
    P = random_control(S2, rng, 2, 0.5)
    vel0, vel1, acc0, acc1 = boundary_derivatives(S2, P)
    p1, p2, pk1, pk2 = control_from_boundary(S2, P[0], vel0, acc0, P[2], vel1, acc1, 2)
    assert np.allclose(p1, P[1]) and np.allclose(pk1, P[1])
    assert np.allclose(p2, P[2]) and np.allclose(pk2, P[0])
    with pytest.raises(GeometryError):
        control_from_boundary(S2, P[0], vel0, acc0, P[2], vel1, acc1, 1)


# -- tangent-bundle encoding of cubic splines ------------------------------------------


@pytest.mark.parametrize("degrees,closed", [((3,), False), ((3, 3, 3), False), ((3, 3), True), ((3, 3, 3), True)])
def test_cubic_encode_decode_round_trip(degrees, closed):
    rng = np.random.default_rng(11)
    B = random_spline(S2, SplineSpec(degrees, closed), rng, S2.origin(), 0.3)
    data = cubic_encode(B)
    L = len(degrees)
    assert data.points.shape == ((L if closed else L + 1), 3)
    # vectors are a third of the curve velocity at the knots
    h = 1e-6
    for i in range(L if closed else L + 1):
        ti = float(i)
        if not closed and i == L:
            vel = (3 * B(ti) - 4 * B(ti - h) + B(ti - 2 * h)) / (2 * h)
        else:
            vel = (-3 * B(ti) + 4 * B(ti + h) - B(ti + 2 * h)) / (2 * h)
        assert np.allclose(3 * data.vectors[i], vel, atol=1e-6)
    back = cubic_decode(data)
    assert back.spec == B.spec
    assert np.allclose(back.points, B.points, atol=1e-14)


def test_cubic_encode_requires_cubic():
    B = random_spline(S2, SplineSpec((3, 2)), np.random.default_rng(12), S2.origin(), 0.3)
    with pytest.raises(SplineConstructionError):
        cubic_encode(B)
