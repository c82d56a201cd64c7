import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geospline import (
    Euclidean,
    GeometryError,
    Sphere,
    SplineSpec,
    TangentBundlePoint,
    cubic_encode,
    sasaki_exp,
    sasaki_inner,
    sasaki_log,
    sasaki_spline_mean,
)
from geospline.sasaki import bundle_to_generators, generators_to_bundle
from geospline.synthetic import perturb_spline, random_spline

from helpers import flat_spline

S2 = Sphere(2)


def _bundle_point(rng, M=S2, size=0.3):
    p = M.random_point(rng, M.origin(), 1.0)
    return TangentBundlePoint(p, M.random_tangent(rng, p, size))


def _bundle_velocity(M, curve, h=1e-6):
    """Horizontal and vertical parts of the velocity of ``s -> (p(s), u(s))`` at 0."""
    p0, u0 = curve(0.0)
    (pp, up), (pm, um) = curve(h), curve(-h)
    v = M.log(p0, pp) / (2 * h) - M.log(p0, pm) / (2 * h)
    w = (M.transp(pp, p0, up) - M.transp(pm, p0, um)) / (2 * h)
    return v, w


def test_horizontal_and_vertical_are_orthogonal():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = _bundle_point(rng)
        x, y = S2.random_tangent(rng, a.p), S2.random_tangent(rng, a.p)
        horizontal = lambda s: (S2.exp(a.p, s * x), S2.transp(a.p, S2.exp(a.p, s * x), a.u))  # noqa: E731
        vertical = lambda s: (a.p, a.u + s * y)  # noqa: E731
        # both curves have exactly constant transported u resp. fixed foot point,
        # so a coarse step only limits round-off
        hv = _bundle_velocity(S2, horizontal, h=1e-3)
        vv = _bundle_velocity(S2, vertical, h=1e-3)
        assert np.allclose(hv[1], 0.0, atol=1e-9) and np.allclose(vv[0], 0.0, atol=1e-12)
        assert abs(sasaki_inner(S2, a, hv, vv)) < 1e-12
        assert sasaki_inner(S2, a, hv, hv) == pytest.approx(x @ x, rel=1e-6)


def test_exp_special_cases():
    rng = np.random.default_rng(1)
    p = S2.random_point(rng, S2.origin(), 1.0)
    v, w = S2.random_tangent(rng, p), S2.random_tangent(rng, p)
    zero = np.zeros(3)
    # zero vector: the foot point follows the base geodesic
    end = sasaki_exp(S2, TangentBundlePoint(p, zero), v, zero)
    assert np.allclose(end.p, S2.exp(p, v), atol=1e-12) and np.allclose(end.u, 0.0, atol=1e-12)
    # purely vertical motion stays in the fibre
    u = S2.random_tangent(rng, p)
    end = sasaki_exp(S2, TangentBundlePoint(p, u), zero, w)
    assert np.allclose(end.p, p) and np.allclose(end.u, u + w, atol=1e-12)
    path = sasaki_exp(S2, TangentBundlePoint(p, u), v, w, steps=10, return_path=True)
    assert path.p.shape == (11, 3) and path.u.shape == (11, 3)
    assert np.allclose(path.p[-1], sasaki_exp(S2, TangentBundlePoint(p, u), v, w, steps=10).p)


def test_argument_checks():
    rng = np.random.default_rng(2)
    a = _bundle_point(rng)
    with pytest.raises(GeometryError):
        sasaki_exp(S2, TangentBundlePoint(a.p, a.p), a.u, a.u)
    with pytest.raises(ValueError):
        sasaki_exp(S2, a, a.u, a.u, steps=0)
    with pytest.raises(ValueError):
        sasaki_log(S2, a, a, steps=0)
    with pytest.raises(GeometryError):
        sasaki_log(S2, a, TangentBundlePoint(a.p, np.zeros(2)))


def test_log_of_identical_points_is_zero():
    a = _bundle_point(np.random.default_rng(3))
    lg = sasaki_log(S2, a, a)
    assert np.allclose(lg.v, 0.0) and np.allclose(lg.w, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 20, 100]))
def test_round_trip_matches_steps(seed, steps):
    rng = np.random.default_rng(seed)
    a = _bundle_point(rng)
    v, w = S2.random_tangent(rng, a.p, 0.3), S2.random_tangent(rng, a.p, 0.3)
    b = sasaki_exp(S2, a, v, w, steps=steps)
    lg = sasaki_log(S2, a, b, steps=steps)
    assert np.allclose(lg.v, v, atol=1e-8) and np.allclose(lg.w, w, atol=1e-8)


def test_batched_log_equals_single_logs():
    rng = np.random.default_rng(4)
    a = _bundle_point(rng)
    feet = [S2.random_point(rng, a.p, 0.5) for _ in range(4)]
    ends = [TangentBundlePoint(q, S2.random_tangent(rng, q, 0.2)) for q in feet]
    batch = sasaki_log(S2, TangentBundlePoint(a.p[None], a.u[None]),
                       TangentBundlePoint(np.stack([e.p for e in ends]), np.stack([e.u for e in ends])), steps=20)
    for i, e in enumerate(ends):
        one = sasaki_log(S2, a, e, steps=20)
        assert np.allclose(batch.v[i], one.v, atol=1e-9) and np.allclose(batch.w[i], one.w, atol=1e-9)


def test_flat_exp_is_affine_for_any_steps():
    rng = np.random.default_rng(5)
    E = Euclidean(2)
    a = _bundle_point(rng, E)
    v, w = rng.normal(size=(2, 2))
    for steps in (1, 7):
        b = sasaki_exp(E, a, v, w, steps=steps)
        assert np.allclose(b.p, a.p + v, atol=1e-12) and np.allclose(b.u, a.u + w, atol=1e-12)


# -- cubic splines in the tangent bundle -------------------------------------------------


@pytest.mark.parametrize("closed", [False, True])
def test_generator_bundle_round_trip(closed):
    rng = np.random.default_rng(6)
    B = random_spline(S2, SplineSpec((3, 3), closed), rng, S2.origin(), 0.3)
    gen = S2.random_tangent(rng, B.points)
    data, V, W = generators_to_bundle(B, gen)
    assert np.allclose(bundle_to_generators(data, V, W), gen, atol=1e-12)


def test_bundle_vectors_are_variations_of_knot_tuples():
    rng = np.random.default_rng(7)
    B = random_spline(S2, SplineSpec((3, 3)), rng, S2.origin(), 0.3)
    gen = S2.random_tangent(rng, B.points)
    data, V, W = generators_to_bundle(B, gen)

    def tuples(s):
        d = cubic_encode(B.with_points(S2.exp(B.points, s * gen)))
        return d.points, d.vectors

    v, w = _bundle_velocity(S2, tuples)
    assert np.allclose(V, v, atol=1e-8) and np.allclose(W, w, atol=1e-8)


def test_spline_mean_flat_is_average_of_knot_tuples():
    rng = np.random.default_rng(8)
    splines = [flat_spline(rng) for _ in range(5)]
    mean = sasaki_spline_mean(splines)
    enc = [cubic_encode(s) for s in splines]
    m = cubic_encode(mean)
    assert np.allclose(m.points, np.mean([e.points for e in enc], axis=0), atol=1e-9)
    assert np.allclose(m.vectors, np.mean([e.vectors for e in enc], axis=0), atol=1e-9)


def test_spline_mean_stationary_and_symmetric():
    rng = np.random.default_rng(9)
    base = random_spline(S2, SplineSpec((3, 3)), rng, S2.origin(), 0.3)
    splines = [perturb_spline(base, 0.1, rng) for _ in range(5)]
    mean, logs = sasaki_spline_mean(splines, return_logs=True)
    norm = np.sqrt(np.sum(logs.v.mean(axis=0) ** 2) + np.sum(logs.w.mean(axis=0) ** 2))
    assert norm <= 1e-6
    assert np.allclose(sasaki_spline_mean(splines[::-1]).points, mean.points, atol=1e-8)
    assert np.allclose(sasaki_spline_mean(splines[:1]).points, splines[0].points, atol=1e-9)


def test_spline_mean_checks():
    rng = np.random.default_rng(10)
    with pytest.raises(GeometryError):
        sasaki_spline_mean([])
    a = random_spline(S2, SplineSpec((3, 3)), rng, S2.origin(), 0.3)
    b = random_spline(S2, SplineSpec((3,)), rng, S2.origin(), 0.3)
    with pytest.raises(GeometryError):
        sasaki_spline_mean([a, b])
