import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geospline import (
    BezierSpline,
    DomainError,
    Euclidean,
    FitOptions,
    FitReport,
    GeometryError,
    Sphere,
    SplineSpec,
    fit_spline,
    initialize_control_points,
    log_likelihood_delta,
    normalize_groups,
    r_squared,
    sse,
    sse_gradient,
)
from geospline.regression import transport_along
from geospline.synthetic import noisy_samples, random_spline

S2 = Sphere(2)


def _problem(M, rng, spec=SplineSpec((3, 3)), n=30, sigma=0.05):
    truth = random_spline(M, spec, rng, M.origin(), 0.5)
    t = np.sort(rng.uniform(0, 1, n))
    return truth, t, noisy_samples(truth, spec.n_segments * t, sigma, rng)


# -- objective and gradient -----------------------------------------------------------


def test_sse_is_half_sum_of_squared_distances():
    rng = np.random.default_rng(0)
    truth, t, q = _problem(S2, rng)
    s = 2 * t
    assert sse(truth, s, q) == pytest.approx(0.5 * np.sum(S2.dist(truth(s), q) ** 2))
    w = rng.uniform(0, 2, t.size)
    assert sse(truth, s, q, w) == pytest.approx(0.5 * np.sum(w * S2.dist(truth(s), q) ** 2))


@pytest.mark.parametrize("closed", [False, True])
def test_closed_form_gradient_matches_finite_differences(manifold, closed):
    rng = np.random.default_rng(1)
    spec = SplineSpec((3, 2, 3), closed)
    B = random_spline(manifold, spec, rng, manifold.origin(), 0.4)
    t = rng.uniform(0, 3, 25)
    q = noisy_samples(B, t, 0.2, rng)
    w = rng.uniform(0.5, 1.5, 25)
    exact = sse_gradient(B, t, q, w)
    fd = sse_gradient(B, t, q, w, mode="finite_difference")
    assert np.allclose(exact, fd, atol=1e-7 * max(1.0, np.abs(exact).max()))
    assert np.allclose(manifold.proj(B.points, exact), exact)
    with pytest.raises(ValueError):
        sse_gradient(B, t, q, mode="symbolic")


def test_fd_gradient_option_fits_too():
    rng = np.random.default_rng(2)
    truth, t, q = _problem(S2, rng, SplineSpec((2,)), n=12, sigma=0.0)
    fit = fit_spline(S2, t, q, truth.spec, FitOptions(gradient="finite_difference", grad_tol=1e-7))
    assert fit.sse < 1e-12


# -- fitting ---------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["gauss_newton", "gradient_descent"])
def test_noiseless_recovery(method):
    rng = np.random.default_rng(3)
    truth, t, q = _problem(S2, rng, SplineSpec((3,)), n=20, sigma=0.0)
    fit = fit_spline(S2, t, q, truth.spec, FitOptions(method=method, max_iter=5000, grad_tol=1e-10))
    assert fit.converged, fit.message
    assert np.max(S2.dist(fit.spline.points, truth.points)) < 1e-6
    assert fit.r2 == pytest.approx(1.0)
    hist = np.array(fit.sse_history)
    assert np.all(np.diff(hist) <= 0)


def test_closed_spline_fit():
    rng = np.random.default_rng(4)
    truth, t, q = _problem(S2, rng, SplineSpec((3, 3, 3), closed=True), n=40, sigma=0.0)
    fit = fit_spline(S2, t, q, truth.spec)
    assert fit.sse < 1e-16
    assert np.max(S2.dist(fit.spline.points, truth.points)) < 1e-6


def test_time_scaling_modes():
    rng = np.random.default_rng(5)
    truth, t, q = _problem(S2, rng, n=25, sigma=0.02)
    unit = fit_spline(S2, t, q, truth.spec)
    spline_times = fit_spline(S2, 2 * t, q, truth.spec, FitOptions(t_scale="spline"))
    assert unit.t_factor == 2.0 and spline_times.t_factor == 1.0
    assert np.allclose(unit.spline.points, spline_times.spline.points, atol=1e-8)
    assert r_squared(unit, t, q) == pytest.approx(unit.r2)
    assert r_squared(unit.spline, 2 * t, q) == pytest.approx(unit.r2)
    with pytest.raises(DomainError):
        fit_spline(S2, 1.5 * t + 0.1, q, truth.spec)


def test_weights_suppress_outliers():
    rng = np.random.default_rng(6)
    truth, t, q = _problem(S2, rng, n=30, sigma=0.0)
    bad = q.copy()
    bad[5] = S2.exp(q[5], S2.proj(q[5], np.array([0.0, 0.0, 0.5])))
    w = np.ones(30)
    w[5] = 0.0
    fit = fit_spline(S2, t, bad, truth.spec, weights=w)
    assert np.max(S2.dist(fit.spline.points, truth.points)) < 1e-6


def test_constant_data_give_constant_spline():
    p = S2.exp(S2.origin(), np.array([0.0, 0.2, -0.1]))
    q = np.repeat(p[None], 10, axis=0)
    t = np.linspace(0, 1, 10)
    init = initialize_control_points(S2, 2 * t, q, SplineSpec((3, 3)))
    assert np.allclose(init.points, p)
    fit = fit_spline(S2, t, q, SplineSpec((3, 3)))
    assert fit.sse == 0.0 and fit.r2 == 1.0 and fit.converged


def test_underdetermined_fit_warns():
    t = np.array([0.0, 0.5, 1.0])
    q = np.array([[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]])
    with pytest.warns(UserWarning, match="underdetermined"):
        fit = fit_spline(Euclidean(2), t, q, SplineSpec((3, 3)))
    assert fit.sse < 1e-16


def test_stopping_reports():
    rng = np.random.default_rng(7)
    truth, t, q = _problem(S2, rng, sigma=0.05)
    fit = fit_spline(S2, t, q, truth.spec, FitOptions(max_iter=0))
    assert not fit.converged and fit.iterations == 0 and "stopped after 0" in fit.message
    assert isinstance(fit, FitReport)
    # a line search that may not shrink fails gracefully instead of raising
    fit = fit_spline(S2, t, q, truth.spec, FitOptions(initial_step=50.0, max_halvings=0,
                                                      method="gradient_descent"))
    assert not fit.converged and "line search failed" in fit.message


def test_option_validation():
    for bad in ({"max_iter": -1}, {"grad_tol": 0}, {"armijo_c": 1.5}, {"shrink": 0},
                {"gradient": "x"}, {"method": "x"}, {"t_scale": "x"}):
        with pytest.raises(ValueError):
            FitOptions(**bad)


def test_sample_validation():
    with pytest.raises(GeometryError):
        fit_spline(S2, [0.0, 1.0], np.array([[1.0, 0, 0]]), SplineSpec((1,)))
    with pytest.raises(GeometryError):
        fit_spline(S2, [0.0, 1.0], np.array([[1.0, 0, 0], [2.0, 0, 0]]), SplineSpec((1,)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_is_rotation_equivariant(seed):
    rng = np.random.default_rng(seed)
    truth, t, q = _problem(S2, rng, SplineSpec((3,)), n=15, sigma=0.05)
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    a = fit_spline(S2, t, q, truth.spec, FitOptions(grad_tol=1e-11))
    b = fit_spline(S2, t, q @ Q.T, truth.spec, FitOptions(grad_tol=1e-11))
    assert np.allclose(b.spline.points, a.spline.points @ Q.T, atol=1e-7)
    assert b.r2 == pytest.approx(a.r2, abs=1e-9)


def test_likelihood_prefers_least_squares_fit():
    rng = np.random.default_rng(8)
    truth, t, q = _problem(S2, rng, sigma=0.05)
    fit = fit_spline(S2, t, q, truth.spec)
    s = 2 * t
    assert log_likelihood_delta(fit.spline, truth, 0.05, s, q) >= 0
    assert log_likelihood_delta(truth, truth, 0.05, s, q) == 0
    with pytest.raises(ValueError):
        log_likelihood_delta(truth, truth, 0.0, s, q)


# -- transport and normalization ---------------------------------------------------------


def test_transport_along_geodesic_is_exact():
    rng = np.random.default_rng(9)
    p = S2.origin()
    q = S2.exp(p, np.array([0.0, 0.8, 0.3]))
    line = BezierSpline(S2, SplineSpec((1,)), np.stack([p, q]))
    v = S2.random_tangent(rng, p)
    moved = transport_along(line, 0.0, 1.0, v, n_chords=7)
    assert np.allclose(moved[0], S2.transp(p, q, v), atol=1e-12)


def test_transport_along_spline_is_isometric_and_reversible():
    rng = np.random.default_rng(10)
    B = random_spline(S2, SplineSpec((3, 3)), rng, S2.origin(), 0.5)
    s = np.array([0.1, 0.7, 1.9])
    v = S2.random_tangent(rng, B(s))
    out = transport_along(B, s, 1.0, v)
    assert np.allclose(np.linalg.norm(out, axis=-1), np.linalg.norm(v, axis=-1))
    assert np.allclose(out @ B(1.0), 0.0, atol=1e-12)
    back = np.array([transport_along(B, np.array([1.0]), si, o)[0] for si, o in zip(s, out)])
    assert np.allclose(back, v, atol=1e-12)


def test_normalize_groups_bookkeeping():
    rng = np.random.default_rng(11)
    groups = []
    for lo, hi in ((0.0, 4.0), (1.0, 6.0)):
        B = random_spline(S2, SplineSpec((3,)), rng, S2.origin(), 0.4)
        t = np.sort(rng.uniform(lo, hi, 20))
        groups.append((t, noisy_samples(B, (t - t.min()) / (t.max() - t.min()), 0.03, rng)))
    out = normalize_groups(S2, groups, SplineSpec((3,)), t0=2.0)
    for (t, q), g in zip(groups, out):
        assert g.fit.t_offset == t.min()
        assert g.fit.t_factor == pytest.approx(1.0 / (t.max() - t.min()))
        assert np.allclose(g.base, g.fit.spline((2.0 - t.min()) * g.fit.t_factor))
        assert r_squared(g.fit, t, q) == pytest.approx(g.fit.r2)
        assert np.allclose(S2.exp(g.fit.spline((t - t.min()) * g.fit.t_factor), g.residuals), q, atol=1e-12)
    with pytest.raises(DomainError):
        normalize_groups(S2, groups, SplineSpec((3,)), t0=5.0)
