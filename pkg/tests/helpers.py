import numpy as np

from geospline import BezierSpline, Euclidean, SplineSpec


def one_sided_derivatives(f, t, h):
    """Second-order one-sided first derivatives of ``f`` at ``t`` from the left and right."""
    left = (3 * f(t) - 4 * f(t - h) + f(t - 2 * h)) / (2 * h)
    right = (-3 * f(t) + 4 * f(t + h) - f(t + 2 * h)) / (2 * h)
    return left, right


def random_control(M, rng, k, spread=0.6):
    center = M.random_point(rng, M.origin(), 1.0)
    return np.array([M.random_point(rng, center, spread) for _ in range(k + 1)])


def trapezoid(L, per_segment=16):
    """Trapezoid nodes and weights on [0, L]."""
    t = np.linspace(0.0, L, L * per_segment + 1)
    w = np.full(t.size, 1.0 / per_segment)
    w[[0, -1]] *= 0.5
    return t, w


def flat_spline(rng, degrees=(3, 3), dim=2, scale=1.0, closed=False):
    spec = SplineSpec(degrees, closed)
    return BezierSpline(Euclidean(dim), spec, scale * rng.standard_normal((spec.n_free, dim)))
