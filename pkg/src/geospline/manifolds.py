"""Closed-form Riemannian geometry on Euclidean space and the unit sphere.

Points and tangent vectors are plain ndarrays in ambient coordinates, with the
coordinate axis last. Every operation broadcasts over leading axes, so a stack
of points ``(m, n)`` can be paired with one point ``(n,)`` or with another stack.
Geodesic parameters ``t`` broadcast against the leading (non-coordinate) axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, GeometryError

__all__ = [
    "ConvexityGuard",
    "Manifold",
    "Euclidean",
    "Sphere",
    "manifold_from_string",
    "frechet_mean",
]

# tangency / unit-norm tolerance for user-supplied data
_TOL = 1e-9


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _norm(a):
    return np.sqrt(_dot(a, a))


def _param(t):
    return np.asarray(t, dtype=float)[..., None]


def _require_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise GeometryError("non-finite input")


@dataclass(frozen=True)
class ConvexityGuard:
    """Geodesic ball radius inside which multi-point constructions are well posed.

    On the sphere the default ``pi/2 - 1e-6`` is a normal convex neighbourhood:
    every pair of points in such a ball is joined by a unique minimizing geodesic
    that stays in the ball.
    """

    radius_bound: float = math.inf

    def contains(self, manifold: "Manifold", points) -> bool:
        if math.isinf(self.radius_bound):
            return bool(np.all(np.isfinite(points)))
        pts = np.asarray(points, dtype=float).reshape(-1, manifold.ambient_dim)
        if not np.all(np.isfinite(pts)):
            return False
        # extrinsic mean as ball centre; a sufficient test, not the minimax ball
        c = pts.sum(axis=0)
        nc = np.linalg.norm(c)
        if nc < 1e-12:
            return False
        return bool(np.max(manifold.dist(c / nc, pts)) < self.radius_bound)

    def check(self, manifold: "Manifold", points, what: str = "points") -> None:
        if not self.contains(manifold, points):
            raise DomainError(
                f"{what} do not lie in a common geodesic ball of radius "
                f"{self.radius_bound:.6g}"
            )


class Manifold:
    """Common interface of the two supported model spaces."""

    kind: str = ""

    def __init__(self, dim: int, guard: ConvexityGuard | None = None):
        dim = int(dim)
        if dim < 1:
            raise GeometryError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self.guard = guard if guard is not None else self._default_guard()

    def _default_guard(self) -> ConvexityGuard:
        return ConvexityGuard()

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.dim})"

    def __str__(self):
        return f"{self.kind}:{self.dim}"

    def __eq__(self, other):
        return isinstance(other, Manifold) and (self.kind, self.dim) == (other.kind, other.dim)

    def __hash__(self):
        return hash((self.kind, self.dim))

    # -- primitives every model space provides --------------------------------

    def inner(self, p, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, p, v):
        return np.linalg.norm(v, axis=-1)

    def geopoint(self, p, q, t):
        """Point ``gamma(t; p, q)``; ``t`` outside [0, 1] extends the geodesic."""
        return self.exp(p, _param(t) * self.log(p, q))

    def dexp(self, p, v, w):
        """Differential of ``exp_p`` at ``v`` applied to ``w``."""
        return self.jacobi_field(p, v, np.zeros_like(np.asarray(w, dtype=float)), w, 1.0)

    def dgeo_start(self, p, q, t, X):
        """Derivative of ``gamma(t; p, q)`` with respect to ``p``, applied to ``X``."""
        return self.dgeo_end(q, p, 1.0 - np.asarray(t, dtype=float), X)

    def adj_dgeo_start(self, p, q, t, Z):
        """Adjoint of :meth:`dgeo_start`: maps ``Z`` at ``gamma(t)`` back to ``T_p``."""
        return self.adj_dgeo_end(q, p, 1.0 - np.asarray(t, dtype=float), Z)

    def check_point(self, p, what="point"):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.ambient_dim,):
            raise GeometryError(
                f"{what} has {p.shape[-1] if p.ndim else 0} coordinates, "
                f"{self} needs {self.ambient_dim}"
            )
        _require_finite(p)
        return p

    def random_point(self, rng, center=None, spread=1.0):
        """Random point within geodesic distance ``spread`` of ``center``."""
        if center is None:
            center = self.origin()
        v = self.random_tangent(rng, center)
        r = spread * rng.uniform() ** (1.0 / self.dim)
        nv = np.linalg.norm(v)
        return self.exp(center, v * (r / nv if nv > 0 else 0.0))

    def random_tangent(self, rng, p, scale=1.0):
        p = np.asarray(p, dtype=float)
        return scale * self.proj(p, rng.standard_normal(p.shape))


class Euclidean(Manifold):
    """Flat space R^d; doubles as the brute-force reference for every algorithm."""

    kind = "euclidean"

    @property
    def ambient_dim(self):
        return self.dim

    def origin(self):
        return np.zeros(self.dim)

    def proj(self, p, v):
        return np.array(v, dtype=float)

    def exp(self, p, v):
        p, v = np.asarray(p, dtype=float), np.asarray(v, dtype=float)
        _require_finite(p, v)
        return p + v

    def log(self, p, q):
        p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
        _require_finite(p, q)
        return q - p

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float), axis=-1)

    def transp(self, p, q, v):
        p, q, v = (np.asarray(a, dtype=float) for a in (p, q, v))
        return np.broadcast_to(v, np.broadcast_shapes(p.shape, q.shape, v.shape)).copy()

    def curvature(self, p, x, y, z):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z)))

    def jacobi_field(self, p, v, a, b, t=1.0):
        return np.asarray(a, dtype=float) + _param(t) * np.asarray(b, dtype=float)

    def dexp(self, p, v, w):
        return np.array(w, dtype=float)

    def dexp_inv(self, p, v, u):
        return np.array(u, dtype=float)

    def dgeo_end(self, p, q, t, Y):
        return _param(t) * np.asarray(Y, dtype=float)

    def adj_dgeo_end(self, p, q, t, Z):
        return _param(t) * np.asarray(Z, dtype=float)

    def tangent_basis(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(self.dim), p.shape[:-1] + (self.dim, self.dim)).copy()


class Sphere(Manifold):
    """Unit sphere S^d embedded in R^(d+1) with the round metric."""

    kind = "sphere"

    def _default_guard(self):
        return ConvexityGuard(math.pi / 2 - 1e-6)

    @property
    def ambient_dim(self):
        return self.dim + 1

    def origin(self):
        e = np.zeros(self.dim + 1)
        e[0] = 1.0
        return e

    def check_point(self, p, what="point"):
        p = super().check_point(p, what)
        if np.any(np.abs(np.linalg.norm(p, axis=-1) - 1.0) > _TOL):
            raise GeometryError(f"{what} is not on the unit sphere")
        return p

    def proj(self, p, v):
        p, v = np.asarray(p, dtype=float), np.asarray(v, dtype=float)
        return v - _dot(v, p) * p

    def exp(self, p, v):
        p, v = np.asarray(p, dtype=float), np.asarray(v, dtype=float)
        _require_finite(p, v)
        nv = _norm(v)
        if np.any(np.abs(_dot(p, v)) > 1e-8 * (1.0 + nv)):
            raise GeometryError("vector is not tangent at its base point")
        q = np.cos(nv) * p + np.sinc(nv / np.pi) * v
        return q / _norm(q)

    def _log_raw(self, p, q):
        # (q - p) projected, accurate for nearby points
        d = q - p
        w = d - _dot(d, p) * p
        sw = _norm(w)
        theta = np.arctan2(sw, _dot(p, q))
        return w, sw, theta

    def log(self, p, q):
        p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
        _require_finite(p, q)
        w, sw, theta = self._log_raw(p, q)
        if np.any(theta >= 2.0 * self.guard.radius_bound):
            raise DomainError("points are (nearly) antipodal; logarithm is not unique")
        scale = np.where(sw > 1e-300, theta / np.where(sw > 1e-300, sw, 1.0), 1.0)
        return scale * w

    def dist(self, p, q):
        p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
        return self._log_raw(p, q)[2][..., 0]

    def _frame(self, p, q):
        """Distance and unit initial direction of the geodesic from p to q (zero if p == q)."""
        v = self.log(p, q)
        theta = _norm(v)
        e = v / np.where(theta > 0, theta, 1.0)
        return theta, e

    def transp(self, p, q, v):
        p, q, v = (np.asarray(a, dtype=float) for a in (p, q, v))
        theta, e = self._frame(p, q)
        ve = _dot(v, e)
        return v + (np.cos(theta) - 1.0) * ve * e - np.sin(theta) * ve * p

    def curvature(self, p, x, y, z):
        x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
        return _dot(y, z) * x - _dot(x, z) * y

    def jacobi_field(self, p, v, a, b, t=1.0):
        """Jacobi field along ``s -> exp_p(s v)`` with ``J(0) = a``, ``J'(0) = b``, at ``s = t``."""
        p, v, a, b = (np.asarray(x, dtype=float) for x in (p, v, a, b))
        s = _param(t)
        theta = _norm(v)
        e = v / np.where(theta > 0, theta, 1.0)
        tang = -np.sin(s * theta) * p + np.cos(s * theta) * e
        at, bt = _dot(a, e), _dot(b, e)
        an, bn = a - at * e, b - bt * e
        return (at + s * bt) * tang + np.cos(s * theta) * an + s * np.sinc(s * theta / np.pi) * bn

    def dexp_inv(self, p, v, u):
        p, v, u = (np.asarray(x, dtype=float) for x in (p, v, u))
        theta = _norm(v)
        if np.any(theta >= np.pi):
            raise DomainError("dexp is singular for |v| >= pi on the unit sphere")
        e = v / np.where(theta > 0, theta, 1.0)
        tang = -np.sin(theta) * p + np.cos(theta) * e
        b = _dot(u, tang)
        return b * e + (u - b * tang) / np.sinc(theta / np.pi)

    @staticmethod
    def _ratio(s, theta):
        # sin(s theta) / sin(theta) with its limit s at theta = 0
        st = np.sin(theta)
        safe = np.abs(st) > 1e-12
        return np.where(safe, np.sin(s * theta) / np.where(safe, st, 1.0), s)

    def dgeo_end(self, p, q, t, Y):
        p, q, Y = (np.asarray(x, dtype=float) for x in (p, q, Y))
        s = _param(t)
        theta, e = self._frame(p, q)
        t1 = -np.sin(theta) * p + np.cos(theta) * e
        ts = -np.sin(s * theta) * p + np.cos(s * theta) * e
        a = _dot(Y, t1)
        return a * s * ts + self._ratio(s, theta) * (Y - a * t1)

    def adj_dgeo_end(self, p, q, t, Z):
        p, q, Z = (np.asarray(x, dtype=float) for x in (p, q, Z))
        s = _param(t)
        theta, e = self._frame(p, q)
        t1 = -np.sin(theta) * p + np.cos(theta) * e
        ts = -np.sin(s * theta) * p + np.cos(s * theta) * e
        b = _dot(Z, ts)
        return b * s * t1 + self._ratio(s, theta) * (Z - b * ts)

    def tangent_basis(self, p):
        """Orthonormal basis of ``T_p S^d`` as rows, shape ``(..., d, d+1)``."""
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, self.ambient_dim)
        out = np.empty((flat.shape[0], self.dim, self.ambient_dim))
        eye = np.eye(self.ambient_dim)
        for i, x in enumerate(flat):
            q, _ = np.linalg.qr(np.column_stack([x, eye]))
            out[i] = q[:, 1:].T
        return out.reshape(p.shape[:-1] + (self.dim, self.ambient_dim))


def manifold_from_string(text: str) -> Manifold:
    """Parse ``"euclidean:d"`` or ``"sphere:d"``."""
    kind, _, dim = text.partition(":")
    try:
        d = int(dim)
    except ValueError:
        raise GeometryError(f"bad manifold spec {text!r}; expected kind:dim") from None
    if kind == "euclidean":
        return Euclidean(d)
    if kind == "sphere":
        return Sphere(d)
    raise GeometryError(f"unknown manifold kind {kind!r}")


def frechet_mean(manifold: Manifold, points, weights=None, tol=1e-10, max_iter=200):
    """Weighted Fréchet mean by the fixed-point iteration ``m <- exp_m(mean log_m q_i)``.

    ``points`` has the sample axis first; any further leading axes are independent
    problems solved together, e.g. shape ``(N, K, n)`` gives ``K`` means.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim < 2 or pts.shape[0] == 0:
        raise GeometryError("frechet_mean needs a nonempty sequence of points")
    _require_finite(pts)
    if weights is None:
        w = np.ones(pts.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (pts.shape[0],) or np.any(w < 0) or w.sum() <= 0:
            raise GeometryError("weights must be nonnegative, one per point, not all zero")
    w = w.reshape((-1,) + (1,) * (pts.ndim - 1))
    wsum = w.sum()
    m = (w * pts).sum(axis=0) / wsum
    if isinstance(manifold, Euclidean):
        return m
    m = m / _norm(m)
    for _ in range(max_iter):
        step = (w * manifold.log(m, pts)).sum(axis=0) / wsum
        m = manifold.exp(m, step)
        if np.max(np.linalg.norm(step, axis=-1)) <= tol:
            return m
    raise ConvergenceError(f"Fréchet mean did not converge in {max_iter} iterations")
