"""Sasaki geometry of the tangent bundle and the induced statistics of cubic splines.

Points of ``TM`` are pairs ``(p, u)`` and tangent vectors at them pairs ``(v, w)``
of horizontal and vertical parts, both stored as vectors in ``T_p M``. All
functions broadcast over leading axes.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .bezier import BezierSpline, CubicBoundaryData, cubic_decode, cubic_encode
from .errors import ConvergenceError, GeometryError
from .manifolds import Manifold, frechet_mean

__all__ = [
    "TangentBundlePoint",
    "TangentBundleVector",
    "sasaki_inner",
    "sasaki_exp",
    "sasaki_log",
    "sasaki_spline_mean",
    "bundle_to_generators",
    "generators_to_bundle",
]

DEFAULT_STEPS = 100


class TangentBundlePoint(NamedTuple):
    p: np.ndarray
    u: np.ndarray


class TangentBundleVector(NamedTuple):
    base: TangentBundlePoint
    v: np.ndarray  # horizontal part
    w: np.ndarray  # vertical part


def sasaki_inner(M: Manifold, base: TangentBundlePoint, a, b):
    """``<v_a, v_b> + <w_a, w_b>``; ``a`` and ``b`` are ``(v, w)`` pairs at ``base``."""
    return M.inner(base.p, a[0], b[0]) + M.inner(base.p, a[1], b[1])


def _check_pair(M, p, u, what):
    p = M.check_point(np.asarray(p, dtype=float), what)
    u = np.asarray(u, dtype=float)
    if u.shape != p.shape:
        raise GeometryError(f"{what}: vector shape {u.shape} does not match point shape {p.shape}")
    tu = M.proj(p, u)
    if np.max(np.abs(u - tu), initial=0.0) > 1e-6 * (1.0 + np.max(np.abs(u), initial=0.0)):
        raise GeometryError(f"{what}: vector is not tangent at its point")
    return p, tu


def sasaki_exp(M: Manifold, base: TangentBundlePoint, v, w, steps: int = DEFAULT_STEPS,
               return_path: bool = False):
    """Shoot the Sasaki geodesic from ``base`` with initial velocity ``(v, w)``.

    Forward Euler with step ``1/steps`` on the geodesic equations
    ``nabla_v v = -R(u, w) v`` and ``nabla_v w = 0``, moving vectors between
    consecutive foot points by parallel transport.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p, u = _check_pair(M, base.p, base.u, "base")
    v, w = M.proj(p, np.asarray(v, dtype=float)), M.proj(p, np.asarray(w, dtype=float))
    eps = 1.0 / steps
    path = [(p, u)]
    for _ in range(steps):
        p_next = M.exp(p, eps * v)
        u, v, w = (
            M.proj(p_next, M.transp(p, p_next, x))
            for x in (u + eps * w, v - eps * M.curvature(p, u, w, v), w)
        )
        p = p_next
        if return_path:
            path.append((p, u))
    M.guard.check(M, p, "Sasaki geodesic end point")
    if return_path:
        return TangentBundlePoint(np.stack([a for a, _ in path]), np.stack([b for _, b in path]))
    return TangentBundlePoint(p, u)


def _velocities(M, P, U, ell):
    """Forward differences of a discrete path: ``v_k``, ``w_k`` at ``p_k`` for ``k < ell``."""
    V = ell * M.log(P[:-1], P[1:])
    W = ell * (M.transp(P[1:], P[:-1], U[1:]) - U[:-1])
    return V, W


def _residuals(M, P, U, ell):
    """Mismatch of every interior node with one Euler step from its predecessor.

    Zero exactly when the path is the forward-Euler Sasaki geodesic through its
    first two nodes; in flat space this is the energy gradient up to the factor ``ell``.
    """
    V, W = _velocities(M, P, U, ell)
    eps = 1.0 / ell
    a, b = P[:-2], P[1:-1]
    pred_v = M.transp(a, b, V[:-1] - eps * M.curvature(a, U[:-2], W[:-1], V[:-1]))
    pred_w = M.transp(a, b, W[:-1])
    return -(V[1:] - pred_v), -(W[1:] - pred_w), V, W


def _dirichlet_inverse(ell):
    i = np.arange(1, ell)
    return np.minimum.outer(i, i) * (ell - np.maximum.outer(i, i)) / ell


def sasaki_log(M: Manifold, a: TangentBundlePoint, b: TangentBundlePoint, steps: int = DEFAULT_STEPS,
               tol: float = 1e-10, max_iter: int = 500) -> TangentBundleVector:
    """Initial velocity ``(v, w)`` of the discrete Sasaki geodesic from ``a`` to ``b``.

    A path of ``steps + 1`` nodes, started on the base geodesic with linearly
    blended and transported vectors, is relaxed until every interior node follows
    from its predecessor by one Euler step of :func:`sasaki_exp`. Steps are
    preconditioned with the inverse discrete Laplacian, so flat space converges in
    one iteration; with matching ``steps`` the result is inverse to :func:`sasaki_exp`.
    """
    ell = int(steps)
    if ell < 1:
        raise ValueError("steps must be >= 1")
    p0, u0 = _check_pair(M, a.p, a.u, "start")
    p1, u1 = _check_pair(M, b.p, b.u, "end")
    p0, u0, p1, u1 = np.broadcast_arrays(p0, u0, p1, u1)
    M.guard.check(M, np.stack([p0, p1]), "Sasaki log end points")
    s = np.linspace(0.0, 1.0, ell + 1).reshape((-1,) + (1,) * p0.ndim)
    P = M.geopoint(p0[None], p1[None], s[..., 0])
    U = M.transp(p0[None], P, (1 - s) * u0[None]) + M.transp(p1[None], P, s * u1[None])
    if ell > 1:
        Ainv = _dirichlet_inverse(ell)
        # every batch element is its own problem with its own step size
        norm = lambda gp, gu: np.sqrt(np.sum(gp**2 + gu**2, axis=(0, -1)))  # noqa: E731
        gp, gu, _, _ = _residuals(M, P, U, ell)
        res = norm(gp, gu)
        target = tol * (1.0 + M.dist(p0, p1) + np.linalg.norm(u1 - u0, axis=-1))
        it = 0
        while np.any(res > target):
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"Sasaki log did not converge in {max_iter} iterations "
                    f"(residual {np.max(res / target) * tol:.3g})"
                )
            dp = -np.tensordot(Ainv, gp, axes=1) / ell
            du = -np.tensordot(Ainv, gu, axes=1) / ell
            step = np.ones(res.shape)
            pending = res > target
            inner = P[1:-1]
            for _ in range(40):
                h = step[None, ..., None]
                moved = M.exp(inner, h * M.proj(inner, dp))
                P_t = np.concatenate([P[:1], moved, P[-1:]])
                U_t = np.concatenate([
                    U[:1], M.transp(inner, moved, M.proj(inner, U[1:-1] + h * du)), U[-1:]
                ])
                gp_t, gu_t, _, _ = _residuals(M, P_t, U_t, ell)
                res_t = norm(gp_t, gu_t)
                ok = pending & (res_t < res)
                sel = ok[None, ..., None]
                P, U = np.where(sel, P_t, P), np.where(sel, U_t, U)
                gp, gu = np.where(sel, gp_t, gp), np.where(sel, gu_t, gu)
                res = np.where(ok, res_t, res)
                pending &= ~ok
                if not np.any(pending):
                    break
                step = np.where(pending, 0.5 * step, step)
            else:
                raise ConvergenceError(
                    f"Sasaki log stalled at residual {np.max(np.where(pending, res, 0)):.3g}"
                )
    V, W = _velocities(M, P[:2], U[:2], ell)
    return TangentBundleVector(TangentBundlePoint(p0, u0), V[0], W[0])


# -- cubic splines as points of (TM)^m ---------------------------------------------


def generators_to_bundle(spline: BezierSpline, generators):
    """Sasaki tangent vector ``(v_i, w_i)`` per knot induced by control-point generators.

    ``w_i`` is the covariant variation of ``log_{p_i} p^{(i)}_1`` (one third of the
    knot velocity) and comes from the Jacobi field with the prescribed end values.
    """
    M = spline.manifold
    data = cubic_encode(spline)
    nodes_d = spline._node_tangents(np.asarray(generators, dtype=float))
    grids = spline.spec.program.grids
    m = data.points.shape[0]
    V = np.zeros(data.points.shape)
    W = np.zeros(data.points.shape)
    for i in range(m):
        if i < len(grids):
            g = grids[i]
            V[i] = nodes_d[g[0]]
            X, Y, U = V[i], nodes_d[g[1]], data.vectors[i]
            sign = 1.0
        else:  # end knot of an open spline: u = -log_{p_3} p_2
            g = grids[-1]
            V[i] = nodes_d[g[3]]
            X, Y, U = V[i], nodes_d[g[2]], -data.vectors[i]
            sign = -1.0
        rest = M.jacobi_field(data.points[i], U, X, np.zeros_like(X), 1.0)
        W[i] = sign * M.dexp_inv(data.points[i], U, Y - rest)
    return data, V, W


def bundle_to_generators(data: CubicBoundaryData, V, W):
    """Inverse of :func:`generators_to_bundle`: generators at the free control points."""
    M = data.manifold
    P, U = data.points, data.vectors
    L = data.n_segments
    gens = []
    if not data.closed:
        gens += [V[0], M.jacobi_field(P[0], U[0], V[0], W[0], 1.0)]
    for i in range(L):
        j = (i + 1) % P.shape[0]
        gens += [M.jacobi_field(P[j], -U[j], V[j], -W[j], 1.0), V[j]]
    return np.array(gens)


def sasaki_spline_mean(splines, iters: int = 50, steps: int = DEFAULT_STEPS, tol: float = 1e-8,
                       return_logs: bool = False):
    """Fréchet mean of cubic splines under the Sasaki metric on their knot tuples.

    Iterates ``mean <- exp_mean(average of log_mean(B_s))`` componentwise on
    ``(TM)^m`` and stops when the averaged update has norm below ``tol``.
    """
    splines = list(splines)
    if not splines:
        raise GeometryError("need at least one spline")
    first = splines[0]
    for s in splines[1:]:
        if s.spec != first.spec or s.manifold != first.manifold:
            raise GeometryError("all splines must share spec and manifold")
    M = first.manifold
    enc = [cubic_encode(s) for s in splines]
    P = np.stack([e.points for e in enc])  # (S, m, n)
    U = np.stack([e.vectors for e in enc])
    pm = frechet_mean(M, P)
    um = M.transp(P, pm[None], U).mean(axis=0)
    def logs_at(pm, um):
        return sasaki_log(M, TangentBundlePoint(pm[None], um[None]), TangentBundlePoint(P, U), steps)

    logs = logs_at(pm, um)
    for _ in range(iters):
        v, w = logs.v.mean(axis=0), logs.w.mean(axis=0)
        if np.sqrt(np.sum(v**2) + np.sum(w**2)) < tol:
            break
        pm, um = sasaki_exp(M, TangentBundlePoint(pm, um), v, w, steps)
        logs = logs_at(pm, um)
    mean = cubic_decode(CubicBoundaryData(M, pm, um, first.spec.closed))
    if return_logs:
        return mean, logs
    return mean
