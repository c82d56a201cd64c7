"""Generalized Bézier curves and C1 Bézier splines built by geodesic de Casteljau.

A spline is stored by its independent control points only. The remaining
("dependent") control points follow from the C1 conditions at the knots: the
connecting point is shared, and the successor of a connection lies on the
extension of the geodesic through the predecessor and the connecting point.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GeometryError, SplineConstructionError
from .manifolds import Manifold

__all__ = [
    "SplineSpec",
    "BezierSpline",
    "CubicBoundaryData",
    "bernstein_eval",
    "decasteljau",
    "derive_dependent_points",
    "spline_eval",
    "spline_differential",
    "boundary_derivatives",
    "control_from_boundary",
    "cubic_encode",
    "cubic_decode",
]

# control points closer than this count as coincident
COINCIDENCE_TOL = 1e-12
# identification of splines with control points is only established up to degree 5
MAX_PROVEN_DEGREE = 5


@dataclass(frozen=True)
class _Program:
    """How to compute every control point of a spline from its free ones."""

    n_free: int
    n_nodes: int
    # (node, predecessor, connecting point, extension parameter), in evaluation order
    derived: tuple
    # node ids of each segment's control points
    grids: tuple
    # (segment, local index) of each free point
    free_slots: tuple


def _build_program(degrees, closed) -> _Program:
    L = len(degrees)
    slots = [(i, r) for i in range(L) for r in range(degrees[i] + 1)]
    index = {s: n for n, s in enumerate(slots)}
    parent = list(range(len(slots)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    links = [(i, i + 1) for i in range(L - 1)]
    if closed:
        links.append((L - 1, 0))
    derivations = []
    for i, j in links:
        ki, kj = degrees[i], degrees[j]
        a, b = find(index[(i, ki)]), find(index[(j, 0)])
        parent[b] = a
        derivations.append(((j, 1), (i, ki - 1), (i, ki), (ki + kj) / kj))

    if closed:
        free = [(i, r) for i in range(L) for r in range(2, degrees[i] + 1)]
    else:
        free = [(0, r) for r in range(degrees[0] + 1)]
        free += [(i, r) for i in range(1, L) for r in range(2, degrees[i] + 1)]

    node_of = {}
    for n, s in enumerate(free):
        root = find(index[s])
        if root in node_of:
            raise SplineConstructionError(f"free control points {s} coincide by the C1 conditions")
        node_of[root] = n
    n_nodes = len(free)
    pending = []
    for target, pred, joint, kbar in derivations:
        root = find(index[target])
        if root in node_of:
            raise SplineConstructionError(f"control point {target} is both free and dependent")
        node_of[root] = n_nodes
        n_nodes += 1
        pending.append((root, find(index[pred]), find(index[joint]), kbar))
    for s in slots:
        if find(index[s]) not in node_of:
            raise SplineConstructionError(f"control point {s} is undetermined")

    # resolve dependent points in an order where their inputs are known
    known = set(range(len(free)))
    order = []
    while pending:
        ready = [d for d in pending if node_of[d[1]] in known and node_of[d[2]] in known]
        if not ready:
            raise SplineConstructionError(
                f"degrees {tuple(degrees)} (closed) give cyclic C1 conditions; "
                "the dependent control points cannot be resolved"
            )
        for d in ready:
            pending.remove(d)
            node = node_of[d[0]]
            known.add(node)
            order.append((node, node_of[d[1]], node_of[d[2]], d[3]))
    grids = tuple(
        tuple(node_of[find(index[(i, r)])] for r in range(degrees[i] + 1)) for i in range(L)
    )
    return _Program(len(free), n_nodes, tuple(order), grids, tuple(free))


@dataclass(frozen=True)
class SplineSpec:
    """Segment degrees ``(k_0, ..., k_{L-1})`` and whether the spline is closed."""

    degrees: tuple
    closed: bool = False

    def __post_init__(self):
        degrees = tuple(int(k) for k in self.degrees)
        object.__setattr__(self, "degrees", degrees)
        if len(degrees) == 0:
            raise SplineConstructionError("a spline needs at least one segment")
        if any(k < 1 for k in degrees):
            raise SplineConstructionError(f"segment degrees must be >= 1, got {degrees}")
        if self.closed and sum(degrees) <= len(degrees):
            raise SplineConstructionError("closed splines need sum(degrees) > number of segments")
        if max(degrees) > MAX_PROVEN_DEGREE:
            warnings.warn(
                f"degree {max(degrees)} exceeds {MAX_PROVEN_DEGREE}; the control-point "
                "identification used by the statistics on spline spaces is only "
                "established up to degree 5",
                stacklevel=3,
            )
        self.program  # validates closed-spline solvability eagerly

    @property
    def n_segments(self) -> int:
        return len(self.degrees)

    @property
    def n_free(self) -> int:
        """Number of independent control points, ``K + 1`` (open) or ``K̊ + 1`` (closed)."""
        s, L = sum(self.degrees), len(self.degrees)
        return s - L if self.closed else s - L + 2

    @cached_property
    def program(self) -> _Program:
        prog = _build_program(self.degrees, self.closed)
        assert prog.n_free == self.n_free
        return prog

    @classmethod
    def parse(cls, text: str, closed: bool = False) -> "SplineSpec":
        """Build from a comma-separated degree list such as ``"3,3"``."""
        try:
            degrees = tuple(int(x) for x in str(text).split(",") if x.strip())
        except ValueError:
            raise SplineConstructionError(f"bad degree list {text!r}") from None
        return cls(degrees, closed)


# -- de Casteljau -----------------------------------------------------------------


def bernstein_eval(control, t):
    """Euclidean Bézier curve in Bernstein form; reference for :func:`decasteljau`."""
    control = np.asarray(control, dtype=float)
    t = np.asarray(t, dtype=float)
    k = control.shape[0] - 1
    tt = t[..., None]
    out = np.zeros(t.shape + control.shape[1:])
    for j in range(k + 1):
        out = out + math.comb(k, j) * (1 - tt) ** (k - j) * tt**j * control[j]
    return out


def _dc_levels(M: Manifold, control, t):
    """All intermediate de Casteljau levels for parameters ``t`` of shape ``(m,)``.

    Level ``r`` has shape ``(m, k + 1 - r, n)``.
    """
    tt = t[:, None]
    level = np.broadcast_to(control, (t.shape[0],) + control.shape)
    levels = [level]
    for _ in range(control.shape[0] - 1):
        level = M.geopoint(level[:, :-1], level[:, 1:], tt)
        levels.append(level)
    return levels


def _dc_forward(M, levels, t, dcontrol):
    """Push control-point perturbations ``dcontrol`` (``(..., m, k+1, n)``) through the levels."""
    tt = t[:, None]
    d = dcontrol
    for lev in levels[:-1]:
        a, b = lev[:, :-1], lev[:, 1:]
        d = M.dgeo_start(a, b, tt, d[..., :-1, :]) + M.dgeo_end(a, b, tt, d[..., 1:, :])
    return d[..., 0, :]


def _dc_backward(M, levels, t, adj):
    """Adjoint of :func:`_dc_forward`: covectors ``(m, n)`` at the curve to ``(k+1, n)``."""
    tt = t[:, None]
    g = adj[:, None, :]
    for lev in reversed(levels[:-1]):
        a, b = lev[:, :-1], lev[:, 1:]
        nxt = np.zeros(lev.shape)
        nxt[:, :-1] += M.adj_dgeo_start(a, b, tt, g)
        nxt[:, 1:] += M.adj_dgeo_end(a, b, tt, g)
        g = nxt
    return g.sum(axis=0)


def decasteljau(M: Manifold, control, t):
    """Evaluate the generalized Bézier curve with ``control`` points at ``t``.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (n,)``.
    """
    control = M.check_point(np.asarray(control, dtype=float), "control points")
    if control.ndim != 2 or control.shape[0] < 1:
        raise GeometryError("control points must have shape (k+1, n)")
    M.guard.check(M, control, "control points")
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    return _dc_levels(M, control, flat)[-1][:, 0].reshape(t.shape + control.shape[-1:])


# -- splines ----------------------------------------------------------------------


class BezierSpline:
    """C1 Bézier spline given by its independent control points.

    ``points`` are ordered segment by segment, as
    ``(p^0_0, ..., p^0_{k_0}, p^1_2, ..., p^1_{k_1}, ...)`` for open splines; closed
    splines drop ``p^0_0`` and ``p^0_1``, which follow from the wrap-around condition.
    """

    def __init__(self, manifold: Manifold, spec: SplineSpec, points, check: bool = True):
        self.manifold = manifold
        self.spec = spec
        pts = np.array(points, dtype=float)
        if pts.shape != (spec.n_free, manifold.ambient_dim):
            raise GeometryError(
                f"{spec} on {manifold} needs control points of shape "
                f"{(spec.n_free, manifold.ambient_dim)}, got {pts.shape}"
            )
        if check:
            manifold.check_point(pts, "control points")
        pts.flags.writeable = False
        self.points = pts
        nodes = np.empty((spec.program.n_nodes, manifold.ambient_dim))
        nodes[: spec.n_free] = pts
        for node, a, b, kbar in spec.program.derived:
            nodes[node] = manifold.geopoint(nodes[a], nodes[b], kbar)
        if check:
            try:
                manifold.guard.check(manifold, nodes, "spline control points")
            except DomainError as exc:
                raise SplineConstructionError(str(exc)) from None
        nodes.flags.writeable = False
        self._nodes = nodes

    def __repr__(self):
        kind = "closed " if self.spec.closed else ""
        return f"BezierSpline({kind}{self.spec.degrees} on {self.manifold})"

    @property
    def n_segments(self) -> int:
        return self.spec.n_segments

    @property
    def domain_length(self) -> float:
        return float(self.spec.n_segments)

    @property
    def grids(self):
        """Full control points of each segment, dependent ones included."""
        return [self._nodes[list(g)] for g in self.spec.program.grids]

    def with_points(self, points, check=True) -> "BezierSpline":
        return BezierSpline(self.manifold, self.spec, points, check=check)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        L = self.n_segments
        if not np.all(np.isfinite(t)):
            raise GeometryError("non-finite spline parameter")
        if self.spec.closed:
            t = np.mod(t, L)
        elif np.any((t < -1e-12) | (t > L + 1e-12)):
            raise DomainError(f"spline parameter outside [0, {L}]")
        t = np.clip(t, 0.0, L)
        seg = np.clip(np.ceil(t) - 1, 0, L - 1).astype(int)
        return seg, t - seg

    def __call__(self, t):
        return spline_eval(self, t)

    def _segments(self, t):
        """Yield ``(segment, sample indices, local parameters, levels)`` for flat ``t``."""
        seg, local = self._locate(t)
        grids = self.grids
        for i in range(self.n_segments):
            idx = np.flatnonzero(seg == i)
            if idx.size:
                yield i, idx, local[idx], _dc_levels(self.manifold, grids[i], local[idx])

    def _node_tangents(self, generators):
        """Perturbations of all control points induced by free-point perturbations."""
        M = self.manifold
        gen = np.asarray(generators, dtype=float)
        out = np.zeros(gen.shape[:-2] + self._nodes.shape)
        out[..., : self.spec.n_free, :] = gen
        for node, a, b, kbar in self.spec.program.derived:
            pa, pb = self._nodes[a], self._nodes[b]
            out[..., node, :] = M.dgeo_start(pa, pb, kbar, out[..., a, :]) + M.dgeo_end(
                pa, pb, kbar, out[..., b, :]
            )
        return out

    def field(self, generators, t):
        """Tangent field ``sum_j d_{p_j} B(t)[v_j]`` induced by ``generators`` ``(..., K+1, n)``.

        Leading axes of ``generators`` are independent fields; the result has
        shape ``generators.shape[:-2] + t.shape + (n,)``.
        """
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        gen = np.asarray(generators, dtype=float)
        batch = gen.shape[:-2]
        nodes_d = self._node_tangents(gen)
        out = np.zeros(batch + (flat.size, self.manifold.ambient_dim))
        for i, idx, local, levels in self._segments(flat):
            grid_d = nodes_d[..., list(self.spec.program.grids[i]), :]
            grid_d = np.broadcast_to(
                grid_d[..., None, :, :], batch + (idx.size,) + grid_d.shape[-2:]
            )
            out[..., idx, :] = _dc_forward(self.manifold, levels, local, grid_d)
        return out.reshape(batch + t.shape + (self.manifold.ambient_dim,))

    def pullback(self, t, covectors):
        """Adjoint of :meth:`field`: ``sum_i (d B(t_i))^* Z_i`` on the free points."""
        M = self.manifold
        flat = np.asarray(t, dtype=float).reshape(-1)
        Z = np.asarray(covectors, dtype=float).reshape(flat.size, M.ambient_dim)
        adj = np.zeros(self._nodes.shape)
        for i, idx, local, levels in self._segments(flat):
            g = _dc_backward(M, levels, local, Z[idx])
            np.add.at(adj, list(self.spec.program.grids[i]), g)
        for node, a, b, kbar in reversed(self.spec.program.derived):
            pa, pb = self._nodes[a], self._nodes[b]
            adj[a] += M.adj_dgeo_start(pa, pb, kbar, adj[node])
            adj[b] += M.adj_dgeo_end(pa, pb, kbar, adj[node])
        return M.proj(self.points, adj[: self.spec.n_free])

    def tangent_basis(self):
        """Orthonormal tangent basis at every free point, shape ``(K+1, d, n)``."""
        return self.manifold.tangent_basis(self.points)

    def jacobian(self, t):
        """Differential of ``B(t)`` in tangent-basis coordinates, shape ``(m, K+1, d, n)``."""
        basis = self.tangent_basis()
        K1, d, n = basis.shape
        seeds = np.zeros((K1, d, K1, n))
        for j in range(K1):
            seeds[j, :, j, :] = basis[j]
        t = np.asarray(t, dtype=float).reshape(-1)
        J = self.field(seeds, t)  # (K1, d, m, n)
        return np.moveaxis(J, 2, 0)


def derive_dependent_points(spline: BezierSpline):
    """Full control-point grid of each segment, dependent points included."""
    return spline.grids


def spline_eval(spline: BezierSpline, t):
    """Evaluate ``B(t)``; closed splines accept any real ``t`` (taken modulo ``L``)."""
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    out = np.empty((flat.size, spline.manifold.ambient_dim))
    for _, idx, _, levels in spline._segments(flat):
        out[idx] = levels[-1][:, 0]
    return out.reshape(t.shape + (spline.manifold.ambient_dim,))


def spline_differential(spline: BezierSpline, j: int, v, t):
    """``d_{p_j} B(t)[v]`` for the free control point with index ``j``."""
    if not 0 <= j < spline.spec.n_free:
        raise IndexError(f"free control point index {j} out of range 0..{spline.spec.n_free - 1}")
    gen = np.zeros(spline.points.shape)
    gen[j] = v
    return spline.field(gen, t)


# -- boundary derivatives ---------------------------------------------------------


def boundary_derivatives(M: Manifold, control):
    """End velocities and covariant accelerations of a Bézier curve.

    Returns ``(velocity at 0, velocity at 1, acceleration at 0, acceleration at 1)``;
    the accelerations are ``None`` for degree 1.
    """
    P = M.check_point(np.asarray(control, dtype=float), "control points")
    k = P.shape[0] - 1
    if k < 1:
        raise GeometryError("boundary derivatives need degree >= 1")
    M.guard.check(M, P, "control points")
    vel0 = k * M.log(P[0], P[1])
    vel1 = -k * M.log(P[k], P[k - 1])
    if k < 2:
        return vel0, vel1, None, None
    if M.dist(P[0], P[1]) <= COINCIDENCE_TOL:
        u0 = M.log(P[1], P[2])
    else:
        u0 = M.dexp_inv(P[0], M.log(P[0], P[1]), M.log(P[1], P[2]) + M.log(P[1], P[0]))
    if M.dist(P[k - 1], P[k]) <= COINCIDENCE_TOL:
        uk = M.log(P[k - 1], P[k - 2])
    else:
        uk = M.dexp_inv(
            P[k], M.log(P[k], P[k - 1]), M.log(P[k - 1], P[k]) + M.log(P[k - 1], P[k - 2])
        )
    return vel0, vel1, k * (k - 1) * u0, k * (k - 1) * uk


def control_from_boundary(M: Manifold, p0, vel0, acc0, pk, vel1, acc1, k: int):
    """Recover ``(p_1, p_2, p_{k-1}, p_{k-2})`` from end points, velocities and accelerations.

    Inverse of :func:`boundary_derivatives`. For ``k = 2`` the returned ``p_2`` and
    ``p_{k-2}`` are the end points themselves.
    """
    if k < 2:
        raise GeometryError("second-order recovery needs degree >= 2")
    p0, vel0, acc0, pk, vel1, acc1 = (np.asarray(a, dtype=float) for a in (p0, vel0, acc0, pk, vel1, acc1))
    kk = k * (k - 1)
    v0 = vel0 / k
    vk = -vel1 / k
    p1 = M.exp(p0, v0)
    pkm1 = M.exp(pk, vk)
    w0 = acc0 if np.linalg.norm(v0) <= COINCIDENCE_TOL else M.dexp(p0, v0, acc0 + kk * v0)
    wk = acc1 if np.linalg.norm(vk) <= COINCIDENCE_TOL else M.dexp(pk, vk, acc1 + kk * vk)
    p2 = M.exp(p1, w0 / kk)
    pkm2 = M.exp(pkm1, wk / kk)
    return p1, p2, pkm1, pkm2


# -- cubic splines as tangent-bundle tuples ---------------------------------------


@dataclass(frozen=True)
class CubicBoundaryData:
    """Knot points with one third of the spline velocity there, one tuple per knot.

    Open splines carry ``L + 1`` tuples, closed splines ``L`` (the last knot
    repeats the first).
    """

    manifold: Manifold
    points: np.ndarray
    vectors: np.ndarray
    closed: bool = False

    @property
    def n_segments(self) -> int:
        return self.points.shape[0] - (0 if self.closed else 1)


def _require_cubic(spec: SplineSpec):
    if any(k != 3 for k in spec.degrees):
        raise SplineConstructionError(f"tangent-bundle encoding needs cubic segments, got {spec.degrees}")


def cubic_encode(spline: BezierSpline) -> CubicBoundaryData:
    """Map a cubic spline to ``((B(i), B'(i)/3))_i`` in the tangent bundle."""
    _require_cubic(spline.spec)
    M = spline.manifold
    grids = spline.grids
    pts = [g[0] for g in grids]
    vecs = [M.log(g[0], g[1]) for g in grids]
    if not spline.spec.closed:
        last = grids[-1]
        pts.append(last[3])
        vecs.append(-M.log(last[3], last[2]))
    return CubicBoundaryData(M, np.array(pts), np.array(vecs), spline.spec.closed)


def cubic_decode(data: CubicBoundaryData) -> BezierSpline:
    """Inverse of :func:`cubic_encode`."""
    M = data.manifold
    P, U = np.asarray(data.points, dtype=float), np.asarray(data.vectors, dtype=float)
    L = data.n_segments
    free = []
    if not data.closed:
        free += [P[0], M.exp(P[0], U[0])]
    for i in range(L):
        j = (i + 1) % P.shape[0]
        free += [M.exp(P[j], -U[j]), P[j]]
    return BezierSpline(M, SplineSpec((3,) * L, data.closed), np.array(free))
