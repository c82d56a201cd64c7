"""Least-squares regression of Bézier splines to time-indexed manifold data."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bezier import BezierSpline, SplineSpec
from .errors import DomainError, GeometryError
from .manifolds import Manifold, frechet_mean

__all__ = [
    "FitOptions",
    "FitReport",
    "NormalizedGroup",
    "sse",
    "sse_gradient",
    "initialize_control_points",
    "fit_spline",
    "r_squared",
    "log_likelihood_delta",
    "transport_along",
    "normalize_groups",
]


@dataclass(frozen=True)
class FitOptions:
    """Solver settings for :func:`fit_spline`.

    ``method`` is ``"gradient_descent"`` (Riemannian steepest descent) or
    ``"gauss_newton"`` (damped Gauss-Newton on the residual logs); both use the
    same Armijo backtracking and exponential-map retraction. ``t_scale="unit"``
    reads sample times in [0, 1] and stretches them to the spline domain [0, L];
    ``"spline"`` takes them as spline parameters directly.
    """

    max_iter: int = 500
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_halvings: int = 60
    gradient: str = "closed_form"
    method: str = "gauss_newton"
    t_scale: str = "unit"

    def __post_init__(self):
        if self.max_iter < 0 or self.grad_tol <= 0 or self.initial_step <= 0:
            raise ValueError("max_iter must be >= 0 and tolerances/steps positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.shrink < 1:
            raise ValueError("armijo_c and shrink must lie in (0, 1)")
        if self.gradient not in ("closed_form", "finite_difference"):
            raise ValueError(f"unknown gradient mode {self.gradient!r}")
        if self.method not in ("gradient_descent", "gauss_newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.t_scale not in ("unit", "spline"):
            raise ValueError(f"unknown t_scale {self.t_scale!r}")


@dataclass
class FitReport:
    spline: BezierSpline
    sse: float
    r2: float
    iterations: int
    final_grad_norm: float
    converged: bool
    # spline parameter = (sample time - t_offset) * t_factor
    t_factor: float = 1.0
    t_offset: float = 0.0
    sse_history: list = field(default_factory=list, repr=False)
    message: str = ""


def _samples(M: Manifold, t, q, weights=None):
    t = np.asarray(t, dtype=float).reshape(-1)
    q = M.check_point(np.asarray(q, dtype=float), "samples")
    if q.ndim != 2 or q.shape[0] != t.size:
        raise GeometryError(f"need one time per sample; got {t.size} times and {q.shape} points")
    if not np.all(np.isfinite(t)):
        raise GeometryError("non-finite sample time")
    if weights is None:
        w = np.ones(t.size)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != t.shape or np.any(w < 0):
            raise GeometryError("weights must be nonnegative, one per sample")
    return t, q, w


def sse(spline: BezierSpline, t, q, weights=None) -> float:
    """``1/2 sum_i w_i dist(B(t_i), q_i)^2`` with ``t`` in spline parameters."""
    t, q, w = _samples(spline.manifold, t, q, weights)
    d = spline.manifold.dist(spline(t), q)
    return float(0.5 * np.sum(w * d**2))


def _closed_form_gradient(spline, t, q, w):
    M = spline.manifold
    res = M.log(spline(t), q)
    return spline.pullback(t, -w[:, None] * res)


def _fd_gradient(spline, t, q, w, h=1e-6):
    M = spline.manifold
    basis = spline.tangent_basis()
    grad = np.zeros(spline.points.shape)
    for j in range(spline.points.shape[0]):
        for e in basis[j]:
            vals = []
            for s in (h, -h):
                pts = spline.points.copy()
                pts[j] = M.exp(pts[j], s * e)
                vals.append(sse(spline.with_points(pts, check=False), t, q, w))
            grad[j] += (vals[0] - vals[1]) / (2 * h) * e
    return grad


def sse_gradient(spline: BezierSpline, t, q, weights=None, mode: str = "closed_form"):
    """Riemannian gradient of :func:`sse` at every free control point, shape ``(K+1, n)``.

    ``mode="finite_difference"`` differentiates :func:`sse` numerically along an
    orthonormal tangent basis and serves as a check of the closed form.
    """
    t, q, w = _samples(spline.manifold, t, q, weights)
    if mode == "closed_form":
        return _closed_form_gradient(spline, t, q, w)
    if mode == "finite_difference":
        return _fd_gradient(spline, t, q, w)
    raise ValueError(f"unknown gradient mode {mode!r}")


def _free_slot_positions(spec: SplineSpec):
    """Segment and fraction along the segment of every free point."""
    return [(i, r / spec.degrees[i]) for i, r in spec.program.free_slots]


def initialize_control_points(M: Manifold, t, q, spec: SplineSpec) -> BezierSpline:
    """Control points spread along the geodesic polygon through the samples nearest each knot.

    ``t`` are spline parameters in [0, L].
    """
    t, q, _ = _samples(M, t, q)
    L = spec.n_segments
    if q.shape[0] == 0:
        raise GeometryError("no samples")
    if np.all(M.dist(q[0], q) <= 1e-14):
        return BezierSpline(M, spec, np.repeat(q[:1], spec.n_free, axis=0))
    tt = np.mod(t, L) if spec.closed else t
    knots = np.arange(L + 1)
    if spec.closed:
        # distance on the circle of circumference L
        gap = np.abs(tt[None, :] - knots[:L, None])
        gap = np.minimum(gap, L - gap)
        anchors = q[np.argmin(gap, axis=1)]
        anchors = np.concatenate([anchors, anchors[:1]])
    else:
        anchors = q[np.argmin(np.abs(tt[None, :] - knots[:, None]), axis=1)]
    pts = np.array([M.geopoint(anchors[i], anchors[i + 1], s) for i, s in _free_slot_positions(spec)])
    return BezierSpline(M, spec, pts)


def _tangent_coords(spline):
    """Orthonormal tangent bases at the free points, flattened to ``(D, K+1, n)`` seeds."""
    basis = spline.tangent_basis()
    K1, d, n = basis.shape
    seeds = np.zeros((K1 * d, K1, n))
    for j in range(K1):
        seeds[j * d : (j + 1) * d, j] = basis[j]
    return seeds


def _gauss_newton_direction(spline, t, res, w, grad, damping):
    """Solve ``(J^T W J + damping I) xi = -grad`` in tangent coordinates."""
    seeds = _tangent_coords(spline)
    J = spline.field(seeds, t)  # (D, m, n)
    Jw = J * np.sqrt(w)[None, :, None]
    A = np.einsum("amn,bmn->ab", Jw, Jw)
    g = np.einsum("akn,kn->a", seeds, grad)
    A[np.diag_indices_from(A)] += damping * (1.0 + np.diag(A))
    try:
        xi = np.linalg.solve(A, -g)
    except np.linalg.LinAlgError:
        return -grad
    direction = np.einsum("a,akn->kn", xi, seeds)
    # fall back to steepest descent if the system is too ill-conditioned to descend
    if np.sum(direction * grad) >= 0:
        return -grad
    return direction


def fit_spline(M: Manifold, t, q, spec: SplineSpec, options: FitOptions | None = None,
               weights=None, init: BezierSpline | None = None) -> FitReport:
    """Least-squares spline fit by Riemannian descent with Armijo backtracking."""
    opts = options or FitOptions()
    t, q, w = _samples(M, t, q, weights)
    factor = float(spec.n_segments) if opts.t_scale == "unit" else 1.0
    s = t * factor
    if not spec.closed and (np.any(s < -1e-12) or np.any(s > spec.n_segments + 1e-12)):
        raise DomainError(f"sample times outside the {opts.t_scale} parameter range")
    if np.count_nonzero(w) < spec.n_free:
        warnings.warn(
            f"{np.count_nonzero(w)} samples for {spec.n_free} free control points; "
            "the fit is underdetermined",
            stacklevel=2,
        )
    spline = init if init is not None else initialize_control_points(M, s, q, spec)
    energy = sse(spline, s, q, w)
    history = [energy]
    damping = 1e-6
    message = ""
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        if opts.gradient == "closed_form":
            res = M.log(spline(s), q)
            grad = spline.pullback(s, -w[:, None] * res)
        else:
            grad = _fd_gradient(spline, s, q, w)
            res = M.log(spline(s), q)
        gnorm = float(np.sqrt(np.sum(grad * grad)))
        if gnorm <= opts.grad_tol:
            converged = True
            it -= 1
            break
        if opts.method == "gauss_newton":
            direction = _gauss_newton_direction(spline, s, res, w, grad, damping)
        else:
            direction = -grad
        slope = float(np.sum(direction * grad))
        if -slope <= 1e-15 * max(energy, 1e-300):
            # stationary to working precision even if grad_tol is out of reach
            message = "predicted decrease below working precision"
            converged = True
            it -= 1
            break
        step = opts.initial_step
        accepted = None
        for _ in range(opts.max_halvings + 1):
            try:
                trial = spline.with_points(M.exp(spline.points, step * direction))
                e_trial = sse(trial, s, q, w)
            except DomainError:
                e_trial = np.inf
            if e_trial <= energy + opts.armijo_c * step * slope:
                accepted = trial
                break
            step *= opts.shrink
        if accepted is None:
            message = (
                f"line search failed after {opts.max_halvings} halvings at iteration {it} "
                f"(sse {energy:.6g}, gradient norm {gnorm:.3g})"
            )
            break
        damping = max(damping * 0.3, 1e-12) if step == opts.initial_step else min(damping * 10, 1e6)
        spline, energy = accepted, e_trial
        history.append(energy)
    else:
        grad = _closed_form_gradient(spline, s, q, w)
        gnorm = float(np.sqrt(np.sum(grad * grad)))
        converged = gnorm <= opts.grad_tol
        if not converged:
            message = f"stopped after {opts.max_iter} iterations"
    report = FitReport(spline, energy, np.nan, it, gnorm, converged, t_factor=factor,
                       sse_history=history, message=message)
    report.r2 = _r2(M, energy, q, w)
    return report


def _r2(M, energy, q, w):
    mean = frechet_mean(M, q, w)
    var = float(np.sum(w * M.dist(mean, q) ** 2) / np.sum(w))
    unexplained = 2.0 * energy / np.sum(w)
    if var <= 0:
        if unexplained <= 1e-24:
            return 1.0
        raise GeometryError("R^2 undefined: data have zero variance but nonzero error")
    return 1.0 - unexplained / var


def r_squared(fit, t, q, weights=None) -> float:
    """Geometric coefficient of determination ``1 - (2 SSE / n) / Var``.

    ``fit`` is a :class:`FitReport` (sample times scaled as in the fit) or a
    :class:`BezierSpline` (times are spline parameters). ``Var`` is the Fréchet
    variance of the samples about their Fréchet mean.
    """
    if isinstance(fit, FitReport):
        spline, factor, offset = fit.spline, fit.t_factor, fit.t_offset
    else:
        spline, factor, offset = fit, 1.0, 0.0
    M = spline.manifold
    t, q, w = _samples(M, t, q, weights)
    if q.shape[0] < 2:
        raise GeometryError("R^2 needs at least two samples")
    return _r2(M, sse(spline, (t - offset) * factor, q, w), q, w)


def log_likelihood_delta(spline_a: BezierSpline, spline_b: BezierSpline, sigma: float, t, q) -> float:
    """``l(A) - l(B)`` under isotropic Gaussian noise, i.e. ``(E(B) - E(A)) / sigma^2``.

    The normalizing constants cancel, so only the squared errors are needed.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return (sse(spline_b, t, q) - sse(spline_a, t, q)) / sigma**2


def transport_along(spline: BezierSpline, s_from, s_to, v, n_chords: int = 100):
    """Parallel transport of ``v`` at ``B(s_from)`` to ``B(s_to)`` along the spline.

    The curve is replaced by ``n_chords`` geodesic chords between equally spaced
    parameters, and ``v`` is transported exactly along each chord. Batched over
    the leading axis of ``s_from`` / ``v``.
    """
    M = spline.manifold
    s_from = np.atleast_1d(np.asarray(s_from, dtype=float))
    v = np.asarray(v, dtype=float).reshape(s_from.shape + (M.ambient_dim,))
    grid = s_from[:, None] + (s_to - s_from)[:, None] * np.linspace(0, 1, n_chords + 1)[None, :]
    pts = spline(grid)
    out = v.copy()
    for c in range(n_chords):
        out = M.transp(pts[:, c], pts[:, c + 1], out)
    return out


@dataclass
class NormalizedGroup:
    fit: FitReport
    base: np.ndarray  # B(t0)
    points: np.ndarray  # normalized samples
    vectors: np.ndarray  # residuals transported to B(t0)
    residuals: np.ndarray  # residual logs at B(t_j)


def normalize_groups(M: Manifold, groups, spec: SplineSpec, t0: float,
                     options: FitOptions | None = None, n_chords: int = 100):
    """Remove each group's trend and re-express its residuals at the common time ``t0``.

    ``groups`` is a sequence of ``(t, q)`` pairs with times on a common axis. Each
    group's time interval is mapped linearly onto the spline domain; ``t0`` must lie
    in every interval.
    """
    opts = options or FitOptions()
    fit_opts = FitOptions(**{**opts.__dict__, "t_scale": "spline"})
    out = []
    for g, (t, q) in enumerate(groups):
        t, q, _ = _samples(M, t, q)
        lo, hi = float(t.min()), float(t.max())
        if not lo <= t0 <= hi:
            raise DomainError(f"t0={t0} lies outside group {g}'s interval [{lo}, {hi}]")
        if hi <= lo:
            raise GeometryError(f"group {g} spans no time interval")
        L = spec.n_segments
        scale = lambda x: (np.asarray(x, dtype=float) - lo) / (hi - lo) * L  # noqa: E731
        fit = fit_spline(M, scale(t), q, spec, fit_opts)
        fit.t_factor, fit.t_offset = L / (hi - lo), lo
        s, s0 = scale(t), float(scale(t0))
        on_curve = fit.spline(s)
        res = M.log(on_curve, q)
        vec = transport_along(fit.spline, s, s0, res, n_chords)
        base = fit.spline(s0)
        out.append(NormalizedGroup(fit, base, M.exp(base, vec), vec, res))
    return out
