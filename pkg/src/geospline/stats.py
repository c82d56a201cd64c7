"""Second-order statistics on spline spaces: PGA and permutation tests."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bezier import BezierSpline, cubic_encode
from .bezierfold import (
    DEFAULT_QUAD,
    SplineTangentField,
    discrete_geodesic,
    discrete_mean,
    first_step_log,
    metric_matrix,
)
from .errors import GeometryError
from .sasaki import (
    DEFAULT_STEPS,
    TangentBundlePoint,
    bundle_to_generators,
    sasaki_log,
    sasaki_spline_mean,
)

__all__ = [
    "PgaResult",
    "TestReport",
    "pga",
    "log_coordinates",
    "hotelling_t2",
    "hotelling_t2_permutation",
]

METRICS = ("integral", "sasaki")


class _Chart:
    """Tangent space of a spline space at a base spline, in coordinates.

    ``coords(logs)`` maps logs to vectors whose Euclidean inner product is the
    chosen metric; ``field(c)`` maps such a vector back to a generator field.
    """

    def __init__(self, base: BezierSpline, metric: str, per_segment=DEFAULT_QUAD):
        self.base, self.metric = base, metric
        M = base.manifold
        if metric == "integral":
            G, self.basis = metric_matrix(base, per_segment)
            # G = R^T R; whitened coordinates z = R c
            w, Q = np.linalg.eigh(G)
            w = np.clip(w, 0.0, None)
            self._R = (Q * np.sqrt(w)).T
            self._Rinv = np.linalg.pinv(self._R)
        else:
            self.data = cubic_encode(base)
            self.basis = M.tangent_basis(self.data.points)  # (m, d, n)

    def coords(self, logs):
        """Logs at the base to metric coordinates, shape ``(..., D)``."""
        if self.metric == "integral":
            c = np.einsum("kdn,...kn->...kd", self.basis, logs)
            c = c.reshape(c.shape[:-2] + (-1,))
            return c @ self._R.T
        V, W = logs
        cv = np.einsum("mdn,...mn->...md", self.basis, V)
        cw = np.einsum("mdn,...mn->...md", self.basis, W)
        return np.concatenate([cv.reshape(cv.shape[:-2] + (-1,)), cw.reshape(cw.shape[:-2] + (-1,))], axis=-1)

    def field(self, z) -> SplineTangentField:
        if self.metric == "integral":
            c = (self._Rinv @ z).reshape(self.basis.shape[:2])
            return SplineTangentField(self.base, np.einsum("kd,kdn->kn", c, self.basis))
        m, d, _ = self.basis.shape
        V = np.einsum("md,mdn->mn", z[: m * d].reshape(m, d), self.basis)
        W = np.einsum("md,mdn->mn", z[m * d :].reshape(m, d), self.basis)
        return SplineTangentField(self.base, bundle_to_generators(self.data, V, W))

    def logs(self, splines, ell=2, steps=DEFAULT_STEPS, per_segment=DEFAULT_QUAD, map_fn=map):
        if self.metric == "integral":
            paths = list(map_fn(lambda s: discrete_geodesic(self.base, s, ell, per_segment=per_segment), splines))
            return np.stack([first_step_log(p).generators for p in paths])
        enc = [cubic_encode(s) for s in splines]
        P = np.stack([e.points for e in enc])
        U = np.stack([e.vectors for e in enc])
        lg = sasaki_log(self.base.manifold, TangentBundlePoint(self.data.points[None], self.data.vectors[None]),
                        TangentBundlePoint(P, U), steps)
        return lg.v, lg.w


@dataclass
class PgaResult:
    mean: BezierSpline
    modes: list  # SplineTangentField per retained mode
    variances: np.ndarray
    scores: np.ndarray  # (subjects, modes)
    metric: str
    mode_coords: np.ndarray  # (modes, D) orthonormal in metric coordinates
    chart: _Chart

    def explained(self) -> np.ndarray:
        """Fraction of total variance per mode."""
        total = self.variances.sum()
        return self.variances / total if total > 0 else np.zeros_like(self.variances)

    def mode_gram(self) -> np.ndarray:
        return self.mode_coords @ self.mode_coords.T

    def project(self, splines, ell: int = 2, steps: int = DEFAULT_STEPS) -> np.ndarray:
        """Scores of further splines, from their logs at the mean."""
        z = self.chart.coords(self.chart.logs(list(splines), ell, steps))
        return z @ self.mode_coords.T


def _check_family(splines, metric):
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    first = splines[0]
    for s in splines[1:]:
        if s.spec != first.spec or s.manifold != first.manifold:
            raise GeometryError("all splines must share spec and manifold")
    if metric == "sasaki" and any(k != 3 for k in first.spec.degrees):
        raise GeometryError("the Sasaki metric is only available for cubic splines")


def _mean(splines, metric, ell, steps, per_segment, map_fn):
    if metric == "integral":
        return discrete_mean(splines, ell, per_segment=per_segment, map_fn=map_fn)
    return sasaki_spline_mean(splines, steps=steps)


def log_coordinates(splines, metric: str = "integral", ell: int = 2, steps: int = DEFAULT_STEPS,
                    per_segment: int = DEFAULT_QUAD, mean: BezierSpline | None = None, map_fn=map):
    """Logs of ``splines`` at their mean in coordinates orthonormal for ``metric``.

    Returns ``(mean, Z)`` with ``Z`` of shape ``(len(splines), D)``.
    """
    splines = list(splines)
    _check_family(splines, metric)
    if mean is None:
        mean = _mean(splines, metric, ell, steps, per_segment, map_fn)
    chart = _Chart(mean, metric, per_segment)
    return mean, chart.coords(chart.logs(splines, ell, steps, per_segment, map_fn))


def pga(splines, metric: str = "integral", ell: int = 2, steps: int = DEFAULT_STEPS,
        per_segment: int = DEFAULT_QUAD, rtol: float = 1e-12, map_fn=map) -> PgaResult:
    """Principal geodesic analysis of splines via the Gram matrix of their logs at the mean.

    Variances are Gram eigenvalues over the number of subjects; modes with
    eigenvalues below ``rtol`` times the largest are dropped.
    """
    splines = list(splines)
    if len(splines) < 2:
        raise GeometryError("PGA needs at least two splines")
    _check_family(splines, metric)
    mean = _mean(splines, metric, ell, steps, per_segment, map_fn)
    chart = _Chart(mean, metric, per_segment)
    Z = chart.coords(chart.logs(splines, ell, steps, per_segment, map_fn))
    n = Z.shape[0]
    lam, vec = np.linalg.eigh(Z @ Z.T)
    order = np.argsort(lam)[::-1]
    lam, vec = np.clip(lam[order], 0.0, None), vec[:, order]
    keep = lam > rtol * max(lam[0], 1e-300)
    lam, vec = lam[keep], vec[:, keep]
    # fix signs so the largest loading of every mode is positive
    vec = vec * np.where(vec[np.argmax(np.abs(vec), axis=0), np.arange(vec.shape[1])] < 0, -1.0, 1.0)
    mode_coords = (vec.T @ Z) / np.sqrt(lam)[:, None]
    modes = [chart.field(z) for z in mode_coords]
    return PgaResult(mean, modes, lam / n, vec * np.sqrt(lam), metric, mode_coords, chart)


# -- two-sample tests ---------------------------------------------------------------


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    permutations: int

    __test__ = False  # not a pytest class


def _ridged_cov(X):
    C = np.atleast_2d(np.cov(X, rowvar=False))
    eps = 1e-8 * max(np.trace(C) / C.shape[0], 1e-300)
    return C + eps * np.eye(C.shape[0])


def hotelling_t2(group_a, group_b) -> float:
    """Two-sample statistic averaging the mean difference measured in each group's covariance.

    ``0.5 (d^T W_a^{-1} d + d^T W_b^{-1} d)`` with ``d`` the difference of the group
    means and ``W`` the ridge-regularized single-group covariances.
    """
    A, B = np.asarray(group_a, dtype=float), np.asarray(group_b, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise GeometryError(f"groups must be (n, D) arrays of equal D; got {A.shape} and {B.shape}")
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise GeometryError("each group needs at least two subjects")
    d = B.mean(axis=0) - A.mean(axis=0)
    ta = d @ np.linalg.solve(_ridged_cov(A), d)
    tb = d @ np.linalg.solve(_ridged_cov(B), d)
    return float(0.5 * (ta + tb))


def hotelling_t2_permutation(group_a, group_b, n_perm: int = 1000, seed: int = 0,
                             workers: int = 1) -> TestReport:
    """Permutation p-value ``(1 + #{T_perm >= T_obs}) / (1 + n_perm)`` for :func:`hotelling_t2`.

    Each replicate draws its relabelling from its own generator spawned from
    ``seed``, so results do not depend on ``workers``.
    """
    A, B = np.asarray(group_a, dtype=float), np.asarray(group_b, dtype=float)
    observed = hotelling_t2(A, B)
    pooled = np.concatenate([A, B])
    na = A.shape[0]
    children = np.random.SeedSequence(seed).spawn(n_perm)

    def replicate(child):
        perm = np.random.default_rng(child).permutation(pooled.shape[0])
        return hotelling_t2(pooled[perm[:na]], pooled[perm[na:]])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            stats = list(pool.map(replicate, children))
    else:
        stats = [replicate(c) for c in children]
    # tolerate rounding when a relabelling reproduces the observed split
    hits = int(np.sum(np.asarray(stats) >= observed - 1e-12 * abs(observed)))
    return TestReport(observed, (1 + hits) / (1 + n_perm), n_perm)
