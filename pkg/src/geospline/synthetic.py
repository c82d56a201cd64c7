"""Synthetic spline data with known generators, used by demos and tests."""
from __future__ import annotations

import numpy as np

from .bezier import BezierSpline, SplineSpec
from .io import latlon_to_unit
from .manifolds import Manifold, Sphere

__all__ = [
    "noisy_samples",
    "perturb_spline",
    "random_spline",
    "CYCLONE_FAMILIES",
    "cyclone_family",
    "cyclone_tracks",
]


def noisy_samples(spline: BezierSpline, t, sigma: float, rng) -> np.ndarray:
    """``exp_{B(t_i)}(sigma * xi_i)`` with isotropic Gaussian tangent noise ``xi_i``."""
    M = spline.manifold
    clean = spline(np.asarray(t, dtype=float))
    if sigma == 0:
        return clean
    return M.exp(clean, M.random_tangent(rng, clean, sigma))


def perturb_spline(spline: BezierSpline, scale: float, rng) -> BezierSpline:
    """Move every free control point by isotropic tangent noise of size ``scale``."""
    M = spline.manifold
    return spline.with_points(M.exp(spline.points, M.random_tangent(rng, spline.points, scale)))


# free control points (lat, lon in degrees) of three two-segment cubic track shapes
CYCLONE_FAMILIES = {
    "westward": [(15, -40), (16, -50), (18, -60), (20, -70), (25, -88), (28, -92)],
    "recurving": [(14, -45), (17, -55), (22, -63), (28, -68), (42, -62), (47, -45)],
    "northward": [(20, -50), (25, -52), (30, -52), (35, -50), (45, -40), (50, -30)],
}


def cyclone_family(name: str) -> BezierSpline:
    pts = np.array(CYCLONE_FAMILIES[name], dtype=float)
    return BezierSpline(Sphere(2), SplineSpec((3, 3)), latlon_to_unit(pts[:, 0], pts[:, 1]))


def cyclone_tracks(rng, per_family: int = 10, spread_deg: float = 1.0, noise_deg: float = 0.3,
                   samples=(20, 36)):
    """Cyclone-like sphere tracks from the three families plus noise.

    Returns a list of ``(family, t, q)`` with times in [0, 1]; each track uses a
    perturbed copy of its family's spline and noisy samples at sorted random times.
    """
    tracks = []
    for name in CYCLONE_FAMILIES:
        base = cyclone_family(name)
        for _ in range(per_family):
            spline = perturb_spline(base, np.radians(spread_deg), rng)
            n = int(rng.integers(samples[0], samples[1] + 1))
            t = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 2)), [1.0]])
            tracks.append((name, t, noisy_samples(spline, 2 * t, np.radians(noise_deg), rng)))
    return tracks


def random_spline(M: Manifold, spec: SplineSpec, rng, center=None, spread: float = 0.4) -> BezierSpline:
    """Spline with free control points drawn within ``spread`` of ``center``."""
    if center is None:
        center = M.origin()
    pts = np.array([M.random_point(rng, center, spread) for _ in range(spec.n_free)])
    return BezierSpline(M, spec, pts)
