"""Bézier splines on Riemannian manifolds: evaluation, regression and statistics on spline spaces."""

__version__ = "0.1.0"

from .bezier import (
    BezierSpline,
    CubicBoundaryData,
    SplineSpec,
    bernstein_eval,
    boundary_derivatives,
    control_from_boundary,
    cubic_decode,
    cubic_encode,
    decasteljau,
    derive_dependent_points,
    spline_differential,
    spline_eval,
)
from .bezierfold import (
    DiscreteSplinePath,
    SplineTangentField,
    discrete_geodesic,
    discrete_mean,
    discrete_path_energy,
    integral_inner,
    metric_matrix,
)
from .errors import ConvergenceError, DomainError, GeometryError, SplineConstructionError
from .io import TrajectoryDataset, export_csv, ingest_csv, ingest_hurdat2
from .manifolds import ConvexityGuard, Euclidean, Manifold, Sphere, frechet_mean, manifold_from_string
from .regression import (
    FitOptions,
    FitReport,
    fit_spline,
    initialize_control_points,
    log_likelihood_delta,
    normalize_groups,
    r_squared,
    sse,
    sse_gradient,
)
from .sasaki import (
    TangentBundlePoint,
    TangentBundleVector,
    sasaki_exp,
    sasaki_inner,
    sasaki_log,
    sasaki_spline_mean,
)
from .stats import PgaResult, TestReport, hotelling_t2, hotelling_t2_permutation, pga

__all__ = [
    "BezierSpline",
    "CubicBoundaryData",
    "SplineSpec",
    "bernstein_eval",
    "boundary_derivatives",
    "control_from_boundary",
    "cubic_decode",
    "cubic_encode",
    "decasteljau",
    "derive_dependent_points",
    "spline_differential",
    "spline_eval",
    "DiscreteSplinePath",
    "SplineTangentField",
    "discrete_geodesic",
    "discrete_mean",
    "discrete_path_energy",
    "integral_inner",
    "metric_matrix",
    "ConvergenceError",
    "DomainError",
    "GeometryError",
    "SplineConstructionError",
    "TrajectoryDataset",
    "export_csv",
    "ingest_csv",
    "ingest_hurdat2",
    "ConvexityGuard",
    "Euclidean",
    "Manifold",
    "Sphere",
    "frechet_mean",
    "manifold_from_string",
    "FitOptions",
    "FitReport",
    "fit_spline",
    "initialize_control_points",
    "log_likelihood_delta",
    "normalize_groups",
    "r_squared",
    "sse",
    "sse_gradient",
    "TangentBundlePoint",
    "TangentBundleVector",
    "sasaki_exp",
    "sasaki_inner",
    "sasaki_log",
    "sasaki_spline_mean",
    "PgaResult",
    "TestReport",
    "hotelling_t2",
    "hotelling_t2_permutation",
    "pga",
]
