"""Exception types raised across the package."""


class GeometryError(ValueError):
    """Input that is not a valid point or tangent vector, or a manifold mismatch."""


class DomainError(GeometryError):
    """Points outside the convex ball in which geodesics are unique."""


class SplineConstructionError(DomainError):
    """A spline specification or its control points cannot form a valid spline."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""
