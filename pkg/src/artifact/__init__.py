"""Horizontal geometry of hypersurfaces in Carnot groups."""

from .builtin_examples import hyperbolic_paraboloid, nonvertical_hyperplane, vertical_hyperplane
from .carnot_algebra import CarnotGroup, builtin_heisenberg, validate_structure
from .curvature_ops import evaluate
from .jets import AnalyticField, FiniteDifferenceField, Jet
from .variation import QuadraturePatch, verify_identities

__all__ = [
    "AnalyticField", "CarnotGroup", "FiniteDifferenceField", "Jet", "QuadraturePatch",
    "builtin_heisenberg", "evaluate", "hyperbolic_paraboloid", "nonvertical_hyperplane",
    "validate_structure", "verify_identities", "vertical_hyperplane",
]
