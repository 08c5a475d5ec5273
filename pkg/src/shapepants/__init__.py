"""Zero-energy three-body dynamics on the shape sphere.

The reduced planar three-body problem at zero energy and angular momentum
is geodesic flow for the Jacobi-Maupertuis metric on the shape sphere
minus the three binary collision points.  The modules cover the geometry
of that surface, its curvature, the geodesic flow and its syzygy words,
closed geodesics in free homotopy classes, and near-collision dynamics in
the full problem.
"""
from .errors import ShapePantsError
from .shape_geometry import LAGRANGE_NORTH, LAGRANGE_SOUTH, MassTriple, ShapePoint, euler_point
from .syzygy import BiInfiniteWord, SignedWord, classify, reduce_stutters

__version__ = "0.1.0"

__all__ = [
    "BiInfiniteWord", "LAGRANGE_NORTH", "LAGRANGE_SOUTH", "MassTriple", "ShapePantsError", "ShapePoint",
    "SignedWord", "classify", "euler_point", "reduce_stutters",
]
