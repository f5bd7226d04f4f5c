"""horolab: numerical laboratory for the horocycle flow on unimodular lattices.

Verifies, at desk scale and with explicit constants, the quantitative
inequalities that control equidistribution of the flow: sub-divergence of
nearby orbits, sub-uniformity of Haar measure, polynomial correlation decay,
orbit-average variance, clustering of good points, and the resulting
closed-form dimension bounds for exceptional sets.
"""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    HaarSample,
    LatticePoint,
    SaddleConnection,
    coordinate_distance,
    enumerate_saddle_connections,
    from_coords,
    geodesic,
    horocycle,
    reduce,
    sample_haar,
    systole,
)
from .rng import Stream, make_generator  # noqa: F401
