"""Box dimension of generalized affine fractal interpolation surfaces.

The pipeline: parse ``S``, ``g``, ``h`` (:mod:`fisdim.expr`), build the
IFS over a node grid (:mod:`fisdim.grid`, :mod:`fisdim.fif`), sample the
attractor, and bound its box dimension through Perron roots of the
vertical scaling matrices (:mod:`fisdim.scaling`, :mod:`fisdim.dimension`).
"""

__version__ = "0.1.0"
