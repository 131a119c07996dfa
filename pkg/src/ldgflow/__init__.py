"""Gradient flow of the anisotropic Landau-de Gennes energy with the
Ball-Majumdar singular potential on the periodic unit torus.

Modules:

* ``tensor``      -- Q-tensor linear algebra and physicality margins
* ``potential``   -- the singular potential via convex duality, its
                     Moreau-Yosida envelopes, and the blow-up constant
* ``elastic``     -- spectral elastic energy, per-mode operator, grids
* ``flow``        -- semi-implicit and minimizing-movement integrators
* ``initial``     -- seeded initial-data generators
* ``diagnostics`` -- decay, regularity, blow-up and contact-set checks
* ``config``/``io``/``cli`` -- run configuration and artifacts
"""

__version__ = "0.1.0"

from . import config, diagnostics, elastic, flow, initial, io, potential, tensor  # noqa: F401,E402
from .errors import (  # noqa: F401
    BoundaryProximityError,
    ConfigError,
    LdgflowError,
    QuadratureError,
    SolverStallError,
)
