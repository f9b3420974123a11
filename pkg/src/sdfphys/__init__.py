"""Differentiable physics for signed-distance-field geometry.

Submodules:

- ``sdf``: signed-distance fields (analytic and grid-backed) with gradients
- ``surface``: zero-crossing surface-point extraction and refinement
- ``rigidbody``: particle rigid-body simulation with impulse contacts
- ``adjoint``: gradients of the physical loss through recorded simulations
- ``uncertainty``: physical-uncertainty grid and guided pixel sampling
- ``render``: sigmoid-transmittance volume rendering and the loss stack
- ``metrics``: point-cloud reconstruction metrics and the stability protocol
- ``cli``: reproducible command-line workflows over the above
"""

__version__ = "0.1.0"

from . import sdf, surface  # noqa: F401
