"""Exponentially fitted (edge-averaged) finite elements for convection-diffusion
problems with full diffusion tensors on simplicial meshes."""

from expfit.mesh import BoundaryTag, SimplicialMesh, generate_structured, read_mesh, write_mesh
from expfit.coeff import CoefficientSet, DispersionParams, dispersion_tensor
from expfit.eafe import assemble, bernoulli
from expfit.linalg import solve

__all__ = [
    "BoundaryTag",
    "CoefficientSet",
    "DispersionParams",
    "SimplicialMesh",
    "assemble",
    "bernoulli",
    "dispersion_tensor",
    "generate_structured",
    "read_mesh",
    "solve",
    "write_mesh",
]

__version__ = "0.1.0"
