"""2D HDG discretization of Picard-linearized incompressible resistive MHD."""
from .basis import BasisP, gauss_lobatto_nodes
from .local import assemble_local, local_sizes, static_condense
from .mesh import QuadMesh, build_mesh
from .params import MhdParams, stabilization, stabilization_tensor
from .system import (
    BoundarySpec,
    TraceLayout,
    TraceState,
    TraceSystem,
    VolumeState,
    apply_boundary_conditions,
    assemble_trace_system,
    compute_errors,
    constraint_residuals,
    element_flux,
    project,
    reconstruct_volume,
)
from .vtk import write_vtk

__all__ = [
    "BasisP", "gauss_lobatto_nodes", "assemble_local", "local_sizes", "static_condense",
    "QuadMesh", "build_mesh", "MhdParams", "stabilization", "stabilization_tensor",
    "BoundarySpec", "TraceLayout", "TraceState", "TraceSystem", "VolumeState",
    "apply_boundary_conditions", "assemble_trace_system", "compute_errors",
    "constraint_residuals", "element_flux", "project", "reconstruct_volume", "write_vtk",
]
