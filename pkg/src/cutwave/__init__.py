"""Explicit cut finite element solver for the scalar wave equation.

A background triangulation is cut by a level-set domain; degrees of
freedom outside a set of well-covered elements are slaved to interior
values through a discrete extension operator, the reduced mass matrix is
lumped, and the wave equation is advanced with an explicit leapfrog
scheme.  Dirichlet data on the implicit boundary is imposed weakly with
Nitsche's method.
"""

__version__ = "0.1.0"

from .analysis import ErrorReport, eoc, h1_error, l2_error
from .assembly import (
    SystemMatrices,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    lump,
    reduce_system,
)
from .extension import ExtensionOperator, build_extension
from .geometry import (
    BoundaryCondition,
    Classification,
    ImplicitDomain,
    QuadratureRule,
    classify,
    cut_boundary_quadrature,
    cut_volume_quadrature,
    domain_catalog,
)
from .mesh import BackgroundMesh, build_structured_mesh, interior_faces, node_patch
from .solver import (
    BlowUpError,
    TimeGrid,
    WaveState,
    cfl_estimate,
    cg_solve,
    initialize,
    leapfrog_step,
    poisson_solve,
    ritz_project,
    run_simulation,
)
from .system import DiscreteSystem, build_system

__all__ = [
    "BackgroundMesh",
    "BlowUpError",
    "BoundaryCondition",
    "Classification",
    "DiscreteSystem",
    "ErrorReport",
    "ExtensionOperator",
    "ImplicitDomain",
    "QuadratureRule",
    "SystemMatrices",
    "TimeGrid",
    "WaveState",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "build_extension",
    "build_structured_mesh",
    "build_system",
    "cfl_estimate",
    "cg_solve",
    "classify",
    "cut_boundary_quadrature",
    "cut_volume_quadrature",
    "domain_catalog",
    "eoc",
    "h1_error",
    "initialize",
    "interior_faces",
    "l2_error",
    "leapfrog_step",
    "lump",
    "node_patch",
    "poisson_solve",
    "reduce_system",
    "ritz_project",
    "run_simulation",
]
