"""Wiring of mesh, geometry, extension, and assembly into one system."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import (
    SystemMatrices,
    assemble_mass,
    assemble_stiffness,
    lump,
    reduce_system,
)
from .extension import build_extension
from .geometry import BoundaryCondition, classify, validate_levelset

_SIDES = {"xmin": (0, 0), "xmax": (0, 1), "ymin": (1, 2), "ymax": (1, 3)}


@dataclass
class DiscreteSystem:
    """One fully assembled discretization, immutable after build."""

    mesh: object
    domain: object
    cls: object
    ext: object
    mats: SystemMatrices
    dirichlet: np.ndarray

    @property
    def h(self):
        return self.mesh.h

    @property
    def n_interior(self):
        return self.ext.interior_nodes.size

    @property
    def interior_coords(self):
        return self.mesh.vertices[self.ext.interior_nodes]

    def extend(self, u):
        """Coefficients on all active nodes from interior coefficients."""
        return self.ext.matrix @ u


def strong_dirichlet_nodes(mesh, domain, ext):
    """Interior-space indices of nodes on strongly Dirichlet box sides."""
    indices = []
    coords = mesh.vertices[ext.interior_nodes]
    scale = max(abs(v) for v in mesh.box) + 1.0
    for portion, tag in domain.bc_tags.items():
        if tag != BoundaryCondition.STRONG_DIRICHLET:
            continue
        if portion not in _SIDES:
            raise ValueError(
                f"strong Dirichlet is only supported on box sides, got {portion!r}"
            )
        axis, corner = _SIDES[portion]
        value = mesh.box[corner]
        on_side = np.abs(coords[:, axis] - value) <= 1e-12 * scale
        indices.append(np.flatnonzero(on_side))
    if not indices:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(indices))


def eliminate_rows_cols(A, nodes):
    """Zero rows and columns of the given indices, keeping the diagonal."""
    if nodes.size == 0:
        return A
    keep = np.ones(A.shape[0])
    keep[nodes] = 0.0
    diag = A.diagonal()
    P = sp.diags(keep)
    fixed = np.zeros(A.shape[0])
    fixed[nodes] = diag[nodes]
    return (P @ A @ P + sp.diags(fixed)).tocsr()


def build_system(
    mesh,
    domain,
    c_large=0.1,
    gamma=10.0,
    averaging="owner",
    classify_rule="large",
    degree=2,
):
    """Classify, build the extension, assemble, reduce, and lump.

    Weakly Dirichlet portions of the implicit boundary get Nitsche terms
    with the given gamma; strongly Dirichlet box sides are eliminated from
    the reduced stiffness (rows and columns zeroed, diagonal kept) and
    their indices recorded for the time stepper to overwrite.
    """
    validate_levelset(domain, mesh.box)
    cls = classify(mesh, domain, c_large=c_large, rule=classify_rule)
    ext = build_extension(mesh, cls, averaging=averaging)
    M_full = assemble_mass(mesh, cls, domain, degree=degree)
    A_full = assemble_stiffness(mesh, cls, domain, gamma, degree=degree)
    M_I, A_I = reduce_system(ext.matrix, M_full, A_full)
    m_L, B = lump(M_I)
    dirichlet = strong_dirichlet_nodes(mesh, domain, ext)
    A_I = eliminate_rows_cols(A_I, dirichlet)
    mats = SystemMatrices(
        M_full=M_full, A_full=A_full, M_I=M_I, A_I=A_I, m_L=m_L, B=B, gamma=gamma
    )
    return DiscreteSystem(
        mesh=mesh, domain=domain, cls=cls, ext=ext, mats=mats, dirichlet=dirichlet
    )
