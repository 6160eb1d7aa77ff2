"""Assembly of cut-quadrature mass, Nitsche stiffness, and load vectors.

Matrices are first assembled on the full active-node space, then reduced
to the extended space by congruence with the extension matrix, and the
reduced mass is lumped by row sums.  Uncut elements are handled in closed
form and fully vectorized; only the boundary band of cut elements runs
through per-element quadrature.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (
    BoundaryCondition,
    cut_boundary_rule,
    cut_volume_rule,
    triangle_rule,
)

# Exact for products of linear basis functions on straight elements.
DEFAULT_DEGREE = 2

_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass
class SystemMatrices:
    """Assembled operators of one discretization.

    M_full / A_full live on the active-node space, M_I / A_I on the
    extended space (interior-node coefficients).  m_L is the row-sum
    lumped diagonal of M_I and B = diag(m_L) - M_I its defect, kept for
    diagnostics.  gamma is the Nitsche penalty.
    """

    M_full: sp.csr_matrix
    A_full: sp.csr_matrix
    M_I: sp.csr_matrix
    A_I: sp.csr_matrix
    m_L: np.ndarray
    B: sp.csr_matrix
    gamma: float


def _symmetrize(block):
    """Average a (..., 3, 3) block with its transpose, making the paired
    entries bitwise equal."""
    return 0.5 * (block + np.swapaxes(block, -1, -2))


def p1_gradients(coords):
    """Constant basis gradients and areas for a batch of triangles.

    coords is (m, 3, 2) with counterclockwise vertices; returns
    (grads (m, 3, 2), areas (m,)).
    """
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    grads = np.empty_like(coords)
    edges = (
        coords[:, 2] - coords[:, 1],
        coords[:, 0] - coords[:, 2],
        coords[:, 1] - coords[:, 0],
    )
    for i, e in enumerate(edges):
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= 2.0 * areas[:, None, None]
    return grads, areas


def _scatter(mesh, cls, elements, local, n):
    """COO triplets for (len(elements), 3, 3) local matrices."""
    idx = cls.node_active_index[mesh.triangles[elements]]
    rows = np.repeat(idx, 3, axis=1).ravel()
    cols = np.tile(idx, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _barycentric_batch(coords, pts):
    """Barycentric coordinates of pts (q, 2) w.r.t. one triangle (3, 2)."""
    mat = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    lam = np.linalg.solve(mat, (pts - coords[0]).T).T
    return np.column_stack([1.0 - lam.sum(axis=1), lam])


def assemble_mass(mesh, cls, domain, degree=DEFAULT_DEGREE):
    """Mass matrix of the active-node space with integrals over T ∩ Ω."""
    n = cls.active_nodes.size
    phi_v = np.asarray(domain.phi(mesh.vertices), dtype=float)
    coords = mesh.vertices[mesh.triangles]

    uncut = cls.active[~cls.is_cut[cls.active]]
    areas = cls.cut_areas[uncut]
    local = areas[:, None, None] * _REF_MASS[None, :, :]
    mass = _scatter(mesh, cls, uncut, local, n)

    cut = cls.active[cls.is_cut[cls.active]]
    if cut.size:
        blocks = np.zeros((cut.size, 3, 3))
        for k, e in enumerate(cut):
            rule = cut_volume_rule(coords[e], phi_v[mesh.triangles[e]], degree)
            if len(rule) == 0:
                continue
            lam = _barycentric_batch(coords[e], rule.points)
            blocks[k] = _symmetrize(np.einsum("q,qi,qj->ij", rule.weights, lam, lam))
        mass = mass + _scatter(mesh, cls, cut, blocks, n)

    return mass.tocsr()


def assemble_stiffness(mesh, cls, domain, gamma, degree=DEFAULT_DEGREE):
    """Nitsche stiffness matrix on the active-node space.

    The volume term integrates over T ∩ Ω for every active element; the
    consistency, symmetry, and penalty boundary terms are added on the
    implicit interface only when it is tagged weakly Dirichlet.  The
    penalty scales with gamma / h using the global mesh parameter.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    n = cls.active_nodes.size
    coords = mesh.vertices[mesh.triangles]
    grads, _ = p1_gradients(coords[cls.active])

    # Constant gradients make the volume term exact with the clipped area.
    local = np.einsum("e,eid,ejd->eij", cls.cut_areas[cls.active], grads, grads)
    local = _symmetrize(local)
    stiff = _scatter(mesh, cls, cls.active, local, n)

    weak = domain.bc_tags.get("levelset") == BoundaryCondition.WEAK_DIRICHLET
    cut = cls.active[cls.is_cut[cls.active]]
    if weak and cut.size:
        phi_v = np.asarray(domain.phi(mesh.vertices), dtype=float)
        blocks = np.zeros((cut.size, 3, 3))
        grads_cut, _ = p1_gradients(coords[cut])
        for k, e in enumerate(cut):
            rule = cut_boundary_rule(coords[e], phi_v[mesh.triangles[e]], degree)
            if len(rule) == 0:
                continue
            lam = _barycentric_batch(coords[e], rule.points)
            gn = grads_cut[k] @ rule.normals[0]
            wlam = rule.weights @ lam
            consistency = np.outer(wlam, gn)
            penalty = (gamma / mesh.h) * _symmetrize(
                np.einsum("q,qi,qj->ij", rule.weights, lam, lam)
            )
            blocks[k] = penalty - (consistency + consistency.T)
        stiff = stiff + _scatter(mesh, cls, cut, blocks, n)

    return stiff.tocsr()


def assemble_load(
    f,
    t,
    mesh,
    cls,
    domain,
    mode="consistent",
    degree=DEFAULT_DEGREE,
    m_L=None,
    extension=None,
):
    """Load vector for the source f(x, t).

    mode="consistent" integrates f against every basis function over
    T ∩ Ω and returns a full-space vector.  mode="lumped" returns the
    lumped load m_L * f_hat on the extended space, where f_hat holds the
    interior nodal values of f; it requires m_L and the extension
    operator.
    """
    if mode == "lumped":
        if m_L is None or extension is None:
            raise ValueError("lumped load needs m_L and the extension operator")
        f_hat = np.asarray(f(mesh.vertices[extension.interior_nodes], t), dtype=float)
        return m_L * f_hat
    if mode != "consistent":
        raise ValueError(f"unknown load mode {mode!r}")

    n = cls.active_nodes.size
    b = np.zeros(n)
    coords = mesh.vertices[mesh.triangles]
    phi_v = np.asarray(domain.phi(mesh.vertices), dtype=float)

    uncut = cls.active[~cls.is_cut[cls.active]]
    if uncut.size:
        bary, w = triangle_rule(degree)
        pts = np.einsum("qi,eid->eqd", bary, coords[uncut])
        fv = np.asarray(f(pts.reshape(-1, 2), t), dtype=float).reshape(uncut.size, -1)
        local = cls.cut_areas[uncut][:, None] * np.einsum("eq,q,qi->ei", fv, w, bary)
        np.add.at(b, cls.node_active_index[mesh.triangles[uncut]].ravel(), local.ravel())

    cut = cls.active[cls.is_cut[cls.active]]
    for e in cut:
        rule = cut_volume_rule(coords[e], phi_v[mesh.triangles[e]], degree)
        if len(rule) == 0:
            continue
        lam = _barycentric_batch(coords[e], rule.points)
        fv = np.asarray(f(rule.points, t), dtype=float)
        local = np.einsum("q,q,qi->i", rule.weights, fv, lam)
        np.add.at(b, cls.node_active_index[mesh.triangles[e]], local)

    return b


def reduce_system(ext_matrix, M_full, A_full, b_full=None):
    """Congruence reduction onto the extended space.

    Returns (M_I, A_I) or (M_I, A_I, b_I).  Both triple products are
    symmetrized with their transpose to remove floating-point asymmetry.
    """
    n_active = ext_matrix.shape[0]
    if M_full.shape != (n_active, n_active) or A_full.shape != (n_active, n_active):
        raise ValueError("matrix dimensions do not match the extension operator")
    M_I = (ext_matrix.T @ M_full @ ext_matrix).tocsr()
    A_I = (ext_matrix.T @ A_full @ ext_matrix).tocsr()
    M_I = ((M_I + M_I.T) * 0.5).tocsr()
    A_I = ((A_I + A_I.T) * 0.5).tocsr()
    if b_full is None:
        return M_I, A_I
    if b_full.shape[0] != n_active:
        raise ValueError("load vector does not match the extension operator")
    return M_I, A_I, ext_matrix.T @ b_full


def lump(M_I):
    """Row-sum lumped diagonal and the defect matrix B = diag(m_L) - M_I.

    B is symmetric with exactly zero row sums by construction.  A
    non-positive lumped entry would break the lumped norm and raises.
    """
    m_L = np.asarray(M_I.sum(axis=1)).ravel()
    if np.any(m_L <= 0.0):
        raise RuntimeError(
            f"lumping produced non-positive mass (min {m_L.min():.3e})"
        )
    B = (sp.diags(m_L) - M_I).tocsr()
    return m_L, B


def dump_matrix(path, matrix):
    """Matrix Market coordinate dump, for debugging."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(matrix))
