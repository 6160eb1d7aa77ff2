"""Discrete extension from interior-node coefficients to the active mesh.

Every small element is associated with a nearby large element (nearest
centroid).  A nodal value outside the interior node set is obtained by
evaluating the linear polynomial of one associated large element at the
node, i.e. by barycentric extrapolation.  The whole map is assembled once
as a sparse matrix E with one row per active-mesh node and one column per
interior node: interior rows are unit vectors, exterior rows carry the
three barycentric weights.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import OUTSIDE
from .mesh import node_patch

_TIE_RTOL = 1e-12


@dataclass
class ExtensionOperator:
    """Sparse extension matrix together with the maps that define it.

    s_map[e] is the large element assigned to active element e (identity
    on large elements, -1 outside).  node_owner[k] is the patch element
    chosen for exterior_nodes[k].  matrix is (n_active_nodes, n_interior)
    CSR; interior_index maps global vertex ids to column indices (-1 for
    non-interior nodes).  locality reports max diam(T u S(T)) / h.
    """

    s_map: np.ndarray
    node_owner: np.ndarray
    exterior_nodes: np.ndarray
    interior_nodes: np.ndarray
    interior_index: np.ndarray
    matrix: sp.csr_matrix
    locality: float

    @property
    def n_interior(self):
        return self.interior_nodes.size


def element_centroids(mesh):
    return mesh.vertices[mesh.triangles].mean(axis=1)


def interior_node_set(mesh, cls):
    """Global ids of nodes belonging to at least one large element."""
    return np.unique(mesh.triangles[cls.large].ravel())


def build_s_map(mesh, cls):
    """Assign to each small element the large element of nearest centroid.

    Exact distance ties are broken towards the lowest element index.
    Returns (s_map, locality) where locality = max diam(T u S(T)) / h over
    the mapped elements (1.0 if nothing is mapped).
    """
    centroids = element_centroids(mesh)
    s_map = np.full(mesh.n_triangles, -1, dtype=np.int64)
    s_map[cls.large] = cls.large
    if cls.small.size == 0:
        return s_map, 1.0

    tree = cKDTree(centroids[cls.large])
    k = min(8, cls.large.size)
    d, j = tree.query(centroids[cls.small], k=k)
    d = np.atleast_2d(d.reshape(cls.small.size, -1))
    j = np.atleast_2d(j.reshape(cls.small.size, -1))
    candidates = cls.large[j]
    tied = d <= d[:, :1] * (1.0 + _TIE_RTOL)
    candidates = np.where(tied, candidates, np.iinfo(np.int64).max)
    s_map[cls.small] = candidates.min(axis=1)

    pts = np.concatenate(
        [
            mesh.vertices[mesh.triangles[cls.small]],
            mesh.vertices[mesh.triangles[s_map[cls.small]]],
        ],
        axis=1,
    )
    diffs = pts[:, :, None, :] - pts[:, None, :, :]
    diam = np.sqrt((diffs**2).sum(-1)).max(axis=(1, 2))
    return s_map, float(diam.max() / mesh.h)


def choose_node_owners(mesh, cls, s_map):
    """Pick one patch element per exterior node.

    The owner is the active patch element whose image under s_map has the
    centroid closest to the node, lowest element index on ties.  Returns
    (exterior_nodes, owners), both sorted by node id.
    """
    interior = interior_node_set(mesh, cls)
    exterior = np.setdiff1d(cls.active_nodes, interior, assume_unique=True)
    centroids = element_centroids(mesh)
    owners = np.empty(exterior.size, dtype=np.int64)
    for k, node in enumerate(exterior):
        patch = node_patch(mesh, node)
        patch = patch[cls.labels[patch] != OUTSIDE]
        images = s_map[patch]
        dist = np.linalg.norm(centroids[images] - mesh.vertices[node], axis=1)
        best = dist.min()
        owners[k] = patch[dist <= best * (1.0 + _TIE_RTOL)].min()
    return exterior, owners


def barycentric_coordinates(coords, x):
    """Barycentric coordinates of x with respect to a (3, 2) triangle."""
    mat = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    lam = np.linalg.solve(mat, np.asarray(x, dtype=float) - coords[0])
    return np.array([1.0 - lam[0] - lam[1], lam[0], lam[1]])


def assemble_extension_matrix(mesh, cls, s_map, exterior_nodes, owners):
    """Sparse extension matrix with single-owner nodal weights."""
    interior = interior_node_set(mesh, cls)
    interior_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
    interior_index[interior] = np.arange(interior.size)

    rows = [cls.node_active_index[interior]]
    cols = [np.arange(interior.size)]
    data = [np.ones(interior.size)]

    for node, owner in zip(exterior_nodes, owners):
        target = s_map[owner]
        verts = mesh.triangles[target]
        col = interior_index[verts]
        if np.any(col < 0):
            raise AssertionError(
                "large element has a non-interior vertex; interior nodes "
                "must be the nodes of large elements"
            )
        lam = barycentric_coordinates(mesh.vertices[verts], mesh.vertices[node])
        rows.append(np.full(3, cls.node_active_index[node]))
        cols.append(col)
        data.append(lam)

    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(cls.active_nodes.size, interior.size),
    ).tocsr()
    return matrix, interior, interior_index


def build_extension(mesh, cls, averaging="owner"):
    """Build the extension operator.

    averaging="owner" reproduces the single-element nodal weights (one
    patch element contributes with weight one); averaging="uniform" uses
    equal weights over all active patch elements, which averages the
    extrapolated values instead.
    """
    s_map, locality = build_s_map(mesh, cls)
    exterior, owners = choose_node_owners(mesh, cls, s_map)

    if averaging == "owner":
        matrix, interior, interior_index = assemble_extension_matrix(
            mesh, cls, s_map, exterior, owners
        )
    elif averaging == "uniform":
        interior = interior_node_set(mesh, cls)
        interior_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
        interior_index[interior] = np.arange(interior.size)
        rows = [cls.node_active_index[interior]]
        cols = [np.arange(interior.size)]
        data = [np.ones(interior.size)]
        for node in exterior:
            patch = node_patch(mesh, node)
            patch = patch[cls.labels[patch] != OUTSIDE]
            kappa = 1.0 / patch.size
            for elem in patch:
                verts = mesh.triangles[s_map[elem]]
                lam = barycentric_coordinates(
                    mesh.vertices[verts], mesh.vertices[node]
                )
                rows.append(np.full(3, cls.node_active_index[node]))
                cols.append(interior_index[verts])
                data.append(kappa * lam)
        matrix = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(cls.active_nodes.size, interior.size),
        ).tocsr()
    else:
        raise ValueError(f"unknown averaging {averaging!r}")

    return ExtensionOperator(
        s_map=s_map,
        node_owner=owners,
        exterior_nodes=exterior,
        interior_nodes=interior,
        interior_index=interior_index,
        matrix=matrix,
        locality=locality,
    )
