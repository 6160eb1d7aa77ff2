"""Structured triangular background meshes and their combinatorics.

The background mesh is a uniform right-triangle split of an axis-aligned
box: every grid cell is cut by the same diagonal, so all elements are
congruent.  Vertices are numbered row-major (x fastest), triangles
cell-major with the two triangles of a cell adjacent, which makes the
builder bitwise deterministic.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BackgroundMesh:
    """Conforming triangulation of a box, treated as immutable after build.

    Attributes:
        box: (xmin, xmax, ymin, ymax) of the meshed region.
        vertices: (n_vertices, 2) float coordinates.
        triangles: (n_triangles, 3) vertex indices, counterclockwise.
        h: mesh parameter, the maximal element diameter (the hypotenuse).
        uniformity: max element diameter / min element diameter.
        shape_ratio: max element diameter / min inscribed-circle diameter.
        faces: (n_interior_faces, 2) vertex pairs, each sorted.
        face_elements: (n_interior_faces, 2) the two adjacent triangles,
            lower element index first.
        node_elem_ptr / node_elem_ind: CSR layout of the node-to-element
            adjacency; the patch of node i is
            node_elem_ind[node_elem_ptr[i]:node_elem_ptr[i+1]].
    """

    box: tuple
    vertices: np.ndarray
    triangles: np.ndarray
    h: float
    uniformity: float
    shape_ratio: float
    faces: np.ndarray
    face_elements: np.ndarray
    node_elem_ptr: np.ndarray
    node_elem_ind: np.ndarray

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]


def build_structured_mesh(box, target_h):
    """Triangulate the box with congruent right triangles of diameter <= target_h.

    Parameters
    ----------
    box : tuple
        (xmin, xmax, ymin, ymax), must have positive width and height.
    target_h : float
        Upper bound for the element diameter.

    Returns
    -------
    BackgroundMesh
    """
    xmin, xmax, ymin, ymax = box
    width = xmax - xmin
    height = ymax - ymin
    if width <= 0.0 or height <= 0.0:
        raise ValueError("empty domain")
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")

    # Cells of side ~ target_h / sqrt(2) keep the hypotenuse below target_h.
    side = target_h / math.sqrt(2.0)
    nx = max(1, math.ceil(width / side))
    ny = max(1, math.ceil(height / side))
    while math.hypot(width / nx, height / ny) > target_h:
        nx += 1
        ny += 1

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    vertices = np.column_stack([np.tile(xs, ny + 1), np.repeat(ys, nx + 1)])

    ix = np.tile(np.arange(nx), ny)
    iy = np.repeat(np.arange(ny), nx)
    v00 = iy * (nx + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    # Each cell split by the diagonal v00-v11; both triangles counterclockwise.
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int32)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    sx = width / nx
    sy = height / ny
    h = math.hypot(sx, sy)
    inscribed = 2.0 * sx * sy / (sx + sy + h)

    faces, face_elements = _interior_faces(triangles, vertices.shape[0])
    ptr, ind = _node_adjacency(triangles, vertices.shape[0])

    return BackgroundMesh(
        box=(xmin, xmax, ymin, ymax),
        vertices=vertices,
        triangles=triangles,
        h=h,
        uniformity=1.0,
        shape_ratio=h / inscribed,
        faces=faces,
        face_elements=face_elements,
        node_elem_ptr=ptr,
        node_elem_ind=ind,
    )


def _interior_faces(triangles, n_vertices):
    m = triangles.shape[0]
    edges = triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    lo = edges.min(axis=1).astype(np.int64)
    hi = edges.max(axis=1).astype(np.int64)
    keys = lo * n_vertices + hi
    owner = np.repeat(np.arange(m, dtype=np.int64), 3)

    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    owner = owner[order]
    # In a conforming mesh every key occurs once (boundary) or twice (interior).
    dup = np.flatnonzero(keys[1:] == keys[:-1])
    faces = np.column_stack([keys[dup] // n_vertices, keys[dup] % n_vertices])
    left = np.minimum(owner[dup], owner[dup + 1])
    right = np.maximum(owner[dup], owner[dup + 1])
    return faces.astype(np.int64), np.column_stack([left, right])


def _node_adjacency(triangles, n_vertices):
    flat = triangles.ravel().astype(np.int64)
    elems = np.repeat(np.arange(triangles.shape[0], dtype=np.int64), 3)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n_vertices)
    ptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, elems[order]


def interior_faces(mesh):
    """All interior faces with their two adjacent elements.

    Returns (faces, face_elements): faces is (F, 2) sorted vertex pairs and
    face_elements the matching (F, 2) element pairs, lower index first.
    Boundary edges never appear.
    """
    return mesh.faces, mesh.face_elements


def node_patch(mesh, node):
    """Elements having the given vertex index as a corner."""
    if node < 0 or node >= mesh.n_vertices:
        raise IndexError(f"node {node} out of range [0, {mesh.n_vertices})")
    return mesh.node_elem_ind[mesh.node_elem_ptr[node]:mesh.node_elem_ptr[node + 1]]


def triangle_areas(mesh):
    """Signed areas of all elements (positive for counterclockwise order)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
