"""Implicit domain description, element classification, and cut quadrature.

The physical domain is given by a level-set function phi, negative inside
and positive outside.  Per element the interface is linearized from the
vertex values of phi, so all cut-cell geometry (clipped volumes, interface
segments, normals) is second-order accurate, matching piecewise linear
elements.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

OUTSIDE = 0
SMALL = 1
LARGE = 2


class BoundaryCondition(enum.Enum):
    WEAK_DIRICHLET = "weak_dirichlet"
    STRONG_DIRICHLET = "strong_dirichlet"
    NEUMANN = "neumann"


@dataclass
class ImplicitDomain:
    """Level-set domain with boundary-condition tags.

    phi and grad_phi are vectorized callables taking (n, 2) coordinate
    arrays.  bc_tags maps boundary portions to a BoundaryCondition; the
    portion "levelset" is the implicit boundary {phi = 0}, the portions
    "xmin"/"xmax"/"ymin"/"ymax" are box sides of the background domain
    that belong to the physical boundary.
    """

    phi: callable
    grad_phi: callable
    bc_tags: dict
    name: str = ""
    bounding_box: tuple = None


@dataclass
class Classification:
    """Element labels and the active mesh induced by a level set.

    labels holds OUTSIDE / SMALL / LARGE per background element.  active
    lists elements with positive intersection area, large the elements with
    intersection area >= c_large * h^d (these play the role of the interior
    mesh that anchors the extension).  cut_areas stores |T cap Omega| from
    the same linearized clipping used for quadrature.
    """

    labels: np.ndarray
    active: np.ndarray
    large: np.ndarray
    small: np.ndarray
    is_cut: np.ndarray
    cut_areas: np.ndarray
    c_large: float
    active_nodes: np.ndarray = field(default=None)
    node_active_index: np.ndarray = field(default=None)


@dataclass
class QuadratureRule:
    """Points, weights, and (for boundary rules) unit outward normals."""

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray = None

    def __len__(self):
        return self.weights.shape[0]


_EMPTY_VOLUME = QuadratureRule(np.zeros((0, 2)), np.zeros(0))

# Symmetric Gauss rules on the reference triangle in barycentric
# coordinates; weights sum to one and scale with the element area.
_TRI_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.full(3, 1 / 3),
    ),
    4: (
        np.array(
            [
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459],
            ]
        ),
        np.array(
            [
                0.223381589678011,
                0.223381589678011,
                0.223381589678011,
                0.109951743655322,
                0.109951743655322,
                0.109951743655322,
            ]
        ),
    ),
    5: (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [0.059715871789770, 0.470142064105115, 0.470142064105115],
                [0.470142064105115, 0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.470142064105115, 0.059715871789770],
                [0.797426985353087, 0.101286507323456, 0.101286507323456],
                [0.101286507323456, 0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.101286507323456, 0.797426985353087],
            ]
        ),
        np.array(
            [
                0.225,
                0.132394152788506,
                0.132394152788506,
                0.132394152788506,
                0.125939180544827,
                0.125939180544827,
                0.125939180544827,
            ]
        ),
    ),
}


def triangle_rule(degree):
    """Reference rule (barycentric points, unit weights) exact to `degree`."""
    for d in sorted(_TRI_RULES):
        if d >= degree:
            return _TRI_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


def segment_rule(degree):
    """Gauss-Legendre nodes and weights on [0, 1], weights summing to one."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _polygon_area(pts):
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def clip_triangle(coords, phi_v):
    """Vertices of {linearized phi <= 0} inside the triangle, in order.

    coords is (3, 2), phi_v the vertex values.  Vertices with phi = 0 count
    as inside.  The result keeps the counterclockwise orientation; it may
    contain repeated points in degenerate configurations, which carry no
    area.
    """
    pts = []
    for i in range(3):
        j = (i + 1) % 3
        pi, pj = phi_v[i], phi_v[j]
        if pi <= 0.0:
            pts.append(coords[i])
        if (pi <= 0.0) != (pj <= 0.0):
            t = pi / (pi - pj)
            pts.append(coords[i] + t * (coords[j] - coords[i]))
    if not pts:
        return np.zeros((0, 2))
    return np.asarray(pts)


def clipped_area(coords, phi_v):
    if np.all(phi_v <= 0.0):
        d1 = coords[1] - coords[0]
        d2 = coords[2] - coords[0]
        return 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    if np.all(phi_v > 0.0):
        return 0.0
    poly = clip_triangle(coords, phi_v)
    if poly.shape[0] < 3:
        return 0.0
    return max(_polygon_area(poly), 0.0)


def _linear_gradient(coords, phi_v):
    mat = np.array([coords[1] - coords[0], coords[2] - coords[0]])
    rhs = np.array([phi_v[1] - phi_v[0], phi_v[2] - phi_v[0]])
    return np.linalg.solve(mat, rhs)


def interface_segment(coords, phi_v):
    """Endpoints and outward unit normal of the linearized interface.

    Returns (p0, p1, normal) or None when the zero level does not cross
    the element.  The normal is constant per element and points in the
    direction of increasing phi, i.e. out of the domain.
    """
    inside = phi_v <= 0.0
    if inside.all() or not inside.any():
        return None
    crossings = []
    for i in range(3):
        j = (i + 1) % 3
        if inside[i] != inside[j]:
            t = phi_v[i] / (phi_v[i] - phi_v[j])
            crossings.append(coords[i] + t * (coords[j] - coords[i]))
    if len(crossings) != 2:
        return None
    p0, p1 = crossings
    if np.linalg.norm(p1 - p0) == 0.0:
        return None
    g = _linear_gradient(coords, phi_v)
    ng = np.linalg.norm(g)
    if ng == 0.0:
        return None
    return p0, p1, g / ng


def _map_rule_to_triangle(coords, degree):
    bary, w = triangle_rule(degree)
    pts = bary @ coords
    d1 = coords[1] - coords[0]
    d2 = coords[2] - coords[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    return pts, w * area


def cut_volume_rule(coords, phi_v, degree=2):
    """Quadrature on T intersected with {phi <= 0} from vertex values."""
    if np.all(phi_v <= 0.0):
        pts, w = _map_rule_to_triangle(coords, degree)
        return QuadratureRule(pts, w)
    if np.all(phi_v > 0.0):
        return _EMPTY_VOLUME
    poly = clip_triangle(coords, phi_v)
    if poly.shape[0] < 3:
        return _EMPTY_VOLUME
    pts_all = []
    w_all = []
    for k in range(1, poly.shape[0] - 1):
        sub = np.array([poly[0], poly[k], poly[k + 1]])
        d1 = sub[1] - sub[0]
        d2 = sub[2] - sub[0]
        if 0.5 * (d1[0] * d2[1] - d1[1] * d2[0]) <= 0.0:
            continue
        pts, w = _map_rule_to_triangle(sub, degree)
        pts_all.append(pts)
        w_all.append(w)
    if not pts_all:
        return _EMPTY_VOLUME
    return QuadratureRule(np.vstack(pts_all), np.concatenate(w_all))


def cut_boundary_rule(coords, phi_v, degree=2):
    """Quadrature along the linearized interface inside one element."""
    seg = interface_segment(coords, phi_v)
    if seg is None:
        return QuadratureRule(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)))
    p0, p1, normal = seg
    t, w = segment_rule(degree)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    length = np.linalg.norm(p1 - p0)
    normals = np.broadcast_to(normal, (len(t), 2)).copy()
    return QuadratureRule(pts, w * length, normals)


def cut_volume_quadrature(tri, domain, degree=2):
    """Volume rule on tri ∩ Omega; tri is a (3, 2) vertex array."""
    tri = np.asarray(tri, dtype=float)
    return cut_volume_rule(tri, domain.phi(tri), degree)


def cut_boundary_quadrature(tri, domain, degree=2):
    """Boundary rule on the interface crossing tri, with outward normals."""
    tri = np.asarray(tri, dtype=float)
    return cut_boundary_rule(tri, domain.phi(tri), degree)


def classify(mesh, domain, c_large=0.1, rule="large"):
    """Label background elements as LARGE / SMALL / OUTSIDE.

    rule="large" uses the intersection-area threshold
    |T cap Omega| >= c_large * h^2; rule="inside" restricts the large set
    to elements fully inside the domain.  Both leave the active mesh (all
    elements with positive intersection) unchanged.
    """
    phi_v = np.asarray(domain.phi(mesh.vertices), dtype=float)
    if phi_v.shape != (mesh.n_vertices,):
        raise ValueError("phi must return one value per vertex")
    phi_t = phi_v[mesh.triangles]
    coords = mesh.vertices[mesh.triangles]

    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    full_areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    if not 0.0 < c_large * mesh.h**2 < full_areas.min():
        raise ValueError(
            "c_large must lie in (0, min |T| / h^2); got "
            f"{c_large} with |T|/h^2 = {full_areas.min() / mesh.h**2:.4g}"
        )

    inside_all = np.all(phi_t <= 0.0, axis=1)
    outside_all = np.all(phi_t > 0.0, axis=1)
    candidates = np.flatnonzero(~inside_all & ~outside_all)

    cut_areas = np.where(inside_all, full_areas, 0.0)
    for e in candidates:
        cut_areas[e] = clipped_area(coords[e], phi_t[e])

    active_mask = cut_areas > 0.0
    if rule == "large":
        large_mask = active_mask & (cut_areas >= c_large * mesh.h**2)
    elif rule == "inside":
        large_mask = inside_all
    else:
        raise ValueError(f"unknown classification rule {rule!r}")

    labels = np.zeros(mesh.n_triangles, dtype=np.int8)
    labels[active_mask] = SMALL
    labels[large_mask] = LARGE

    large = np.flatnonzero(large_mask)
    if large.size == 0:
        raise RuntimeError("domain unresolved by mesh: no large elements")

    active = np.flatnonzero(active_mask)
    small = np.flatnonzero(active_mask & ~large_mask)
    is_cut = ~inside_all & ~outside_all

    active_nodes = np.unique(mesh.triangles[active].ravel())
    node_active_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
    node_active_index[active_nodes] = np.arange(active_nodes.size)

    return Classification(
        labels=labels,
        active=active,
        large=large,
        small=small,
        is_cut=is_cut,
        cut_areas=cut_areas,
        c_large=c_large,
        active_nodes=active_nodes,
        node_active_index=node_active_index,
    )


def validate_levelset(domain, box, n=64, band_fraction=0.05):
    """Sample the level set over the box and check it is usable.

    Requires phi to be negative somewhere, the gradient to be nonzero in
    the band |phi| < band_fraction * diag(box), and boundary tags drawn
    from BoundaryCondition.  Raises ValueError otherwise.
    """
    for portion, tag in domain.bc_tags.items():
        if not isinstance(tag, BoundaryCondition):
            raise ValueError(f"portion {portion!r} has invalid tag {tag!r}")
    xmin, xmax, ymin, ymax = box
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    pts = np.column_stack([np.repeat(xs, n), np.tile(ys, n)])
    phi = np.asarray(domain.phi(pts), dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("level set returned non-finite values")
    if phi.min() > 0.0:
        raise ValueError("level set is positive everywhere in the box")
    diag = float(np.hypot(xmax - xmin, ymax - ymin))
    in_band = np.abs(phi) < band_fraction * diag
    if in_band.any():
        grad = np.asarray(domain.grad_phi(pts[in_band]), dtype=float)
        norms = np.linalg.norm(grad, axis=-1)
        if norms.min() <= 0.0:
            raise ValueError("level-set gradient vanishes near the interface")


def domain_catalog(name, bc="dirichlet", radius=0.5, cut_plane=0.79):
    """Built-in domains.

    "disc": circle of the given radius centered at the origin, the whole
    boundary weakly Dirichlet (bc="dirichlet") or Neumann (bc="neumann").

    "box-with-cut-side": the rectangle (-0.81, cut_plane) x (-0.8, 0.8)
    embedded so that only the side x = cut_plane cuts through the mesh;
    that side is weakly Dirichlet, x = -0.81 strongly Dirichlet, and the
    horizontal sides Neumann.
    """
    if name == "disc":
        tag = {
            "dirichlet": BoundaryCondition.WEAK_DIRICHLET,
            "neumann": BoundaryCondition.NEUMANN,
        }.get(bc)
        if tag is None:
            raise ValueError(f"unknown boundary condition {bc!r}")

        def phi(x):
            x = np.asarray(x, dtype=float)
            return np.hypot(x[..., 0], x[..., 1]) - radius

        def grad_phi(x):
            x = np.asarray(x, dtype=float)
            r = np.hypot(x[..., 0], x[..., 1])
            r = np.where(r == 0.0, 1.0, r)
            return x / r[..., None]

        pad = 0.2 * radius
        half = radius + pad
        return ImplicitDomain(
            phi=phi,
            grad_phi=grad_phi,
            bc_tags={"levelset": tag},
            name="disc",
            bounding_box=(-half, half, -half, half),
        )

    if name == "box-with-cut-side":

        def phi(x):
            x = np.asarray(x, dtype=float)
            return x[..., 0] - cut_plane

        def grad_phi(x):
            x = np.asarray(x, dtype=float)
            g = np.zeros(x.shape)
            g[..., 0] = 1.0
            return g

        return ImplicitDomain(
            phi=phi,
            grad_phi=grad_phi,
            bc_tags={
                "levelset": BoundaryCondition.WEAK_DIRICHLET,
                "xmin": BoundaryCondition.STRONG_DIRICHLET,
                "ymin": BoundaryCondition.NEUMANN,
                "ymax": BoundaryCondition.NEUMANN,
            },
            name="box-with-cut-side",
            bounding_box=(-0.81, cut_plane + 0.02, -0.8, 0.8),
        )

    raise ValueError(f"unknown domain {name!r}")
