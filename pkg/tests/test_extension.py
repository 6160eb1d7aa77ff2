import numpy as np
import pytest

from cutwave.extension import (
    barycentric_coordinates,
    build_extension,
    build_s_map,
    choose_node_owners,
    element_centroids,
    interior_node_set,
)
from cutwave.geometry import LARGE, OUTSIDE, SMALL
from cutwave.mesh import build_structured_mesh, node_patch
from cutwave.analysis import extension_stability_study
from cutwave import build_system, domain_catalog


def hand_classification(mesh, large, small):
    """Classification with hand-picked labels, for map-construction tests."""
    from cutwave.geometry import Classification
    from cutwave.mesh import triangle_areas

    labels = np.zeros(mesh.n_triangles, dtype=np.int8)
    labels[list(small)] = SMALL
    labels[list(large)] = LARGE
    active = np.flatnonzero(labels != OUTSIDE)
    areas = triangle_areas(mesh)
    cut_areas = np.where(labels != OUTSIDE, areas, 0.0)
    active_nodes = np.unique(mesh.triangles[active].ravel())
    node_active_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
    node_active_index[active_nodes] = np.arange(active_nodes.size)
    return Classification(
        labels=labels,
        active=active,
        large=np.sort(np.asarray(large)),
        small=np.sort(np.asarray(small)),
        is_cut=np.zeros(mesh.n_triangles, dtype=bool),
        cut_areas=cut_areas,
        c_large=0.1,
        active_nodes=active_nodes,
        node_active_index=node_active_index,
    )


@pytest.fixture(scope="module")
def disc_pieces(disc_system):
    return disc_system.mesh, disc_system.cls, disc_system.ext


def test_s_map_identity_on_large(disc_pieces):
    mesh, cls, ext = disc_pieces
    assert np.array_equal(ext.s_map[cls.large], cls.large)
    assert np.all(ext.s_map[cls.labels == 0] == -1)


def test_s_map_matches_centroid_oracle(disc_pieces):
    mesh, cls, ext = disc_pieces
    centroids = element_centroids(mesh)
    for e in cls.small:
        dists = np.linalg.norm(centroids[cls.large] - centroids[e], axis=1)
        tied = cls.large[dists <= dists.min() * (1.0 + 1e-12)]
        assert ext.s_map[e] == tied.min()


def test_s_map_tie_break_lowest_index():
    # On a 3x3 cell grid the lower triangles of cells (1,0) and (0,1) sit at
    # centroid offsets (1,2) and (2,1) from the lower triangle of cell
    # (2,2): both distances are sqrt(5), an exact tie.
    mesh = build_structured_mesh((0.0, 3.0, 0.0, 3.0), 1.5)
    assert mesh.n_triangles == 18
    cls = hand_classification(mesh, large=[2, 6], small=[16])
    s_map, locality = build_s_map(mesh, cls)
    c = element_centroids(mesh)
    d2 = np.linalg.norm(c[2] - c[16])
    d6 = np.linalg.norm(c[6] - c[16])
    assert abs(d2 - d6) <= 1e-12 * d2
    assert s_map[16] == 2  # the lower element index of the tied pair
    assert locality >= 1.0


def test_small_next_to_single_large_maps_there():
    mesh = build_structured_mesh((0.0, 2.0, 0.0, 1.0), 1.5)
    cls = hand_classification(mesh, large=[0], small=[1, 2, 3])
    s_map, _ = build_s_map(mesh, cls)
    assert np.all(s_map[cls.small] == 0)


def test_choose_node_owners_nearest_image(disc_pieces):
    mesh, cls, ext = disc_pieces
    centroids = element_centroids(mesh)
    exterior, owners = choose_node_owners(mesh, cls, ext.s_map)
    assert np.array_equal(exterior, ext.exterior_nodes)
    for node, owner in zip(exterior, owners):
        patch = node_patch(mesh, node)
        patch = patch[cls.labels[patch] != 0]
        assert owner in patch
        d = np.linalg.norm(centroids[ext.s_map[patch]] - mesh.vertices[node], axis=1)
        best = d.min()
        assert owner == patch[d <= best * (1.0 + 1e-12)].min()


def test_owner_image_within_locality_bound(disc_pieces):
    mesh, cls, ext = disc_pieces
    centroids = element_centroids(mesh)
    for node, owner in zip(ext.exterior_nodes, ext.node_owner):
        image = ext.s_map[owner]
        assert cls.labels[image] == 2
        dist = np.linalg.norm(centroids[image] - mesh.vertices[node])
        assert dist <= ext.locality * mesh.h + 1e-12


def test_same_image_patch_gives_owner_independent_value(disc_pieces):
    mesh, cls, ext = disc_pieces
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal(ext.n_interior)
    found = 0
    for node in ext.exterior_nodes:
        patch = node_patch(mesh, node)
        patch = patch[cls.labels[patch] != 0]
        images = np.unique(ext.s_map[patch])
        if images.size != 1:
            continue
        found += 1
        verts = mesh.triangles[images[0]]
        lam = barycentric_coordinates(mesh.vertices[verts], mesh.vertices[node])
        expected = lam @ coeffs[ext.interior_index[verts]]
        row = cls.node_active_index[node]
        assert (ext.matrix @ coeffs)[row] == pytest.approx(expected, rel=1e-12)
    assert found > 0


def test_extension_row_structure(disc_pieces):
    mesh, cls, ext = disc_pieces
    E = ext.matrix.tocsr()
    # Interior rows are unit coordinate vectors.
    for node in ext.interior_nodes[:: max(1, ext.interior_nodes.size // 50)]:
        row = E.getrow(cls.node_active_index[node])
        assert row.nnz == 1
        assert row.data[0] == 1.0
        assert row.indices[0] == ext.interior_index[node]
    # Exterior rows carry exactly three barycentric weights.
    for node in ext.exterior_nodes:
        row = E.getrow(cls.node_active_index[node])
        assert row.nnz == 3
    # Every row reproduces constants.
    sums = np.asarray(E.sum(axis=1)).ravel()
    assert np.allclose(sums, 1.0, atol=1e-13)


def test_extension_reproduces_constants_and_affines(disc_pieces):
    mesh, cls, ext = disc_pieces
    ones = np.ones(ext.n_interior)
    assert np.abs(ext.matrix @ ones - 1.0).max() <= 1e-14

    def affine(p):
        return 0.7 - 1.3 * p[..., 0] + 2.1 * p[..., 1]

    coeffs = affine(mesh.vertices[ext.interior_nodes])
    extended = ext.matrix @ coeffs
    exact = affine(mesh.vertices[cls.active_nodes])
    assert np.abs(extended - exact).max() <= 1e-13


def test_exterior_row_against_3x3_solve(disc_pieces):
    mesh, cls, ext = disc_pieces
    node = ext.exterior_nodes[0]
    owner = ext.node_owner[0]
    verts = mesh.triangles[ext.s_map[owner]]
    # Independent oracle: solve the full barycentric system.
    a, b, c = mesh.vertices[verts]
    x = mesh.vertices[node]
    system = np.array([[1.0, 1.0, 1.0], [a[0], b[0], c[0]], [a[1], b[1], c[1]]])
    lam = np.linalg.solve(system, np.array([1.0, x[0], x[1]]))
    row = ext.matrix.getrow(cls.node_active_index[node])
    got = dict(zip(row.indices, row.data))
    for v, weight in zip(verts, lam):
        assert got[ext.interior_index[v]] == pytest.approx(weight, rel=1e-12)


def test_column_support_is_local(disc_pieces):
    mesh, cls, ext = disc_pieces
    E = ext.matrix.tocsr()
    bound = ext.locality * mesh.h + 1e-12
    for node in ext.exterior_nodes:
        row = E.getrow(cls.node_active_index[node])
        cols = ext.interior_nodes[row.indices]
        dists = np.linalg.norm(mesh.vertices[cols] - mesh.vertices[node], axis=1)
        assert dists.max() <= bound


def test_interior_nodes_are_nodes_of_large_elements(disc_pieces):
    mesh, cls, ext = disc_pieces
    assert np.array_equal(ext.interior_nodes, interior_node_set(mesh, cls))
    assert np.array_equal(
        np.sort(np.concatenate([ext.interior_nodes, ext.exterior_nodes])),
        cls.active_nodes,
    )


def test_uniform_averaging_variant(disc_pieces):
    mesh, cls, _ = disc_pieces
    ext = build_extension(mesh, cls, averaging="uniform")
    ones = np.ones(ext.n_interior)
    assert np.abs(ext.matrix @ ones - 1.0).max() <= 1e-13

    def affine(p):
        return -0.2 + 0.9 * p[..., 0] + 0.4 * p[..., 1]

    coeffs = affine(mesh.vertices[ext.interior_nodes])
    exact = affine(mesh.vertices[cls.active_nodes])
    assert np.abs(ext.matrix @ coeffs - exact).max() <= 1e-13
    with pytest.raises(ValueError):
        build_extension(mesh, cls, averaging="median")


def test_stability_ratios_bounded_over_refinements(disc_domain):
    systems = []
    h0 = None
    for lvl in range(3):
        target = 0.12 if h0 is None else h0 / 2**lvl * (1 + 1e-9)
        mesh = build_structured_mesh(disc_domain.bounding_box, target)
        if h0 is None:
            h0 = mesh.h
        systems.append(build_system(mesh, disc_domain))
    r0, r1 = extension_stability_study(systems, n_samples=100, seed=0)
    assert np.all(r0 >= 1.0) and np.all(r1 >= 1.0)
    for i in range(2):
        assert r0[i + 1] <= 1.5 * r0[i]
        assert r1[i + 1] <= 1.5 * r1[i]
