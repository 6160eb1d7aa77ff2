"""Error norms over the physical domain, observed orders, and diagnostics.

Norms integrate the extended finite element field against exact fields on
the cut geometry, so they measure errors over Omega only.  The study
functions back the empirical checks of the construction: lumping defect,
graph-Laplacian structure, extension stability, energy conservation,
time reversal, and the sharpness of the step-size bound.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import (
    _REF_MASS,
    _barycentric_batch,
    _scatter,
    _symmetrize,
    p1_gradients,
)
from .geometry import cut_volume_rule, triangle_rule
from .solver import BlowUpError, WaveState, discrete_energy, leapfrog_step

ERROR_DEGREE = 4


@dataclass
class ErrorReport:
    """One refinement level of a convergence study."""

    h: float
    k: float
    l2_error: float
    h1_error: float
    energy_drift: float = None
    eoc_l2: float = None
    eoc_h1: float = None


def _field_errors(u_I, exact, system, degree, gradient):
    mesh = system.mesh
    cls = system.cls
    u_full = system.extend(np.asarray(u_I, dtype=float))
    coords = mesh.vertices[mesh.triangles]
    phi_v = np.asarray(system.domain.phi(mesh.vertices), dtype=float)
    total = 0.0

    uncut = cls.active[~cls.is_cut[cls.active]]
    if uncut.size:
        nodal = u_full[cls.node_active_index[mesh.triangles[uncut]]]
        if gradient:
            grads, _ = p1_gradients(coords[uncut])
            fe = np.einsum("ei,eid->ed", nodal, grads)
            bary, w = triangle_rule(degree)
            pts = np.einsum("qi,eid->eqd", bary, coords[uncut])
            ex = np.asarray(exact(pts.reshape(-1, 2)), dtype=float).reshape(
                uncut.size, -1, 2
            )
            diff = ((fe[:, None, :] - ex) ** 2).sum(-1)
        else:
            bary, w = triangle_rule(degree)
            pts = np.einsum("qi,eid->eqd", bary, coords[uncut])
            fe = np.einsum("ei,qi->eq", nodal, bary)
            ex = np.asarray(exact(pts.reshape(-1, 2)), dtype=float).reshape(
                uncut.size, -1
            )
            diff = (fe - ex) ** 2
        total += float(np.einsum("e,eq,q->", cls.cut_areas[uncut], diff, w))

    cut = cls.active[cls.is_cut[cls.active]]
    for e in cut:
        tri = mesh.triangles[e]
        rule = cut_volume_rule(coords[e], phi_v[tri], degree)
        if len(rule) == 0:
            continue
        nodal = u_full[cls.node_active_index[tri]]
        if gradient:
            grads, _ = p1_gradients(coords[e][None])
            fe = nodal @ grads[0]
            ex = np.asarray(exact(rule.points), dtype=float)
            diff = ((fe[None, :] - ex) ** 2).sum(-1)
        else:
            lam = _barycentric_batch(coords[e], rule.points)
            fe = lam @ nodal
            ex = np.asarray(exact(rule.points), dtype=float)
            diff = (fe - ex) ** 2
        total += float(rule.weights @ diff)

    return np.sqrt(total)


def l2_error(u_I, exact, system, degree=ERROR_DEGREE):
    """L2(Omega) distance between the extended field and an exact field."""
    return _field_errors(u_I, exact, system, degree, gradient=False)


def h1_error(u_I, exact_grad, system, degree=ERROR_DEGREE):
    """L2(Omega) distance of gradients (the energy seminorm error)."""
    return _field_errors(u_I, exact_grad, system, degree, gradient=True)


def grad_seminorm(system, u_full):
    """Gradient seminorm over Omega of a full-space coefficient vector."""
    mesh = system.mesh
    cls = system.cls
    coords = mesh.vertices[mesh.triangles[cls.active]]
    grads, _ = p1_gradients(coords)
    nodal = u_full[cls.node_active_index[mesh.triangles[cls.active]]]
    fe = np.einsum("ei,eid->ed", nodal, grads)
    return float(np.sqrt(np.sum(cls.cut_areas[cls.active] * (fe**2).sum(-1))))


def eoc(errors, hs):
    """Observed orders log(e_{i-1}/e_i) / log(h_{i-1}/h_i)."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need matching error and mesh-size sequences")
    if np.any(hs <= 0.0) or np.any(errors < 0.0):
        raise ValueError("mesh sizes must be positive and errors nonnegative")
    out = np.empty(errors.size - 1)
    for i in range(1, errors.size):
        if errors[i] == 0.0:
            out[i - 1] = np.inf
        else:
            out[i - 1] = np.log(errors[i - 1] / errors[i]) / np.log(hs[i - 1] / hs[i])
    return out


def lumping_error_study(system, n_samples=100, seed=0):
    """Max over random pairs of |(v,w) - (v,w)_L| / (h^2 |v|_1 |w|_1)."""
    rng = np.random.default_rng(seed)
    B = system.mats.B
    n = system.n_interior
    h2 = system.h**2
    worst = 0.0
    for _ in range(n_samples):
        v = rng.standard_normal(n)
        w = rng.standard_normal(n)
        num = abs(float(v @ (B @ w)))
        den = h2 * grad_seminorm(system, system.extend(v)) * grad_seminorm(
            system, system.extend(w)
        )
        if den > 0.0:
            worst = max(worst, num / den)
    return worst


@dataclass
class GraphLaplacianReport:
    row_sum_rel: float
    asymmetry: float
    min_mass_offdiag: float
    n_negative_mass_offdiag: int
    min_lumped: float
    min_eigenvalue: float = None

    @property
    def passed(self):
        return (
            self.row_sum_rel <= 1e-12
            and self.asymmetry <= 1e-12
            and self.min_lumped > 0.0
        )


def graph_laplacian_check(B, m_L, dense_limit=2500, strict=True):
    """Structural checks of the lumping defect B = diag(m_L) - M_I.

    Verifies exactly zero row sums (relative to the largest absolute row
    sum of |B|) and symmetry; reports the sign pattern of the mass
    off-diagonals and, on meshes small enough for a dense solve, the
    smallest eigenvalue.  strict=True raises on a hard violation.
    """
    B = B.tocsr()
    row_sums = np.asarray(B.sum(axis=1)).ravel()
    scale = np.abs(B).sum(axis=1).max()
    row_sum_rel = float(np.abs(row_sums).max() / scale) if scale > 0 else 0.0
    asym = B - B.T
    asymmetry = float(np.abs(asym.data).max() / scale) if asym.nnz and scale > 0 else 0.0

    # Off-diagonals of B are the negated mass entries.
    coo = sp.coo_matrix(B)
    off = coo.data[coo.row != coo.col]
    mass_off = -off
    min_mass_off = float(mass_off.min()) if mass_off.size else 0.0
    n_neg = int(np.sum(mass_off < 0.0))

    min_eig = None
    if B.shape[0] <= dense_limit:
        min_eig = float(np.linalg.eigvalsh(B.toarray()).min())

    report = GraphLaplacianReport(
        row_sum_rel=row_sum_rel,
        asymmetry=asymmetry,
        min_mass_offdiag=min_mass_off,
        n_negative_mass_offdiag=n_neg,
        min_lumped=float(m_L.min()),
        min_eigenvalue=min_eig,
    )
    if strict and not report.passed:
        raise RuntimeError(f"lumping defect is not a graph Laplacian: {report}")
    return report


def mesh_norm_matrices(mesh, cls, elements):
    """Whole-element mass and stiffness over a subset of elements.

    These are mesh norms (integrals over full elements, not clipped ones)
    on the active-node index space, used by the stability study.
    """
    coords = mesh.vertices[mesh.triangles[elements]]
    grads, areas = p1_gradients(coords)
    n = cls.active_nodes.size
    mass_local = areas[:, None, None] * _REF_MASS[None, :, :]
    stiff_local = _symmetrize(np.einsum("e,eid,ejd->eij", areas, grads, grads))
    M = _scatter(mesh, cls, elements, mass_local, n).tocsr()
    A = _scatter(mesh, cls, elements, stiff_local, n).tocsr()
    return M, A


def extension_stability_study(levels, n_samples=100, seed=0):
    """Per level, the max ratios ||E v|| / ||v|| for values and gradients.

    levels is a sequence of (mesh, cls, ext) triples or DiscreteSystem
    objects.  For each level 100 random interior coefficient vectors are
    extended; the returned arrays hold the max ratio per level for m = 0
    (L2 over the active mesh vs. the large mesh) and m = 1 (gradients).
    """
    ratios0 = []
    ratios1 = []
    for level in levels:
        if hasattr(level, "mesh"):
            mesh, cls, ext = level.mesh, level.cls, level.ext
        else:
            mesh, cls, ext = level
        M_act, A_act = mesh_norm_matrices(mesh, cls, cls.active)
        M_lar, A_lar = mesh_norm_matrices(mesh, cls, cls.large)
        rng = np.random.default_rng(seed)
        worst0 = 0.0
        worst1 = 0.0
        for _ in range(n_samples):
            v = rng.standard_normal(ext.interior_nodes.size)
            ev = ext.matrix @ v
            m0_num = float(ev @ (M_act @ ev))
            m0_den = float(ev @ (M_lar @ ev))
            m1_num = float(ev @ (A_act @ ev))
            m1_den = float(ev @ (A_lar @ ev))
            if m0_den > 0.0:
                worst0 = max(worst0, np.sqrt(m0_num / m0_den))
            if m1_den > 0.0:
                worst1 = max(worst1, np.sqrt(m1_num / m1_den))
        ratios0.append(worst0)
        ratios1.append(worst1)
    return np.array(ratios0), np.array(ratios1)


def energy_conservation_study(system, k, n_steps=1000, seed=0):
    """Relative drift of the discrete energy for a source-free run."""
    rng = np.random.default_rng(seed)
    n = system.n_interior
    u0 = rng.standard_normal(n)
    u1 = u0 - 0.5 * k * k * ((system.mats.A_I @ u0) / system.mats.m_L)
    if system.dirichlet.size:
        u0[system.dirichlet] = 0.0
        u1[system.dirichlet] = 0.0
    state = WaveState(u_prev=u0, u_curr=u1, n=1, k=k)
    e0 = discrete_energy(system, state)
    worst = 0.0
    for _ in range(n_steps):
        state = leapfrog_step(
            state, system.mats.m_L, system.mats.A_I, dirichlet=system.dirichlet
        )
        worst = max(worst, abs(discrete_energy(system, state) - e0))
    return worst / abs(e0)


def time_reversal_study(system, k, n_steps=1000, seed=0):
    """Relative recovery error of the initial data under reversed stepping."""
    rng = np.random.default_rng(seed)
    n = system.n_interior
    u0 = rng.standard_normal(n)
    u1 = u0 - 0.5 * k * k * ((system.mats.A_I @ u0) / system.mats.m_L)
    if system.dirichlet.size:
        u0[system.dirichlet] = 0.0
        u1[system.dirichlet] = 0.0
    state = WaveState(u_prev=u0.copy(), u_curr=u1.copy(), n=1, k=k)
    for _ in range(n_steps - 1):
        state = leapfrog_step(
            state, system.mats.m_L, system.mats.A_I, dirichlet=system.dirichlet
        )
    # The same recursion run backwards from the last two levels.
    back = WaveState(u_prev=state.u_curr, u_curr=state.u_prev, n=1, k=k)
    for _ in range(n_steps - 1):
        back = leapfrog_step(
            back, system.mats.m_L, system.mats.A_I, dirichlet=system.dirichlet
        )
    return float(np.linalg.norm(back.u_curr - u0) / np.linalg.norm(u0))


def cfl_probe(system, k, n_steps=500, growth_limit=10.0, seed=0):
    """True when random data grows past the limit (or blows up) within n_steps."""
    rng = np.random.default_rng(seed)
    n = system.n_interior
    u0 = rng.standard_normal(n)
    if system.dirichlet.size:
        u0[system.dirichlet] = 0.0
    u1 = u0.copy()
    ref = np.abs(u0).max()
    state = WaveState(u_prev=u0, u_curr=u1, n=1, k=k)
    for _ in range(n_steps):
        try:
            state = leapfrog_step(
                state, system.mats.m_L, system.mats.A_I, dirichlet=system.dirichlet
            )
        except BlowUpError:
            return True
        if np.abs(state.u_curr).max() >= growth_limit * ref:
            return True
    return False
