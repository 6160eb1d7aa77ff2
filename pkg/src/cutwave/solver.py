"""Explicit lumped leapfrog time stepping and the elliptic solves.

The update is the classical three-level scheme with the inverse lumped
mass applied as a diagonal divide:

    u_next = 2 u - u_prev - k^2 (A_I u) / m_L + k^2 f_hat

where f_hat carries the interior nodal values of the source.  Strongly
Dirichlet nodes are overwritten with their boundary values after each
update, which keeps the update itself branch-free.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import assemble_load, p1_gradients, _barycentric_batch
from .geometry import (
    BoundaryCondition,
    cut_boundary_rule,
    cut_volume_rule,
    triangle_rule,
)


class BlowUpError(RuntimeError):
    """Raised when the solution stops being finite (CFL violated?)."""

    def __init__(self, step):
        super().__init__(f"blow-up at step {step} (CFL violated?)")
        self.step = step


@dataclass
class TimeGrid:
    """Uniform partition of [0, T] into N steps."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two time steps")
        if self.T <= 0.0:
            raise ValueError("final time must be positive")

    @property
    def k(self):
        return self.T / self.N

    @classmethod
    def from_step(cls, T, k):
        """Grid whose step is the closest realizable value T / round(T/k)."""
        return cls(T=T, N=max(2, round(T / k)))


@dataclass
class WaveState:
    """Two consecutive coefficient vectors of the extended space."""

    u_prev: np.ndarray
    u_curr: np.ndarray
    n: int
    k: float

    def __post_init__(self):
        if self.u_prev.shape != self.u_curr.shape:
            raise ValueError("state vectors must have matching lengths")

    @property
    def t(self):
        # Recomputed, never accumulated.
        return self.n * self.k


def leapfrog_step(state, m_L, A_I, forcing=None, dirichlet=None, dirichlet_values=0.0):
    """One explicit step; forcing holds nodal source values at time t_n."""
    k2 = state.k * state.k
    # Overflow is allowed to reach inf; the finite check below reports it.
    with np.errstate(over="ignore", invalid="ignore"):
        u_next = 2.0 * state.u_curr - state.u_prev - k2 * ((A_I @ state.u_curr) / m_L)
        if forcing is not None:
            u_next += k2 * forcing
    if dirichlet is not None and dirichlet.size:
        u_next[dirichlet] = dirichlet_values
    if not np.all(np.isfinite(u_next)):
        raise BlowUpError(state.n + 1)
    return WaveState(u_prev=state.u_curr, u_curr=u_next, n=state.n + 1, k=state.k)


def initialize(
    system,
    grid,
    mode="interpolate-exact",
    u0=None,
    v0=None,
    u1=None,
    f0=None,
    grad_u0=None,
    grad_u1=None,
):
    """Initial coefficient pair (u_hat_0, u_hat_1).

    mode="interpolate-exact" samples the fields u0 and u1 (the solution at
    the first two time levels) at the interior nodes.  mode="taylor" uses
    u_hat_1 = u_hat_0 + k v_hat + k^2/2 (f_hat_0 - (A_I u_hat_0)/m_L) with
    the velocity field v0 and source f0 at the initial time.  mode="ritz"
    projects u0 and u1 with the elliptic projection, which needs their
    gradients.
    """
    coords = system.interior_coords
    k = grid.k

    if mode == "interpolate-exact":
        if u0 is None or u1 is None:
            raise ValueError("interpolate-exact needs the solution at t0 and t1")
        a = np.asarray(u0(coords), dtype=float)
        b = np.asarray(u1(coords), dtype=float)
    elif mode == "taylor":
        if u0 is None:
            raise ValueError("taylor start needs the initial field")
        a = np.asarray(u0(coords), dtype=float)
        vel = np.asarray(v0(coords), dtype=float) if v0 is not None else 0.0
        src = np.asarray(f0(coords), dtype=float) if f0 is not None else 0.0
        accel = src - (system.mats.A_I @ a) / system.mats.m_L
        b = a + k * vel + 0.5 * k * k * accel
    elif mode == "ritz":
        if u0 is None or u1 is None or grad_u0 is None or grad_u1 is None:
            raise ValueError("ritz start needs u and grad u at t0 and t1")
        a, _ = ritz_project(u0, grad_u0, system)
        b, _ = ritz_project(u1, grad_u1, system)
    else:
        raise ValueError(f"unknown initialization mode {mode!r}")

    if system.dirichlet.size:
        a = a.copy()
        b = b.copy()
        a[system.dirichlet] = 0.0
        b[system.dirichlet] = 0.0
    return a, b


@dataclass
class CflEstimate:
    k_max: float
    c: float
    lambda_max: float
    iterations: int


def cfl_estimate(m_L, A_I, h, tol=1e-3, max_iters=10000, seed=0):
    """Largest stable step k_max = 2 / sqrt(lambda_max(M_L^-1 A_I)).

    The top eigenvalue of the symmetrized generalized problem is found by
    power iteration to the requested relative tolerance.
    """
    sqrt_m = np.sqrt(m_L)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m_L.size)
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iters + 1):
        w = (A_I @ (v / sqrt_m)) / sqrt_m
        lam_new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise RuntimeError("power iteration found a zero operator")
        v = w / norm
        if it >= 20 and abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    else:
        raise RuntimeError(
            f"power iteration did not converge; best estimate {lam:.6e}"
        )
    k_max = 2.0 / np.sqrt(lam)
    return CflEstimate(k_max=k_max, c=k_max / h, lambda_max=lam, iterations=it)


def cg_solve(A, rhs, tol=1e-10, max_iters=None):
    """Plain conjugate gradients for a symmetric positive definite system.

    Iterates until ||rhs - A x|| <= tol * ||rhs||; returns (x, iterations).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    if max_iters is None:
        max_iters = 10 * n
    bnorm = np.linalg.norm(rhs)
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iters + 1):
        Ap = A @ p
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= tol * bnorm:
            return x, it
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise RuntimeError(
        f"cg did not converge in {max_iters} iterations "
        f"(relative residual {np.sqrt(rs) / bnorm:.3e})"
    )


def _elliptic_rhs_full(v, grad_v, system, degree=2):
    """Full-space vector of the Nitsche form applied to an exact field."""
    mesh = system.mesh
    cls = system.cls
    domain = system.domain
    n = cls.active_nodes.size
    rhs = np.zeros(n)
    coords = mesh.vertices[mesh.triangles]
    phi_v = np.asarray(domain.phi(mesh.vertices), dtype=float)

    uncut = cls.active[~cls.is_cut[cls.active]]
    if uncut.size:
        grads, _ = p1_gradients(coords[uncut])
        bary, w = triangle_rule(degree)
        pts = np.einsum("qi,eid->eqd", bary, coords[uncut])
        gv = np.asarray(grad_v(pts.reshape(-1, 2)), dtype=float).reshape(
            uncut.size, -1, 2
        )
        avg_grad = np.einsum("q,eqd->ed", w, gv) * cls.cut_areas[uncut][:, None]
        local = np.einsum("ed,eid->ei", avg_grad, grads)
        np.add.at(
            rhs, cls.node_active_index[mesh.triangles[uncut]].ravel(), local.ravel()
        )

    cut = cls.active[cls.is_cut[cls.active]]
    weak = domain.bc_tags.get("levelset") == BoundaryCondition.WEAK_DIRICHLET
    gamma = system.mats.gamma
    for e in cut:
        tri = mesh.triangles[e]
        grads, _ = p1_gradients(coords[e][None])
        grads = grads[0]
        rule = cut_volume_rule(coords[e], phi_v[tri], degree)
        local = np.zeros(3)
        if len(rule):
            gv = np.asarray(grad_v(rule.points), dtype=float)
            local += grads @ (rule.weights @ gv)
        if weak:
            brule = cut_boundary_rule(coords[e], phi_v[tri], degree)
            if len(brule):
                lam = _barycentric_batch(coords[e], brule.points)
                nrm = brule.normals[0]
                vv = np.asarray(v(brule.points), dtype=float)
                gv = np.asarray(grad_v(brule.points), dtype=float)
                vn = gv @ nrm
                gn = grads @ nrm
                local -= lam.T @ (brule.weights * vn)
                local -= gn * float(brule.weights @ vv)
                local += (gamma / mesh.h) * (lam.T @ (brule.weights * vv))
        np.add.at(rhs, cls.node_active_index[tri], local)

    return rhs


def ritz_project(v, grad_v, system, tol=1e-10, degree=2):
    """Elliptic projection of an exact field onto the extended space.

    Solves A_I x = r with r_i the Nitsche form of (v, grad v) against the
    extended basis functions; returns (x, cg_iterations).  When v solves
    the Poisson problem with homogeneous Dirichlet data this coincides
    with the cut finite element Poisson solution.
    """
    rhs = system.ext.matrix.T @ _elliptic_rhs_full(v, grad_v, system, degree)
    if system.dirichlet.size:
        rhs[system.dirichlet] = 0.0
    return cg_solve(system.mats.A_I, rhs, tol=tol)


def poisson_solve(f, system, tol=1e-10, degree=2):
    """Cut finite element solution of -Δu = f with the tagged conditions."""
    b_full = assemble_load(
        lambda x, t: f(x), 0.0, system.mesh, system.cls, system.domain, degree=degree
    )
    rhs = system.ext.matrix.T @ b_full
    if system.dirichlet.size:
        rhs[system.dirichlet] = 0.0
    return cg_solve(system.mats.A_I, rhs, tol=tol)


@dataclass
class SimulationResult:
    state: WaveState
    snapshots: dict
    energy: np.ndarray
    errors: list
    k_max: float
    n_steps: int


def discrete_energy(system, state):
    """Conserved quantity of the source-free scheme.

    ||d_t v||_L^2 + a_h(v^n, v^{n+1}) evaluated from the two stored levels.
    """
    dv = (state.u_curr - state.u_prev) / state.k
    with np.errstate(over="ignore"):
        kinetic = float(dv @ (system.mats.m_L * dv))
        return kinetic + float(state.u_prev @ (system.mats.A_I @ state.u_curr))


def run_simulation(
    system,
    grid,
    u_init,
    f=None,
    snapshot_times=(),
    track_energy=False,
    exact=None,
    exact_grad=None,
    error_times=(),
    safety=0.9,
    k_max=None,
):
    """March the explicit scheme over the grid.

    u_init is the coefficient pair from initialize().  f, when given, is a
    vectorized source f(x, t) sampled at the interior nodes each step.
    Snapshots and, when an exact solution is given, error norms are taken
    at the steps nearest the requested times.  The step is validated
    against safety * k_max up front.
    """
    if k_max is None:
        k_max = cfl_estimate(system.mats.m_L, system.mats.A_I, system.h).k_max
    k = grid.k
    if k > safety * k_max:
        raise ValueError(
            f"time step {k:.4e} exceeds {safety:.2f} * k_max = {safety * k_max:.4e}"
        )

    coords = system.interior_coords
    u0, u1 = u_init
    state = WaveState(u_prev=u0.copy(), u_curr=u1.copy(), n=1, k=k)

    def steps_of(times):
        table = {}
        for t in times:
            step = int(round(t / k))
            if 0 <= step <= grid.N:
                table.setdefault(step, []).append(t)
        return table

    snap_steps = steps_of(snapshot_times)
    error_steps = steps_of(error_times) if exact is not None else {}
    snapshots = {}
    errors = []

    def record(step, u):
        for t in snap_steps.get(step, ()):
            snapshots[t] = u.copy()
        if step in error_steps:
            # Local import: analysis builds on the solver.
            from .analysis import h1_error, l2_error

            t = step * k
            err_l2 = l2_error(u, lambda x: exact(x, t), system)
            err_h1 = (
                h1_error(u, lambda x: exact_grad(x, t), system)
                if exact_grad is not None
                else None
            )
            errors.append((t, err_l2, err_h1))

    record(0, u0)
    record(1, u1)

    energies = []
    if track_energy:
        energies.append((0.0, discrete_energy(system, state)))

    for _ in range(grid.N - 1):
        forcing = None
        if f is not None:
            forcing = np.asarray(f(coords, state.t), dtype=float)
        state = leapfrog_step(
            state,
            system.mats.m_L,
            system.mats.A_I,
            forcing=forcing,
            dirichlet=system.dirichlet,
        )
        if track_energy:
            energies.append((state.t, discrete_energy(system, state)))
        record(state.n, state.u_curr)

    return SimulationResult(
        state=state,
        snapshots=snapshots,
        energy=np.array(energies) if energies else np.zeros((0, 2)),
        errors=errors,
        k_max=k_max,
        n_steps=grid.N,
    )
