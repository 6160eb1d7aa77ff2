import math

import numpy as np
import pytest

from cutwave import build_system, domain_catalog
from cutwave.mesh import build_structured_mesh
from cutwave.problems import poisson_disc, radial_pulse, standing_wave
from cutwave.solver import (
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
from cutwave.analysis import eoc, l2_error

from conftest import random_interior


def small_grid(system, n_steps=8, frac=0.5):
    est = cfl_estimate(system.mats.m_L, system.mats.A_I, system.h)
    k = frac * est.k_max
    return TimeGrid(T=n_steps * k, N=n_steps), est


# -- time grid and state ------------------------------------------------------


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(T=1.0, N=1)
    with pytest.raises(ValueError):
        TimeGrid(T=-1.0, N=10)
    grid = TimeGrid.from_step(1.0, math.pi / 2000)
    assert grid.N == round(2000 / math.pi)
    assert grid.k == pytest.approx(math.pi / 2000, rel=1e-3)


def test_state_time_is_recomputed():
    state = WaveState(u_prev=np.zeros(2), u_curr=np.zeros(2), n=7, k=0.125)
    assert state.t == 7 * 0.125


# -- leapfrog -----------------------------------------------------------------


def test_zero_data_stays_zero(disc_system_neumann):
    n = disc_system_neumann.n_interior
    state = WaveState(u_prev=np.zeros(n), u_curr=np.zeros(n), n=1, k=1e-3)
    state = leapfrog_step(state, disc_system_neumann.mats.m_L,
                          disc_system_neumann.mats.A_I)
    assert np.all(state.u_curr == 0.0)
    assert state.n == 2


def test_constants_preserved_with_neumann(disc_system_neumann):
    n = disc_system_neumann.n_interior
    c = 0.37
    state = WaveState(u_prev=np.full(n, c), u_curr=np.full(n, c), n=1, k=1e-3)
    state = leapfrog_step(state, disc_system_neumann.mats.m_L,
                          disc_system_neumann.mats.A_I)
    assert np.abs(state.u_curr - c).max() <= 1e-12 * c


def test_step_against_dense_oracle(disc_system):
    sol = standing_wave()
    grid, est = small_grid(disc_system)
    k = grid.k
    u0, u1 = initialize(
        disc_system, grid, mode="interpolate-exact",
        u0=lambda x: sol.u(x, 0.0), u1=lambda x: sol.u(x, k),
    )
    forcing = sol.f(disc_system.interior_coords, k)
    state = leapfrog_step(
        WaveState(u_prev=u0, u_curr=u1, n=1, k=k),
        disc_system.mats.m_L, disc_system.mats.A_I, forcing=forcing,
    )
    A = disc_system.mats.A_I.toarray()
    dense = 2 * u1 - u0 - k * k * (A @ u1) / disc_system.mats.m_L + k * k * forcing
    assert np.abs(state.u_curr - dense).max() <= 1e-13 * max(1.0, np.abs(dense).max())


def test_blowup_detected():
    domain = domain_catalog("disc", bc="neumann")
    mesh = build_structured_mesh(domain.bounding_box, 0.15)
    system = build_system(mesh, domain)
    est = cfl_estimate(system.mats.m_L, system.mats.A_I, system.h)
    k = 3.0 * est.k_max
    u0 = random_interior(system, seed=5)
    state = WaveState(u_prev=u0, u_curr=u0.copy(), n=1, k=k)
    with pytest.raises(BlowUpError) as err:
        for _ in range(2000):
            state = leapfrog_step(state, system.mats.m_L, system.mats.A_I)
    assert err.value.step > 1


# -- initial data -------------------------------------------------------------


def test_taylor_zero_data(disc_system_neumann):
    grid, _ = small_grid(disc_system_neumann)
    u0, u1 = initialize(
        disc_system_neumann, grid, mode="taylor",
        u0=lambda x: np.zeros(len(x)),
    )
    assert np.all(u0 == 0.0)
    assert np.all(u1 == 0.0)


def test_interpolate_exact_matches_formula(disc_system):
    omega = 2.0 * math.pi
    sol = standing_wave(omega)
    grid, _ = small_grid(disc_system)
    k = grid.k
    u0, u1 = initialize(
        disc_system, grid, mode="interpolate-exact",
        u0=lambda x: sol.u(x, 0.0), u1=lambda x: sol.u(x, k),
    )
    coords = disc_system.interior_coords
    r2 = coords[:, 0] ** 2 + coords[:, 1] ** 2
    assert np.allclose(u0, 1.0 - 4.0 * r2, rtol=1e-14)
    assert np.allclose(u1, (1.0 - 4.0 * r2) * math.cos(omega * k), rtol=1e-14)


def test_pulse_taylor_start_matches_expansion(disc_system_neumann):
    u0_field = radial_pulse(0.2)
    grid, _ = small_grid(disc_system_neumann)
    k = grid.k
    u0, u1 = initialize(disc_system_neumann, grid, mode="taylor", u0=u0_field)
    coords = disc_system_neumann.interior_coords
    r = np.hypot(coords[:, 0], coords[:, 1])
    expected0 = np.where(r < 0.2, 1.0 + np.cos(np.pi * np.minimum(r, 0.2) / 0.2), 0.0)
    assert np.allclose(u0, expected0, rtol=1e-14, atol=1e-15)
    accel = -(disc_system_neumann.mats.A_I @ u0) / disc_system_neumann.mats.m_L
    assert np.allclose(u1, u0 + 0.5 * k * k * accel, rtol=1e-14, atol=1e-16)


def test_initialize_missing_data_errors(disc_system):
    grid, _ = small_grid(disc_system)
    with pytest.raises(ValueError):
        initialize(disc_system, grid, mode="interpolate-exact", u0=lambda x: x[:, 0])
    with pytest.raises(ValueError):
        initialize(disc_system, grid, mode="taylor")
    with pytest.raises(ValueError):
        initialize(disc_system, grid, mode="spectral")


def test_ritz_initialization(disc_system):
    sol = standing_wave()
    grid, _ = small_grid(disc_system)
    k = grid.k
    u0, u1 = initialize(
        disc_system, grid, mode="ritz",
        u0=lambda x: sol.u(x, 0.0), u1=lambda x: sol.u(x, k),
        grad_u0=lambda x: sol.grad_u(x, 0.0), grad_u1=lambda x: sol.grad_u(x, k),
    )
    exact0 = sol.u(disc_system.interior_coords, 0.0)
    assert np.abs(u0 - exact0).max() <= 0.05 * np.abs(exact0).max()


# -- CFL ----------------------------------------------------------------------


def test_cfl_scaling(disc_system_neumann):
    m_L = disc_system_neumann.mats.m_L
    A = disc_system_neumann.mats.A_I
    h = disc_system_neumann.h
    base = cfl_estimate(m_L, A, h)
    quadrupled = cfl_estimate(m_L, (4.0 * A).tocsr(), h)
    assert quadrupled.k_max == pytest.approx(base.k_max / 2.0, rel=1e-3)


def test_cfl_against_dense_eigenvalue(uncut_system):
    m_L = uncut_system.mats.m_L
    A = uncut_system.mats.A_I
    est = cfl_estimate(m_L, A, uncut_system.h)
    S = A.toarray() / np.sqrt(np.outer(m_L, m_L))
    lam_dense = np.linalg.eigvalsh(S).max()
    assert est.lambda_max == pytest.approx(lam_dense, rel=2e-3)


def test_cfl_ratio_stable_under_refinement():
    domain = domain_catalog("disc", bc="neumann", radius=10.0)
    cs = []
    for target in (0.2, 0.1):
        mesh = build_structured_mesh((0.0, 1.0, 0.0, 1.0), target)
        system = build_system(mesh, domain)
        cs.append(cfl_estimate(system.mats.m_L, system.mats.A_I, system.h).c)
    assert 0.5 <= cs[1] / cs[0] <= 2.0


def test_reference_time_step_is_accepted():
    # The documented convergence run pairs h = 2.69e-2 with k = pi/2000.
    domain = domain_catalog("disc", bc="dirichlet")
    mesh = build_structured_mesh(domain.bounding_box, 2.69e-2)
    system = build_system(mesh, domain)
    est = cfl_estimate(system.mats.m_L, system.mats.A_I, system.h)
    assert math.pi / 2000 < 0.9 * est.k_max


# -- conjugate gradients ------------------------------------------------------


def test_cg_zero_rhs(disc_system):
    x, iters = cg_solve(disc_system.mats.A_I, np.zeros(disc_system.n_interior))
    assert np.all(x == 0.0)
    assert iters == 0


def test_cg_recovers_random_solution(disc_system):
    x_true = random_interior(disc_system, seed=9)
    rhs = disc_system.mats.A_I @ x_true
    x, iters = cg_solve(disc_system.mats.A_I, rhs, tol=1e-12)
    assert iters > 0
    assert np.abs(x - x_true).max() <= 1e-8 * np.abs(x_true).max()


def test_cg_iteration_cap(disc_system):
    rhs = random_interior(disc_system, seed=4)
    with pytest.raises(RuntimeError, match="cg did not converge"):
        cg_solve(disc_system.mats.A_I, rhs, tol=1e-14, max_iters=2)


# -- elliptic solves ----------------------------------------------------------


def test_ritz_zero_field(disc_system):
    x, _ = ritz_project(
        lambda p: np.zeros(len(p)), lambda p: np.zeros((len(p), 2)), disc_system
    )
    assert np.abs(x).max() <= 1e-14


def test_ritz_reproduces_affine_weak_dirichlet(disc_system):
    def v(p):
        return 0.4 + 1.1 * p[..., 0] - 0.6 * p[..., 1]

    def grad_v(p):
        return np.broadcast_to(np.array([1.1, -0.6]), np.asarray(p).shape).copy()

    x, _ = ritz_project(v, grad_v, disc_system, tol=1e-13)
    exact = v(disc_system.interior_coords)
    assert np.abs(x - exact).max() <= 1e-9


def test_ritz_reproduces_affine_neumann_up_to_constant(disc_system_neumann):
    def v(p):
        return 1.1 * p[..., 0] - 0.6 * p[..., 1]

    def grad_v(p):
        return np.broadcast_to(np.array([1.1, -0.6]), np.asarray(p).shape).copy()

    x, _ = ritz_project(v, grad_v, disc_system_neumann, tol=1e-13)
    exact = v(disc_system_neumann.interior_coords)
    shift = (x - exact).mean()
    assert np.abs(x - exact - shift).max() <= 1e-9


def test_ritz_convergence_rates(disc_domain):
    u, grad_u, _ = poisson_disc()
    hs, errs = [], []
    h0 = None
    for lvl in range(3):
        target = 0.12 if h0 is None else h0 / 2**lvl * (1 + 1e-9)
        mesh = build_structured_mesh(disc_domain.bounding_box, target)
        h0 = h0 or mesh.h
        system = build_system(mesh, disc_domain)
        x, _ = ritz_project(u, grad_u, system)
        hs.append(system.h)
        errs.append(l2_error(x, u, system))
    rates = eoc(errs, hs)
    assert rates[-1] >= 1.8


def test_poisson_equals_ritz_for_manufactured_solution(disc_system):
    u, grad_u, f = poisson_disc()
    x_p, _ = poisson_solve(f, disc_system)
    x_r, _ = ritz_project(u, grad_u, disc_system)
    # Same variational problem up to quadrature consistency.
    assert np.abs(x_p - x_r).max() <= 10 * disc_system.h**2


# -- full runs ----------------------------------------------------------------


def test_run_zero_everything_gives_zero_snapshots(disc_system_neumann):
    grid, est = small_grid(disc_system_neumann, n_steps=20)
    n = disc_system_neumann.n_interior
    res = run_simulation(
        disc_system_neumann, grid, (np.zeros(n), np.zeros(n)),
        snapshot_times=(grid.k * 10,), k_max=est.k_max,
    )
    assert res.state.n == grid.N
    for snap in res.snapshots.values():
        assert np.all(snap == 0.0)


def test_run_rejects_unstable_step(disc_system_neumann):
    est = cfl_estimate(
        disc_system_neumann.mats.m_L, disc_system_neumann.mats.A_I,
        disc_system_neumann.h,
    )
    k = 1.2 * est.k_max
    grid = TimeGrid(T=10 * k, N=10)
    n = disc_system_neumann.n_interior
    with pytest.raises(ValueError, match="exceeds"):
        run_simulation(disc_system_neumann, grid, (np.zeros(n), np.zeros(n)),
                       k_max=est.k_max)


def test_run_records_errors_at_configured_times(disc_system):
    sol = standing_wave()
    grid, est = small_grid(disc_system, n_steps=40, frac=0.4)
    k = grid.k
    u_init = initialize(
        disc_system, grid, mode="interpolate-exact",
        u0=lambda x: sol.u(x, 0.0), u1=lambda x: sol.u(x, k),
    )
    res = run_simulation(
        disc_system, grid, u_init, f=sol.f,
        exact=sol.u, exact_grad=sol.grad_u,
        error_times=(10 * k, grid.T), k_max=est.k_max,
    )
    assert len(res.errors) == 2
    times = [row[0] for row in res.errors]
    assert times == sorted(times)
    for _, e_l2, e_h1 in res.errors:
        assert 0.0 <= e_l2 <= 0.1
        assert 0.0 <= e_h1 <= 1.0


def test_evolution_is_linear(disc_system_neumann):
    grid, est = small_grid(disc_system_neumann, n_steps=50)
    a0 = random_interior(disc_system_neumann, seed=21)
    a1 = random_interior(disc_system_neumann, seed=22)
    b0 = random_interior(disc_system_neumann, seed=23)
    b1 = random_interior(disc_system_neumann, seed=24)

    def final(u0, u1):
        res = run_simulation(disc_system_neumann, grid, (u0, u1), k_max=est.k_max)
        return res.state.u_curr

    fa = final(a0, a1)
    fb = final(b0, b1)
    fab = final(a0 + b0, a1 + b1)
    scale = np.abs(fab).max()
    assert np.abs(fa + fb - fab).max() <= 1e-11 * scale
