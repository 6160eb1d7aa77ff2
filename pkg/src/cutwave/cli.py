"""Command-line front end: experiments and verification suites.

Subcommands: converge | simulate | poisson | verify.  Options come from
an optional TOML config file ([run], [domain], [bc], [output] tables)
with command-line flags taking precedence.  Exit codes: 0 success,
1 acceptance failure, 2 configuration error, 3 numerical blow-up.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .analysis import (
    ErrorReport,
    cfl_probe,
    energy_conservation_study,
    eoc,
    extension_stability_study,
    graph_laplacian_check,
    h1_error,
    l2_error,
    lumping_error_study,
    time_reversal_study,
)
from .assembly import dump_matrix
from .geometry import domain_catalog
from .mesh import build_structured_mesh
from .problems import planar_pulse, poisson_disc, radial_pulse, standing_wave
from .solver import (
    BlowUpError,
    TimeGrid,
    cfl_estimate,
    initialize,
    poisson_solve,
    ritz_project,
    run_simulation,
)
from .system import build_system
from .vtkio import write_snapshot

# Experiment defaults; mesh sizes and steps follow the reference runs.
CONVERGE_H0 = 2.69e-2
CONVERGE_K0 = np.pi / 2000.0
PULSE_DISC_H = 7e-3
PULSE_BOX_H = 8.9e-3
PULSE_K = 3.93e-4

# Captioned snapshot times for the shrinking-pulse runs, per pulse width.
BOX_SNAPSHOTS = {
    0.2: (0.0, 0.65, 0.9, 1.2),
    0.1: (0.0, 0.7, 0.85, 1.2),
    0.05: (0.0, 0.74, 0.84, 1.2),
}


@dataclass
class RunConfig:
    """Merged configuration of one experiment run."""

    experiment: str = ""
    domain: str = "disc"
    bc: str = "dirichlet"
    h: float = None
    k: float = None
    T: float = None
    levels: int = 4
    gamma: float = 10.0
    c_large: float = 0.1
    omega: float = 2.0 * np.pi
    r0: float = 0.2
    d0: float = 0.2
    snapshots: tuple = None
    init_mode: str = None
    out: str = "out"
    seed: int = 0
    safety: float = 0.9
    via: str = "poisson"
    averaging: str = "owner"
    dump_matrices: bool = False

    def validate(self):
        for name in ("h", "k", "T", "gamma", "c_large", "safety"):
            value = getattr(self, name)
            if value is not None and value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")


def _load_toml(path):
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


_FILE_KEYS = {
    "run": ["experiment", "h", "k", "T", "levels", "gamma", "c_large", "seed",
            "safety", "omega", "init_mode", "via", "averaging"],
    "domain": ["bc", "r0", "d0"],
    "output": ["out", "snapshots", "dump_matrices"],
}


def merge_config(args):
    """Defaults, then config-file values, then explicit CLI flags."""
    cfg = RunConfig(experiment=args.command)
    if getattr(args, "config", None):
        data = _load_toml(args.config)
        for section, keys in _FILE_KEYS.items():
            table = data.get(section, {})
            for key in keys:
                if key in table:
                    setattr(cfg, key, table[key])
        if "name" in data.get("domain", {}):
            cfg.domain = data["domain"]["name"]
        # The [bc] table tags the implicit boundary portion.
        if "levelset" in data.get("bc", {}):
            cfg.bc = data["bc"]["levelset"]
        if "snapshots" in data.get("output", {}):
            cfg.snapshots = tuple(data["output"]["snapshots"])
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        if key == "snapshots":
            value = tuple(float(t) for t in value.split(","))
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _write_csv(path, header, rows):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if cell is None:
                    cells.append("")
                elif isinstance(cell, float):
                    cells.append(f"{cell:.12e}")
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells) + "\n")


def _error_reports(hs, ks, l2s, h1s):
    """One ErrorReport per level, with orders relative to the previous row."""
    eoc_l2 = eoc(l2s, hs)
    eoc_h1 = eoc(h1s, hs)
    return [
        ErrorReport(
            h=hs[i],
            k=ks[i],
            l2_error=l2s[i],
            h1_error=h1s[i],
            eoc_l2=float(eoc_l2[i - 1]) if i > 0 else None,
            eoc_h1=float(eoc_h1[i - 1]) if i > 0 else None,
        )
        for i in range(len(hs))
    ]


def _write_report_csv(path, reports):
    _write_csv(
        path,
        ["h", "k", "l2", "h1", "eoc_l2", "eoc_h1"],
        [
            (r.h, r.k, r.l2_error, r.h1_error, r.eoc_l2, r.eoc_h1)
            for r in reports
        ],
    )


def _write_manifest(outdir, cfg, timings, extra=None):
    import scipy

    manifest = {
        "config": asdict(cfg),
        "versions": {
            "cutwave": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "timings": timings,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _refinement_systems(cfg, levels, bc):
    """Discretizations on exactly halved meshes, coarsest first."""
    domain = domain_catalog("disc", bc=bc)
    box = domain.bounding_box
    systems = []
    h_base = None
    for lvl in range(levels):
        if h_base is None:
            mesh = build_structured_mesh(box, cfg.h or CONVERGE_H0)
            h_base = mesh.h
        else:
            # Tiny inflation keeps ceil() from overshooting the doubled count.
            mesh = build_structured_mesh(box, h_base / 2**lvl * (1.0 + 1e-9))
        systems.append(
            build_system(
                mesh,
                domain,
                c_large=cfg.c_large,
                gamma=cfg.gamma,
                averaging=cfg.averaging,
            )
        )
    return systems


def cmd_converge(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    sol = standing_wave(cfg.omega)
    T = cfg.T if cfg.T is not None else 1.0
    k0 = cfg.k if cfg.k is not None else CONVERGE_K0
    timings = {}
    hs, ks, l2s, h1s, vels = [], [], [], [], []

    t_start = time.perf_counter()
    systems = _refinement_systems(cfg, cfg.levels, bc="dirichlet")
    timings["build"] = time.perf_counter() - t_start

    for lvl, system in enumerate(systems):
        t0 = time.perf_counter()
        grid = TimeGrid.from_step(T, k0 / 2**lvl)
        k = grid.k
        est = cfl_estimate(system.mats.m_L, system.mats.A_I, system.h)
        u_init = initialize(
            system,
            grid,
            mode=cfg.init_mode or "interpolate-exact",
            u0=lambda x: sol.u(x, 0.0),
            u1=lambda x, k=k: sol.u(x, k),
        )
        result = run_simulation(
            system, grid, u_init, f=sol.f,
            exact=sol.u, exact_grad=sol.grad_u, error_times=(T,),
            safety=cfg.safety, k_max=est.k_max,
        )
        _, err_l2, err_h1 = result.errors[-1]
        dtu = (result.state.u_curr - result.state.u_prev) / k
        err_vel = l2_error(dtu, lambda x: sol.u_t(x, T - k), system)
        hs.append(system.h)
        ks.append(k)
        l2s.append(err_l2)
        h1s.append(err_h1)
        vels.append(err_vel)
        timings[f"level_{lvl}"] = time.perf_counter() - t0
        print(
            f"level {lvl}: h={system.h:.4e} k={k:.4e} N={grid.N} "
            f"l2={err_l2:.4e} h1={err_h1:.4e} vel={err_vel:.4e}"
        )

    reports = _error_reports(hs, ks, l2s, h1s)
    _write_report_csv(os.path.join(cfg.out, "converge.csv"), reports)
    _write_manifest(cfg.out, cfg, timings, extra={"velocity_errors": vels})

    last = reports[-1]
    ok = (
        len(reports) >= 2
        and last.eoc_l2 >= 1.8
        and last.eoc_h1 >= 0.85
        and all(l2s[i] > l2s[i + 1] for i in range(len(l2s) - 1))
        and all(h1s[i] > h1s[i + 1] for i in range(len(h1s) - 1))
    )
    print(f"observed orders: l2={last.eoc_l2:.3f} h1={last.eoc_h1:.3f}")
    return 0 if ok else 1


def cmd_poisson(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    u_exact, grad_exact, f = poisson_disc()
    timings = {}
    t0 = time.perf_counter()
    systems = _refinement_systems(cfg, cfg.levels, bc="dirichlet")
    timings["build"] = time.perf_counter() - t0

    hs, l2s, h1s = [], [], []
    for lvl, system in enumerate(systems):
        t0 = time.perf_counter()
        if cfg.via == "ritz":
            x, iters = ritz_project(u_exact, grad_exact, system)
        else:
            x, iters = poisson_solve(f, system)
        l2s.append(l2_error(x, u_exact, system))
        h1s.append(h1_error(x, grad_exact, system))
        hs.append(system.h)
        timings[f"level_{lvl}"] = time.perf_counter() - t0
        print(
            f"level {lvl}: h={system.h:.4e} cg_iters={iters} "
            f"l2={l2s[-1]:.4e} h1={h1s[-1]:.4e}"
        )

    reports = _error_reports(hs, [0.0] * len(hs), l2s, h1s)
    _write_report_csv(os.path.join(cfg.out, "poisson.csv"), reports)
    _write_manifest(cfg.out, cfg, timings)

    last = reports[-1]
    ok = len(reports) >= 2 and last.eoc_l2 >= 1.8 and last.eoc_h1 >= 0.9
    print(f"observed orders: l2={last.eoc_l2:.3f} h1={last.eoc_h1:.3f}")
    return 0 if ok else 1


def _simulate_setup(cfg):
    if cfg.experiment == "pulse-disc" or (
        cfg.experiment == "simulate" and cfg.domain == "disc"
    ):
        domain = domain_catalog("disc", bc=cfg.bc)
        h = cfg.h if cfg.h is not None else PULSE_DISC_H
        T = cfg.T if cfg.T is not None else 0.4
        snapshots = cfg.snapshots or (0.35, 0.4)
        u0 = radial_pulse(cfg.r0)
        tag = cfg.bc
    else:
        domain = domain_catalog("box-with-cut-side")
        h = cfg.h if cfg.h is not None else PULSE_BOX_H
        T = cfg.T if cfg.T is not None else 1.2
        snapshots = cfg.snapshots or BOX_SNAPSHOTS.get(cfg.d0, (0.0, T / 2, T))
        u0 = planar_pulse(cfg.d0)
        tag = f"d0_{cfg.d0:g}"
    k = cfg.k if cfg.k is not None else PULSE_K
    return domain, h, k, T, snapshots, u0, tag


def cmd_simulate(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    domain, h, k, T, snapshots, u0, tag = _simulate_setup(cfg)
    timings = {}

    t0 = time.perf_counter()
    mesh = build_structured_mesh(domain.bounding_box, h)
    system = build_system(
        mesh, domain, c_large=cfg.c_large, gamma=cfg.gamma, averaging=cfg.averaging
    )
    timings["build"] = time.perf_counter() - t0

    grid = TimeGrid.from_step(T, k)
    u_init = initialize(system, grid, mode=cfg.init_mode or "taylor", u0=u0)
    t0 = time.perf_counter()
    result = run_simulation(
        system,
        grid,
        u_init,
        snapshot_times=snapshots,
        track_energy=True,
        safety=cfg.safety,
    )
    timings["march"] = time.perf_counter() - t0

    if cfg.dump_matrices:
        dump_matrix(os.path.join(cfg.out, "M_I.mtx"), system.mats.M_I)
        dump_matrix(os.path.join(cfg.out, "A_I.mtx"), system.mats.A_I)
        dump_matrix(os.path.join(cfg.out, "E.mtx"), system.ext.matrix)

    for t, u in sorted(result.snapshots.items()):
        path = os.path.join(cfg.out, f"snapshot_{tag}_t{t:.4f}.vtk")
        write_snapshot(path, system, u, title=f"t={t:.4f}")
    log_rows = [
        (i, result.energy[i, 0], result.energy[i, 1])
        for i in range(result.energy.shape[0])
    ]
    _write_csv(os.path.join(cfg.out, f"log_{tag}.csv"), ["n", "t", "energy"], log_rows)

    e = result.energy[:, 1]
    drift = float(np.abs(e - e[0]).max() / max(abs(e[0]), 1e-300))
    _write_manifest(
        cfg.out,
        cfg,
        timings,
        extra={"k_max": result.k_max, "steps": result.n_steps, "energy_drift": drift},
    )
    print(
        f"completed {result.n_steps} steps at k={grid.k:.4e} "
        f"(k_max={result.k_max:.4e}), energy drift {drift:.3e}, "
        f"{len(result.snapshots)} snapshots -> {cfg.out}"
    )
    return 0


def cmd_verify(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    h0 = cfg.h if cfg.h is not None else CONVERGE_H0
    checks = []
    timings = {}

    def record(name, passed, detail):
        checks.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    t0 = time.perf_counter()
    cfg_seq = RunConfig(**{**asdict(cfg), "h": h0})
    systems = _refinement_systems(cfg_seq, 3, bc="dirichlet")
    timings["build_sequence"] = time.perf_counter() - t0

    for lvl, system in enumerate(systems):
        report = graph_laplacian_check(system.mats.B, system.mats.m_L, strict=False)
        record(
            f"graph-laplacian level {lvl}",
            report.passed,
            f"row_sum_rel={report.row_sum_rel:.2e} asym={report.asymmetry:.2e} "
            f"min_lumped={report.min_lumped:.2e} "
            f"negative_mass_offdiag={report.n_negative_mass_offdiag} "
            f"min_eig={report.min_eigenvalue}",
        )

    ratios = [lumping_error_study(s, seed=cfg.seed) for s in systems]
    growth = max(
        ratios[i + 1] / ratios[i] for i in range(len(ratios) - 1)
    ) if len(ratios) > 1 else 1.0
    record(
        "lumping-error ratio bounded",
        growth <= 1.5,
        "ratios " + " ".join(f"{r:.3f}" for r in ratios),
    )

    r0, r1 = extension_stability_study(systems, seed=cfg.seed)
    g0 = max(r0[i + 1] / r0[i] for i in range(len(r0) - 1))
    g1 = max(r1[i + 1] / r1[i] for i in range(len(r1) - 1))
    record(
        "extension stability bounded",
        g0 <= 1.5 and g1 <= 1.5,
        f"m0 ratios {np.round(r0, 3)} m1 ratios {np.round(r1, 3)}",
    )

    t0 = time.perf_counter()
    domain_n = domain_catalog("disc", bc="neumann")
    mesh = build_structured_mesh(domain_n.bounding_box, h0)
    system_n = build_system(
        mesh, domain_n, c_large=cfg.c_large, gamma=cfg.gamma, averaging=cfg.averaging
    )
    est = cfl_estimate(system_n.mats.m_L, system_n.mats.A_I, system_n.h)
    timings["build_neumann"] = time.perf_counter() - t0

    drift = energy_conservation_study(system_n, 0.9 * est.k_max, seed=cfg.seed)
    record("energy conservation", drift <= 1e-9, f"relative drift {drift:.3e}")

    rev = time_reversal_study(system_n, 0.9 * est.k_max, seed=cfg.seed)
    record("time reversal", rev <= 1e-9, f"relative recovery error {rev:.3e}")

    unstable = cfl_probe(system_n, 1.05 * est.k_max, seed=cfg.seed)
    stable = not cfl_probe(system_n, 0.9 * est.k_max, seed=cfg.seed)
    record("cfl sharpness", unstable and stable,
           f"1.05*k_max blows up: {unstable}, 0.9*k_max bounded: {stable}")

    rows = [(name, "pass" if ok else "fail", detail) for name, ok, detail in checks]
    _write_csv(os.path.join(cfg.out, "verify.csv"), ["check", "status", "detail"], rows)
    all_ok = all(ok for _, ok, _ in checks)
    _write_manifest(cfg.out, cfg, timings, extra={"passed": all_ok})
    return 0 if all_ok else 1


def _cap_threads():
    cap = os.environ.get("CUTWAVE_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, cap)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cutwave",
        description="Explicit cut finite element wave solver experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--h", type=float, help="target mesh size")
        p.add_argument("--k", type=float, help="requested time step")
        p.add_argument("--T", type=float, help="final time")
        p.add_argument("--gamma", type=float, help="Nitsche penalty")
        p.add_argument("--c-large", dest="c_large", type=float,
                       help="large-element area threshold")
        p.add_argument("--domain", help="domain name")
        p.add_argument("--bc", choices=["dirichlet", "neumann"],
                       help="implicit-boundary condition")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed for studies")
        p.add_argument("--levels", type=int, help="refinement levels")
        p.add_argument("--safety", type=float, help="CFL safety factor")
        p.add_argument("--averaging", choices=["owner", "uniform"],
                       help="extension nodal averaging")

    p = sub.add_parser("converge", help="manufactured-solution convergence study")
    common(p)
    p.add_argument("--omega", type=float, help="angular frequency")
    p.add_argument("--init-mode", dest="init_mode",
                   choices=["interpolate-exact", "taylor", "ritz"])

    p = sub.add_parser("simulate", help="pulse experiment with snapshots")
    common(p)
    p.add_argument("--experiment", choices=["pulse-disc", "pulse-box"],
                   default="pulse-disc")
    p.add_argument("--d0", type=float, help="pulse half-width (box experiment)")
    p.add_argument("--r0", type=float, help="pulse radius (disc experiment)")
    p.add_argument("--snapshots", help="comma-separated snapshot times")
    p.add_argument("--dump-matrices", dest="dump_matrices", action="store_true",
                   default=None)

    p = sub.add_parser("poisson", help="elliptic convergence study")
    common(p)
    p.add_argument("--via", choices=["poisson", "ritz"], help="solution route")

    p = sub.add_parser("verify", help="structural and stability checks")
    common(p)

    return parser


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args)
        if args.command == "simulate" and getattr(args, "experiment", None):
            cfg.experiment = args.experiment
        handler = {
            "converge": cmd_converge,
            "simulate": cmd_simulate,
            "poisson": cmd_poisson,
            "verify": cmd_verify,
        }[args.command]
        return handler(cfg)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
