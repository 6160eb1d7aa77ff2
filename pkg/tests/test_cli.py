import json

import numpy as np
import pytest

from cutwave.cli import build_parser, main, merge_config


def run_cli(args):
    return main(args)


def test_config_file_and_flag_precedence(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(
        """
[run]
gamma = 25.0
levels = 3
seed = 42

[domain]
name = "disc"
bc = "neumann"

[output]
out = "from_file"
snapshots = [0.1, 0.2]
"""
    )
    parser = build_parser()
    args = parser.parse_args(
        ["converge", "--config", str(config), "--gamma", "12.5"]
    )
    cfg = merge_config(args)
    assert cfg.gamma == 12.5  # flag beats file
    assert cfg.levels == 3
    assert cfg.seed == 42
    assert cfg.bc == "neumann"
    assert cfg.out == "from_file"
    assert cfg.snapshots == (0.1, 0.2)


def test_bc_section_tags_levelset(tmp_path):
    config = tmp_path / "bc.toml"
    config.write_text("[bc]\nlevelset = \"neumann\"\n")
    parser = build_parser()
    cfg = merge_config(parser.parse_args(["converge", "--config", str(config)]))
    assert cfg.bc == "neumann"


def test_invalid_config_exit_code(tmp_path):
    assert run_cli(["converge", "--h", "-0.5", "--out", str(tmp_path)]) == 2
    assert run_cli(["converge", "--levels", "0", "--out", str(tmp_path)]) == 2
    missing = tmp_path / "nope.toml"
    assert run_cli(["converge", "--config", str(missing)]) == 2


def test_blowup_exit_code(tmp_path):
    # An absurd safety factor lets an unstable step through the startup
    # check; the march must then fail with the blow-up exit code.
    code = run_cli(
        [
            "simulate", "--experiment", "pulse-disc", "--h", "0.3",
            "--k", "0.5", "--T", "200.0", "--safety", "100.0",
            "--out", str(tmp_path / "blow"),
        ]
    )
    assert code == 3


def test_converge_produces_table(tmp_path):
    out = tmp_path / "conv"
    code = run_cli(
        ["converge", "--levels", "3", "--h", "0.12", "--out", str(out)]
    )
    assert code == 0
    lines = (out / "converge.csv").read_text().strip().splitlines()
    assert lines[0] == "h,k,l2,h1,eoc_l2,eoc_h1"
    assert len(lines) == 4  # header + one row per level
    first = lines[1].split(",")
    assert first[4] == "" and first[5] == ""  # no orders on the first row
    last = lines[3].split(",")
    assert float(last[4]) >= 1.8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["levels"] == 3
    assert "numpy" in manifest["versions"]
    assert len(manifest["velocity_errors"]) == 3


def test_converge_outputs_are_deterministic(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        assert run_cli(
            ["converge", "--levels", "2", "--h", "0.15", "--out", str(out)]
        ) == 0
    assert (out_a / "converge.csv").read_bytes() == (out_b / "converge.csv").read_bytes()


def test_poisson_table_and_exit(tmp_path):
    out = tmp_path / "poi"
    code = run_cli(["poisson", "--levels", "2", "--h", "0.1", "--out", str(out)])
    assert code == 0
    lines = (out / "poisson.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    code = run_cli(
        ["poisson", "--levels", "2", "--h", "0.1", "--via", "ritz",
         "--out", str(tmp_path / "poi_ritz")]
    )
    assert code == 0


def test_simulate_writes_snapshots_and_log(tmp_path):
    out = tmp_path / "sim"
    code = run_cli(
        [
            "simulate", "--experiment", "pulse-disc", "--bc", "neumann",
            "--h", "0.05", "--T", "0.1", "--snapshots", "0.05,0.1",
            "--out", str(out),
        ]
    )
    assert code == 0
    snaps = sorted(out.glob("snapshot_*.vtk"))
    assert len(snaps) == 2
    text = snaps[0].read_text()
    assert text.startswith("# vtk DataFile")
    assert "SCALARS u double 1" in text
    log = (out / "log_neumann.csv").read_text().splitlines()
    assert log[0] == "n,t,energy"
    assert len(log) > 10


def test_simulate_zero_pulse_gives_zero_snapshots(tmp_path):
    out = tmp_path / "zero"
    code = run_cli(
        [
            "simulate", "--experiment", "pulse-box", "--d0", "1e-12",
            "--h", "0.2", "--T", "0.05", "--snapshots", "0.05",
            "--out", str(out),
        ]
    )
    assert code == 0
    snap = next(out.glob("snapshot_*.vtk"))
    lines = snap.read_text().splitlines()
    start = lines.index("LOOKUP_TABLE default") + 1
    values = np.array([float(v) for v in lines[start:]])
    assert np.all(values == 0.0)


def test_verify_passes_on_coarse_mesh(tmp_path):
    out = tmp_path / "ver"
    code = run_cli(["verify", "--h", "0.1", "--out", str(out)])
    assert code == 0
    text = (out / "verify.csv").read_text()
    assert "energy conservation" in text
    assert "fail" not in text.split("status")[1]


def test_matrix_dump_flag(tmp_path):
    out = tmp_path / "dump"
    code = run_cli(
        [
            "simulate", "--experiment", "pulse-disc", "--h", "0.15",
            "--T", "0.05", "--snapshots", "0.05", "--dump-matrices",
            "--out", str(out),
        ]
    )
    assert code == 0
    for name in ("M_I.mtx", "A_I.mtx", "E.mtx"):
        header = (out / name).read_text().splitlines()[0]
        assert header.startswith("%%MatrixMarket matrix coordinate")
