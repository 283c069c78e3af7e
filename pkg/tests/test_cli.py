import json
import subprocess
import sys

import numpy as np
import pytest

from lroom import experiments as ex
from lroom.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERICAL, main
from lroom.io import read_basis, read_csv, read_solution
from lroom.materials import ConstantImpedance, read_material
from lroom.validate import modal_response

BASE = """
[domain]
lx = 2
ly = 2
n_el = {n_el}
order = 4

[boundary]
material = type=constant, Zs=2000

[weeks]
sigma = {sigma}
b = {b}
n_s = {n_s}
t_end = 0.1
dt = 1e-4

[receivers]
points = 0.2 0.2

[rom]
samples = 500, 8000, 15500
eps_pod = 0
"""


def write_cfg(tmp_path, n_el=3, sigma=10, b=1000, n_s=200, extra=""):
    p = tmp_path / "run.cfg"
    p.write_text(BASE.format(n_el=n_el, sigma=sigma, b=b, n_s=n_s) + extra)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def test_mesh_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run("mesh", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "mesh.txt").exists()
    assert "18 triangles" in capsys.readouterr().out


def test_solve_fom_matches_modal_oracle_and_envelopes(tmp_path):
    """Paper-style run at reduced mesh size: (sigma, b) = (10, 1000), N_s = 3000, Z_s = 500 and 15000."""
    cfg = write_cfg(tmp_path, n_el=5, n_s=3000)
    prob = ex.build_problem(n_el=5, order=4)
    times = ex.time_axis(0.1, 1e-4)
    late = times > 0.05
    ratios = {}
    for z in (500.0, 15000.0):
        out = tmp_path / f"z{z:g}"
        assert run("solve-fom", "--config", cfg, "--out", out, "--mu", z) == 0
        _, data = read_csv(out / "fom_receivers.csv")
        assert np.array_equal(data[:, 0], times)
        ref = modal_response(prob.ops, ConstantImpedance(z), prob.p0, prob.rows).pressure(times).values[:, 0]
        assert np.max(np.abs(data[:, 1] - ref)) < 1e-2 * np.max(np.abs(ref))
        ratios[z] = np.sqrt(np.mean(data[late, 1] ** 2) / np.mean(data[~late, 1] ** 2))
        sol = read_solution(out / "fom_solution.bin")
        assert sol.n_s == 3000 and sol.mu == z and sol.bc == "ConstantImpedance"
    # alpha = 0.99 walls empty the room; alpha = 0.10 walls keep it ringing
    assert ratios[500.0] < 1e-3 and ratios[15000.0] > 0.2


def test_outputs_are_byte_reproducible(tmp_path):
    cfg = write_cfg(tmp_path)
    for name in ("a", "b"):
        assert run("solve-fom", "--config", cfg, "--out", tmp_path / name) == 0
    for f in ("fom_receivers.csv", "fom_solution.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_rom_pipeline_full_basis_is_exact(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert run("build-rom", "--config", cfg, "--out", out) == 0
    basis = read_basis(out / "basis.bin")
    assert basis.n_rb <= basis.n_dofs
    capsys.readouterr()
    assert run("solve-rom", "--config", cfg, "--out", out, "--mu", 8000, "--compare") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["rel_error"] < 1e-10
    header, data = read_csv(out / "rom_report.csv")
    assert "rel_error" in header and data.shape == (1, len(header))
    assert (out / "rom_receivers.csv").exists()


def test_fit_material_command(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run("fit-material", "--config", cfg, "--out", tmp_path, "--thickness", 0.05) == 0
    model = read_material(tmp_path / "porous_d0.05.mat")
    assert model.n_real + 2 * model.n_pairs == 4 and model.misfit < 5e-3


def test_optimize_weeks_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, n_el=2)
    assert run("optimize-weeks", "--config", cfg, "--out", tmp_path, "--n-grid", 3,
               "--sigma-range", 1, 100, "--b-range", 100, 3000) == 0
    header, data = read_csv(tmp_path / "weeks_surface.csv")
    assert header == ["sigma", "b", "error"] and data.shape == (9, 3)
    assert "sigma* =" in capsys.readouterr().out


def test_dispersion_command(tmp_path):
    assert run("dispersion", "--out", tmp_path, "--orders", 1, 2, "--ppw-min", 4, "--ppw-max", 5) == 0
    _, data = read_csv(tmp_path / "dispersion.csv")
    assert data.shape == (6, 4)


def test_exit_code_config_error(tmp_path):
    cfg = write_cfg(tmp_path)
    bad = tmp_path / "bad.cfg"
    bad.write_text(open(cfg).read().replace("n_el = 3", "n_el = 0"))
    assert run("mesh", "--config", bad, "--out", tmp_path) == EXIT_CONFIG


def test_exit_code_missing_artifact(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run("solve-rom", "--config", cfg, "--out", tmp_path / "empty", "--mu", 500) == EXIT_MISSING
    assert run("mesh", "--config", tmp_path / "nope.cfg", "--out", tmp_path) == EXIT_MISSING


def test_exit_code_numerical_error(tmp_path):
    # (sigma - b) t_end far above the overflow guard
    cfg = write_cfg(tmp_path, n_el=1, sigma=20000, b=1, n_s=8)
    assert run("solve-fom", "--config", cfg, "--out", tmp_path) == EXIT_NUMERICAL


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path)
    bad = tmp_path / "bad.cfg"
    bad.write_text(open(cfg).read().replace("order = 4", "order = 12"))
    code = subprocess.call([sys.executable, "-m", "lroom.cli", "mesh", "--config", str(bad), "--out", str(tmp_path)],
                           stderr=subprocess.DEVNULL)
    assert code == EXIT_CONFIG
    with pytest.raises(SystemExit):
        main(["reproduce", "fig99"])
