"""Command-line front end: ``lroom <command> --config run.cfg``.

Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 missing artifact.  LROOM_LOG sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import RunConfig, load_config
from .errors import AssemblyError, ConfigurationError, MissingArtifactError, NumericalError
from .fom import solve_all
from .io import read_basis, write_basis, write_csv, write_signal_csv, write_solution
from .materials import PorousLayer, fit_porous_layer, write_material
from .rom import compute_basis, project_operators, solve_rom
from .validate import dispersion_curve, threshold_crossing
from .weeks import TimeSignal, frequency_grid, optimize_params

log = logging.getLogger("lroom")

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_MISSING = 2, 3, 4


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if args.out:
        cfg.out = Path(args.out)
    if args.threads:
        cfg.threads = args.threads
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg


def _model(cfg, mu=None):
    if mu is not None:
        return ex.boundary_for(cfg.parameter, mu, cfg.sigma_mat)
    # porous layers from the config are fitted on the fly
    return {tag: ex.porous_model(m.d_mat, m.sigma_mat) if isinstance(m, PorousLayer) else m
            for tag, m in cfg.materials.items()}


def cmd_mesh(cfg, args):
    prob = ex.problem_from_config(cfg)
    path = cfg.out / "mesh.txt"
    prob.mesh.export(path)
    print(f"{path}: {prob.mesh.n_elements} triangles, N = {prob.n_dofs} DOFs (P={cfg.order})")


def _signals(sol, times, cfg):
    vals = sol.receiver_signal(times).values
    return TimeSignal(times, vals.reshape(times.size, -1))


def cmd_solve_fom(cfg, args):
    prob = ex.problem_from_config(cfg)
    grid = frequency_grid(cfg.weeks)
    mu = args.mu
    sol = solve_all(prob.ops, _model(cfg, mu), prob.p0, grid, prob.rows, mode=cfg.admittance_mode,
                    threads=cfg.threads, seed=cfg.seed, mu=mu or 0.0)
    write_solution(sol, cfg.out / "fom_solution.bin")
    times = ex.config_times(cfg, prob)
    write_signal_csv(cfg.out / "fom_receivers.csv", _signals(sol, times, cfg))
    print(f"solved {sol.n_s} frequencies, N = {prob.n_dofs}, {sol.solve_time:.2f} s")


def cmd_fit_material(cfg, args):
    d_values = [args.thickness] if args.thickness is not None else (cfg.samples or [0.05])
    for d in d_values:
        model = fit_porous_layer(PorousLayer(cfg.sigma_mat, d))
        path = cfg.out / f"porous_d{d:g}.mat"
        write_material(model, path)
        print(f"{path}: misfit {model.misfit:.3e}")


def _sample_models(cfg):
    if not cfg.samples:
        raise ConfigurationError("rom.samples is empty")
    return cfg.samples


def cmd_build_rom(cfg, args):
    prob = ex.problem_from_config(cfg)
    grid = frequency_grid(cfg.weeks)
    sols = []
    for mu in _sample_models(cfg):
        sols.append(solve_all(prob.ops, _model(cfg, mu), prob.p0, grid, prob.rows, mode=cfg.admittance_mode,
                              threads=cfg.threads, seed=cfg.seed, mu=mu))
    from .rom import snapshot_matrix
    basis = compute_basis(snapshot_matrix(sols), eps_pod=cfg.eps_pod, n_rb=cfg.n_rb)
    write_basis(basis, cfg.out / "basis.bin")
    write_csv(cfg.out / "singular_values.csv", ["k", "sigma_k"], enumerate(basis.singular_values))
    print(f"N_rb = {basis.n_rb} of N = {prob.n_dofs} ({100 * basis.n_rb / prob.n_dofs:.2f}%), "
          f"E/E0 = {basis.energy():.12f}")


def cmd_solve_rom(cfg, args):
    if args.mu is None:
        raise ConfigurationError("solve-rom needs --mu")
    basis = read_basis(Path(args.basis) if args.basis else cfg.out / "basis.bin")
    prob = ex.problem_from_config(cfg)
    if basis.n_dofs != prob.n_dofs:
        raise ConfigurationError(f"basis has {basis.n_dofs} rows but the mesh has {prob.n_dofs} DOFs")
    rom = project_operators(prob.ops, basis.phi, prob.p0)
    grid = frequency_grid(cfg.weeks)
    model = _model(cfg, args.mu)
    rsol = solve_rom(rom, model, grid, prob.rows, mode=cfg.admittance_mode, mu=args.mu)
    times = ex.config_times(cfg, prob)
    rsig = _signals(rsol, times, cfg)
    write_signal_csv(cfg.out / "rom_receivers.csv", rsig)
    report = {"mu": args.mu, "n_rb": basis.n_rb, "rom_time_s": rsol.solve_time}
    if args.compare:
        fsol = solve_all(prob.ops, model, prob.p0, grid, prob.rows, mode=cfg.admittance_mode,
                         store_field=False, threads=cfg.threads, mu=args.mu)
        fsig = _signals(fsol, times, cfg)
        ref = np.max(np.abs(fsig.values))
        report.update(fom_time_s=fsol.solve_time,
                      rel_error=float(np.max(np.abs(fsig.values - rsig.values)) / ref) if ref else 0.0,
                      speedup=fsol.solve_time / rsol.solve_time if rsol.solve_time else float("inf"))
    write_csv(cfg.out / "rom_report.csv", list(report), [list(report.values())])
    print(json.dumps(report, sort_keys=True))


def cmd_optimize_weeks(cfg, args):
    prob = ex.problem_from_config(cfg)
    times = ex.config_times(cfg, prob)
    sigmas = np.linspace(args.sigma_range[0], args.sigma_range[1], args.n_grid)
    bs = np.linspace(args.b_range[0], args.b_range[1], args.n_grid)
    from .validate import modal_response
    resp = modal_response(prob.ops, _model(cfg), prob.p0, prob.rows)
    search = optimize_params(sigmas, bs, cfg.weeks.n_s, resp.pressure(times),
                             lambda g: resp.transform(g.s)[:, 0])
    write_csv(cfg.out / "weeks_surface.csv", ["sigma", "b", "error"], search.rows())
    print(f"sigma* = {search.sigma!r}, b* = {search.b!r}, low-error cells = {search.low_error_cells()}")


def cmd_dispersion(cfg, args):
    ppw = np.arange(args.ppw_min, args.ppw_max + 1e-9, args.ppw_step)
    rows = []
    for p in args.orders:
        pts = dispersion_curve(p, ppw)
        rows += [(p, q.ppw, q.ratio, int(q.reliable)) for q in pts]
        print(f"P={p}: 2% crossing at PPW = {threshold_crossing(pts):.3f}")
    write_csv(cfg.out / "dispersion.csv", ["order", "ppw", "ratio", "reliable"], rows)


def cmd_reproduce(cfg, args):
    summary = ex.reproduce(args.experiment, cfg.out)
    print(json.dumps(summary, default=str, sort_keys=True, indent=1))


COMMANDS = {
    "mesh": cmd_mesh,
    "solve-fom": cmd_solve_fom,
    "fit-material": cmd_fit_material,
    "build-rom": cmd_build_rom,
    "solve-rom": cmd_solve_rom,
    "optimize-weeks": cmd_optimize_weeks,
    "dispersion": cmd_dispersion,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--threads", type=int, help="per-frequency worker threads")
    common.add_argument("--seed", type=int, help="seed for the conjugate-symmetry spot checks")
    ap = argparse.ArgumentParser(prog="lroom", description="Laplace-domain room acoustics with reduced bases")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("mesh", "solve-fom", "fit-material", "build-rom"):
        p = sub.add_parser(name, parents=[common])
        if name == "solve-fom":
            p.add_argument("--mu", type=float, help="ROM parameter value to use as the boundary")
        if name == "fit-material":
            p.add_argument("--thickness", type=float, help="layer thickness in metres")
    p = sub.add_parser("solve-rom", parents=[common])
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--basis", help="basis archive (default OUT/basis.bin)")
    p.add_argument("--compare", action="store_true", help="also run the FOM and report the error")
    p = sub.add_parser("optimize-weeks", parents=[common])
    p.add_argument("--sigma-range", type=float, nargs=2, default=(0.1, 90.0))
    p.add_argument("--b-range", type=float, nargs=2, default=(0.1, 2000.0))
    p.add_argument("--n-grid", type=int, default=11)
    p = sub.add_parser("dispersion", parents=[common])
    p.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--ppw-min", type=float, default=2.0)
    p.add_argument("--ppw-max", type=float, default=16.0)
    p.add_argument("--ppw-step", type=float, default=0.5)
    p = sub.add_parser("reproduce", parents=[common])
    p.add_argument("experiment", choices=sorted(ex.EXPERIMENTS))
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LROOM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except MissingArtifactError as exc:
        print(f"lroom: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"lroom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AssemblyError) as exc:
        print(f"lroom: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
