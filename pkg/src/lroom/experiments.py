"""Experiment pipelines behind ``lroom reproduce``.

Each ``run_*`` function writes its CSV artifacts under ``out`` and returns a
plain dict summary.  Defaults are desk-scale versions of the published
setups (smaller meshes, shorter windows, fewer complex frequencies); every
size is a keyword argument so the full-scale runs remain one call away.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .basis import build_reference_basis
from .errors import ConfigurationError
from .fom import FomSolution, solve_all
from .io import write_csv
from .materials import (ConstantImpedance, MikiRangeWarning, PorousLayer, Rigid, absorption_coefficient,
                        fit_porous_layer, miki_surface_impedance, write_material)
from .mesh import (cfl_timestep, dof_map, generate_structured_mesh, points_per_wavelength,
                   receiver_rows)
from .operators import AIR_DENSITY, SPEED_OF_SOUND, SourceConfig, assemble_operators, project_initial_condition
from .rom import (benchmark_rom, collect_snapshots, compute_basis, energy_fraction, project_operators,
                  solve_rom)
from .validate import (ModalOracle, analytic_rigid_pressure, band_error, dispersion_curve,
                       frequency_response, modal_response, threshold_crossing)
from .weeks import TimeSignal, WeeksParams, frequency_grid, optimize_params

log = logging.getLogger(__name__)

DEFAULT_SOURCE = SourceConfig(1.0, 1.0, 0.2)
DEFAULT_RECEIVER = (0.2, 0.2)


@dataclass(eq=False)
class Problem:
    mesh: object
    basis: object
    dofmap: object
    ops: object
    p0: np.ndarray
    rows: object

    @property
    def n_dofs(self) -> int:
        return self.ops.n_dofs


def build_problem(lx=2.0, ly=2.0, n_el=15, order=4, source=DEFAULT_SOURCE, receivers=(DEFAULT_RECEIVER,),
                  c=SPEED_OF_SOUND, rho=AIR_DENSITY) -> Problem:
    mesh = generate_structured_mesh(lx, ly, n_el)
    basis = build_reference_basis(order)
    dm = dof_map(mesh, basis)
    ops = assemble_operators(mesh, basis, dm, c, rho)
    p0 = project_initial_condition(source, mesh, basis, dm)
    return Problem(mesh, basis, dm, ops, p0, receiver_rows(mesh, basis, dm, list(receivers)))


def problem_from_config(cfg) -> Problem:
    return build_problem(cfg.lx, cfg.ly, cfg.n_el, cfg.order, cfg.source, cfg.receivers, cfg.c, cfg.rho)


def time_axis(t_end: float, dt: float) -> np.ndarray:
    n = int(np.floor(t_end / dt + 1e-9))
    return dt * np.arange(n)


def config_times(cfg, problem: Problem | None = None) -> np.ndarray:
    dt = cfg.dt
    if dt is None:
        if problem is None:
            raise ConfigurationError("a CFL time step needs the mesh")
        dt = cfl_timestep(problem.mesh, cfg.order, cfg.c_cfl, cfg.c)
    return time_axis(cfg.t_end, dt)


def weeks_for_window(n_s: int, t_end: float, sigma: float = 30.0, ratio: float = 1.6) -> WeeksParams:
    """Weeks parameters scaled to a window: b = ratio N_s / (2 T)."""
    return WeeksParams(sigma, ratio * n_s / (2.0 * t_end), n_s)


@lru_cache(maxsize=64)
def porous_model(d_mat: float, sigma_mat: float = 10000.0):
    """Rational fit of the rigid-backed porous layer over 50 Hz - 2 kHz."""
    return fit_porous_layer(PorousLayer(sigma_mat, d_mat))


def boundary_for(parameter: str, mu: float, sigma_mat: float = 10000.0):
    if parameter == "zs":
        return ConstantImpedance(float(mu))
    if parameter == "thickness":
        return porous_model(float(mu), float(sigma_mat))
    raise ConfigurationError(f"unknown ROM parameter {parameter!r}")


def _outdir(out, name) -> Path:
    p = Path(out) / name
    p.mkdir(parents=True, exist_ok=True)
    return p


def _signal(sol: FomSolution, times) -> np.ndarray:
    return sol.receiver_signal(times).column(0).values


def _rel(a, ref) -> float:
    return float(np.max(np.abs(a - ref)) / np.max(np.abs(ref)))


# ----------------------------------------------------------------------------
# FOM experiments

def run_table1(out, orders=(1, 2, 4, 6), n_el=15, params=WeeksParams(30.0, 8000.0, 3000), t_end=0.3,
               dt=1e-4, f_lo=20.0, f_hi=1200.0, threads=1) -> dict:
    """Rigid 2 m x 2 m room: band error against the modal oracle and PPW per order."""
    d = _outdir(out, "table1")
    oracle = ModalOracle(2.0, 2.0, DEFAULT_SOURCE)
    times = time_axis(t_end, dt)
    ref = analytic_rigid_pressure(oracle, DEFAULT_RECEIVER, times)
    grid = frequency_grid(params)
    rows, signals, spectra = [], {"analytic": ref.values}, {}
    f, spectra["analytic"] = frequency_response(ref)
    for p in orders:
        prob = build_problem(n_el=n_el, order=p)
        sol = solve_all(prob.ops, Rigid(), prob.p0, grid, prob.rows, store_field=False, threads=threads)
        sig = TimeSignal(times, _signal(sol, times))
        err = band_error(sig, ref, f_lo, f_hi)
        ppw = points_per_wavelength(1000.0, 2.0, n_el, p)
        rows.append((p, prob.n_dofs, ppw, err, sol.solve_time))
        signals[f"P{p}"] = sig.values
        spectra[f"P{p}"] = frequency_response(sig)[1]
        log.info("table1 P=%d N=%d PPW=%.2f band error %.3f dB", p, prob.n_dofs, ppw, err)
    write_csv(d / "table1.csv", ["order", "n_dofs", "ppw_1khz", "band_error_db", "solve_time_s"],
              [r[:4] + (round(r[4], 3),) for r in rows])
    names = list(signals)
    write_csv(d / "signals.csv", ["t"] + names, zip(times, *(signals[k] for k in names)))
    sel = (f >= f_lo) & (f <= f_hi)
    write_csv(d / "spectra.csv", ["f"] + names, zip(f[sel], *(spectra[k][sel] for k in names)))
    return {"orders": list(orders), "n_dofs": [r[1] for r in rows], "ppw": [r[2] for r in rows],
            "band_error_db": [r[3] for r in rows], "times": times, "signals": signals}


def run_fig5(out, d_values=(0.05, 0.10, 0.20), n_el=8, order=4, params=None, t_end=0.1, dt=1e-4,
             sigma_mat=10000.0, z_values=(500.0, 15000.0), threads=1) -> dict:
    """Impulse responses with porous (frequency-dependent) and constant walls, plus absorption curves."""
    d = _outdir(out, "fig5")
    params = params or weeks_for_window(1200, t_end, sigma=10.0)
    f = np.linspace(50.0, 2000.0, 196)
    absorption = {}
    for dm in d_values:
        layer = PorousLayer(sigma_mat, dm)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MikiRangeWarning)
            absorption[dm] = absorption_coefficient(miki_surface_impedance(layer, f))
        model = porous_model(dm, sigma_mat)
        write_material(model, d / f"porous_d{dm:.2f}.mat")
    write_csv(d / "absorption.csv", ["f"] + [f"d={dm:.2f}" for dm in d_values],
              zip(f, *(absorption[dm] for dm in d_values)))
    prob = build_problem(n_el=n_el, order=order)
    grid = frequency_grid(params)
    times = time_axis(t_end, dt)
    cols, names, misfits = [], [], {}
    for z in z_values:
        sol = solve_all(prob.ops, ConstantImpedance(z), prob.p0, grid, prob.rows, store_field=False,
                        threads=threads)
        cols.append(_signal(sol, times))
        names.append(f"Zs={z:g}")
    for dm in d_values:
        model = porous_model(dm, sigma_mat)
        misfits[dm] = model.misfit
        sol = solve_all(prob.ops, model, prob.p0, grid, prob.rows, store_field=False, threads=threads)
        cols.append(_signal(sol, times))
        names.append(f"d={dm:.2f}")
    write_csv(d / "impulse_responses.csv", ["t"] + names, zip(times, *cols))
    return {"names": names, "peak": [float(np.max(np.abs(c))) for c in cols],
            "late_rms": [float(np.sqrt(np.mean(c[times > t_end / 2] ** 2))) for c in cols],
            "fit_misfit": misfits}


def run_fig6(out, n_s=7000, t_end=0.05, dt=1e-4, n_el=6, order=2, z_values=(15000.0, 2000.0),
             sigmas=None, bs=None, factor=10.0) -> dict:
    """Weeks (sigma, b) error surfaces on a small surrogate room.

    The reference is the exact modal response of the same semi-discrete
    model, so the surface isolates the inversion error.
    """
    d = _outdir(out, "fig6")
    sigmas = np.linspace(0.1, 90.0, 11) if sigmas is None else np.asarray(sigmas, float)
    bs = np.linspace(0.1, 2000.0, 11) if bs is None else np.asarray(bs, float)
    prob = build_problem(n_el=n_el, order=order)
    times = time_axis(t_end, dt)
    cases = [("rigid", Rigid(), n_s), ("rigid_2ns", Rigid(), 2 * n_s)]
    cases += [(f"zs{z:g}", ConstantImpedance(z), n_s) for z in z_values]
    summary = {}
    for name, model, ns in cases:
        resp = modal_response(prob.ops, model, prob.p0, prob.rows)
        ref = resp.pressure(times)
        search = optimize_params(sigmas, bs, ns, ref, lambda g: resp.transform(g.s)[:, 0])
        write_csv(d / f"surface_{name}.csv", ["sigma", "b", "error"], search.rows())
        summary[name] = {"n_s": ns, "sigma": search.sigma, "b": search.b,
                         "min_error": float(np.min(search.errors)),
                         "low_error_cells": search.low_error_cells(factor)}
    write_csv(d / "summary.csv", ["case", "n_s", "sigma_opt", "b_opt", "min_error", "low_error_cells"],
              [(k, v["n_s"], v["sigma"], v["b"], v["min_error"], v["low_error_cells"])
               for k, v in summary.items()])
    return summary


# ----------------------------------------------------------------------------
# ROM experiments

@dataclass(eq=False)
class RomStudy:
    """Shared state of one parametric ROM study."""
    problem: Problem
    params: WeeksParams
    times: np.ndarray
    parameter: str
    sigma_mat: float = 10000.0
    threads: int = 1

    def __post_init__(self):
        self.grid = frequency_grid(self.params)
        self._cache = {}

    def model(self, mu):
        return boundary_for(self.parameter, mu, self.sigma_mat)

    def fom(self, mu, store_field=True) -> FomSolution:
        key = (float(mu), store_field)
        if key not in self._cache and (float(mu), True) in self._cache:
            return self._cache[(float(mu), True)]
        if key not in self._cache:
            self._cache[key] = solve_all(self.problem.ops, self.model(mu), self.problem.p0, self.grid,
                                         self.problem.rows, store_field=store_field, check_conjugate=0,
                                         threads=self.threads, mu=float(mu))
        return self._cache[key]

    def fom_timed(self, mu) -> FomSolution:
        """Fresh receiver-only solve so the wall-clock time is measured."""
        return solve_all(self.problem.ops, self.model(mu), self.problem.p0, self.grid, self.problem.rows,
                         store_field=False, check_conjugate=0, mu=float(mu))

    def snapshots(self, mus):
        return collect_snapshots([float(m) for m in mus], self.fom)

    def rom(self, phi):
        return project_operators(self.problem.ops, phi, self.problem.p0)

    def rom_solve(self, rom, mu) -> FomSolution:
        return solve_rom(rom, self.model(mu), self.grid, self.problem.rows, mu=float(mu))

    def signal(self, sol) -> np.ndarray:
        return _signal(sol, self.times)


def zs_study(n_el=8, order=4, n_s=800, t_end=0.05, dt=1e-4, threads=1, lx=2.0) -> RomStudy:
    """Desk-scale constant-impedance study: centred source, N = 1089 by default."""
    return RomStudy(build_problem(lx, lx, n_el, order, SourceConfig(lx / 2, lx / 2, 0.2)),
                    weeks_for_window(n_s, t_end), time_axis(t_end, dt), "zs", threads=threads)


def run_fig7(out, samples=(500.0, 8000.0, 15500.0), test_values=(1000.0, 5000.0, 9000.0, 15000.0),
             eps_pod=1e-12, study: RomStudy | None = None, **kw) -> dict:
    """FOM against ROM receiver signals for several unseen constant impedances."""
    d = _outdir(out, "fig7")
    st = study or zs_study(**kw)
    basis = compute_basis(st.snapshots(samples), eps_pod=eps_pod)
    rom = st.rom(basis.phi)
    cols, names, errors = [], [], {}
    for z in test_values:
        pf, pr = st.signal(st.fom(z, store_field=False)), st.signal(st.rom_solve(rom, z))
        errors[float(z)] = _rel(pr, pf)
        cols += [pf, pr]
        names += [f"fom_Zs={z:g}", f"rom_Zs={z:g}"]
    write_csv(d / "pressure.csv", ["t"] + names, zip(st.times, *cols))
    write_csv(d / "errors.csv", ["Zs", "rel_error"], errors.items())
    write_csv(d / "singular_values.csv", ["k", "sigma_k"], enumerate(basis.singular_values))
    return {"n_rb": basis.n_rb, "n_dofs": st.problem.n_dofs, "energy": basis.energy(), "errors": errors}


def run_fig8(out, samples=(500.0, 8000.0, 15500.0), test_value=5000.0, n_rb_list=None,
             snapshot_counts=(3, 6, 12), eps_pod=1e-12, repeats=3, study: RomStudy | None = None,
             **kw) -> dict:
    """Speedup and error against N_rb at an unseen Z_s, and error against snapshot count."""
    d = _outdir(out, "fig8")
    st = study or zs_study(**kw)
    full = compute_basis(st.snapshots(samples), eps_pod=eps_pod)
    n_rb_list = n_rb_list or sorted({max(1, int(round(full.n_rb * f))) for f in (0.25, 0.5, 0.75, 1.0)})
    fom_sig = st.signal(st.fom(test_value, store_field=False))
    rows = []
    for n in n_rb_list:
        rom = st.rom(full.phi[:, :n])
        bench = benchmark_rom(st.fom_timed, lambda mu: st.rom_solve(rom, mu), [test_value], st.times,
                              st.times[-1], repeats=repeats)[0]
        rows.append((n, energy_fraction(full.singular_values, n), bench.signal_rel_error, bench.rel_error,
                     bench.fom_time, bench.rom_time, bench.speedup))
    write_csv(d / "speedup.csv", ["n_rb", "energy", "signal_rel_error", "point_rel_error", "fom_time_s",
                                  "rom_time_s", "speedup"], rows)
    trend = []
    for k in snapshot_counts:
        basis = compute_basis(st.snapshots(np.linspace(samples[0], samples[-1], k)), eps_pod=eps_pod)
        pr = st.signal(st.rom_solve(st.rom(basis.phi), test_value))
        trend.append((k, basis.n_rb, _rel(pr, fom_sig)))
    write_csv(d / "error_vs_snapshots.csv", ["n_snapshots", "n_rb", "rel_error"], trend)
    return {"rows": rows, "trend": trend, "n_rb_full": full.n_rb}


def run_table2(out, sides=(1.0, 2.0, 3.0, 4.0), ppw=10.0, order=4, samples=(500.0, 8000.0, 15500.0),
               n_s=600, t_end=0.05, eps_pod=1e-6, threads=1) -> dict:
    """N_rb / N at a fixed energy level for growing rooms at fixed resolution."""
    d = _outdir(out, "table2")
    rows = []
    for side in sides:
        n_el = max(1, int(round(ppw * side * 1000.0 / (SPEED_OF_SOUND * order))))
        st = zs_study(n_el=n_el, order=order, n_s=n_s, t_end=t_end, threads=threads, lx=side)
        t0 = time.perf_counter()
        basis = compute_basis(st.snapshots(samples), eps_pod=eps_pod)
        pct = 100.0 * basis.n_rb / st.problem.n_dofs
        rows.append((side, n_el, st.problem.n_dofs, basis.n_rb, pct))
        nsv = basis.singular_values
        write_csv(d / f"energy_decay_L{side:g}.csv", ["k", "one_minus_energy"],
                  ((k + 1, max(1.0 - energy_fraction(nsv, k + 1), 0.0)) for k in range(nsv.size)))
        log.info("table2 L=%g N=%d N_rb=%d (%.2f%%) in %.0f s", side, st.problem.n_dofs, basis.n_rb, pct,
                 time.perf_counter() - t0)
    write_csv(d / "table2.csv", ["side_m", "n_el", "n_dofs", "n_rb", "percent"], rows)
    return {"sides": list(sides), "n_dofs": [r[2] for r in rows], "n_rb": [r[3] for r in rows],
            "percent": [r[4] for r in rows]}


def porous_study(n_el=8, order=4, n_s=800, t_end=0.05, dt=1e-4, threads=1, sigma_mat=10000.0) -> RomStudy:
    """Desk-scale porous-wall study parametrized by the layer thickness."""
    return RomStudy(build_problem(n_el=n_el, order=order), weeks_for_window(n_s, t_end), time_axis(t_end, dt),
                    "thickness", sigma_mat, threads)


def run_fig10(out, samples=(0.02, 0.07, 0.12, 0.17, 0.22), test_values=(0.20, 0.15, 0.10, 0.05),
              eps_pod=1e-12, study: RomStudy | None = None, **kw) -> dict:
    """FOM against ROM receiver signals for porous walls of several thicknesses."""
    d = _outdir(out, "fig10")
    st = study or porous_study(**kw)
    basis = compute_basis(st.snapshots(samples), eps_pod=eps_pod)
    rom = st.rom(basis.phi)
    cols, names, errors = [], [], {}
    for dm in test_values:
        pf, pr = st.signal(st.fom(dm, store_field=False)), st.signal(st.rom_solve(rom, dm))
        errors[float(dm)] = _rel(pr, pf)
        cols += [pf, pr]
        names += [f"fom_d={dm:.2f}", f"rom_d={dm:.2f}"]
    write_csv(d / "pressure.csv", ["t"] + names, zip(st.times, *cols))
    write_csv(d / "errors.csv", ["d_mat", "rel_error"], errors.items())
    return {"n_rb": basis.n_rb, "n_dofs": st.problem.n_dofs, "energy": basis.energy(), "errors": errors}


def run_fig11(out, samples=(0.02, 0.07, 0.12, 0.17, 0.22), test_value=0.15, z_test=5000.0, eps_pod=1e-6,
              repeats=3, study: RomStudy | None = None, **kw) -> dict:
    """Online speedup with porous walls against constant walls, at equal N_rb.

    Both reduced models use the same basis, so only the per-frequency work
    differs: the porous model re-projects the boundary admittance. The
    basis is cut at E/E0 = 1 - 1e-6; near N_rb ~ N/4 the dense reduced
    solves cost as much as the sparse full ones and both speedups are ~1.
    """
    d = _outdir(out, "fig11")
    st = study or porous_study(**kw)
    basis = compute_basis(st.snapshots(samples), eps_pod=eps_pod)
    rom = st.rom(basis.phi)
    dep = benchmark_rom(st.fom_timed, lambda mu: st.rom_solve(rom, mu), [test_value], st.times,
                        st.times[-1], repeats=repeats)[0]
    const = RomStudy(st.problem, st.params, st.times, "zs", threads=st.threads)
    indep = benchmark_rom(const.fom_timed, lambda mu: const.rom_solve(rom, mu), [z_test], st.times,
                          st.times[-1], repeats=repeats)[0]
    rows = [("frequency_dependent", test_value, basis.n_rb, dep.signal_rel_error, dep.fom_time,
             dep.rom_time, dep.speedup),
            ("frequency_independent", z_test, basis.n_rb, indep.signal_rel_error, indep.fom_time,
             indep.rom_time, indep.speedup)]
    write_csv(d / "speedup.csv", ["boundary", "mu", "n_rb", "signal_rel_error", "fom_time_s", "rom_time_s",
                                  "speedup"], rows)
    return {"n_rb": basis.n_rb, "dependent": dep, "independent": indep}


def run_dispersion(out, orders=(1, 2, 3, 4), ppw_list=None, method="weeks") -> dict:
    """Phase-speed ratio against PPW per order, FOM and full-basis ROM."""
    d = _outdir(out, "dispersion")
    ppw_list = np.arange(2.0, 16.01, 0.5) if ppw_list is None else np.asarray(ppw_list, float)
    rows, crossings = [], {}
    for p in orders:
        fom = dispersion_curve(p, ppw_list, method=method)
        rom = dispersion_curve(p, ppw_list, method="rom")
        crossings[p] = threshold_crossing(fom)
        rows += [(p, a.ppw, a.ratio, b.ratio) for a, b in zip(fom, rom)]
    write_csv(d / "dispersion.csv", ["order", "ppw", "ratio_fom", "ratio_rom"], rows)
    write_csv(d / "crossings.csv", ["order", "ppw_at_2pct"], crossings.items())
    return {"crossings": crossings, "max_rom_gap": max(abs(r[2] - r[3]) for r in rows)}


EXPERIMENTS = {
    "table1": run_table1,
    "fig5": run_fig5,
    "fig6": run_fig6,
    "fig7": run_fig7,
    "fig8": run_fig8,
    "table2": run_table2,
    "fig10": run_fig10,
    "fig11": run_fig11,
    "dispersion": run_dispersion,
}


def reproduce(name: str, out, **kwargs) -> dict:
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ConfigurationError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return fn(out, **kwargs)
