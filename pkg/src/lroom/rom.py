"""Reduced-basis model: POD of Laplace-domain snapshots and Galerkin projection.

The snapshot matrix stacks the real and imaginary solution parts,
S_cl = [S^sigma, S^y]; one basis Phi serves both parts (cotangent lift), so
the reduced complex system is

    (s^2 M_Phi + c^2 S_Phi + B_Phi(s)) a = s Phi^T M p0,   p ~ Phi a.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, NumericalError
from .fom import ComplexFrequency, FomSolution, boundary_models, compute_boundary_admittance
from .materials import RationalAdmittance, Rigid, evaluate_admittance
from .operators import OperatorSet
from .weeks import FrequencyGrid

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SnapshotMatrix:
    data: np.ndarray           # (N, 2 k N_s)
    mus: tuple
    s: np.ndarray              # (k, N_s) frequencies per parameter value

    def __post_init__(self):
        k, ns = self.s.shape
        if self.data.shape[1] != 2 * k * ns or len(self.mus) != k:
            raise ConfigurationError("snapshot metadata does not match the matrix width")
        if not np.all(np.isfinite(self.data)):
            raise NumericalError("snapshot matrix contains non-finite entries")

    @property
    def n_dofs(self) -> int:
        return self.data.shape[0]

    def column_meta(self, col):
        """(mu, s_j, part) of a column; all sigma parts come first."""
        k, ns = self.s.shape
        part, rest = divmod(col, k * ns)
        i, j = divmod(rest, ns)
        return self.mus[i], self.s[i, j], ("sigma", "y")[part]


def snapshot_matrix(solutions: Sequence[FomSolution]) -> SnapshotMatrix:
    if not solutions:
        raise ConfigurationError("no snapshot solutions given")
    if any(sol.p_sigma is None for sol in solutions):
        raise ConfigurationError("snapshot solutions must store the full field")
    data = np.hstack([sol.p_sigma for sol in solutions] + [sol.p_y for sol in solutions])
    return SnapshotMatrix(data, tuple(sol.mu for sol in solutions), np.stack([sol.s for sol in solutions]))


def uniform_samples(lo: float, hi: float, step: float) -> np.ndarray:
    """Uniform parameter samples lo, lo + step, ..., hi (hi included when on the lattice)."""
    if step <= 0 or hi < lo:
        raise ConfigurationError(f"bad sample range [{lo}, {hi}] step {step}")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def collect_snapshots(mus: Sequence[float], solver: Callable[[float], FomSolution]) -> SnapshotMatrix:
    """Run the full-order solver for every parameter value and stack the results."""
    sols = []
    for mu in mus:
        try:
            sols.append(solver(mu))
        except NumericalError as exc:
            raise NumericalError(f"snapshot at mu={mu} failed: {exc}", s=exc.s) from exc
    return snapshot_matrix(sols)


def energy_fraction(singular_values, n_rb: int) -> float:
    sv2 = np.asarray(singular_values, dtype=float) ** 2
    if not 0 <= n_rb <= sv2.size:
        raise ConfigurationError(f"N_rb={n_rb} outside [0, {sv2.size}]")
    total = sv2.sum()
    return float(sv2[:n_rb].sum() / total) if total > 0 else 1.0


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    phi: np.ndarray                 # (N, N_rb), orthonormal columns
    singular_values: np.ndarray     # all computed values, nonincreasing
    eps_pod: float | None = None

    @property
    def n_rb(self) -> int:
        return self.phi.shape[1]

    @property
    def n_dofs(self) -> int:
        return self.phi.shape[0]

    def energy(self) -> float:
        return energy_fraction(self.singular_values, self.n_rb)

    def truncate(self, n_rb: int) -> "ReducedBasis":
        return ReducedBasis(self.phi[:, :n_rb], self.singular_values, None)


def _normalize_signs(u):
    idx = np.argmax(np.abs(u) > 1e-14 * np.abs(u).max(axis=0, initial=0), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1
    return u * signs


def pod(data: np.ndarray, method: str = "auto"):
    """Left singular vectors and singular values of a real matrix.

    For matrices much wider than tall the eigendecomposition of S S^T is used
    (same subspace, singular values as square roots of its eigenvalues).
    """
    n, w = data.shape
    if method == "auto":
        method = "gram" if w > 2 * n else "svd"
    if method == "svd":
        u, sv, _ = np.linalg.svd(data, full_matrices=False)
    elif method == "gram":
        lam, u = np.linalg.eigh(data @ data.T)
        order = np.argsort(lam)[::-1]
        lam, u = lam[order], u[:, order]
        sv = np.sqrt(np.clip(lam, 0, None))
        r = min(n, w)
        u, sv = u[:, :r], sv[:r]
    else:
        raise ConfigurationError(f"unknown POD method {method!r}")
    return _normalize_signs(u), sv


def compute_basis(snapshots, eps_pod: float | None = None, n_rb: int | None = None,
                  method: str = "auto", normalize_columns: bool = False) -> ReducedBasis:
    """POD basis truncated by energy tolerance (smallest N_rb with E/E0 >= 1 - eps) or size."""
    data = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots, float)
    if data.size == 0:
        raise ConfigurationError("empty snapshot matrix")
    if (eps_pod is None) == (n_rb is None):
        raise ConfigurationError("give exactly one of eps_pod and n_rb")
    if normalize_columns:
        norms = np.linalg.norm(data, axis=0)
        data = data / np.where(norms > 0, norms, 1)
    u, sv = pod(data, method)
    rank_tol = sv[0] * max(data.shape) * np.finfo(float).eps if sv.size else 0.0
    rank = int(np.count_nonzero(sv > rank_tol))
    if eps_pod is not None:
        if not 0 <= eps_pod < 1:
            raise ConfigurationError(f"eps_pod must lie in [0, 1), got {eps_pod}")
        cum = np.cumsum(sv ** 2) / np.sum(sv ** 2)
        n_rb = int(np.searchsorted(cum, 1 - eps_pod - 1e-15) + 1)
    if n_rb > rank:
        log.warning("requested N_rb=%d exceeds the numerical rank %d; keeping %d modes", n_rb, rank, rank)
        n_rb = rank
    if n_rb < 1:
        raise ConfigurationError("basis would be empty")
    return ReducedBasis(np.ascontiguousarray(u[:, :n_rb]), sv, eps_pod)


def cotangent_lift(phi) -> np.ndarray:
    """Block-diagonal basis diag(Phi, Phi) acting on [p^sigma; p^y]."""
    phi = np.asarray(phi)
    z = np.zeros_like(phi)
    return np.block([[phi, z], [z, phi]])


@dataclass(eq=False)
class RomOperators:
    phi: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    gamma: dict                 # tag -> Phi^T M_Gamma Phi
    source: np.ndarray          # Phi^T M p0
    c: float
    rho: float
    boundary: dict = field(default_factory=dict)   # tag -> (dofs, Phi[dofs], (M_Gamma Phi)[dofs])

    @property
    def n_rb(self) -> int:
        return self.phi.shape[1]


def project_operators(ops: OperatorSet, phi, p0=None) -> RomOperators:
    phi = np.asarray(phi, dtype=float)
    mphi = ops.mass @ phi
    mass = phi.T @ mphi
    stiff = phi.T @ (ops.stiffness @ phi)
    gamma, boundary = {}, {}
    for tag, mg in ops.boundary_mass.items():
        dofs = ops.boundary_dofs[tag]
        mgphi = mg @ phi
        gamma[tag] = phi.T @ mgphi
        boundary[tag] = (dofs, phi[dofs], mgphi[dofs])
    src = phi.T @ (ops.mass @ p0) if p0 is not None else np.zeros(phi.shape[1])
    sym = lambda a: 0.5 * (a + a.T)  # noqa: E731
    return RomOperators(phi, sym(mass), sym(stiff), {t: sym(g) for t, g in gamma.items()},
                        src, ops.c, ops.rho, boundary)


def _reduced_models(rom: RomOperators, model):
    class _Shim:
        boundary_mass = rom.gamma
    return boundary_models(_Shim, model)


def solve_rom_frequency(rom: RomOperators, model, s, mode: str = "accumulator", rhs=None) -> np.ndarray:
    """Reduced coordinates a = a^sigma + i a^y at one frequency."""
    s = ComplexFrequency.of(s).s
    b = s * rom.source if rhs is None else np.asarray(rhs, dtype=complex)
    if not np.any(b):
        return np.zeros(rom.n_rb, dtype=complex)
    models = _reduced_models(rom, model)
    base = (s * s) * rom.mass + rom.c ** 2 * rom.stiffness
    scale = rom.c ** 2 * rom.rho * s
    k = base.astype(complex)
    rational = {}
    for tag, m in models.items():
        if isinstance(m, Rigid):
            continue
        if isinstance(m, RationalAdmittance) and mode == "accumulator":
            rational[tag] = m
            continue
        k = k + scale * complex(evaluate_admittance(m, s)) * rom.gamma[tag]
    try:
        a = np.linalg.solve(k, b)
        if rational:
            # rigid pre-solve on the rational tags, then per-DOF admittance
            for tag, m in rational.items():
                dofs, phi_g, mgphi_g = rom.boundary[tag]
                y = compute_boundary_admittance(phi_g @ a, m, s).values
                k = k + scale * (phi_g.T @ (y[:, None] * mgphi_g))
            a = np.linalg.solve(k, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular reduced system at s={s}: {exc}", s=s) from None
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite reduced solution at s={s}", s=s)
    return a


def lift_solution(a, phi) -> np.ndarray:
    """Nodal p^sigma + i p^y = Phi a^sigma + i Phi a^y."""
    return np.asarray(phi) @ np.asarray(a)


def solve_rom(rom: RomOperators, model, grid: FrequencyGrid, receiver_rows=None,
              mode: str = "accumulator", store_field: bool = False, mu: float = 0.0) -> FomSolution:
    """Online stage over a Weeks grid; returns a solution with the FOM layout."""
    rows_phi = (receiver_rows @ rom.phi) if receiver_rows is not None else np.zeros((0, rom.n_rb))
    ns = len(grid)
    coords = np.empty((ns, rom.n_rb), dtype=complex)
    t0 = time.perf_counter()
    for j, s in enumerate(grid.s):
        coords[j] = solve_rom_frequency(rom, model, s, mode)
    recv = coords @ rows_phi.T
    elapsed = time.perf_counter() - t0
    ps = py = None
    if store_field:
        full = rom.phi @ coords.T
        ps, py = full.real.copy(), full.imag.copy()
    models = _reduced_models(rom, model)
    from .fom import describe_boundary
    return FomSolution(grid.params, grid.s.copy(), recv, ps, py, describe_boundary(models), float(mu),
                       elapsed, {"n_rb": rom.n_rb, "coords": coords})


@dataclass(frozen=True)
class BenchmarkRow:
    mu: float
    p_fom: float
    p_rom: float
    abs_error: float
    rel_error: float
    signal_rel_error: float     # max_t |p_FOM - p_ROM| / max_t |p_FOM|
    fom_time: float
    rom_time: float

    @property
    def speedup(self) -> float:
        return self.fom_time / self.rom_time if self.rom_time > 0 else np.inf


def benchmark_rom(fom_solve: Callable[[float], FomSolution], rom_solve: Callable[[float], FomSolution],
                  mus: Sequence[float], times, t_eval: float, receiver: int = 0,
                  repeats: int = 3) -> list:
    """Compare FOM and ROM receiver signals per parameter value.

    Errors are taken at the sample nearest ``t_eval``. Both wall-clock times
    are the best of ``repeats`` runs.
    """
    times = np.asarray(times, dtype=float)
    k = int(np.argmin(np.abs(times - t_eval)))
    rows = []
    for mu in mus:
        fom_times, rom_times, fom, rom = [], [], None, None
        for _ in range(max(1, repeats)):
            fom = fom_solve(mu)
            fom_times.append(fom.solve_time)
            rom = rom_solve(mu)
            rom_times.append(rom.solve_time)
        pf = fom.receiver_signal(times).column(receiver).values
        pr = rom.receiver_signal(times).column(receiver).values
        err = abs(pf[k] - pr[k])
        rows.append(BenchmarkRow(float(mu), float(pf[k]), float(pr[k]), float(err),
                                 float(err / abs(pf[k])) if pf[k] != 0 else np.inf,
                                 float(np.max(np.abs(pf - pr)) / np.max(np.abs(pf))),
                                 min(fom_times), min(rom_times)))
    return rows


def reduced_dense_oracle(ops: OperatorSet, phi):
    """Dense triple products for testing: Phi^T A Phi for M, S and each M_Gamma."""
    dense = lambda m: m.toarray() if sp.issparse(m) else m  # noqa: E731
    return (phi.T @ dense(ops.mass) @ phi, phi.T @ dense(ops.stiffness) @ phi,
            {t: phi.T @ dense(m) @ phi for t, m in ops.boundary_mass.items()})
