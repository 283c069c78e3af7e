"""Full-order Laplace-domain solver.

Per complex frequency s the semi-discrete wave equation becomes

    (s^2 M + c^2 S + B(s)) p = s M p0,

with B = c^2 rho s Y M_Gamma for an admittance Y on the boundary (nothing
for rigid walls). Splitting p = p^sigma + i p^y gives the real 2N block form
[[K^sigma, -K^y], [K^y, K^sigma]]; solves use the equivalent N-dimensional
complex system.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericalError
from .materials import RationalAdmittance, Rigid, evaluate_admittance
from .mesh import cfl_timestep  # noqa: F401  (re-exported)
from .operators import OperatorSet
from .weeks import FrequencyGrid, TimeSignal, WeeksParams, expansion_coefficients, reconstruct

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PIVOT_THRESH = 0.01
_P_GUARD = 1e-300


@dataclass(frozen=True)
class ComplexFrequency:
    sigma: float
    y: float

    @property
    def s(self) -> complex:
        return complex(self.sigma, self.y)

    @classmethod
    def of(cls, s) -> "ComplexFrequency":
        if isinstance(s, ComplexFrequency):
            return s
        s = complex(s)
        return cls(s.real, s.imag)


@dataclass(frozen=True, eq=False)
class BoundaryAdmittanceField:
    """Complex admittance Y = Y^sigma + i Y^y at the boundary DOFs of one tag."""
    dofs: np.ndarray
    values: np.ndarray

    @property
    def y_sigma(self):
        return self.values.real

    @property
    def y_y(self):
        return self.values.imag

    def full(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=complex)
        out[self.dofs] = self.values
        return out


def boundary_models(ops: OperatorSet, model) -> dict:
    """Normalize a single model or a {tag: model} mapping to one entry per tag."""
    if isinstance(model, Mapping):
        unknown = set(model) - set(ops.boundary_mass)
        if unknown:
            raise ConfigurationError(f"unknown boundary tag(s) {sorted(unknown)}")
        return {tag: model.get(tag, Rigid()) for tag in ops.boundary_mass}
    return {tag: model for tag in ops.boundary_mass}


def describe_boundary(models: dict) -> str:
    kinds = {type(m).__name__ for m in models.values()}
    return "+".join(sorted(kinds))


@dataclass(frozen=True, eq=False)
class FrequencySystem:
    """K(s) = K^sigma + i K^y as a complex CSC matrix."""
    s: complex
    matrix: sp.csc_matrix

    @property
    def k_sigma(self):
        return self.matrix.real

    @property
    def k_y(self):
        return self.matrix.imag

    def block(self) -> sp.csr_matrix:
        ks, ky = self.k_sigma, self.k_y
        return sp.bmat([[ks, -ky], [ky, ks]], format="csr")


def _boundary_term(ops: OperatorSet, tag, model_or_field, s):
    mg = ops.boundary_mass[tag]
    scale = ops.c ** 2 * ops.rho * s
    if isinstance(model_or_field, Rigid):
        return None
    if isinstance(model_or_field, BoundaryAdmittanceField):
        y = model_or_field.full(ops.n_dofs)
        return scale * sp.diags(y) @ mg
    return scale * complex(evaluate_admittance(model_or_field, s)) * mg


def assemble_frequency_system(ops: OperatorSet, model, s) -> FrequencySystem:
    """K(s) for rigid, constant-impedance, rational or per-DOF admittance boundaries.

    ``model`` is one model for every tag, or a {tag: model | BoundaryAdmittanceField}
    mapping.
    """
    s = ComplexFrequency.of(s).s
    k = (s * s) * ops.mass + ops.c ** 2 * ops.stiffness
    for tag, m in boundary_models(ops, model).items():
        term = _boundary_term(ops, tag, m, s)
        if term is not None:
            k = k + term
    return FrequencySystem(s, sp.csc_matrix(k, dtype=complex))


def initial_rhs(ops: OperatorSet, p0, s) -> np.ndarray:
    """[P0^sigma; P0^y] = M (s p0) as one complex vector; (p0)_t = 0 and q = 0."""
    return complex(s) * (ops.mass @ p0)


def solve_frequency(system: FrequencySystem, rhs, form: str = "complex"):
    """Solve K(s) p = rhs; returns complex p (p^sigma + i p^y)."""
    rhs = np.asarray(rhs, dtype=complex)
    n = system.matrix.shape[0]
    if rhs.shape[0] != n:
        raise ConfigurationError(f"rhs length {rhs.shape[0]} does not match system size {n}")
    if not np.any(rhs):
        return np.zeros_like(rhs)
    try:
        if form == "complex":
            # a small pivot threshold keeps the fill-reducing order; near the
            # resonant band full partial pivoting can inflate the factors 20x
            lu = splu(system.matrix, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=PIVOT_THRESH)
            p = lu.solve(rhs)
        elif form == "block":
            big = sp.csc_matrix(system.block())
            x = splu(big, permc_spec="MMD_AT_PLUS_A").solve(np.concatenate([rhs.real, rhs.imag]))
            p = x[:n] + 1j * x[n:]
        else:
            raise ConfigurationError(f"unknown solve form {form!r}")
    except RuntimeError as exc:   # SuperLU reports exact singularity this way
        raise NumericalError(f"factorization failed at s={system.s}: {exc}", s=system.s) from None
    if not np.all(np.isfinite(p)):
        raise NumericalError(f"non-finite solution at s={system.s}", s=system.s)
    res = np.linalg.norm(system.matrix @ p - rhs) / np.linalg.norm(rhs)
    if res > RESIDUAL_TOL:
        # one step of iterative refinement usually recovers the lost digits
        if form == "complex":
            p = p + lu.solve(rhs - system.matrix @ p)
            res = np.linalg.norm(system.matrix @ p - rhs) / np.linalg.norm(rhs)
        if res > RESIDUAL_TOL and form == "complex":
            lu = splu(system.matrix, permc_spec="MMD_AT_PLUS_A")
            p = lu.solve(rhs)
            res = np.linalg.norm(system.matrix @ p - rhs) / np.linalg.norm(rhs)
        if res > RESIDUAL_TOL:
            raise NumericalError(f"relative residual {res:.2e} at s={system.s}", s=system.s)
    return p


def compute_boundary_admittance(p_gamma, model: RationalAdmittance, s, dofs=None) -> BoundaryAdmittanceField:
    """Per-DOF admittance Y = v_n / p from the accumulator chain of a rational model.

    phi = p / (s + lam), psi2 = beta p / ((s + alpha)^2 + beta^2),
    psi1 = (s + alpha) psi2 / beta, v = Y_inf p + sum A phi + sum 2 (B psi1 + C psi2).
    DOFs where |p|^2 < 1e-300 fall back to direct evaluation of Y(s).
    """
    if not isinstance(model, RationalAdmittance):
        raise ConfigurationError("accumulator admittance needs a rational model")
    s = ComplexFrequency.of(s).s
    p = np.asarray(p_gamma, dtype=complex)
    # Y_inf p contributes Y_inf exactly; only the pole terms need the division
    v = np.zeros_like(p)
    for a, lam in model.real_poles:
        v = v + a * (p / (s + lam))
    for b, c, alpha, beta in model.complex_pairs:
        psi2 = beta * p / ((s + alpha) ** 2 + beta ** 2)
        psi1 = (s + alpha) * psi2 / beta
        v = v + 2 * (b * psi1 + c * psi2)
    mag2 = p.real ** 2 + p.imag ** 2
    ok = mag2 >= _P_GUARD
    y = np.empty_like(p)
    # Y^sigma + i Y^y = (v^sigma + i v^y)(p^sigma - i p^y) / |p|^2
    y[ok] = model.y_inf + v[ok] * np.conj(p[ok]) / mag2[ok]
    y[~ok] = evaluate_admittance(model, s)
    if dofs is None:
        dofs = np.arange(p.size)
    return BoundaryAdmittanceField(np.asarray(dofs), y)


@dataclass(eq=False)
class FomSolution:
    params: WeeksParams
    s: np.ndarray                       # (N_s,) representative frequencies
    receivers: np.ndarray               # (N_s, n_rec) complex receiver transforms
    p_sigma: np.ndarray | None = None   # (N, N_s)
    p_y: np.ndarray | None = None
    bc: str = "rigid"
    mu: float = 0.0
    solve_time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_s(self) -> int:
        return self.s.size

    @property
    def n_dofs(self) -> int:
        return 0 if self.p_sigma is None else self.p_sigma.shape[0]

    def field(self, j) -> np.ndarray:
        return self.p_sigma[:, j] + 1j * self.p_y[:, j]

    def receiver_signal(self, times) -> TimeSignal:
        coeffs = expansion_coefficients(self.receivers, self.params)
        return reconstruct(coeffs, self.params, times)


def _solve_one(ops, models, p0, s, mode):
    rhs = initial_rhs(ops, p0, s)
    rational = {t: m for t, m in models.items() if isinstance(m, RationalAdmittance)}
    if not rational or mode == "direct":
        return solve_frequency(assemble_frequency_system(ops, models, s), rhs)
    # rigid pre-solve for boundary pressures, then the admittance update
    pre_models = {t: (Rigid() if t in rational else m) for t, m in models.items()}
    p_pre = solve_frequency(assemble_frequency_system(ops, pre_models, s), rhs)
    damped = dict(models)
    for tag, m in rational.items():
        dofs = ops.boundary_dofs[tag]
        damped[tag] = compute_boundary_admittance(p_pre[dofs], m, s, dofs)
    return solve_frequency(assemble_frequency_system(ops, damped, s), rhs)


def solve_all(ops: OperatorSet, model, p0, grid: FrequencyGrid, receiver_rows=None,
              mode: str = "accumulator", store_field: bool = True, check_conjugate: int = 3,
              threads: int = 1, mu: float = 0.0, seed: int = 0) -> FomSolution:
    """Solve at every representative frequency of a Weeks grid.

    ``mode`` selects how rational boundaries are handled: "accumulator"
    performs the rigid pre-solve and accumulator admittance recovery per
    frequency, "direct" evaluates Y(s) in closed form.
    """
    if mode not in ("accumulator", "direct"):
        raise ConfigurationError(f"unknown admittance mode {mode!r}")
    models = boundary_models(ops, model)
    for m in models.values():
        if isinstance(m, RationalAdmittance) and grid.params.sigma <= -m.min_decay:
            raise ConfigurationError("Weeks sigma lies left of the admittance poles")
    n, ns = ops.n_dofs, len(grid)
    rows = receiver_rows if receiver_rows is not None else sp.csr_matrix((0, n))
    recv = np.zeros((ns, rows.shape[0]), dtype=complex)
    ps = np.zeros((n, ns)) if store_field else None
    py = np.zeros((n, ns)) if store_field else None

    def work(j):
        try:
            return j, _solve_one(ops, models, p0, grid.s[j], mode)
        except NumericalError as exc:
            raise NumericalError(f"frequency {j} (s={grid.s[j]:.6g}): {exc}", s=grid.s[j]) from exc

    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = pool.map(work, range(ns))
            for j, p in results:
                recv[j] = rows @ p
                if store_field:
                    ps[:, j], py[:, j] = p.real, p.imag
    else:
        for j in range(ns):
            _, p = work(j)
            recv[j] = rows @ p
            if store_field:
                ps[:, j], py[:, j] = p.real, p.imag
    elapsed = time.perf_counter() - t0
    log.info("solved %d frequencies with N=%d in %.1f s", ns, n, elapsed)

    if check_conjugate and ns:
        rng = np.random.default_rng(seed)
        for j in rng.choice(ns, size=min(check_conjugate, ns), replace=False):
            s_bar = np.conj(grid.s[j])
            p_bar = _solve_one(ops, models, p0, s_bar, mode)
            ref = np.conj(rows @ p_bar) if not store_field else np.conj(p_bar)
            got = recv[j] if not store_field else ps[:, j] + 1j * py[:, j]
            scale = max(np.linalg.norm(got), 1e-300)
            if np.linalg.norm(got - ref) > 1e-8 * scale:
                raise NumericalError(f"conjugate symmetry violated at frequency {j}", s=grid.s[j])

    return FomSolution(grid.params, grid.s.copy(), recv, ps, py, describe_boundary(models),
                       float(mu), elapsed)
