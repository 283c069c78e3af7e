"""Reference solutions and error measures.

* ModalOracle: cosine-mode expansion for a rigid rectangle excited by a
  Gaussian initial pressure, in time and Laplace form.
* band_error / frequency_response: FFT-based spectral comparisons.
* dispersion_curve: phase-speed ratio of the 1D SEM advection operator,
  measured through the Laplace solve and Weeks reconstruction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre

from .errors import ConfigurationError
from .operators import SPEED_OF_SOUND, SourceConfig
from .weeks import TimeSignal


@dataclass(frozen=True, eq=False)
class ModalOracle:
    lx: float
    ly: float
    source: SourceConfig
    f_cut: float = 5000.0
    c: float = SPEED_OF_SOUND
    n_quad: int = 400

    def __post_init__(self):
        if self.f_cut < 1200.0:
            raise ConfigurationError(f"mode cutoff {self.f_cut} Hz lies below the 1200 Hz band edge")

    def _coeffs_1d(self, length, x0, n_max):
        xq, wq = roots_legendre(self.n_quad)
        x = 0.5 * length * (xq + 1)
        w = 0.5 * length * wq
        g = np.exp(-((x - x0) ** 2) / self.source.sigma_g ** 2)
        n = np.arange(n_max + 1)
        proj = (np.cos(np.outer(n, np.pi * x / length)) * g) @ w
        norm = np.where(n == 0, length, length / 2)
        return proj / norm

    @cached_property
    def modes(self):
        """(n, m, omega, A) for all modes with f_nm <= f_cut."""
        nx = int(2 * self.lx * self.f_cut / self.c) + 1
        ny = int(2 * self.ly * self.f_cut / self.c) + 1
        a = self._coeffs_1d(self.lx, self.source.x0, nx)
        b = self._coeffs_1d(self.ly, self.source.y0, ny)
        n, m = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        omega = self.c * np.pi * np.sqrt((n / self.lx) ** 2 + (m / self.ly) ** 2)
        keep = omega <= 2 * np.pi * self.f_cut
        return n[keep], m[keep], omega[keep], (a[:, None] * b[None, :])[keep]

    def mode_frequencies(self, f_max=None) -> np.ndarray:
        f = np.unique(np.round(self.modes[2] / (2 * np.pi), 9))
        return f if f_max is None else f[f <= f_max]

    def _shape(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, m, _, amp = self.modes
        return amp[None, :] * np.cos(np.pi * np.outer(pts[:, 0], n) / self.lx) \
            * np.cos(np.pi * np.outer(pts[:, 1], m) / self.ly)

    def pressure(self, points, times) -> np.ndarray:
        """p(x, t), shape (len(times), len(points))."""
        w = self._shape(points)
        omega = self.modes[2]
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, w.shape[0]))
        for start in range(0, times.size, 512):
            t = times[start:start + 512]
            out[start:start + 512] = np.cos(np.outer(t, omega)) @ w.T
        return out

    def laplace(self, points, s) -> np.ndarray:
        """Laplace transform sum A psi s / (s^2 + omega^2), shape (len(s), len(points))."""
        w = self._shape(points)
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        omega2 = self.modes[2] ** 2
        return (s[:, None] / (s[:, None] ** 2 + omega2[None, :])) @ w.T


def analytic_rigid_pressure(oracle: ModalOracle, receiver, times) -> TimeSignal:
    times = np.asarray(times, dtype=float)
    return TimeSignal(times, oracle.pressure([receiver], times)[:, 0])


def analytic_rigid_transform(oracle: ModalOracle, receiver, s) -> np.ndarray:
    return oracle.laplace([receiver], s)[:, 0]


def _values(sig: TimeSignal):
    return sig.values if sig.values.ndim == 1 else sig.values[:, 0]


def frequency_response(signal: TimeSignal):
    """(f, magnitude in dB re the maximum) of the one-sided spectrum."""
    x = _values(signal)
    spec = np.abs(np.fft.rfft(x))
    f = np.fft.rfftfreq(x.size, signal.dt)
    peak = spec.max()
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(spec / peak) if peak > 0 else np.full_like(spec, -np.inf)
    return f, db


def band_error(signal: TimeSignal, reference: TimeSignal, f_lo: float = 20.0, f_hi: float = 1200.0) -> float:
    """max over FFT bins in [f_lo, f_hi] of |20 log10 |X| - 20 log10 |X_ref||, in dB."""
    if signal.times.size != reference.times.size or not np.allclose(signal.times, reference.times):
        raise ConfigurationError("band_error needs identical time grids")
    nyq = 0.5 / signal.dt
    if not 0 <= f_lo < f_hi <= nyq:
        raise ConfigurationError(f"band [{f_lo}, {f_hi}] Hz is outside [0, Nyquist={nyq:.1f}]")
    x = np.abs(np.fft.rfft(_values(signal)))
    r = np.abs(np.fft.rfft(_values(reference)))
    f = np.fft.rfftfreq(signal.times.size, signal.dt)
    sel = (f >= f_lo) & (f <= f_hi)
    if not np.any(sel):
        raise ConfigurationError("no FFT bin inside the requested band")
    tiny = np.finfo(float).tiny
    return float(np.max(np.abs(20 * np.log10(np.maximum(x[sel], tiny))
                               - 20 * np.log10(np.maximum(r[sel], tiny)))))


# ----------------------------------------------------------------------------
# exact response of the semi-discrete system (small meshes)

@dataclass(frozen=True, eq=False)
class ModalResponse:
    """Receiver response sum_k w_k exp(lam_k t) of M p'' + c^2 rho Y M_G p' + c^2 S p = 0.

    The Laplace form is sum_k w_k / (s - lam_k); both are exact for the
    discrete model, so Weeks errors can be measured without a time solver.
    """
    lam: np.ndarray        # (K,)
    weights: np.ndarray    # (n_rec, K)

    def transform(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        return (1.0 / (s[:, None] - self.lam[None, :])) @ self.weights.T

    def pressure(self, times) -> TimeSignal:
        times = np.asarray(times, dtype=float)
        vals = np.zeros((times.size, self.weights.shape[0]))
        for lo in range(0, times.size, 512):
            t = times[lo:lo + 512]
            vals[lo:lo + 512] = (np.exp(np.outer(t, self.lam)) @ self.weights.T).real
        return TimeSignal(times, vals)


def modal_response(ops, model, p0, rows, max_dofs: int = 3000) -> ModalResponse:
    """Dense eigen-decomposition for rigid or constant-impedance walls."""
    from scipy.linalg import eig, eigh

    from .fom import boundary_models
    from .materials import ConstantImpedance, Rigid

    n = ops.n_dofs
    if n > max_dofs:
        raise ConfigurationError(f"modal surrogate limited to {max_dofs} DOFs, got {n}")
    m = ops.mass.toarray()
    k = ops.c ** 2 * ops.stiffness.toarray()
    r = rows.toarray() if hasattr(rows, "toarray") else np.atleast_2d(rows)
    damp = np.zeros((n, n))
    for tag, mod in boundary_models(ops, model).items():
        if isinstance(mod, Rigid):
            continue
        if not isinstance(mod, ConstantImpedance):
            raise ConfigurationError("modal surrogate supports rigid and constant-impedance walls only")
        damp += ops.c ** 2 * ops.rho / mod.z_s * ops.boundary_mass[tag].toarray()
    if not damp.any():
        # p = sum_k phi_k (phi_k^T M p0) cos(w_k t): split cos into two exponentials
        w2, phi = eigh(k, m)
        w = np.sqrt(np.clip(w2, 0.0, None))
        amp = (r @ phi) * (phi.T @ (m @ p0))[None, :]
        lam = np.concatenate([1j * w, -1j * w])
        return ModalResponse(lam, 0.5 * np.hstack([amp, amp]).astype(complex))
    # first-order form z' = A z with z = [p; p'], z(0) = [p0; 0]
    minv = np.linalg.inv(m)
    a = np.block([[np.zeros((n, n)), np.eye(n)], [-minv @ k, -minv @ damp]])
    lam, vec = eig(a)
    coef = np.linalg.solve(vec, np.concatenate([p0, np.zeros(n)]))
    return ModalResponse(lam, (r @ vec[:n]) * coef[None, :])


# ----------------------------------------------------------------------------
# 1D dispersion analysis

DISPERSION_THRESHOLD = 0.02


@dataclass(frozen=True, eq=False)
class Advection1D:
    """Periodic continuous SEM discretization of u_t + c u_x = 0: M u_t + c C u = 0."""
    order: int
    n_el: int
    length: float
    mass: np.ndarray
    conv: np.ndarray
    x: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.x.size


def advection_operator(order: int, n_el: int, length: float = 1.0) -> Advection1D:
    from .basis import lgl_nodes
    if order < 1 or n_el < 1:
        raise ConfigurationError("need order >= 1 and at least one element")
    r = lgl_nodes(order)
    xq, wq = roots_legendre(order + 1)
    # Lagrange basis through LGL nodes and its derivative at the quadrature points
    lag = np.ones((xq.size, r.size))
    dlag = np.zeros((xq.size, r.size))
    for j in range(r.size):
        others = [m for m in range(r.size) if m != j]
        for m in others:
            lag[:, j] *= (xq - r[m]) / (r[j] - r[m])
        for m in others:
            term = np.full(xq.size, 1.0 / (r[j] - r[m]))
            for q in others:
                if q != m:
                    term *= (xq - r[q]) / (r[j] - r[q])
            dlag[:, j] += term
    h = length / n_el
    m_loc = (h / 2) * (lag * wq[:, None]).T @ lag
    c_loc = (lag * wq[:, None]).T @ dlag          # the h/2 Jacobian cancels d/dx
    n = n_el * order
    mass = np.zeros((n, n))
    conv = np.zeros((n, n))
    x = np.empty(n)
    for e in range(n_el):
        idx = (e * order + np.arange(order + 1)) % n
        mass[np.ix_(idx, idx)] += m_loc
        conv[np.ix_(idx, idx)] += c_loc
        x[idx[:-1]] = e * h + (r[:-1] + 1) * h / 2
    return Advection1D(order, n_el, length, mass, conv, x)


def _pick_resolution(order, ppw, max_waves=16):
    """(waves m, elements n_el) on a unit periodic interval with n_el P / m closest to ppw.

    Ties go to more waves, which shortens the time window in seconds.
    """
    best = None
    for m in range(1, max_waves + 1):
        n_el = max(1, int(round(ppw * m / order)))
        err = abs(n_el * order / m - ppw)
        if best is None or err <= best[0] + 1e-12:
            best = (err, m, n_el)
    return best[1], best[2]


@dataclass(frozen=True)
class DispersionPoint:
    order: int
    ppw_target: float
    ppw: float
    ratio: float            # c_d / c
    reliable: bool


def _phase_speed(times, zr, zi, k):
    # z = int u exp(-ikx) dx = zr - i zi and arg z = -k c_d t
    phase = np.unwrap(np.arctan2(-zi, zr))
    slope = np.polyfit(times, phase, 1)[0]
    return -slope / k


def dispersion_point(order: int, ppw: float, c: float = 1.0, n_s: int = 500, dt: float = 1e-4,
                     method: str = "weeks", basis=None, t_end: float | None = None) -> DispersionPoint:
    """Phase-speed ratio c_d/c of one resolved harmonic.

    ``method`` is "weeks" (Laplace solve + Weeks reconstruction), "rom" (the
    same with the operator projected on ``basis``, or on the full snapshot
    space when ``basis`` is None) or "exact" (eigen-decomposed propagator).
    """
    from .weeks import WeeksParams, expansion_coefficients, frequency_grid, reconstruct

    m, n_el = _pick_resolution(order, ppw)
    op = advection_operator(order, n_el, 1.0)
    k = 2 * np.pi * m
    cosk, sink = np.cos(k * op.x), np.sin(k * op.x)
    u0 = cosk
    wr, wi = op.mass @ cosk, op.mass @ sink      # z = int u e^{-ikx} = wr.u - i wi.u
    period = 1.0 / (m * c)
    # long windows average out beating against spurious branches
    t_end = t_end if t_end is not None else 20 * period
    times = np.arange(0.0, t_end + 0.5 * dt, dt)

    if method == "exact":
        lam, vec = np.linalg.eig(-c * np.linalg.solve(op.mass, op.conv))
        coef = np.linalg.solve(vec, u0)
        modal = np.exp(np.outer(times, lam)) * coef          # (N_t, N) modal amplitudes
        zr, zi = (modal @ (vec.T @ wr)).real, (modal @ (vec.T @ wi)).real
        ratio = _phase_speed(times, zr, zi, k) / c
        return DispersionPoint(order, ppw, n_el * order / m, ratio, n_el * order / m >= 1.5)

    # Weeks scale sized to the time window: b ~ N_s / T keeps the highest
    # resolved angular frequency near N_s / T
    params = WeeksParams(sigma=1.0 / t_end, b=n_s / (2 * t_end), n_s=n_s)
    grid = frequency_grid(params)
    rhs = op.mass @ u0
    if method == "weeks":
        sols = np.stack([np.linalg.solve(s * op.mass + c * op.conv, rhs) for s in grid.s])
    elif method == "rom":
        if basis is None:
            full = np.stack([np.linalg.solve(s * op.mass + c * op.conv, rhs) for s in grid.s])
            snaps = np.hstack([full.real.T, full.imag.T])
            u_svd, sv, _ = np.linalg.svd(snaps, full_matrices=False)
            basis = u_svd[:, sv > sv[0] * 1e-13]
        mr = basis.T @ op.mass @ basis
        cr = basis.T @ op.conv @ basis
        br = basis.T @ rhs
        sols = np.stack([basis @ np.linalg.solve(s * mr + c * cr, br) for s in grid.s])
    else:
        raise ConfigurationError(f"unknown dispersion method {method!r}")
    vals = np.stack([sols @ wr, sols @ wi], axis=1)
    sig = reconstruct(expansion_coefficients(vals, params), params, times).values
    ratio = _phase_speed(times, sig[:, 0], sig[:, 1], k) / c
    return DispersionPoint(order, ppw, n_el * order / m, ratio, n_el * order / m >= 1.5)


def dispersion_curve(order: int, ppw_list, **kwargs) -> list:
    return [dispersion_point(order, float(p), **kwargs) for p in ppw_list]


def linear_dispersion_ratio(kh: np.ndarray) -> np.ndarray:
    """Closed-form c_d/c of consistent-mass linear elements."""
    kh = np.asarray(kh, dtype=float)
    return 3 * np.sin(kh) / (kh * (2 + np.cos(kh)))


def threshold_crossing(points, threshold: float = DISPERSION_THRESHOLD) -> float:
    """Smallest PPW above which |c_d/c - 1| stays within the threshold (linear interpolation)."""
    pts = sorted(points, key=lambda p: p.ppw)
    ppw = np.array([p.ppw for p in pts])
    err = np.array([abs(p.ratio - 1) for p in pts])
    if err[-1] > threshold:
        return np.inf
    bad = np.flatnonzero(err > threshold)
    if bad.size == 0:
        return float(ppw[0])
    i = bad[-1]
    # interpolate between the last failing and the first passing sample
    e0, e1 = err[i], err[i + 1]
    return float(ppw[i] + (e0 - threshold) / (e0 - e1) * (ppw[i + 1] - ppw[i]))
