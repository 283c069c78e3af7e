"""Weeks inverse Laplace transform.

A time signal is expanded as exp((sigma - b) t) * sum_k a_k L_k(2 b t). The
coefficients come from a midpoint rule on the unit circle, which requires the
Laplace-domain function at N_s complex frequencies sharing the real part
sigma; the other N_s are their conjugates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError, ParameterError

log = logging.getLogger(__name__)

_RESCALE = 1e100
_LOG_RESCALE = np.log(_RESCALE)


@dataclass(frozen=True)
class WeeksParams:
    sigma: float
    b: float
    n_s: int

    def __post_init__(self):
        if not self.b > 0:
            raise ConfigurationError(f"Weeks scale b must be positive, got {self.b}")
        if not self.sigma > 0:
            raise ConfigurationError(f"Weeks shift sigma must be positive, got {self.sigma}")
        if int(self.n_s) != self.n_s or self.n_s < 1:
            raise ConfigurationError(f"N_s must be a positive integer, got {self.n_s}")


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    params: WeeksParams
    theta: np.ndarray   # midpoint angles (j + 1/2) pi / N_s, j = 0..N_s-1
    s: np.ndarray       # sigma + i b cot(theta / 2)

    def __len__(self):
        return self.s.size


@dataclass(frozen=True, eq=False)
class TimeSignal:
    times: np.ndarray
    values: np.ndarray  # (N_t,) or (N_t, n_receivers)

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.size != self.values.shape[0]:
            raise ConfigurationError("time and value arrays do not line up")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("sample times must be strictly increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def column(self, i=0) -> "TimeSignal":
        v = self.values if self.values.ndim == 1 else self.values[:, i]
        return TimeSignal(self.times, v)


def frequency_grid(params: WeeksParams) -> FrequencyGrid:
    j = np.arange(params.n_s)
    theta = (j + 0.5) * np.pi / params.n_s
    s = params.sigma + 1j * params.b / np.tan(theta / 2)
    return FrequencyGrid(params, theta, s)


def _full_circle(values, conj_values):
    """Stack the 2N_s samples in FFT order: j = 0..N-1 then j = -N..-1."""
    if conj_values is None:
        # j = -m - 1 pairs with j = m: theta is mirrored, the sample is conjugated
        conj_values = np.conj(values)
    return np.concatenate([values, conj_values[::-1]], axis=0)


def expansion_coefficients(values, params: WeeksParams, method: str = "fft", conj_values=None):
    """Laguerre coefficients a_k, k = 0..N_s-1.

    ``values`` holds F(s_j) on the frequency grid (axis 0; extra axes are
    independent signals). For real time signals F(conj s) = conj F(s) and the
    result is real; pass ``conj_values`` = F(conj s_j) for complex signals.
    """
    values = np.asarray(values, dtype=complex)
    n = params.n_s
    if values.shape[0] != n or (conj_values is not None and np.shape(conj_values) != values.shape):
        raise ConfigurationError(f"expected {n} samples on axis 0, got {values.shape}")
    theta = (np.arange(-n, n) + 0.5) * np.pi / n
    theta = np.concatenate([theta[n:], theta[:n]])          # FFT order
    g = _full_circle(values, None if conj_values is None else np.asarray(conj_values, complex))
    weight = 1.0 / (1.0 - np.exp(1j * theta))
    g = g * weight.reshape((-1,) + (1,) * (values.ndim - 1))
    k = np.arange(n)
    if method == "fft":
        spec = np.fft.fft(g, axis=0)[:n]
        phase = np.exp(-1j * k * np.pi / (2 * n))
        a = (params.b / n) * phase.reshape((-1,) + (1,) * (values.ndim - 1)) * spec
    elif method == "direct":
        a = np.empty((n,) + values.shape[1:], dtype=complex)
        for start in range(0, n, 256):
            kk = k[start:start + 256]
            kern = np.exp(-1j * np.outer(kk, theta))
            a[start:start + 256] = (params.b / n) * np.tensordot(kern, g, axes=(1, 0))
    else:
        raise ConfigurationError(f"unknown coefficient method {method!r}")
    if conj_values is None:
        scale = np.max(np.abs(a), initial=0.0)
        resid = np.max(np.abs(a.imag), initial=0.0)
        if scale > 0 and resid > 1e-10 * scale:
            log.warning("Weeks coefficients carry imaginary residue %.3g (relative)", resid / scale)
        return a.real.copy()
    return a


def laguerre_series(coeffs, x, log_shift=None):
    """exp(log_shift) * sum_k a_k L_k(x) via backward Clenshaw recurrence.

    The recurrence state is rescaled on the fly so partial sums growing like
    exp(x / 2) never overflow; ``log_shift`` (broadcast against x) is folded in
    before the final exponentiation.
    """
    a = np.asarray(coeffs)
    x = np.asarray(x, dtype=float)
    extra = a.shape[1:]
    xs = x.reshape(x.shape + (1,) * len(extra))
    shape = x.shape + extra
    dtype = np.result_type(a.dtype, float)
    b1 = np.zeros(shape, dtype=dtype)
    b2 = np.zeros(shape, dtype=dtype)
    expo = np.zeros(shape)
    n = a.shape[0]
    for k in range(n - 1, -1, -1):
        alpha = (2 * k + 1 - xs) / (k + 1)
        beta = -(k + 1) / (k + 2)
        bk = a[k] * np.exp(-expo) + alpha * b1 + beta * b2
        big = np.abs(bk) > _RESCALE
        if np.any(big):
            bk = np.where(big, bk / _RESCALE, bk)
            b1 = np.where(big, b1 / _RESCALE, b1)
            expo = expo + big * _LOG_RESCALE
        b2, b1 = b1, bk
    if log_shift is None:
        log_shift = 0.0
    shift = np.asarray(log_shift, dtype=float).reshape(np.shape(log_shift) + (1,) * len(extra))
    with np.errstate(over="ignore", invalid="ignore"):
        return b1 * np.exp(expo + shift)


def reconstruct(coeffs, params: WeeksParams, times) -> TimeSignal:
    """p(t) = exp((sigma - b) t) sum_k a_k L_k(2 b t)."""
    times = np.asarray(times, dtype=float)
    t_max = float(times.max(initial=0.0))
    if (params.sigma - params.b) * t_max > 700:
        raise ParameterError(f"(sigma - b) t_max = {(params.sigma - params.b) * t_max:.1f} > 700 "
                             "overflows the reconstruction")
    values = laguerre_series(coeffs, 2 * params.b * times, (params.sigma - params.b) * times)
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"non-finite reconstruction for sigma={params.sigma}, b={params.b}")
    return TimeSignal(times, values)


def invert(transform: Callable, params: WeeksParams, times, method: str = "fft") -> TimeSignal:
    """Invert a vectorized Laplace transform F(s) on ``times``."""
    grid = frequency_grid(params)
    coeffs = expansion_coefficients(transform(grid.s), params, method)
    return reconstruct(coeffs, params, times)


@dataclass(frozen=True, eq=False)
class WeeksSearch:
    sigma: float
    b: float
    sigmas: np.ndarray
    bs: np.ndarray
    errors: np.ndarray   # (len(sigmas), len(bs)); inf where the reconstruction failed

    def low_error_cells(self, factor: float = 10.0) -> int:
        finite = np.isfinite(self.errors)
        emin = self.errors[finite].min()
        return int(np.count_nonzero(finite & (self.errors <= factor * emin)))

    def rows(self):
        for i, s in enumerate(self.sigmas):
            for j, b in enumerate(self.bs):
                yield float(s), float(b), float(self.errors[i, j])


def optimize_params(sigmas: Sequence[float], bs: Sequence[float], n_s: int,
                    reference: TimeSignal, solve: Callable[[FrequencyGrid], np.ndarray]) -> WeeksSearch:
    """Exhaustive grid search of sum_i (p*_i - p_i)^2 over (sigma, b).

    ``solve(grid)`` must return the receiver transform at ``grid.s``.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    bs = np.asarray(bs, dtype=float)
    ref = reference.values if reference.values.ndim == 1 else reference.values[:, 0]
    errors = np.full((sigmas.size, bs.size), np.inf)
    for i, sig in enumerate(sigmas):
        for j, b in enumerate(bs):
            params = WeeksParams(float(sig), float(b), n_s)
            try:
                vals = np.asarray(solve(frequency_grid(params)))
                coeffs = expansion_coefficients(vals, params)
                rec = reconstruct(coeffs, params, reference.times).values
            except (ParameterError, NumericalError) as exc:
                log.info("candidate sigma=%g b=%g rejected: %s", sig, b, exc)
                continue
            rec = rec if rec.ndim == 1 else rec[:, 0]
            err = float(np.sum((ref - rec) ** 2))
            if np.isfinite(err):
                errors[i, j] = err
    if not np.any(np.isfinite(errors)):
        raise NumericalError("every Weeks parameter candidate overflowed or diverged")
    i, j = np.unravel_index(np.argmin(errors), errors.shape)
    return WeeksSearch(float(sigmas[i]), float(bs[j]), sigmas, bs, errors)
