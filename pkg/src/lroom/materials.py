"""Boundary material models.

Time convention: Fourier quantities use exp(-i w t) and the Laplace variable
maps as s <-> -i w, so a model's admittance evaluated at s = -i w equals the
Fourier-domain admittance 1 / Z_s(w).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigurationError, FittingError
from .operators import AIR_DENSITY, SPEED_OF_SOUND

log = logging.getLogger(__name__)

PASSIVITY_TOL = -1e-8


class MikiRangeWarning(UserWarning):
    """Frequency outside the empirical validity band of the Miki model."""


@dataclass(frozen=True)
class Rigid:
    kind = "rigid"


@dataclass(frozen=True)
class ConstantImpedance:
    z_s: float
    kind = "constant"

    def __post_init__(self):
        if not (np.isfinite(self.z_s) and self.z_s > 0):
            raise ConfigurationError(f"surface impedance must be positive, got {self.z_s}")


@dataclass(frozen=True)
class RationalAdmittance:
    """Y(s) = Y_inf + sum A/(s + lam) + sum [(B + iC)/(s + alpha + i beta) + c.c.]."""
    y_inf: float
    real_poles: tuple = ()          # ((A, lam), ...)
    complex_pairs: tuple = ()       # ((B, C, alpha, beta), ...)
    misfit: float | None = field(default=None, compare=False)
    kind = "rational"

    def __post_init__(self):
        rp = tuple((float(a), float(lam)) for a, lam in self.real_poles)
        cp = tuple(tuple(float(v) for v in pair) for pair in self.complex_pairs)
        if any(len(p) != 4 for p in cp):
            raise ConfigurationError("complex pairs need (B, C, alpha, beta)")
        if any(lam <= 0 for _, lam in rp) or any(p[2] <= 0 for p in cp):
            raise ConfigurationError("rational admittance poles must be stable (lambda, alpha > 0)")
        if any(p[3] <= 0 for p in cp):
            raise ConfigurationError("complex pair frequencies beta must be positive")
        object.__setattr__(self, "real_poles", rp)
        object.__setattr__(self, "complex_pairs", cp)
        object.__setattr__(self, "y_inf", float(self.y_inf))

    @property
    def n_real(self) -> int:
        return len(self.real_poles)

    @property
    def n_pairs(self) -> int:
        return len(self.complex_pairs)

    @property
    def min_decay(self) -> float:
        rates = [lam for _, lam in self.real_poles] + [p[2] for p in self.complex_pairs]
        return min(rates) if rates else np.inf

    def passivity_margin(self, omegas) -> float:
        """min Re Y(-i w) over the given angular frequencies."""
        return float(np.min(evaluate_admittance(self, -1j * np.asarray(omegas, dtype=float)).real))


ImpedanceModel = Union[Rigid, ConstantImpedance, RationalAdmittance]


@dataclass(frozen=True)
class PorousLayer:
    sigma_mat: float    # flow resistivity, N s m^-4
    d_mat: float        # thickness, m

    def __post_init__(self):
        if not self.sigma_mat > 0 or not self.d_mat > 0:
            raise ConfigurationError(
                f"porous layer needs positive resistivity and thickness, got {self.sigma_mat}, {self.d_mat}")


def absorption_coefficient(z_s, rho: float = AIR_DENSITY, c: float = SPEED_OF_SOUND):
    """Normal-incidence absorption 1 - |(Z - rho c) / (Z + rho c)|^2 (Z may be complex)."""
    z = np.asarray(z_s)
    if np.any(np.real(z) <= 0):
        raise ConfigurationError("absorption coefficient needs Re(Z_s) > 0")
    z0 = rho * c
    alpha = 1.0 - np.abs((z - z0) / (z + z0)) ** 2
    return float(alpha) if np.ndim(alpha) == 0 else alpha


def miki_characteristic(sigma_mat, f, rho=AIR_DENSITY, c=SPEED_OF_SOUND):
    """Characteristic impedance and wavenumber of the Miki model, exp(-i w t) form."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ConfigurationError("Miki model needs positive frequencies")
    x = f / sigma_mat
    if np.any((x <= 0.01) | (x >= 1.0)):
        warnings.warn(f"f/sigma_mat outside (0.01, 1) for some of {x.size} frequencies; "
                      "Miki model is extrapolated", MikiRangeWarning, stacklevel=3)
    z_c = rho * c * (1 + 0.0699 * x ** -0.632 + 1j * 0.1071 * x ** -0.632)
    k = 2 * np.pi * f / c * (1 + 0.1093 * x ** -0.618 + 1j * 0.1597 * x ** -0.618)
    return z_c, k


def miki_surface_impedance(layer: PorousLayer, f, rho=AIR_DENSITY, c=SPEED_OF_SOUND):
    """Surface impedance of a rigidly backed Miki layer, Z_s = i Z_c cot(k d).

    With Im k > 0, cot(k d) -> -i as d grows and Z_s tends to Z_c.
    """
    z_c, k = miki_characteristic(layer.sigma_mat, f, rho, c)
    return 1j * z_c / np.tan(k * layer.d_mat)


def evaluate_admittance(model: ImpedanceModel, s):
    """Y(s) for constant or rational models; vectorized over s."""
    s = np.asarray(s, dtype=complex)
    if isinstance(model, Rigid):
        raise ConfigurationError("a rigid boundary has no finite admittance to evaluate")
    if isinstance(model, ConstantImpedance):
        return np.full(s.shape, 1.0 / model.z_s, dtype=complex) if s.ndim else complex(1.0 / model.z_s)
    if not isinstance(model, RationalAdmittance):
        raise ConfigurationError(f"unsupported material model {type(model).__name__}")
    y = np.full(s.shape, model.y_inf, dtype=complex)
    for a, lam in model.real_poles:
        y = y + a / (lam + s)
    for b, cc, alpha, beta in model.complex_pairs:
        r = b + 1j * cc
        y = y + r / (alpha + 1j * beta + s) + np.conj(r) / (alpha - 1j * beta + s)
    return y if s.ndim else complex(y)


# ----------------------------------------------------------------------------
# vector fitting

def _basis_columns(s, poles):
    """Real-coefficient partial-fraction columns; complex poles listed once (Im > 0)."""
    cols = []
    for a in poles:
        if a.imag == 0:
            cols.append(1 / (s - a.real))
        else:
            cols.append(1 / (s - a) + 1 / (s - np.conj(a)))
            cols.append(1j / (s - a) - 1j / (s - np.conj(a)))
    return np.stack(cols, axis=1) if cols else np.zeros((s.size, 0), complex)


def _split_poles(eigs, tol):
    """Classify eigenvalues as real or one representative per conjugate pair."""
    out = []
    used = np.zeros(eigs.size, bool)
    scale = max(np.max(np.abs(eigs)), 1.0)
    for i in np.argsort(eigs.imag)[::-1]:
        if used[i]:
            continue
        z = eigs[i]
        if abs(z.imag) <= tol * scale:
            out.append(complex(z.real, 0.0))
            used[i] = True
            continue
        if z.imag < 0:
            continue   # partner already consumed through its Im > 0 twin
        partner = np.argmin(np.where(used, np.inf, np.abs(eigs - np.conj(z))))
        used[i] = used[partner] = True
        out.append(z)
    out = [complex(-abs(p.real) if p.real != 0 else -1e-6, p.imag) for p in out]  # stability
    return out


def _real_lstsq(a, b):
    ar = np.vstack([a.real, a.imag])
    br = np.concatenate([b.real, b.imag])
    norms = np.linalg.norm(ar, axis=0)
    norms[norms == 0] = 1
    x, *_ = np.linalg.lstsq(ar / norms, br, rcond=None)
    return x / norms


def _initial_poles(w, n_real, n_pairs):
    """Real poles log-spaced over the band, lightly damped pairs inside it."""
    lo, hi = max(w.min(), 1e-3 * w.max()), w.max()
    poles = [complex(-v, 0) for v in np.geomspace(lo, hi, n_real)] if n_real else []
    if n_pairs:
        poles += [complex(-b / 100, b) for b in np.geomspace(lo, hi, n_pairs + 2)[1:-1]]
    return poles


def _refine_poles(s, f, poles):
    """Variable-projection polish: poles by nonlinear least squares, residues linear.

    Decay rates and pair frequencies are optimized in log form, so the poles
    stay in the left half-plane. Returns the input poles if nothing improves.
    """
    n_real = sum(1 for p in poles if p.imag == 0)
    real = [p for p in poles if p.imag == 0]
    cplx = [p for p in poles if p.imag != 0]

    def unpack(th):
        out = [complex(-np.exp(v), 0.0) for v in th[:n_real]]
        out += [complex(-np.exp(a), np.exp(b)) for a, b in th[n_real:].reshape(-1, 2)]
        return out

    def resid(th):
        design = np.hstack([np.ones((s.size, 1)), _basis_columns(s, unpack(th))])
        r = design @ _real_lstsq(design, f) - f
        return np.concatenate([r.real, r.imag])

    th0 = np.concatenate([np.log([-p.real for p in real]),
                          np.log([[-p.real, p.imag] for p in cplx]).ravel()])
    base = np.linalg.norm(resid(th0))
    try:
        sol = least_squares(resid, th0, xtol=1e-13, ftol=1e-13, max_nfev=2000)
    except (ValueError, np.linalg.LinAlgError):
        return poles
    return unpack(sol.x) if np.linalg.norm(sol.fun) < base else poles


def fit_rational_admittance(samples, n_real: int = 2, n_pairs: int = 1, iterations: int = 30,
                            tol: float = 1e-3, refine: bool = True) -> RationalAdmittance:
    """Pole-relocation (vector fitting) of Y(-i w) samples.

    ``samples`` is a sequence of (w, Y) with w > 0 in rad/s. The total order
    n_real + 2 n_pairs is fixed; the split between real and complex poles may
    change during relocation. With ``refine`` the relocated poles are polished
    by a nonlinear least-squares pass. Raises FittingError when the relative L2 misfit
    stays above ``tol``.
    """
    w = np.array([x[0] for x in samples], dtype=float)
    y = np.array([x[1] for x in samples], dtype=complex)
    order = n_real + 2 * n_pairs
    if order < 0 or (n_real < 0 or n_pairs < 0):
        raise ConfigurationError("pole counts must be nonnegative")
    if w.size < max(4 * order, 2) or np.any(w <= 0):
        raise ConfigurationError(f"need at least {max(4 * order, 2)} samples with w > 0, got {w.size}")
    w0 = w.max()
    yscale = np.sqrt(np.mean(np.abs(y) ** 2)) or 1.0
    s = -1j * w / w0
    f = y / yscale

    poles = _initial_poles(w / w0, n_real, n_pairs)
    for it in range(iterations if order else 0):
        phi = _basis_columns(s, poles)
        nb = phi.shape[1]
        a = np.hstack([phi, np.ones((s.size, 1)), -f[:, None] * phi])
        x = _real_lstsq(a, f)
        ct = x[nb + 1:]
        # zeros of sigma(s) = 1 + sum ct phi -> new poles
        h = np.zeros((nb, nb))
        bvec = np.zeros(nb)
        k = 0
        for p in poles:
            if p.imag == 0:
                h[k, k] = p.real
                bvec[k] = 1
                k += 1
            else:
                h[k:k + 2, k:k + 2] = [[p.real, p.imag], [-p.imag, p.real]]
                bvec[k] = 2
                k += 2
        eigs = np.linalg.eigvals(h - np.outer(bvec, ct))
        new = _split_poles(eigs, 1e-9)
        shift = max(abs(np.sort_complex(np.array(new)) - np.sort_complex(np.array(poles)))) \
            if len(new) == len(poles) else np.inf
        poles = new
        if shift < 1e-12:
            log.debug("vector fitting converged after %d passes", it + 1)
            break

    if order and refine:
        poles = _refine_poles(s, f, poles)
    design = np.hstack([np.ones((s.size, 1)), _basis_columns(s, poles)])
    x = _real_lstsq(design, f)
    misfit = float(np.linalg.norm(design @ x - f) / np.linalg.norm(f))

    real, pairs = [], []
    k = 1
    for p in poles:
        if p.imag == 0:
            real.append((x[k] * yscale * w0, -p.real * w0))
            k += 1
        else:
            r = complex(x[k], x[k + 1])
            pairs.append((r.real * yscale * w0, -r.imag * yscale * w0, -p.real * w0, p.imag * w0))
            k += 2
    model = RationalAdmittance(x[0] * yscale, tuple(real), tuple(pairs), misfit=misfit)
    if misfit > tol:
        raise FittingError(f"vector fitting misfit {misfit:.3g} exceeds {tol:g}", misfit=misfit)
    margin = model.passivity_margin(w)
    if margin < PASSIVITY_TOL:
        raise FittingError(f"fitted admittance is not passive (min Re Y = {margin:.3g})", misfit=misfit)
    return model


def fit_porous_layer(layer: PorousLayer, f_lo=50.0, f_hi=2000.0, n_samples=200, order=4,
                     iterations=50, tol=5e-2, rho=AIR_DENSITY, c=SPEED_OF_SOUND) -> RationalAdmittance:
    """Rational admittance of the given total order fitted to Miki layer data.

    Every real/complex split of ``order`` is tried and the passive fit with the
    lowest misfit wins. Four poles leave 0.03-3 % misfit over 50-2000 Hz
    depending on thickness, hence the loose default tolerance.
    """
    f = np.linspace(f_lo, f_hi, n_samples)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MikiRangeWarning)
        z = miki_surface_impedance(layer, f, rho, c)
    samples = list(zip(2 * np.pi * f, 1 / z))
    best, last = None, None
    for n_pairs in range(order // 2, -1, -1):
        try:
            m = fit_rational_admittance(samples, order - 2 * n_pairs, n_pairs, iterations, tol)
        except FittingError as exc:
            last = exc
            continue
        if best is None or m.misfit < best.misfit:
            best = m
    if best is None:
        raise last
    return best


# ----------------------------------------------------------------------------
# material files: key = value lines, '#' comments, repeated 'pole' / 'pair' keys

def write_material(model, path) -> None:
    lines = [f"type = {model.kind if not isinstance(model, PorousLayer) else 'porous'}"]
    if isinstance(model, ConstantImpedance):
        lines.append(f"Zs = {model.z_s!r}")
    elif isinstance(model, PorousLayer):
        lines += [f"sigma = {model.sigma_mat!r}", f"d = {model.d_mat!r}"]
    elif isinstance(model, RationalAdmittance):
        lines.append(f"y_inf = {model.y_inf!r}")
        lines += [f"pole = {a!r} {lam!r}" for a, lam in model.real_poles]
        lines += ["pair = " + " ".join(repr(v) for v in p) for p in model.complex_pairs]
        if model.misfit is not None:
            lines.append(f"misfit = {model.misfit!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_material(text: str):
    entries = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        # allow "type=constant, Zs=500" on one line
        for part in line.split(","):
            if "=" not in part:
                raise ConfigurationError(f"material line {n}: expected key = value, got {raw!r}")
            key, val = part.split("=", 1)
            entries.append((key.strip().lower(), val.strip()))
    d = {}
    for k, v in entries:
        d.setdefault(k, []).append(v)
    kind = d.get("type", [None])[0]
    try:
        if kind == "rigid":
            return Rigid()
        if kind == "constant":
            return ConstantImpedance(float(d["zs"][0]))
        if kind == "porous":
            return PorousLayer(float(d["sigma"][0]), float(d["d"][0]))
        if kind == "rational":
            poles = tuple(tuple(float(x) for x in v.split()) for v in d.get("pole", []))
            pairs = tuple(tuple(float(x) for x in v.split()) for v in d.get("pair", []))
            if any(len(p) != 2 for p in poles):
                raise ConfigurationError("pole lines need 'A lambda'")
            misfit = float(d["misfit"][0]) if "misfit" in d else None
            return RationalAdmittance(float(d["y_inf"][0]), poles, pairs, misfit=misfit)
    except KeyError as exc:
        raise ConfigurationError(f"material of type {kind!r} is missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad number in material file: {exc}") from None
    raise ConfigurationError(f"unknown material type {kind!r}")


def read_material(path):
    p = Path(path)
    if not p.exists():
        from .errors import MissingArtifactError
        raise MissingArtifactError(f"material file {p} not found")
    return parse_material(p.read_text())
