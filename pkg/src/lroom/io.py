"""Binary archives and CSV output.

Solution archive (little-endian):
    b"LROM", u32 version, u64 N, u64 N_s, u32 len + UTF-8 JSON descriptor
    (boundary description, Weeks parameters, receiver transforms), f64 mu,
    f64 P^sigma (N x N_s, column-major), f64 P^y (same layout).
Basis archive:
    b"LRBM", u64 N, u64 N_rb, u64 n_sv, f64 singular values, f64 Phi (N x N_rb,
    column-major).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, MissingArtifactError
from .fom import FomSolution
from .rom import ReducedBasis
from .weeks import TimeSignal, WeeksParams

SOLUTION_MAGIC = b"LROM"
BASIS_MAGIC = b"LRBM"
SOLUTION_VERSION = 1


def _descriptor(sol: FomSolution) -> bytes:
    desc = {
        "bc": sol.bc,
        "weeks": {"sigma": sol.params.sigma, "b": sol.params.b, "n_s": sol.params.n_s},
        "receivers": [[[float(z.real), float(z.imag)] for z in row] for row in sol.receivers.T],
    }
    return json.dumps(desc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_solution(sol: FomSolution, path) -> None:
    n = sol.n_dofs
    desc = _descriptor(sol)
    with open(path, "wb") as fh:
        fh.write(SOLUTION_MAGIC)
        fh.write(struct.pack("<IQQ", SOLUTION_VERSION, n, sol.n_s))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        fh.write(struct.pack("<d", sol.mu))
        if n:
            fh.write(np.asarray(sol.p_sigma, dtype="<f8").tobytes(order="F"))
            fh.write(np.asarray(sol.p_y, dtype="<f8").tobytes(order="F"))


def _open(path, kind):
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"{kind} archive {p} not found")
    return p.read_bytes()


def read_solution(path) -> FomSolution:
    raw = _open(path, "solution")
    if raw[:4] != SOLUTION_MAGIC:
        raise ConfigurationError(f"{path} is not a solution archive")
    version, n, ns = struct.unpack_from("<IQQ", raw, 4)
    if version != SOLUTION_VERSION:
        raise ConfigurationError(f"unsupported solution archive version {version}")
    off = 4 + 20
    (dlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    desc = json.loads(raw[off:off + dlen].decode("utf-8"))
    off += dlen
    (mu,) = struct.unpack_from("<d", raw, off)
    off += 8
    expected = off + 2 * 8 * n * ns
    if len(raw) != expected:
        raise ConfigurationError(f"solution archive {path} is truncated or padded")
    ps = py = None
    if n:
        ps = np.frombuffer(raw, "<f8", n * ns, off).reshape((n, ns), order="F").astype(float)
        py = np.frombuffer(raw, "<f8", n * ns, off + 8 * n * ns).reshape((n, ns), order="F").astype(float)
    w = desc["weeks"]
    params = WeeksParams(w["sigma"], w["b"], int(w["n_s"]))
    from .weeks import frequency_grid
    s = frequency_grid(params).s
    rec = np.array([[complex(a, b) for a, b in row] for row in desc["receivers"]], dtype=complex)
    rec = rec.T if rec.size else np.zeros((ns, 0), dtype=complex)
    return FomSolution(params, s, rec, ps, py, desc["bc"], mu)


def write_basis(basis: ReducedBasis, path) -> None:
    phi = np.asarray(basis.phi, dtype="<f8")
    sv = np.asarray(basis.singular_values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC)
        fh.write(struct.pack("<QQQ", phi.shape[0], phi.shape[1], sv.size))
        fh.write(sv.tobytes())
        fh.write(phi.tobytes(order="F"))


def read_basis(path) -> ReducedBasis:
    raw = _open(path, "basis")
    if raw[:4] != BASIS_MAGIC:
        raise ConfigurationError(f"{path} is not a basis archive")
    n, nrb, nsv = struct.unpack_from("<QQQ", raw, 4)
    off = 28
    if len(raw) != off + 8 * (nsv + n * nrb):
        raise ConfigurationError(f"basis archive {path} is truncated or padded")
    sv = np.frombuffer(raw, "<f8", nsv, off).astype(float)
    phi = np.frombuffer(raw, "<f8", n * nrb, off + 8 * nsv).reshape((n, nrb), order="F")
    return ReducedBasis(np.ascontiguousarray(phi, dtype=float), sv)


# ----------------------------------------------------------------------------
# CSV: '.' decimal point, shortest round-trip float formatting, '\n' line ends

def _fmt(v) -> str:
    if isinstance(v, (str, bytes)):
        return v if isinstance(v, str) else v.decode()
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"CSV file {p} not found")
    lines = p.read_text().splitlines()
    header = lines[0].split(",")
    rows = [[float(x) for x in line.split(",")] for line in lines[1:] if line]
    return header, np.array(rows)


def write_signal_csv(path, signal: TimeSignal, names=None) -> None:
    vals = signal.values if signal.values.ndim == 2 else signal.values[:, None]
    names = names or [f"p{i}" for i in range(vals.shape[1])]
    write_csv(path, ["t"] + list(names), ([t, *row] for t, row in zip(signal.times, vals)))


def write_spectrum_csv(path, f, db) -> None:
    write_csv(path, ["f", "dB"], zip(f, db))
