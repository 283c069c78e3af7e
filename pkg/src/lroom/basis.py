"""Nodal reference elements: 1D Legendre-Gauss-Lobatto and order-P triangles.

The triangle uses warp-and-blend node placement with an orthonormal
(Dubiner) modal basis behind the nodal shape functions, so the Vandermonde
matrix stays well conditioned up to P = 10. Reference triangle is the unit
right triangle with vertices (0, 0), (1, 0), (0, 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, sqrt

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigurationError

MAX_ORDER = 10

# Optimized blending parameters for the warp-and-blend construction
# (Hesthaven & Warburton, Nodal DG Methods, table 6.1), indexed by P - 1.
_ALPHA_OPT = (0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999,
              1.2832, 1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258)


def jacobi_p(x, alpha, beta, n):
    """Orthonormal Jacobi polynomial P_n^(alpha, beta) evaluated at x."""
    x = np.asarray(x, dtype=float)
    gamma0 = (2.0 ** (alpha + beta + 1) / (alpha + beta + 1)
              * gamma(alpha + 1) * gamma(beta + 1) / gamma(alpha + beta + 1))
    p_prev = np.full_like(x, 1.0 / sqrt(gamma0))
    if n == 0:
        return p_prev
    gamma1 = (alpha + 1) * (beta + 1) / (alpha + beta + 3) * gamma0
    p = ((alpha + beta + 2) * x / 2 + (alpha - beta) / 2) / sqrt(gamma1)
    a_old = 2 / (2 + alpha + beta) * sqrt((alpha + 1) * (beta + 1) / (alpha + beta + 3))
    for i in range(1, n):
        h1 = 2 * i + alpha + beta
        a_new = 2 / (h1 + 2) * sqrt((i + 1) * (i + 1 + alpha + beta) * (i + 1 + alpha)
                                    * (i + 1 + beta) / (h1 + 1) / (h1 + 3))
        b_new = -(alpha ** 2 - beta ** 2) / h1 / (h1 + 2)
        p_prev, p = p, (-a_old * p_prev + (x - b_new) * p) / a_new
        a_old = a_new
    return p


def grad_jacobi_p(x, alpha, beta, n):
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.zeros_like(x)
    return sqrt(n * (n + alpha + beta + 1)) * jacobi_p(x, alpha + 1, beta + 1, n - 1)


def lgl_nodes(order: int) -> np.ndarray:
    """Legendre-Gauss-Lobatto nodes on [-1, 1], ascending."""
    if order < 1:
        raise ConfigurationError(f"LGL order must be >= 1, got {order}")
    if order == 1:
        return np.array([-1.0, 1.0])
    interior, _ = roots_jacobi(order - 1, 1.0, 1.0)
    return np.concatenate(([-1.0], np.sort(interior), [1.0]))


def min_lgl_spacing(order: int) -> float:
    return float(np.min(np.diff(lgl_nodes(order))))


def _warp_factor(order, rout):
    lgl = lgl_nodes(order)
    req = np.linspace(-1.0, 1.0, order + 1)
    veq = np.stack([jacobi_p(req, 0, 0, i) for i in range(order + 1)], axis=1)
    pmat = np.stack([jacobi_p(rout, 0, 0, i) for i in range(order + 1)], axis=0)
    lmat = np.linalg.solve(veq.T, pmat)
    warp = lmat.T @ (lgl - req)
    interior = np.abs(rout) < 1.0 - 1.0e-10
    sf = 1.0 - (interior * rout) ** 2
    return warp / sf + warp * (interior - 1.0)


def _warp_blend_rs(order):
    """Warp-and-blend nodes on the biunit triangle (-1,-1), (1,-1), (-1,1)."""
    alpha = _ALPHA_OPT[order - 1] if order <= len(_ALPHA_OPT) else 5.0 / 3.0
    l1, l3 = [], []
    for n in range(order + 1):
        for m in range(order + 1 - n):
            l1.append(n / order)
            l3.append(m / order)
    l1 = np.array(l1)
    l3 = np.array(l3)
    l2 = 1.0 - l1 - l3
    x = -l2 + l3
    y = (-l2 - l3 + 2 * l1) / sqrt(3.0)
    blend1, blend2, blend3 = 4 * l2 * l3, 4 * l1 * l3, 4 * l1 * l2
    warp1 = blend1 * _warp_factor(order, l3 - l2) * (1 + (alpha * l1) ** 2)
    warp2 = blend2 * _warp_factor(order, l1 - l3) * (1 + (alpha * l2) ** 2)
    warp3 = blend3 * _warp_factor(order, l2 - l1) * (1 + (alpha * l3) ** 2)
    c2, c4 = np.cos(2 * np.pi / 3), np.cos(4 * np.pi / 3)
    s2, s4 = np.sin(2 * np.pi / 3), np.sin(4 * np.pi / 3)
    x = x + warp1 + c2 * warp2 + c4 * warp3
    y = y + s2 * warp2 + s4 * warp3
    # equilateral -> biunit right triangle
    b1 = (sqrt(3.0) * y + 1) / 3
    b2 = (-3 * x - sqrt(3.0) * y + 2) / 6
    b3 = (3 * x - sqrt(3.0) * y + 2) / 6
    return -b2 + b3 - b1, -b2 - b3 + b1


def _rs_to_ab(r, s):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    denom = 1.0 - s
    ok = np.abs(denom) > 1e-14
    a = np.full_like(r, -1.0)
    a[ok] = 2 * (1 + r[ok]) / denom[ok] - 1
    return a, s


def _simplex_modes(order, r, s):
    """Orthonormal modal basis and its (r, s) gradients; shapes (npts, Np)."""
    a, b = _rs_to_ab(r, s)
    modes, dr, ds = [], [], []
    for i in range(order + 1):
        for j in range(order + 1 - i):
            h1 = jacobi_p(a, 0, 0, i)
            h2 = jacobi_p(b, 2 * i + 1, 0, j)
            modes.append(sqrt(2.0) * h1 * h2 * (1 - b) ** i)

            dfa = grad_jacobi_p(a, 0, 0, i)
            dgb = grad_jacobi_p(b, 2 * i + 1, 0, j)
            half = 0.5 * (1 - b)
            lower = half ** (i - 1) if i > 0 else 1.0
            dmr = dfa * h2 * lower
            dms = dfa * h2 * 0.5 * (1 + a) * lower
            tmp = dgb * half ** i
            if i > 0:
                tmp = tmp - 0.5 * i * h2 * lower
            dms = dms + h1 * tmp
            scale = 2.0 ** (i + 0.5)
            dr.append(scale * dmr)
            ds.append(scale * dms)
    return np.stack(modes, axis=-1), np.stack(dr, axis=-1), np.stack(ds, axis=-1)


def triangle_quadrature(degree: int):
    """Collapsed Gauss-Jacobi product rule on the unit triangle.

    Exact for polynomials of total degree <= ``degree``. Returns points (n, 2)
    in (xi, eta) and weights summing to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    r = 0.5 * (1 + aa) * (1 - bb) - 1
    s = bb
    pts = np.stack([(1 + r.ravel()) / 2, (1 + s.ravel()) / 2], axis=1)
    w = np.outer(wa, wb).ravel() / 8.0
    return pts, w


@dataclass(frozen=True, eq=False)
class NodalTriangleBasis:
    order: int
    nodes: np.ndarray            # (Np, 2) reference coordinates
    quad_points: np.ndarray      # (Nq, 2)
    quad_weights: np.ndarray     # (Nq,)
    edge_nodes: tuple            # three index arrays, ordered start -> end vertex
    _vinv: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def evaluate(self, points) -> np.ndarray:
        """Shape-function values at reference points, shape (npts, Np)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        modes, _, _ = _simplex_modes(self.order, 2 * pts[:, 0] - 1, 2 * pts[:, 1] - 1)
        return modes @ self._vinv

    def gradient(self, points) -> np.ndarray:
        """Reference gradients (d/dxi, d/deta), shape (npts, Np, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, dr, ds = _simplex_modes(self.order, 2 * pts[:, 0] - 1, 2 * pts[:, 1] - 1)
        # d/dxi = 2 d/dr on the unit triangle
        return np.stack([2 * dr @ self._vinv, 2 * ds @ self._vinv], axis=-1)

    def edge_parameters(self) -> np.ndarray:
        """Positions of edge nodes along a reference edge, in [0, 1]."""
        return (lgl_nodes(self.order) + 1) / 2

    def edge_mass(self) -> np.ndarray:
        """1D mass matrix on a unit-length edge in edge-node ordering."""
        return _edge_mass(self.order)


@lru_cache(maxsize=None)
def _edge_mass(order):
    t = (lgl_nodes(order) + 1) / 2
    xq, wq = roots_legendre(order + 1)
    xq = (xq + 1) / 2
    wq = wq / 2
    # Lagrange basis through the edge nodes evaluated at quadrature points
    lag = np.ones((xq.size, t.size))
    for j in range(t.size):
        for m in range(t.size):
            if m != j:
                lag[:, j] *= (xq - t[m]) / (t[j] - t[m])
    return (lag * wq[:, None]).T @ lag


@lru_cache(maxsize=None)
def build_reference_basis(order: int, quad_degree: int | None = None) -> NodalTriangleBasis:
    """Order-P nodal triangle with a quadrature rule exact to degree 2P."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise ConfigurationError(f"polynomial order must be in [1, {MAX_ORDER}], got {order!r}")
    order = int(order)
    r, s = _warp_blend_rs(order)
    modes, _, _ = _simplex_modes(order, r, s)
    vinv = np.linalg.inv(modes)
    nodes = np.stack([(1 + r) / 2, (1 + s) / 2], axis=1)
    # snap round-off on the reference edges
    nodes[np.abs(nodes) < 1e-14] = 0.0

    tol = 1e-10
    xi, eta = nodes[:, 0], nodes[:, 1]
    e0 = np.flatnonzero(np.abs(eta) < tol)
    e0 = e0[np.argsort(xi[e0])]                      # (0,0) -> (1,0)
    e1 = np.flatnonzero(np.abs(xi + eta - 1) < tol)
    e1 = e1[np.argsort(eta[e1])]                     # (1,0) -> (0,1)
    e2 = np.flatnonzero(np.abs(xi) < tol)
    e2 = e2[np.argsort(-eta[e2])]                    # (0,1) -> (0,0)

    qp, qw = triangle_quadrature(2 * order if quad_degree is None else quad_degree)
    for arr in (nodes, qp, qw, vinv, e0, e1, e2):
        arr.flags.writeable = False
    return NodalTriangleBasis(order, nodes, qp, qw, (e0, e1, e2), vinv)
