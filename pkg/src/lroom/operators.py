"""Global sparse mass, stiffness and boundary-mass operators.

All element matrices are computed from the reference element with an affine
map, then scattered into CSR matrices with sorted column indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import NodalTriangleBasis
from .errors import AssemblyError, ConfigurationError
from .mesh import GlobalDofMap, Mesh2D

SPEED_OF_SOUND = 343.0
AIR_DENSITY = 1.2
MIN_AREA = 1e-14


@dataclass(frozen=True)
class SourceConfig:
    """Gaussian initial pressure released from rest."""
    x0: float
    y0: float
    sigma_g: float = 0.2

    def __post_init__(self):
        if not self.sigma_g > 0:
            raise ConfigurationError(f"Gaussian width must be positive, got {self.sigma_g}")


@dataclass(frozen=True, eq=False)
class OperatorSet:
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    boundary_mass: dict            # tag -> csr_matrix
    c: float = SPEED_OF_SOUND
    rho: float = AIR_DENSITY
    boundary_dofs: dict = field(default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return self.mass.shape[0]


def _jacobians(mesh: Mesh2D):
    v = mesh.vertices[mesh.triangles]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # columns d x / d(xi, eta)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    bad = np.flatnonzero(0.5 * np.abs(det) < MIN_AREA)
    if bad.size:
        raise AssemblyError(f"degenerate element(s) {bad[:5].tolist()} with area < {MIN_AREA:g}")
    if np.any(det < 0):
        raise AssemblyError("mesh contains clockwise triangles")
    return jac, det


def _scatter(local, dofs, n):
    k, npe, _ = local.shape
    rows = np.repeat(dofs, npe, axis=1).ravel()
    cols = np.tile(dofs, (1, npe)).ravel()
    mat = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _symmetrize(mat):
    out = ((mat + mat.T) * 0.5).tocsr()
    out.sort_indices()
    return out


def reference_mass(basis: NodalTriangleBasis) -> np.ndarray:
    phi = basis.evaluate(basis.quad_points)
    return (phi * basis.quad_weights[:, None]).T @ phi


def reference_stiffness(basis: NodalTriangleBasis) -> np.ndarray:
    """K[a, b] = int dN_i/dxi_a dN_j/dxi_b over the unit triangle, shape (2, 2, Np, Np)."""
    g = basis.gradient(basis.quad_points)
    return np.einsum("q,qia,qjb->abij", basis.quad_weights, g, g)


def assemble_mass(mesh: Mesh2D, basis: NodalTriangleBasis, dofmap: GlobalDofMap) -> sp.csr_matrix:
    _, det = _jacobians(mesh)
    local = det[:, None, None] * reference_mass(basis)[None]
    return _symmetrize(_scatter(local, dofmap.element_dofs, dofmap.n_dofs))


def assemble_stiffness(mesh: Mesh2D, basis: NodalTriangleBasis, dofmap: GlobalDofMap) -> sp.csr_matrix:
    """S = S_xx + S_yy."""
    jac, det = _jacobians(mesh)
    jinv = np.linalg.inv(jac)
    metric = np.einsum("kai,kbi->kab", jinv, jinv)     # J^-1 J^-T
    local = det[:, None, None] * np.einsum("kab,abij->kij", metric, reference_stiffness(basis))
    return _symmetrize(_scatter(local, dofmap.element_dofs, dofmap.n_dofs))


def assemble_boundary_mass(mesh: Mesh2D, basis: NodalTriangleBasis, dofmap: GlobalDofMap,
                           tag: str) -> sp.csr_matrix:
    if tag not in mesh.tags:
        raise ConfigurationError(f"unknown boundary tag {tag!r}; mesh has {mesh.tags}")
    sel = np.array([i for i, t in enumerate(mesh.boundary_tags) if t == tag])
    lengths = mesh.edge_lengths()[sel]
    ref = basis.edge_mass()
    dofs = np.stack([dofmap.element_dofs[mesh.boundary_elements[i],
                                         basis.edge_nodes[mesh.boundary_local_edge[i]]]
                     for i in sel])
    local = lengths[:, None, None] * ref[None]
    return _symmetrize(_scatter(local, dofs, dofmap.n_dofs))


def project_initial_condition(source: SourceConfig, mesh: Mesh2D, basis: NodalTriangleBasis,
                              dofmap: GlobalDofMap) -> np.ndarray:
    """Nodal interpolant of exp(-|x - x0|^2 / sigma_g^2)."""
    if not mesh.contains(source.x0, source.y0):
        raise ConfigurationError(f"source ({source.x0}, {source.y0}) lies outside the domain")
    d2 = (dofmap.coords[:, 0] - source.x0) ** 2 + (dofmap.coords[:, 1] - source.y0) ** 2
    return np.exp(-d2 / source.sigma_g ** 2)


def assemble_operators(mesh: Mesh2D, basis: NodalTriangleBasis, dofmap: GlobalDofMap,
                       c: float = SPEED_OF_SOUND, rho: float = AIR_DENSITY) -> OperatorSet:
    bm = {tag: assemble_boundary_mass(mesh, basis, dofmap, tag) for tag in mesh.tags}
    return OperatorSet(assemble_mass(mesh, basis, dofmap),
                       assemble_stiffness(mesh, basis, dofmap), bm, float(c), float(rho),
                       dict(dofmap.boundary_dofs))


def dump_coo(mat, path) -> None:
    """Write a sparse matrix as 'row col value' lines (debug aid)."""
    coo = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v!r}\n")
