"""Triangular meshes of rectangles and the continuous global DOF numbering."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .basis import NodalTriangleBasis, min_lgl_spacing
from .errors import AssemblyError, ConfigurationError

NODE_TOL = 1e-9
SIDE_TAGS = ("bottom", "right", "top", "left")


@dataclass(frozen=True, eq=False)
class Mesh2D:
    vertices: np.ndarray          # (Nv, 2) metres
    triangles: np.ndarray         # (K, 3) CCW vertex ids
    boundary_edges: np.ndarray    # (Nb, 2) vertex ids, oriented as in the owning triangle
    boundary_elements: np.ndarray  # (Nb,) owning triangle
    boundary_local_edge: np.ndarray  # (Nb,) 0: v0->v1, 1: v1->v2, 2: v2->v0
    boundary_tags: tuple          # (Nb,) material tag per edge
    lx: float
    ly: float
    n_el: int = 0

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    @property
    def tags(self) -> tuple:
        return tuple(sorted(set(self.boundary_tags)))

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def inscribed_radii(self) -> np.ndarray:
        """Inscribed-circle radius A / (half perimeter) per triangle."""
        p = self.vertices[self.triangles]
        perim = sum(np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3))
        return np.abs(self.signed_areas()) / (0.5 * perim)

    def contains(self, x, y, tol=1e-12) -> bool:
        return -tol <= x <= self.lx + tol and -tol <= y <= self.ly + tol

    def locate(self, points):
        """Owning triangle and reference coordinates for each physical point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices[self.triangles]
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # (K, 2, 2)
        jinv = np.linalg.inv(jac)
        elems = np.empty(len(pts), dtype=int)
        refs = np.empty((len(pts), 2))
        for n, x in enumerate(pts):
            ref = np.einsum("kij,kj->ki", jinv, x - v[:, 0])
            lam = np.column_stack([1 - ref.sum(1), ref])
            k = int(np.argmax(lam.min(axis=1)))
            if lam[k].min() < -1e-9:
                raise ConfigurationError(f"point {tuple(x)} lies outside the mesh")
            elems[n] = k
            refs[n] = np.clip(ref[k], 0.0, 1.0)
        return elems, refs

    def export(self, path) -> None:
        """Plain-text dump: header with counts, then vertex, triangle and boundary records."""
        lines = [f"lroom-mesh {len(self.vertices)} {self.n_elements} {len(self.boundary_edges)} "
                 f"{float(self.lx)!r} {float(self.ly)!r} {self.n_el}"]
        lines += [f"v {float(x)!r} {float(y)!r}" for x, y in self.vertices]
        lines += [f"t {a} {b} {c}" for a, b, c in self.triangles]
        lines += [f"b {a} {b} {e} {le} {tag}" for (a, b), e, le, tag in
                  zip(self.boundary_edges, self.boundary_elements, self.boundary_local_edge,
                      self.boundary_tags)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Mesh2D":
        rows = Path(path).read_text().split("\n")
        head = rows[0].split()
        if head[0] != "lroom-mesh":
            raise ConfigurationError(f"{path}: not an lroom mesh file")
        nv, nk, nb = (int(h) for h in head[1:4])
        lx, ly, n_el = float(head[4]), float(head[5]), int(head[6])
        verts = np.array([[float(t) for t in r.split()[1:3]] for r in rows[1:1 + nv]])
        tris = np.array([[int(t) for t in r.split()[1:4]] for r in rows[1 + nv:1 + nv + nk]])
        brows = [r.split() for r in rows[1 + nv + nk:1 + nv + nk + nb]]
        return cls(verts, tris,
                   np.array([[int(r[1]), int(r[2])] for r in brows], dtype=int).reshape(-1, 2),
                   np.array([int(r[3]) for r in brows], dtype=int),
                   np.array([int(r[4]) for r in brows], dtype=int),
                   tuple(r[5] for r in brows), lx, ly, n_el)


def mesh_from_triangles(vertices, triangles, tagger=None, lx=None, ly=None) -> Mesh2D:
    """Build a mesh from raw arrays; boundary edges are the edges used once.

    ``tagger(midpoint) -> str`` assigns material tags (default ``"wall"``).
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    local = ((0, 1), (1, 2), (2, 0))
    count = {}
    for k, tri in enumerate(triangles):
        for le, (i, j) in enumerate(local):
            key = tuple(sorted((tri[i], tri[j])))
            count.setdefault(key, []).append((k, le, tri[i], tri[j]))
    edges, elems, les, tags = [], [], [], []
    for key in sorted(count):
        owners = count[key]
        if len(owners) > 2:
            raise AssemblyError(f"edge {key} shared by {len(owners)} triangles")
        if len(owners) == 1:
            k, le, a, b = owners[0]
            edges.append((a, b))
            elems.append(k)
            les.append(le)
            mid = 0.5 * (vertices[a] + vertices[b])
            tags.append("wall" if tagger is None else tagger(mid))
    lo, hi = vertices.min(0), vertices.max(0)
    return Mesh2D(vertices, triangles, np.array(edges, dtype=int).reshape(-1, 2),
                  np.array(elems, dtype=int), np.array(les, dtype=int), tuple(tags),
                  float(hi[0] - lo[0]) if lx is None else lx,
                  float(hi[1] - lo[1]) if ly is None else ly)


def generate_structured_mesh(lx: float, ly: float, n_el: int) -> Mesh2D:
    """N_el x N_el squares on [0, lx] x [0, ly], each split along its rising diagonal."""
    if not (lx > 0 and ly > 0):
        raise ConfigurationError(f"domain extents must be positive, got {lx}, {ly}")
    if int(n_el) != n_el or n_el < 1:
        raise ConfigurationError(f"elements per direction must be a positive integer, got {n_el}")
    n = int(n_el)
    xs = np.linspace(0.0, lx, n + 1)
    ys = np.linspace(0.0, ly, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    vid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # [row j, col i]
    v00 = vid[:-1, :-1].ravel()
    v10 = vid[:-1, 1:].ravel()
    v11 = vid[1:, 1:].ravel()
    v01 = vid[1:, :-1].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=int)
    triangles[0::2] = lower
    triangles[1::2] = upper

    sq = np.arange(n)
    edges, elems, les, tags = [], [], [], []
    # bottom row: lower triangles, local edge 0 (v00 -> v10)
    for i in sq:
        k = 2 * (0 * n + i)
        edges.append(triangles[k, [0, 1]]); elems.append(k); les.append(0); tags.append("bottom")
    # right column: lower triangles, local edge 1 (v10 -> v11)
    for j in sq:
        k = 2 * (j * n + n - 1)
        edges.append(triangles[k, [1, 2]]); elems.append(k); les.append(1); tags.append("right")
    # top row: upper triangles, local edge 1 (v11 -> v01)
    for i in sq:
        k = 2 * ((n - 1) * n + i) + 1
        edges.append(triangles[k, [1, 2]]); elems.append(k); les.append(1); tags.append("top")
    # left column: upper triangles, local edge 2 (v01 -> v00)
    for j in sq:
        k = 2 * (j * n) + 1
        edges.append(triangles[k, [2, 0]]); elems.append(k); les.append(2); tags.append("left")
    return Mesh2D(vertices, triangles, np.array(edges, dtype=int), np.array(elems),
                  np.array(les), tuple(tags), float(lx), float(ly), n)


@dataclass(frozen=True, eq=False)
class GlobalDofMap:
    element_dofs: np.ndarray   # (K, Np) global index of each element node
    coords: np.ndarray         # (N, 2) global node coordinates
    boundary_dofs: dict        # tag -> sorted unique global indices

    @property
    def n_dofs(self) -> int:
        return self.coords.shape[0]

    def all_boundary_dofs(self) -> np.ndarray:
        if not self.boundary_dofs:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate(list(self.boundary_dofs.values())))


def physical_nodes(mesh: Mesh2D, basis: NodalTriangleBasis) -> np.ndarray:
    """Physical coordinates of every element node, shape (K, Np, 2)."""
    v = mesh.vertices[mesh.triangles]
    xi, eta = basis.nodes[:, 0], basis.nodes[:, 1]
    return (v[:, None, 0] * (1 - xi - eta)[None, :, None]
            + v[:, None, 1] * xi[None, :, None]
            + v[:, None, 2] * eta[None, :, None])


def dof_map(mesh: Mesh2D, basis: NodalTriangleBasis, tol: float = NODE_TOL) -> GlobalDofMap:
    """Merge coincident element nodes into C0-continuous global DOFs.

    Global indices are ordered lexicographically by (y, x) so the numbering does
    not depend on element order.
    """
    xyz = physical_nodes(mesh, basis)
    k, npe = xyz.shape[:2]
    flat = xyz.reshape(-1, 2)
    pairs = cKDTree(flat).query_pairs(tol, output_type="ndarray")
    n = flat.shape[0]
    graph = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, label = connected_components(graph, directed=False)

    owner = np.repeat(np.arange(k), npe)
    # two nodes of the same element merged -> ambiguous
    key = label.astype(np.int64) * k + owner
    if np.unique(key).size != n:
        raise AssemblyError("node matching is ambiguous: distinct nodes of one element "
                            f"lie within {tol:g} m of each other")
    rep = np.zeros((ncomp, 2))
    np.add.at(rep, label, flat)
    rep /= np.bincount(label, minlength=ncomp)[:, None]
    spread = np.linalg.norm(flat - rep[label], axis=1).max(initial=0.0)
    if spread > tol:
        raise AssemblyError(f"node matching is ambiguous: merged cluster spans {spread:g} m")

    scale = max(mesh.lx, mesh.ly, 1.0)
    q = np.round(rep / (scale * 1e-10)).astype(np.int64)
    order = np.lexsort((q[:, 0], q[:, 1]))
    new_index = np.empty(ncomp, dtype=int)
    new_index[order] = np.arange(ncomp)
    element_dofs = new_index[label].reshape(k, npe)
    coords = rep[order]

    bdofs = {}
    for tag in mesh.tags:
        sel = [i for i, t in enumerate(mesh.boundary_tags) if t == tag]
        ids = [element_dofs[mesh.boundary_elements[i], basis.edge_nodes[mesh.boundary_local_edge[i]]]
               for i in sel]
        bdofs[tag] = np.unique(np.concatenate(ids))
    for arr in (element_dofs, coords, *bdofs.values()):
        arr.flags.writeable = False
    return GlobalDofMap(element_dofs, coords, bdofs)


def receiver_rows(mesh: Mesh2D, basis: NodalTriangleBasis, dofmap: GlobalDofMap, points):
    """Sparse interpolation operator (n_points x N) evaluating a nodal field at points."""
    elems, refs = mesh.locate(points)
    vals = basis.evaluate(refs)                      # (npts, Np)
    rows = np.repeat(np.arange(len(elems)), basis.n_nodes)
    cols = dofmap.element_dofs[elems].ravel()
    mat = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(len(elems), dofmap.n_dofs))
    mat.eliminate_zeros()
    return mat


def points_per_wavelength(freq: float, lx: float, n_el: int, order: int, c: float = 343.0) -> float:
    """Wavelength over the mean axial internodal spacing, lambda * N_el * P / Lx."""
    return (c / freq) * n_el * order / lx


def cfl_timestep(mesh: Mesh2D, basis_order: int, c_cfl: float, c: float = 343.0) -> float:
    """dt = C_CFL * min LGL spacing (reference [-1, 1]) * min inscribed radius / c."""
    if not 0 < c_cfl <= 1:
        raise ConfigurationError(f"C_CFL must lie in (0, 1], got {c_cfl}")
    return c_cfl * min_lgl_spacing(basis_order) * float(mesh.inscribed_radii().min()) / c
