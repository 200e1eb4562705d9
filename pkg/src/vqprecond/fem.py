"""P1 finite elements for -div(kappa grad u) = 1 on the unit square, u = 0 on the boundary.

Meshes are structured r x r grids with every cell split into two right
triangles along the (i, j) -> (i+1, j+1) diagonal. On such meshes the
unit-coefficient stiffness reduces to the 5-point stencil.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import VQPError


@dataclass(frozen=True)
class TriMesh:
    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3), counterclockwise
    boundary_nodes: np.ndarray  # sorted node indices
    resolution: int | None = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counterclockwise triangles)."""
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def lumped_mass(self) -> np.ndarray:
        """Row-sum lumped P1 mass matrix diagonal: one third of each adjacent triangle's area."""
        a = np.repeat(self.areas(), 3)
        return np.bincount(self.triangles.ravel(), weights=a, minlength=self.n_nodes) / 3.0

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.nodes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    dofs: np.ndarray = field(repr=False)  # mesh node index of each unknown

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def residual_norm(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.b - self.A @ u))


def make_mesh(r: int) -> TriMesh:
    """Structured right-triangle mesh of (0,1)^2 with r x r cells."""
    if r < 2:
        raise VQPError("mesh-too-coarse", f"need r >= 2, got {r}")
    t = np.linspace(0.0, 1.0, r + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(r), np.arange(r), indexing="xy")
    n00 = (i + (r + 1) * j).ravel()
    n10 = n00 + 1
    n01 = n00 + (r + 1)
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * r * r, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    on_edge = (
        np.isclose(nodes[:, 0], 0.0) | np.isclose(nodes[:, 0], 1.0)
        | np.isclose(nodes[:, 1], 0.0) | np.isclose(nodes[:, 1], 1.0)
    )
    return TriMesh(nodes, triangles, np.flatnonzero(on_edge), resolution=r)


def load_mesh(node_file, triangle_file) -> TriMesh:
    """Read a mesh from two whitespace-separated text files.

    ``node_file`` has one ``x y`` pair per line, ``triangle_file`` one
    0-based ``i j k`` triple per line. Clockwise triangles are reoriented.
    Boundary nodes are the endpoints of edges owned by a single triangle.
    """
    nodes = np.loadtxt(node_file, dtype=float, ndmin=2)
    tris = np.loadtxt(triangle_file, dtype=np.int64, ndmin=2)
    area = TriMesh(nodes, tris, np.empty(0, dtype=np.int64)).areas()
    if np.any(area == 0):
        raise VQPError("degenerate-triangle")
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]

    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = np.unique(uniq[counts == 1])
    return TriMesh(nodes, tris, boundary)


def _gradients(mesh: TriMesh):
    """Constant gradients of the three P1 hat functions on every triangle."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas()
    # grad phi_k = rot90(opposite edge) / (2 area)
    x, y = p[..., 0], p[..., 1]
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return gx / (2 * area[:, None]), gy / (2 * area[:, None]), area


def assemble_stiffness(mesh: TriMesh, coefficient: np.ndarray) -> sp.csr_matrix:
    """Full (boundary included) stiffness matrix with per-triangle mean coefficient."""
    coefficient = np.asarray(coefficient, dtype=float)
    if coefficient.shape != (mesh.n_nodes,):
        raise ValueError(f"coefficient must have shape ({mesh.n_nodes},)")
    if not np.all(np.isfinite(coefficient)) or np.any(coefficient <= 0):
        raise VQPError("invalid-coefficient", "coefficient must be finite and strictly positive")
    gx, gy, area = _gradients(mesh)
    kbar = coefficient[mesh.triangles].mean(axis=1)
    local = (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]) * (kbar * area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def load_vector(mesh: TriMesh) -> np.ndarray:
    """Exact P1 integral of f = 1 against each hat function."""
    return mesh.lumped_mass()


def assemble(mesh: TriMesh, coefficient: np.ndarray) -> LinearSystem:
    """Interior-DoF system A u = b after eliminating the homogeneous Dirichlet nodes."""
    K = assemble_stiffness(mesh, coefficient)
    dofs = mesh.interior_nodes
    A = K[dofs][:, dofs].tocsr()
    A.sort_indices()
    return LinearSystem(A, load_vector(mesh)[dofs], dofs)


def nodal_solution(mesh: TriMesh, system: LinearSystem, u: np.ndarray) -> np.ndarray:
    """Scatter interior values into a full nodal vector with zero boundary values."""
    full = np.zeros(mesh.n_nodes)
    full[system.dofs] = u
    return full
