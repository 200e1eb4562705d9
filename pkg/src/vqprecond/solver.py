"""PCG with a normwise backward-error stopping rule, and the preconditioners it is paired with."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import VQPError
from .fem import LinearSystem


class PrecondKind(str, enum.Enum):
    IDENTITY = "identity"
    CHOLESKY = "cholesky"
    BLOCK_JACOBI = "bj"
    AMG = "amg"


class Preconditioner:
    """Applies an approximation of A^-1. Subclasses implement ``apply``."""

    kind: PrecondKind
    built_from: int = -1

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, v):
        return self.apply(v)


class IdentityPreconditioner(Preconditioner):
    kind = PrecondKind.IDENTITY

    def apply(self, v):
        return np.array(v, dtype=float, copy=True)


def _banded_cholesky(A: sp.spmatrix):
    """Lower band storage factor of a sparse SPD matrix (already permuted)."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    coo = A.tocoo()
    low = coo.row >= coo.col
    bw = int(np.max(coo.row[low] - coo.col[low])) if low.any() else 0
    ab = np.zeros((bw + 1, n))
    ab[coo.row[low] - coo.col[low], coo.col[low]] = coo.data[low]
    try:
        cb = scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise VQPError("not-spd", str(exc)) from exc
    return cb


class CholeskyPreconditioner(Preconditioner):
    """Exact solve: reverse Cuthill-McKee ordering, then a banded Cholesky factor."""

    kind = PrecondKind.CHOLESKY

    def __init__(self, A):
        A = sp.csr_matrix(A)
        self.n = A.shape[0]
        self.perm = reverse_cuthill_mckee(A, symmetric_mode=True).astype(np.int64)
        Ap = A[self.perm][:, self.perm]
        self.factor = _banded_cholesky(Ap)
        self.bandwidth = self.factor.shape[0] - 1

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        y = scipy.linalg.cho_solve_banded((self.factor, True), v[self.perm], check_finite=False)
        out = np.empty_like(y)
        out[self.perm] = y
        return out


def block_ranges(n: int, n_blocks: int) -> list[tuple[int, int]]:
    """Contiguous, near-equal index ranges covering 0..n-1."""
    if not 1 <= n_blocks <= n:
        raise ValueError(f"n_blocks must be in [1, {n}]")
    edges = np.linspace(0, n, n_blocks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def default_block_count(n: int) -> int:
    return min(n, max(4, n // 500))


class BlockJacobiPreconditioner(Preconditioner):
    kind = PrecondKind.BLOCK_JACOBI

    def __init__(self, A, n_blocks: int | None = None):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        self.ranges = block_ranges(n, default_block_count(n) if n_blocks is None else n_blocks)
        self.factors = []
        for a, b in self.ranges:
            block = A[a:b, a:b].toarray()
            try:
                self.factors.append(scipy.linalg.cho_factor(block, lower=True, check_finite=False))
            except np.linalg.LinAlgError as exc:
                raise VQPError("not-spd", f"block {a}:{b}") from exc

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for (a, b), f in zip(self.ranges, self.factors):
            out[a:b] = scipy.linalg.cho_solve(f, v[a:b], check_finite=False)
        return out


# --- smoothed aggregation AMG ------------------------------------------------

def strength_graph(A: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    """Off-diagonal pattern with |a_ij| >= theta * sqrt(a_ii a_jj)."""
    C = sp.coo_matrix(A)
    d = np.abs(A.diagonal())
    keep = (C.row != C.col) & (np.abs(C.data) >= theta * np.sqrt(d[C.row] * d[C.col]))
    n = A.shape[0]
    S = sp.csr_matrix((np.ones(keep.sum()), (C.row[keep], C.col[keep])), shape=(n, n))
    S.sort_indices()
    return S


def greedy_aggregation(S: sp.csr_matrix) -> np.ndarray:
    """Three-pass standard aggregation; returns an aggregate id per node."""
    n = S.shape[0]
    ptr, ind = S.indptr, S.indices
    agg = np.full(n, -1, dtype=np.int64)
    n_agg = 0
    # pass 1: whole untouched neighbourhoods become aggregates
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = ind[ptr[i]:ptr[i + 1]]
        if np.all(agg[nbrs] < 0):
            agg[i] = n_agg
            agg[nbrs] = n_agg
            n_agg += 1
    # pass 2: attach leftovers to an aggregate built in pass 1
    first = agg.copy()
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = ind[ptr[i]:ptr[i + 1]]
        owned = first[nbrs]
        owned = owned[owned >= 0]
        if owned.size:
            agg[i] = owned[0]
    # pass 3: whatever remains seeds new aggregates
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = ind[ptr[i]:ptr[i + 1]]
        free = nbrs[agg[nbrs] < 0]
        agg[i] = n_agg
        agg[free] = n_agg
        n_agg += 1
    return agg


def tentative_prolongator(agg: np.ndarray) -> sp.csr_matrix:
    n = agg.size
    n_agg = int(agg.max()) + 1
    sizes = np.bincount(agg, minlength=n_agg)
    vals = 1.0 / np.sqrt(sizes[agg])
    return sp.csr_matrix((vals, (np.arange(n), agg)), shape=(n, n_agg))


def spectral_radius_estimate(A: sp.csr_matrix, dinv: np.ndarray, n_iter: int = 10, seed: int = 0) -> float:
    """Power-iteration estimate of rho(D^-1 A)."""
    x = np.random.default_rng(seed).random(A.shape[0]) + 0.5
    rho = 0.0
    for _ in range(n_iter):
        y = dinv * (A @ x)
        rho = float(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
    return rho


@dataclass
class AMGLevel:
    A: sp.csr_matrix
    dinv: np.ndarray
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None


class AMGPreconditioner(Preconditioner):
    """One symmetric V-cycle of smoothed aggregation AMG from a zero initial guess.

    Prolongators are ``(I - 4/3 / rho D^-1 A) T`` with ``T`` the normalized
    piecewise-constant aggregate basis. Each level does one weighted-Jacobi
    sweep before and after the coarse correction; the coarsest level is a dense
    Cholesky solve, unless coarsening was disabled with ``max_levels=1``, in
    which case the cycle is the two Jacobi sweeps alone.
    """

    kind = PrecondKind.AMG

    def __init__(self, A, theta: float = 0.08, omega: float = 2.0 / 3.0,
                 max_coarse: int = 64, max_levels: int = 25):
        self.omega = omega
        A = sp.csr_matrix(A, dtype=float)
        self.levels: list[AMGLevel] = []
        while True:
            dinv = 1.0 / A.diagonal()
            level = AMGLevel(A, dinv)
            self.levels.append(level)
            if A.shape[0] <= max_coarse or len(self.levels) >= max_levels:
                break
            agg = greedy_aggregation(strength_graph(A, theta))
            n_coarse = int(agg.max()) + 1
            if n_coarse >= A.shape[0]:
                break  # aggregation collapse: stop here
            T = tentative_prolongator(agg)
            rho = spectral_radius_estimate(A, dinv)
            P = (T - (4.0 / 3.0 / rho) * sp.diags(dinv) @ (A @ T)).tocsr()
            level.P = P
            level.R = P.T.tocsr()
            A = (level.R @ A @ P).tocsr()
            A = 0.5 * (A + A.T)  # remove round-off asymmetry
        coarse = self.levels[-1]
        self.coarse_factor = None
        if len(self.levels) > 1 or coarse.A.shape[0] <= max_coarse:
            try:
                self.coarse_factor = scipy.linalg.cho_factor(coarse.A.toarray(), lower=True)
            except np.linalg.LinAlgError as exc:
                raise VQPError("not-spd", "coarsest AMG level") from exc

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def operator_complexity(self) -> float:
        return sum(l.A.nnz for l in self.levels) / self.levels[0].A.nnz

    def _cycle(self, k: int, b: np.ndarray) -> np.ndarray:
        lvl = self.levels[k]
        if k == len(self.levels) - 1 and self.coarse_factor is not None:
            return scipy.linalg.cho_solve(self.coarse_factor, b)
        x = self.omega * lvl.dinv * b
        if lvl.P is not None:
            x += lvl.P @ self._cycle(k + 1, lvl.R @ (b - lvl.A @ x))
        x += self.omega * lvl.dinv * (b - lvl.A @ x)
        return x

    def apply(self, v):
        return self._cycle(0, np.asarray(v, dtype=float))


def build_cholesky(A) -> CholeskyPreconditioner:
    return CholeskyPreconditioner(A)


def build_block_jacobi(A, n_blocks: int | None = None) -> BlockJacobiPreconditioner:
    return BlockJacobiPreconditioner(A, n_blocks)


def build_amg(A, **kwargs) -> AMGPreconditioner:
    return AMGPreconditioner(A, **kwargs)


def build_preconditioner(kind, A, n_blocks: int | None = None, built_from: int = -1) -> Preconditioner:
    kind = PrecondKind(kind)
    if kind is PrecondKind.IDENTITY:
        M = IdentityPreconditioner()
    elif kind is PrecondKind.CHOLESKY:
        M = build_cholesky(A)
    elif kind is PrecondKind.BLOCK_JACOBI:
        M = build_block_jacobi(A, n_blocks)
    else:
        M = build_amg(A)
    M.built_from = built_from
    return M


# --- PCG --------------------------------------------------------------------

@dataclass
class SolveRecord:
    iterations: int
    final_relative_residual: float
    converged: bool
    preconditioner_index: int = -1


def pcg(system: LinearSystem, M: Preconditioner | None = None, eps: float = 1e-6,
        max_iter: int | None = None, callback=None):
    """Preconditioned CG from u = 0.

    The iteration count is the first j with ``|b - A u_j| < eps |b|``, the
    residual being recomputed from ``u_j`` rather than taken from the
    recurrence. Hitting ``max_iter`` returns an unconverged record.
    ``callback(j, u_j)`` is called after every update.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A, b = system.A, np.asarray(system.b, dtype=float)
    n = b.shape[0]
    M = M or IdentityPreconditioner()
    max_iter = 10 * n if max_iter is None else max_iter

    u = np.zeros(n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return u, SolveRecord(0, 0.0, True, M.built_from)
    tol = eps * bnorm
    r = b.copy()
    z = M.apply(r)
    rz = float(r @ z)
    p = z.copy()
    relres = 1.0
    for j in range(1, max_iter + 1):
        if rz <= 0:
            raise VQPError("pcg-breakdown", "preconditioned residual has nonpositive norm")
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise VQPError("pcg-breakdown", "p^T A p <= 0")
        alpha = rz / pAp
        u += alpha * p
        r -= alpha * Ap
        if callback is not None:
            callback(j, u)
        true_res = float(np.linalg.norm(b - A @ u))
        relres = true_res / bnorm
        if true_res < tol:
            return u, SolveRecord(j, relres, True, M.built_from)
        z = M.apply(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return u, SolveRecord(max_iter, relres, False, M.built_from)
