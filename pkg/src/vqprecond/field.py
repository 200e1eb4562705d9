"""Log-normal random coefficient kappa = exp(G) with G a truncated Karhunen-Loeve field.

The covariance operator is discretized with a lumped-mass Galerkin scheme:
with ``M`` the lumped mass diagonal and ``C`` the node-to-node kernel matrix,
the symmetric problem ``M^1/2 C M^1/2 v = lambda v`` is solved densely and the
modes are recovered as ``Phi = M^-1/2 v``, which makes them M-orthonormal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.spatial.distance import cdist
from scipy.special import ndtri

from .errors import VQPError
from .fem import TriMesh

log = logging.getLogger(__name__)

#: modes with lambda_k < DEGENERATE_RATIO * lambda_1 are dropped from a basis
DEGENERATE_RATIO = 1e-12


@dataclass(frozen=True)
class CovarianceKernel:
    """Squared exponential kernel ``sigma2 * exp(-|x - x'|^2 / ell^2)``.

    ``ell = inf`` gives the constant (rank-one) kernel.
    """

    sigma2: float = 1.0
    ell: float = 0.1

    def __post_init__(self):
        if not self.sigma2 > 0 or not self.ell > 0:
            raise ValueError("sigma2 and ell must be positive")

    def __call__(self, x, y):
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        return self.matrix(x, y)

    def matrix(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        d2 = cdist(x, x if y is None else y, "sqeuclidean")
        if np.isinf(self.ell):
            return np.full_like(d2, self.sigma2)
        return self.sigma2 * np.exp(-d2 / self.ell**2)


@dataclass(frozen=True)
class KLBasis:
    eigenvalues: np.ndarray  # (n_kl,), nonincreasing
    modes: np.ndarray  # (n_kl, n_nodes), row k is Phi_k at the nodes
    mass: np.ndarray  # (n_nodes,), lumped mass diagonal
    total_variance: float  # integral of the pointwise variance over the domain
    kernel: CovarianceKernel
    mesh_hash: str = ""
    mesh_resolution: int | None = None

    @property
    def n_kl(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.mass.shape[0]

    @property
    def mass_matrix(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    def inner(self, h: np.ndarray, g: np.ndarray) -> float:
        return float(np.dot(h * self.mass, g))

    def norm2(self, h: np.ndarray) -> float:
        """Squared L2(Omega) norm under the lumped mass."""
        return self.inner(h, h)

    def relative_energy(self, m: int) -> float:
        _check_m(self, m)
        return float(self.eigenvalues[:m].sum() / self.total_variance)


@dataclass(frozen=True)
class FieldRealization:
    xi: np.ndarray
    nodal_log_values: np.ndarray
    seed_index: int


def _check_m(basis: KLBasis, m: int):
    if not 0 <= m <= basis.n_kl:
        raise VQPError("mode-count-out-of-range", f"m={m} not in [0, {basis.n_kl}]")


def build_kl_basis(kernel: CovarianceKernel, mesh: TriMesh, n_kl: int) -> KLBasis:
    """Dominant ``n_kl`` eigenpairs of the discretized covariance operator.

    Trailing modes whose eigenvalue falls below ``DEGENERATE_RATIO * lambda_1``
    are dropped, so the returned basis may hold fewer than ``n_kl`` modes.
    """
    n = mesh.n_nodes
    if n_kl < 1:
        raise ValueError("n_kl must be positive")
    if n_kl > n:
        raise VQPError("rank-exceeds-dofs", f"n_kl={n_kl} > n_nodes={n}")

    mass = mesh.lumped_mass()
    sq = np.sqrt(mass)
    W = kernel.matrix(mesh.nodes)
    W *= sq[:, None]
    W *= sq[None, :]
    try:
        lam, V = scipy.linalg.eigh(W, subset_by_index=[n - n_kl, n - 1], overwrite_a=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise VQPError("kl-eigensolve-failed", str(exc)) from exc
    lam = lam[::-1]
    V = V[:, ::-1]

    keep = lam >= DEGENERATE_RATIO * lam[0]
    if not keep.all():
        log.info("dropping %d degenerate KL modes", int((~keep).sum()))
        lam, V = lam[keep], V[:, keep]

    modes = (V / sq[:, None]).T
    # fix the sign so the basis is reproducible across LAPACK builds
    pivot = np.argmax(np.abs(modes), axis=1)
    signs = np.sign(modes[np.arange(modes.shape[0]), pivot])
    modes *= signs[:, None]

    total = kernel.sigma2 * float(mass.sum())
    return KLBasis(
        eigenvalues=np.ascontiguousarray(lam),
        modes=np.ascontiguousarray(modes),
        mass=mass,
        total_variance=total,
        kernel=kernel,
        mesh_hash=mesh.digest(),
        mesh_resolution=mesh.resolution,
    )


def truncation_error(basis: KLBasis, m: int) -> float:
    """Mean squared L2 error of the m-term expansion: total variance minus captured eigenvalues."""
    _check_m(basis, m)
    return float(basis.total_variance - basis.eigenvalues[:m].sum())


def project(basis: KLBasis, m: int, nodal_log_values: np.ndarray) -> np.ndarray:
    _check_m(basis, m)
    lam = basis.eigenvalues[:m]
    if np.any(lam <= DEGENERATE_RATIO * basis.eigenvalues[0]):
        raise VQPError("degenerate-mode")
    h = np.asarray(nodal_log_values, dtype=float)
    return (basis.modes[:m] @ (basis.mass * h)) / np.sqrt(lam)


def lift(basis: KLBasis, xi: np.ndarray) -> np.ndarray:
    """Nodal values of sum_k sqrt(lambda_k) xi_k Phi_k (also accepts a batch of rows)."""
    xi = np.asarray(xi, dtype=float)
    m = xi.shape[-1]
    if m > basis.n_kl:
        raise VQPError("mode-count-out-of-range", f"len(xi)={m} > n_kl={basis.n_kl}")
    return (xi * np.sqrt(basis.eigenvalues[:m])) @ basis.modes[:m]


#: independent sub-streams of one seed
STREAM_SIMULATION = 0
STREAM_TRAINING = 1
STREAM_PROFILE = 2


def standard_normal(seed: int, index: int, m: int, stream: int = STREAM_SIMULATION) -> np.ndarray:
    """``m`` standard normals owned by realization ``index`` of ``(seed, stream)``.

    Each realization reads from its own Philox counter block (index and stream
    sit in the second and third 64-bit counter words), so draws do not depend
    on call order, and a shorter draw is a prefix of a longer one. Uniforms are
    taken at bin centres of a 53-bit grid and mapped through the inverse
    normal CDF.
    """
    if m == 0:
        return np.zeros(0)
    bg = np.random.Philox(key=int(seed), counter=[0, int(index), int(stream), 0])
    raw = bg.random_raw(m)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def standard_normal_batch(seed: int, indices, m: int, stream: int = STREAM_SIMULATION) -> np.ndarray:
    indices = np.asarray(indices)
    out = np.empty((indices.size, m))
    for row, i in enumerate(indices):
        out[row] = standard_normal(seed, i, m, stream)
    return out


def sample_realization(basis: KLBasis, m: int, seed: int, index: int) -> FieldRealization:
    _check_m(basis, m)
    xi = standard_normal(seed, index, m)
    return FieldRealization(xi, lift(basis, xi), int(index))


def transport(nodal_log_values: np.ndarray) -> np.ndarray:
    """kappa = exp(G) componentwise."""
    with np.errstate(over="ignore"):
        kappa = np.exp(np.asarray(nodal_log_values, dtype=float))
    if not np.all(np.isfinite(kappa)):
        raise VQPError("coefficient-overflow")
    return kappa


def inverse_transport(coefficient: np.ndarray) -> np.ndarray:
    return np.log(coefficient)
