import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from vqprecond import (
    PrecondKind,
    VQPError,
    assemble,
    build_amg,
    build_block_jacobi,
    build_cholesky,
    build_preconditioner,
    lift,
    make_mesh,
    pcg,
    transport,
)
from vqprecond.fem import LinearSystem
from vqprecond.field import standard_normal
from vqprecond.solver import IdentityPreconditioner, block_ranges, default_block_count


def unit_system(r):
    mesh = make_mesh(r)
    return assemble(mesh, np.ones(mesh.n_nodes))


def random_system(basis, mesh, index, seed=3):
    xi = standard_normal(seed, index, basis.n_kl)
    return assemble(mesh, transport(lift(basis, xi)))


def dense_spd(rng, n):
    B = rng.standard_normal((n, n))
    return B @ B.T + n * np.eye(n)


ALL_KINDS = list(PrecondKind)


# ---- Cholesky -----------------------------------------------------------------

def test_cholesky_of_identity():
    M = build_cholesky(sp.identity(7, format="csr"))
    v = np.arange(7.0)
    assert np.array_equal(M.apply(v), v)


def test_cholesky_residual(basis32, mesh32, rng):
    s = random_system(basis32, mesh32, 0)
    M = build_cholesky(s.A)
    for _ in range(5):
        v = rng.standard_normal(s.n)
        assert np.linalg.norm(s.A @ M.apply(v) - v) <= 1e-10 * np.linalg.norm(v)
    # RCM keeps the band close to the mesh width
    assert M.bandwidth <= 2 * 31


def test_cholesky_gives_one_iteration(basis32, mesh32):
    for i in range(5):
        s = random_system(basis32, mesh32, i)
        _, rec = pcg(s, build_cholesky(s.A))
        assert rec.iterations == 1 and rec.converged


def test_not_spd():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(VQPError) as e:
        build_cholesky(A)
    assert e.value.code == "not-spd"
    with pytest.raises(VQPError) as e:
        build_block_jacobi(A, 1)
    assert e.value.code == "not-spd"


# ---- block Jacobi -------------------------------------------------------------

def test_block_ranges():
    assert block_ranges(9, 3) == [(0, 3), (3, 6), (6, 9)]
    r = block_ranges(961, 7)
    sizes = [b - a for a, b in r]
    assert r[0][0] == 0 and r[-1][1] == 961 and max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        block_ranges(5, 6)
    assert default_block_count(961) == 4
    assert default_block_count(100_000) == 200


def test_block_jacobi_dense_oracle(rng):
    A = dense_spd(rng, 9)
    M = build_block_jacobi(sp.csr_matrix(A), 3)
    v = rng.standard_normal(9)
    expected = np.concatenate([np.linalg.solve(A[a:a + 3, a:a + 3], v[a:a + 3]) for a in (0, 3, 6)])
    assert np.allclose(M.apply(v), expected, rtol=1e-12)


def test_block_jacobi_extremes(rng):
    s = unit_system(10)
    v = rng.standard_normal(s.n)
    one = build_block_jacobi(s.A, 1)
    assert np.allclose(one.apply(v), build_cholesky(s.A).apply(v), rtol=1e-10, atol=1e-12)
    assert pcg(s, one)[1].iterations == 1
    pointwise = build_block_jacobi(s.A, s.n)
    assert np.allclose(pointwise.apply(v), v / s.A.diagonal(), rtol=1e-14)


# ---- AMG ----------------------------------------------------------------------

def test_amg_single_level_is_smoother(rng):
    s = unit_system(24)
    M = build_amg(s.A, max_levels=1)
    assert M.n_levels == 1
    v = rng.standard_normal(s.n)
    dinv = 1.0 / s.A.diagonal()
    x = (2 / 3) * dinv * v
    x = x + (2 / 3) * dinv * (v - s.A @ x)
    assert np.allclose(M.apply(v), x, rtol=1e-14)


def test_amg_hierarchy_shape():
    M = build_amg(unit_system(64).A)
    sizes = [l.A.shape[0] for l in M.levels]
    assert sizes[-1] <= 64
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert M.operator_complexity() < 2.0


def test_amg_small_matrix_is_exact(rng):
    s = unit_system(6)  # 25 unknowns, below the coarse size
    M = build_amg(s.A)
    v = rng.standard_normal(s.n)
    assert np.allclose(s.A @ M.apply(v), v, atol=1e-12)


def test_amg_error_propagation_contracts():
    s = unit_system(32)
    M = build_amg(s.A)
    x = np.random.default_rng(0).standard_normal(s.n)
    rho = 0.0
    for _ in range(60):
        y = x - M.apply(s.A @ x)
        rho = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
    assert rho < 1.0


def test_amg_error_propagation_dense_oracle():
    s = unit_system(12)
    M = build_amg(s.A)
    Minv = np.column_stack([M.apply(e) for e in np.eye(s.n)])
    E = np.eye(s.n) - Minv @ s.A.toarray()
    assert np.max(np.abs(np.linalg.eigvals(E))) < 1.0


def test_amg_near_mesh_independence():
    its = [pcg(s, build_amg(s.A))[1].iterations for s in map(unit_system, (32, 64, 128))]
    assert all(b < 1.5 * a for a, b in zip(its, its[1:]))


# ---- operator properties of every preconditioner ------------------------------

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_preconditioner_linear_symmetric_positive(kind, basis16, mesh16, rng):
    s = random_system(basis16, mesh16, 1)
    M = build_preconditioner(kind, s.A, built_from=4)
    assert M.kind is kind and M.built_from == 4
    v, w = rng.standard_normal((2, s.n))
    a, b = 1.7, -0.3
    lhs = M.apply(a * v + b * w)
    assert np.allclose(lhs, a * M.apply(v) + b * M.apply(w), rtol=1e-10, atol=1e-12)
    asym = abs(v @ M.apply(w) - w @ M.apply(v))
    assert asym < 1e-8 * np.linalg.norm(v) * np.linalg.norm(w)
    assert v @ M.apply(v) > 0


# ---- PCG ----------------------------------------------------------------------

def test_pcg_identity_matrix(rng):
    b = rng.standard_normal(12)
    s = LinearSystem(sp.identity(12, format="csr"), b, np.arange(12))
    u, rec = pcg(s)
    assert rec.iterations == 1 and np.allclose(u, b)


def test_pcg_matches_dense_solve():
    s = unit_system(16)
    u, rec = pcg(s, IdentityPreconditioner(), eps=1e-6)
    ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(s.A.toarray()), s.b)
    assert rec.converged
    assert rec.final_relative_residual < 1e-6
    assert np.max(np.abs(u - ref)) < 1e-5


def test_pcg_error_decreases_in_energy_norm(basis16, mesh16):
    s = random_system(basis16, mesh16, 2)
    A = s.A.toarray()
    exact = np.linalg.solve(A, s.b)
    errs = []
    pcg(s, build_block_jacobi(s.A, 5), eps=1e-10,
        callback=lambda j, u: errs.append(np.sqrt((u - exact) @ A @ (u - exact))))
    assert len(errs) > 3
    assert np.all(np.diff(errs) <= 1e-12 * errs[0])


def test_pcg_deterministic(basis16, mesh16):
    s = random_system(basis16, mesh16, 5)
    M = build_amg(s.A)
    paths = []
    for _ in range(2):
        path = []
        u, rec = pcg(s, M, callback=lambda j, u: path.append(u.copy()))
        paths.append((np.array(path), u, rec))
    assert np.array_equal(paths[0][0], paths[1][0])
    assert paths[0][2] == paths[1][2]


def test_pcg_max_iter_is_not_an_error():
    s = unit_system(16)
    u, rec = pcg(s, max_iter=3)
    assert not rec.converged and rec.iterations == 3
    assert rec.final_relative_residual >= 1e-6


def test_pcg_breakdown():
    A = sp.csr_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(VQPError) as e:
        pcg(LinearSystem(A, np.ones(2), np.arange(2)))
    assert e.value.code == "pcg-breakdown"


def test_pcg_zero_rhs():
    s = unit_system(4)
    u, rec = pcg(LinearSystem(s.A, np.zeros(s.n), s.dofs))
    assert rec.iterations == 0 and rec.converged and not u.any()


def test_ordering_per_realization(basis32, mesh32):
    for i in range(5):
        s = random_system(basis32, mesh32, i, seed=21)
        J = {k: pcg(s, build_preconditioner(k, s.A))[1].iterations for k in ALL_KINDS}
        assert J[PrecondKind.CHOLESKY] == 1
        assert J[PrecondKind.CHOLESKY] <= J[PrecondKind.AMG] <= J[PrecondKind.BLOCK_JACOBI] <= J[PrecondKind.IDENTITY]
