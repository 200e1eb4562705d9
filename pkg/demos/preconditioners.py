"""Compare the four preconditioner families on sampled lognormal Poisson problems.

Each preconditioner is built from the matrix it preconditions, so Cholesky is
exact and converges in one iteration. The others trade accuracy for cost.
"""
import time

import numpy as np

from vqprecond import (
    CovarianceKernel,
    PrecondKind,
    assemble,
    build_kl_basis,
    build_preconditioner,
    lift,
    make_mesh,
    pcg,
    transport,
)
from vqprecond.field import standard_normal

mesh = make_mesh(32)
basis = build_kl_basis(CovarianceKernel(1.0, 0.1), mesh, 64)

iterations = {k: [] for k in PrecondKind}
elapsed = {k: 0.0 for k in PrecondKind}
for i in range(10):
    system = assemble(mesh, transport(lift(basis, standard_normal(0, i, basis.n_kl))))
    for kind in PrecondKind:
        t0 = time.perf_counter()
        M = build_preconditioner(kind, system.A)
        _, rec = pcg(system, M, eps=1e-6)
        elapsed[kind] += time.perf_counter() - t0
        iterations[kind].append(rec.iterations)

print(f"{system.n} unknowns, 10 realizations")
for kind in PrecondKind:
    print(f"{kind.value:9s} mean J {np.mean(iterations[kind]):7.2f}   build+solve {elapsed[kind]:.2f}s")
