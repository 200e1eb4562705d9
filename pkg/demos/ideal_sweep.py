"""Iterations when each realization is preconditioned by its own m-term truncation.

This is the best any quantizer on m modes can do, so it bounds the benefit of
increasing P at fixed m.
"""
from vqprecond import CampaignConfig, CovarianceKernel, build_kl_basis, ideal_sweep, make_mesh

mesh = make_mesh(32)
basis = build_kl_basis(CovarianceKernel(1.0, 0.1), mesh, 64)
m_list = [0, 2, 4, 8, 16, 32, 64]

for kind in ("cholesky", "amg"):
    cfg = CampaignConfig(resolution=32, n_kl=64, preconditioner=kind, n_realizations=50)
    print(kind)
    for m, energy, mean_J in ideal_sweep(cfg, m_list, workers=4, basis=basis, mesh=mesh):
        print(f"  m={m:3d}  relative energy {energy:.3f}  E[J] {mean_J:6.2f}")
