"""A small Monte Carlo campaign: one AMG preconditioner per Voronoi cell.

Runs the same 300 realizations with 1, 10 and 50 centroids and writes the
reports of the last run under ./campaign_out.
"""
from vqprecond import CampaignConfig, CovarianceKernel, QuantizerSpec, build_kl_basis, make_mesh, run_campaign
from vqprecond.driver import load_balance_report, write_report

mesh = make_mesh(32)
basis = build_kl_basis(CovarianceKernel(1.0, 0.1), mesh, 64)

for P in (1, 10, 50):
    cfg = CampaignConfig(resolution=32, n_kl=64, m=8, preconditioner="amg", n_realizations=300,
                         quantizer=QuantizerSpec(method="kmeans", P=P, map="cdf", n_s=20_000))
    report = run_campaign(cfg, workers=4, basis=basis, mesh=mesh)
    _, spread = load_balance_report(report)
    print(f"P={P:3d}  E[J]={report.mean_iterations:6.2f}  cells used {int((report.n_p > 0).sum()):3d}  "
          f"sum_J cv {spread['cv']:.3f}")

out = write_report(report, "campaign_out")
print(f"wrote {sorted(p.name for p in out.iterdir())} to {out}/")
