"""How the choice of map into quantization space shapes the Voronoi cells.

Under the scale map, k-means packs centroids where the Gaussian mass is, so
outer cells receive few samples. The scaled-CDF map makes the target uniform on
a box, which evens out the cell frequencies.
"""
import numpy as np

from vqprecond import CovarianceKernel, QuantizerSpec, build_kl_basis, make_mesh
from vqprecond.driver import build_codebook, frequency_profile, norm_frequency_correlation

basis = build_kl_basis(CovarianceKernel(1.0, 0.1), make_mesh(24), 16)

for kind in ("scale", "cdf"):
    spec = QuantizerSpec(method="kmeans", P=100, map=kind, n_s=20_000, seed=1)
    cb = build_codebook(spec, basis, m=2)
    profile = frequency_profile(cb, n_s=100_000, seed=0)
    f = np.array([row[2] for row in profile]) * cb.P
    print(f"{kind:5s}: frequency x P in [{f.min():.2f}, {f.max():.2f}], "
          f"rank correlation(norm, frequency) = {norm_frequency_correlation(profile):+.2f}")

grid = build_codebook(QuantizerSpec(method="grid"), basis, m=1)
print("grid m=1 frequencies:", [round(r[2], 4) for r in frequency_profile(grid, 100_000, 0)])
