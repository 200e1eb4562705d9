"""Monte Carlo campaigns with quantized preconditioners.

A campaign samples latent vectors, sends each to its nearest centroid, and
solves the sampled system with the preconditioner built from that centroid's
coefficient field. Realizations are grouped by centroid so each preconditioner
handles its whole batch; groups are spread over a thread pool and results are
reduced in realization order, so reports do not depend on the worker count.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import io
from .errors import VQPError
from .fem import TriMesh, assemble, make_mesh
from .field import (
    STREAM_PROFILE,
    STREAM_SIMULATION,
    STREAM_TRAINING,
    CovarianceKernel,
    KLBasis,
    build_kl_basis,
    lift,
    standard_normal_batch,
    transport,
)
from .quantizer import (
    Codebook,
    MapKind,
    Method,
    T2Map,
    assign_batch,
    centroid_coefficient,
    clvq,
    grid_codebook,
    kmeans,
)
from .solver import PrecondKind, build_preconditioner, pcg

log = logging.getLogger(__name__)


@dataclass
class QuantizerSpec:
    method: str = "kmeans"
    P: int = 1
    map: str = "scale"
    seed: int = 1
    n_s: int = 100_000
    max_iter: int = 200
    rel_tol: float = 1e-6
    gamma0: float = 0.5
    schedule_a: float | None = None
    n_passes: int = 1


@dataclass
class CampaignConfig:
    resolution: int = 32
    sigma2: float = 1.0
    ell: float = 0.1
    n_kl: int = 64
    m: int = 8
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    preconditioner: str = "amg"
    eps: float = 1e-6
    n_realizations: int = 500
    master_seed: int = 0
    n_blocks: int | None = None
    output_dir: str | None = None
    basis_path: str | None = None
    codebook_path: str | None = None

    def validate(self):
        if not 0 <= self.m <= self.n_kl:
            raise ValueError(f"m={self.m} must lie in [0, n_kl={self.n_kl}]")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        PrecondKind(self.preconditioner)
        Method(self.quantizer.method)
        MapKind(self.quantizer.map)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        q = d.pop("quantizer", {}) or {}
        q = q if isinstance(q, QuantizerSpec) else QuantizerSpec(**q)
        return cls(quantizer=q, **d).validate()


@dataclass
class RealizationRecord:
    index: int
    p: int
    iterations: int
    converged: bool
    relative_residual: float


@dataclass
class SimulationReport:
    n_p: np.ndarray
    sum_J: np.ndarray  # converged solves only
    mean_J: np.ndarray  # NaN for cells without converged solves
    centroid_norm: np.ndarray  # |latent centroid|
    records: list[RealizationRecord]
    config: CampaignConfig | None = None

    @property
    def P(self) -> int:
        return self.n_p.size

    @property
    def n_realizations(self) -> int:
        return len(self.records)

    @property
    def n_unconverged(self) -> int:
        return sum(not r.converged for r in self.records)

    @property
    def total_iterations(self) -> int:
        return int(self.sum_J.sum())

    @property
    def mean_iterations(self) -> float:
        """E[J] over converged solves."""
        n = self.n_realizations - self.n_unconverged
        return self.total_iterations / n if n else float("nan")

    def summary(self) -> dict:
        used = self.n_p > 0
        return {
            "config": self.config.to_dict() if self.config else None,
            "P": self.P,
            "n_realizations": self.n_realizations,
            "n_unconverged": self.n_unconverged,
            "total_iterations": self.total_iterations,
            "mean_J": self.mean_iterations,
            "max_sum_J": int(self.sum_J.max()),
            "min_sum_J": int(self.sum_J.min()),
            "min_sum_J_used": int(self.sum_J[used].min()) if used.any() else 0,
            "n_cells_used": int(used.sum()),
            "load_balance": spread_stats(self.sum_J),
        }


def _reduce(records: list[RealizationRecord], P: int, norms: np.ndarray, config=None) -> SimulationReport:
    records = sorted(records, key=lambda r: r.index)
    n_p = np.zeros(P, dtype=np.int64)
    n_conv = np.zeros(P, dtype=np.int64)
    sum_J = np.zeros(P, dtype=np.int64)
    for r in records:
        n_p[r.p] += 1
        if r.converged:
            n_conv[r.p] += 1
            sum_J[r.p] += r.iterations
    mean_J = np.full(P, np.nan)
    np.divide(sum_J, n_conv, out=mean_J, where=n_conv > 0)
    return SimulationReport(n_p, sum_J, mean_J, norms, records, config)


def spread_stats(sum_J) -> dict:
    s = np.asarray(sum_J, dtype=float)
    mean = s.mean()
    return {
        "range": float(s.max() - s.min()),
        "cv": float(s.std() / mean) if mean > 0 else 0.0,
    }


# --- artifact construction ----------------------------------------------------

def prepare_basis(config: CampaignConfig, mesh: TriMesh | None = None) -> KLBasis:
    if config.basis_path:
        basis = io.load_basis(config.basis_path)
    else:
        mesh = mesh or make_mesh(config.resolution)
        basis = build_kl_basis(CovarianceKernel(config.sigma2, config.ell), mesh, config.n_kl)
    if basis.n_kl < config.n_kl:
        raise VQPError("mode-count-out-of-range", f"basis holds {basis.n_kl} < n_kl={config.n_kl} modes")
    return basis


def training_sample(n_s: int, m: int, seed: int) -> np.ndarray:
    return standard_normal_batch(seed, np.arange(n_s), m, STREAM_TRAINING)


def build_codebook(spec: QuantizerSpec, basis: KLBasis, m: int, sample: np.ndarray | None = None) -> Codebook:
    t2 = T2Map.from_basis(spec.map, basis, m)
    method = Method(spec.method)
    if method is Method.GRID:
        return grid_codebook(t2, m)
    if sample is None:
        sample = training_sample(spec.n_s, m, spec.seed)
    if method is Method.KMEANS:
        return kmeans(sample, t2, spec.P, spec.seed, spec.max_iter, spec.rel_tol)
    return clvq(sample, t2, spec.P, spec.seed, spec.gamma0, spec.schedule_a, spec.n_passes)


def prepare_codebook(config: CampaignConfig, basis: KLBasis) -> Codebook:
    if config.codebook_path:
        cb = io.load_codebook(config.codebook_path)
        if cb.m != config.m:
            raise ValueError(f"codebook has m={cb.m}, config has m={config.m}")
        return cb
    return build_codebook(config.quantizer, basis, config.m)


# --- campaign -----------------------------------------------------------------

def _solve_group(mesh, basis, coefficient_for_precond, xis, indices, p, config):
    """Solve every realization of one group with one preconditioner."""
    M = None
    out = []
    for i, xi in zip(indices, xis):
        system = assemble(mesh, transport(lift(basis, xi)))
        if M is None:
            pre = assemble(mesh, coefficient_for_precond)
            M = build_preconditioner(config.preconditioner, pre.A, config.n_blocks, built_from=p)
        _, rec = pcg(system, M, config.eps)
        out.append(RealizationRecord(int(i), int(p), rec.iterations, rec.converged, rec.final_relative_residual))
    return out


def _run_groups(tasks, workers: int):
    if workers <= 1:
        return [rec for t in tasks for rec in t()]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return [rec for chunk in pool.map(lambda t: t(), tasks) for rec in chunk]


def simulation_latents(config: CampaignConfig) -> np.ndarray:
    return standard_normal_batch(config.master_seed, np.arange(config.n_realizations), config.n_kl,
                                 STREAM_SIMULATION)


def run_campaign(config: CampaignConfig, workers: int = 1, basis: KLBasis | None = None,
                 codebook: Codebook | None = None, mesh: TriMesh | None = None,
                 latents: np.ndarray | None = None) -> SimulationReport:
    """Run a quantized-preconditioner Monte Carlo campaign.

    ``basis``, ``codebook``, ``mesh`` and ``latents`` may be passed in to reuse
    artifacts across campaigns; otherwise they are built (or loaded) from the
    config. ``latents`` overrides the sampled latent vectors (one row of
    length ``n_kl`` per realization).
    """
    config.validate()
    mesh = mesh or make_mesh(config.resolution)
    basis = basis or prepare_basis(config, mesh)
    if basis.n_nodes != mesh.n_nodes or (basis.mesh_hash and basis.mesh_hash != mesh.digest()):
        raise ValueError("basis was built on a different mesh")
    codebook = codebook or prepare_codebook(config, basis)

    xis = simulation_latents(config) if latents is None else np.asarray(latents, dtype=float)
    labels = assign_batch(codebook, xis[:, :codebook.m])
    tasks = []
    for p in np.unique(labels):
        members = np.flatnonzero(labels == p)
        coef = centroid_coefficient(codebook, int(p), basis)
        tasks.append(lambda p=p, members=members, coef=coef: _solve_group(
            mesh, basis, coef, xis[members], members, p, config))
    log.info("campaign: %d realizations over %d/%d cells", xis.shape[0], len(tasks), codebook.P)
    records = _run_groups(tasks, workers)
    norms = np.linalg.norm(codebook.latent_centroids, axis=1) if codebook.m else np.zeros(codebook.P)
    return _reduce(records, codebook.P, norms, config)


def ideal_sweep(config: CampaignConfig, m_list, workers: int = 1, basis: KLBasis | None = None,
                mesh: TriMesh | None = None) -> list[tuple[int, float, float]]:
    """E[J] when every realization gets a preconditioner built from its own m-term truncation.

    The solved system always uses all ``n_kl`` modes. Returns rows
    ``(m, relative_energy, mean_J)``; the quantizer part of ``config`` is ignored.
    """
    mesh = mesh or make_mesh(config.resolution)
    basis = basis or prepare_basis(config, mesh)
    xis = simulation_latents(config)
    rows = []
    for m in m_list:
        if not 0 <= m <= config.n_kl:
            raise VQPError("mode-count-out-of-range", f"m={m}")

        def task(i, m=m):
            xi = xis[i]
            return _solve_group(mesh, basis, transport(lift(basis, xi[:m])), xi[None, :], [i], -1, config)

        tasks = [lambda i=i: task(i) for i in range(xis.shape[0])]
        recs = sorted(_run_groups(tasks, workers), key=lambda r: r.index)
        conv = [r.iterations for r in recs if r.converged]
        mean = float(np.sum(conv) / len(conv)) if conv else float("nan")
        rows.append((int(m), basis.relative_energy(m), mean))
    return rows


def load_balance_report(report: SimulationReport):
    """Rows ``(p, centroid_norm, n_p, mean_J, sum_J)`` plus spread statistics of ``sum_J``."""
    rows = [
        (p, float(report.centroid_norm[p]), int(report.n_p[p]), float(report.mean_J[p]), int(report.sum_J[p]))
        for p in range(report.P)
    ]
    return rows, spread_stats(report.sum_J)


def frequency_profile(codebook: Codebook, n_s: int, seed: int):
    """Attribution frequencies on a fresh sample, as rows ``(p, |latent centroid|, f_p)`` sorted by norm."""
    xis = standard_normal_batch(seed, np.arange(n_s), codebook.m, STREAM_PROFILE)
    labels = assign_batch(codebook, xis)
    freq = np.bincount(labels, minlength=codebook.P) / n_s
    norms = np.linalg.norm(codebook.latent_centroids, axis=1) if codebook.m else np.zeros(codebook.P)
    order = np.lexsort((np.arange(codebook.P), norms))
    return [(int(p), float(norms[p]), float(freq[p])) for p in order]


def norm_frequency_correlation(profile) -> float:
    _, norms, freqs = zip(*profile)
    return float(spearmanr(norms, freqs).statistic)


# --- outputs ------------------------------------------------------------------

PER_CENTROID_HEADER = ("p", "centroid_norm", "n_p", "mean_J", "sum_J")
REALIZATION_HEADER = ("index", "p", "J", "converged", "relative_residual")
FREQUENCY_HEADER = ("p", "centroid_norm", "frequency")
IDEAL_SWEEP_HEADER = ("m", "relative_energy", "mean_J")


def write_report(report: SimulationReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "summary.json", report.summary())
    rows, _ = load_balance_report(report)
    io.write_csv(out / "per_centroid.csv", PER_CENTROID_HEADER, rows)
    io.write_csv(out / "realizations.csv", REALIZATION_HEADER,
                 [(r.index, r.p, r.iterations, int(r.converged), float(r.relative_residual))
                  for r in report.records])
    return out


def write_frequencies(profile, path):
    io.write_csv(path, FREQUENCY_HEADER, profile)


def write_ideal_sweep(rows, path):
    io.write_csv(path, IDEAL_SWEEP_HEADER, rows)
