"""Voronoi quantizers of the latent Gaussian vector.

Codebooks live in the image space of ``T2Map.embed`` (called eta-space
below). k-means and CLVQ codebooks assign by Euclidean distance in eta-space,
grid codebooks by Euclidean distance in the raw latent space.
"""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import ndtr, ndtri

from .errors import VQPError
from .field import KLBasis, lift, transport

log = logging.getLogger(__name__)

#: grid half-side: the m = 1 grid splits N(0, 1) into three cells of mass 1/3
GRID_S = 2.0 * float(ndtri(2.0 / 3.0))

_CHUNK = 4096


class MapKind(str, enum.Enum):
    SCALE = "scale"
    SCALED_CDF = "cdf"


class Method(str, enum.Enum):
    KMEANS = "kmeans"
    CLVQ = "clvq"
    GRID = "grid"


@dataclass(frozen=True)
class T2Map:
    """Latent-to-quantization-space map.

    ``embed`` sends latent xi to eta (``Lambda^1/2 xi`` for SCALE,
    ``Lambda^1/2 F(xi)`` for SCALED_CDF with F the standard normal CDF);
    ``unembed`` is its inverse.
    """

    kind: MapKind
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or np.any(lam <= 0):
            raise ValueError("lambdas must be a positive vector")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "kind", MapKind(self.kind))

    @classmethod
    def from_basis(cls, kind, basis: KLBasis, m: int) -> "T2Map":
        return cls(MapKind(kind), basis.eigenvalues[:m].copy())

    @property
    def m(self) -> int:
        return self.lambdas.shape[0]

    def embed(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        s = np.sqrt(self.lambdas)
        if self.kind is MapKind.SCALE:
            return s * xi
        return s * ndtr(xi)

    def unembed(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        s = np.sqrt(self.lambdas)
        if self.kind is MapKind.SCALE:
            return eta / s
        return ndtri(eta / s)


def squared_euclidean(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared distances; the Bregman divergence of phi(x) = |x|^2."""
    return cdist(np.atleast_2d(x), np.atleast_2d(y), "sqeuclidean")


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (P, m) in eta-space
    t2: T2Map
    method: Method
    seed: int | None = None
    divergence: object = field(default=squared_euclidean, repr=False, compare=False)
    history: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        if self.t2.m == 0 and c.shape[-1] != 0:
            c = np.zeros((max(c.size, 1), 0))
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "method", Method(self.method))
        if c.shape[1] != self.t2.m:
            raise ValueError("centroid dimension does not match the map")

    @property
    def P(self) -> int:
        return self.centroids.shape[0]

    @property
    def m(self) -> int:
        return self.centroids.shape[1]

    @property
    def latent_centroids(self) -> np.ndarray:
        return self.t2.unembed(self.centroids)

    def assignment_space(self, xi: np.ndarray) -> np.ndarray:
        """Map latent points into the space where this codebook measures distance."""
        if self.method is Method.GRID:
            return np.asarray(xi, dtype=float)
        return self.t2.embed(xi)

    @property
    def _reference(self) -> np.ndarray:
        if self.method is Method.GRID:
            return self.latent_centroids
        return self.centroids


def _rows(x, m: int) -> np.ndarray:
    """View ``x`` as an (n, m) float array; a 1-D input is a single point when m > 0."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == m:
        return x
    if m == 0:
        return x.reshape(x.shape[0] if x.ndim else 1, 0)
    return x.reshape(-1, m)


def nearest(points: np.ndarray, centroids: np.ndarray, divergence=squared_euclidean):
    """Index of (and divergence to) the nearest centroid for each row; ties go to the lowest index."""
    points = np.atleast_2d(points)
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    if centroids.shape[1] == 0:
        idx[:] = 0
        dist[:] = 0.0
        return idx, dist
    for start in range(0, n, _CHUNK):
        d = divergence(points[start:start + _CHUNK], centroids)
        k = np.argmin(d, axis=1)
        idx[start:start + _CHUNK] = k
        dist[start:start + _CHUNK] = d[np.arange(k.size), k]
    return idx, dist


def assign(codebook: Codebook, xi: np.ndarray) -> int:
    """0-based index of the Voronoi cell containing latent point ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (codebook.m,):
        raise ValueError(f"xi must have shape ({codebook.m},)")
    if not np.all(np.isfinite(xi)):
        raise VQPError("invalid-latent")
    return int(assign_batch(codebook, xi[None, :])[0])


def assign_batch(codebook: Codebook, xis: np.ndarray) -> np.ndarray:
    xis = _rows(xis, codebook.m)
    if not np.all(np.isfinite(xis)):
        raise VQPError("invalid-latent")
    idx, _ = nearest(codebook.assignment_space(xis), codebook._reference, codebook.divergence)
    return idx


@dataclass(frozen=True)
class DistortionReport:
    total: float
    per_cell: np.ndarray
    frequencies: np.ndarray
    n_s: int

    @property
    def counts(self) -> np.ndarray:
        return np.rint(self.frequencies * self.n_s).astype(np.int64)


def distortion_of_labels(eta: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> DistortionReport:
    """Empirical distortion of an arbitrary (not necessarily Voronoi) labelling."""
    n_s = eta.shape[0]
    if n_s == 0:
        raise VQPError("empty-sample")
    P = centroids.shape[0]
    err = np.sum((eta - centroids[labels]) ** 2, axis=1)
    counts = np.bincount(labels, minlength=P)
    sums = np.bincount(labels, weights=err, minlength=P)
    per_cell = np.divide(sums, counts, out=np.zeros(P), where=counts > 0)
    return DistortionReport(float(err.sum() / n_s), per_cell, counts / n_s, n_s)


def empirical_distortion(codebook: Codebook, samples: np.ndarray) -> DistortionReport:
    """Distortion of the Voronoi quantizer on latent ``samples``, measured in eta-space."""
    samples = _rows(samples, codebook.m)
    if samples.shape[0] == 0:
        raise VQPError("empty-sample")
    labels = assign_batch(codebook, samples)
    return distortion_of_labels(codebook.t2.embed(samples), codebook.centroids, labels)


def minmax_seeds(points: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of P seed points: a random first point, then repeatedly the point farthest from the chosen set."""
    chosen = [int(rng.integers(points.shape[0]))]
    dmin = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, P):
        k = int(np.argmax(dmin))
        chosen.append(k)
        np.minimum(dmin, np.sum((points - points[k]) ** 2, axis=1), out=dmin)
    return np.asarray(chosen)


def _lloyd(eta: np.ndarray, centroids: np.ndarray, max_iter: int, rel_tol: float):
    P = centroids.shape[0]
    history = []
    labels = None
    for it in range(max_iter):
        new_labels, d = nearest(eta, centroids)
        total = float(d.mean())
        history.append(total)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        counts = np.bincount(labels, minlength=P)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, eta)
        nonempty = counts > 0
        centroids = centroids.copy()
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # fixed rate: move each empty centroid onto the worst-served point
            err = np.sum((eta - centroids[labels]) ** 2, axis=1)
            for p in np.flatnonzero(~nonempty):
                k = int(np.argmax(err))
                centroids[p] = eta[k]
                err[k] = -1.0
            log.debug("k-means iteration %d: repaired %d empty cells", it, int((~nonempty).sum()))

        if len(history) > 1 and history[-2] > 0:
            if (history[-2] - history[-1]) / history[-2] < rel_tol:
                break
        if total == 0.0:
            break
    return centroids, labels, history


def kmeans(samples, t2: T2Map, P: int, init_seed: int = 0, max_iter: int = 200,
           rel_tol: float = 1e-6) -> Codebook:
    """Lloyd iterations on the embedded sample, seeded by minmax.

    The returned codebook carries the per-iteration empirical distortion in
    ``history``.
    """
    samples = _rows(samples, t2.m)
    if P < 1:
        raise ValueError("P must be >= 1")
    if samples.shape[0] < P:
        raise VQPError("insufficient-samples", f"n_s={samples.shape[0]} < P={P}")
    eta = t2.embed(samples)
    rng = np.random.default_rng(init_seed)
    centroids = eta[minmax_seeds(eta, P, rng)].copy()
    if len(np.unique(centroids, axis=0)) < P:
        raise VQPError("insufficient-samples", "fewer than P distinct sample points")
    centroids, _, history = _lloyd(eta, centroids, max_iter, rel_tol)
    return Codebook(centroids, t2, Method.KMEANS, seed=init_seed, history=tuple(history))


def clvq_schedule(t, gamma0: float, schedule_a: float):
    return gamma0 * schedule_a / (schedule_a + t)


def clvq(samples, t2: T2Map, P: int, init_seed: int = 0, gamma0: float = 0.5,
         schedule_a: float | None = None, n_passes: int = 1) -> Codebook:
    """Competitive learning VQ: the winning centroid moves toward each streamed point.

    The step at update ``t`` (counted over all passes) is
    ``gamma0 * a / (a + t)``; ``a`` defaults to a tenth of the stream length.
    Initial centroids are P distinct stream points drawn with ``init_seed``.
    """
    samples = _rows(samples, t2.m)
    n_s = samples.shape[0]
    if n_s < P:
        raise VQPError("insufficient-samples", f"stream length {n_s} < P={P}")
    a = n_s / 10.0 if schedule_a is None else float(schedule_a)
    if not (0.0 < gamma0 <= 1.0) or a <= 0:
        raise VQPError("invalid-learning-rate", f"gamma0={gamma0}, a={a}")

    eta = t2.embed(samples)
    rng = np.random.default_rng(init_seed)
    centroids = eta[rng.choice(n_s, size=P, replace=False)].copy()
    t = 0
    for _ in range(n_passes):
        for x in eta:
            gamma = clvq_schedule(t, gamma0, a)
            if not 0.0 < gamma <= 1.0:
                raise VQPError("invalid-learning-rate", f"gamma_{t}={gamma}")
            diff = centroids - x
            p = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            centroids[p] -= gamma * diff[p]
            t += 1
    if not np.all(np.isfinite(centroids)):
        raise VQPError("invalid-learning-rate", "centroids diverged")
    return Codebook(centroids, t2, Method.CLVQ, seed=init_seed)


def grid_vertices(m: int, s: float = GRID_S) -> np.ndarray:
    """Origin followed by the 2^m vertices of the centred cube of side 2s (latent space)."""
    if m == 0:
        return np.zeros((1, 0))
    verts = np.array(list(itertools.product((-s, s), repeat=m)))
    return np.vstack([np.zeros((1, m)), verts])


def grid_codebook(t2: T2Map, m: int | None = None, s: float = GRID_S) -> Codebook:
    """Deterministic P = 1 + 2^m codebook (P = 1 for m = 0)."""
    m = t2.m if m is None else m
    if m != t2.m:
        t2 = replace(t2, lambdas=t2.lambdas[:m])
    return Codebook(t2.embed(grid_vertices(m, s)), t2, Method.GRID)


def centroid_latent(codebook: Codebook, p: int) -> np.ndarray:
    return codebook.t2.unembed(codebook.centroids[p])


def centroid_coefficient(codebook: Codebook, p: int, basis: KLBasis) -> np.ndarray:
    """Coefficient field exp(lift(T2(eta_p))) represented by centroid p."""
    if not 0 <= p < codebook.P:
        raise IndexError(f"centroid index {p} out of range")
    return transport(lift(basis, centroid_latent(codebook, p)))
