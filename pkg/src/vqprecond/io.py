"""On-disk formats.

Basis (``.klb``) and codebook (``.qnt``) files are one line of JSON followed
by a block of little-endian float64:

* basis: eigenvalues (n_KL), modes row-major (n_KL x n_nodes), lumped mass (n_nodes)
* codebook: centroids row-major (P x m)

Floats in JSON and CSV outputs are written with 17 significant digits.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import VQPError
from .field import CovarianceKernel, KLBasis
from .quantizer import GRID_S, Codebook, MapKind, Method, T2Map

BASIS_FORMAT = "vqp-klbasis-1"
CODEBOOK_FORMAT = "vqp-codebook-1"


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float rendered at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    return json.dumps(str(obj))


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_blob(path, header: dict, arrays):
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_blob(path):
    path = Path(path)
    if not path.exists():
        raise VQPError("artifact-not-found", str(path))
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    return header, data


def save_basis(basis: KLBasis, path):
    header = {
        "format": BASIS_FORMAT,
        "n_nodes": basis.n_nodes,
        "n_KL": basis.n_kl,
        "total_variance": basis.total_variance,
        "kernel": {"type": "squared_exponential", "sigma2": basis.kernel.sigma2, "ell": basis.kernel.ell},
        "mesh_hash": basis.mesh_hash,
        "mesh_resolution": basis.mesh_resolution,
    }
    _write_blob(path, header, [basis.eigenvalues, basis.modes, basis.mass])


def load_basis(path) -> KLBasis:
    h, data = _read_blob(path)
    if h.get("format") != BASIS_FORMAT:
        raise ValueError(f"{path}: not a basis file")
    k, n = h["n_KL"], h["n_nodes"]
    if data.size != k + k * n + n:
        raise ValueError(f"{path}: truncated binary block")
    return KLBasis(
        eigenvalues=data[:k].copy(),
        modes=data[k:k + k * n].reshape(k, n).copy(),
        mass=data[k + k * n:].copy(),
        total_variance=float(h["total_variance"]),
        kernel=CovarianceKernel(h["kernel"]["sigma2"], h["kernel"]["ell"]),
        mesh_hash=h["mesh_hash"],
        mesh_resolution=h.get("mesh_resolution"),
    )


def save_codebook(codebook: Codebook, path):
    header = {
        "format": CODEBOOK_FORMAT,
        "m": codebook.m,
        "P": codebook.P,
        "map": codebook.t2.kind.value,
        "lambdas": [float(x) for x in codebook.t2.lambdas],
        "method": codebook.method.value,
        "seed": codebook.seed,
    }
    if codebook.method is Method.GRID:
        header["s"] = GRID_S
    _write_blob(path, header, [codebook.centroids])


def load_codebook(path) -> Codebook:
    h, data = _read_blob(path)
    if h.get("format") != CODEBOOK_FORMAT:
        raise ValueError(f"{path}: not a codebook file")
    P, m = h["P"], h["m"]
    if data.size != P * m:
        raise ValueError(f"{path}: truncated binary block")
    t2 = T2Map(MapKind(h["map"]), np.asarray(h["lambdas"], dtype=float))
    return Codebook(data.reshape(P, m).copy(), t2, Method(h["method"]), seed=h.get("seed"))
