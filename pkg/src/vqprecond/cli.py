"""``vqp`` command line: build KL bases and codebooks, run campaigns and sweeps, summarize reports."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .driver import (
    CampaignConfig,
    QuantizerSpec,
    build_codebook,
    frequency_profile,
    ideal_sweep,
    run_campaign,
    write_frequencies,
    write_ideal_sweep,
    write_report,
)
from .errors import VQPError
from .fem import make_mesh
from .field import CovarianceKernel, build_kl_basis

# flag name -> (config attribute, type); quantizer fields are prefixed "q_"
_RUN_FLAGS = {
    "resolution": int, "sigma2": float, "ell": float, "n_kl": int, "m": int,
    "preconditioner": str, "eps": float, "n_realizations": int, "master_seed": int,
    "n_blocks": int, "output_dir": str, "basis_path": str, "codebook_path": str,
}
_QUANT_FLAGS = {
    "method": str, "P": int, "map": str, "seed": int, "n_s": int, "max_iter": int,
    "rel_tol": float, "gamma0": float, "schedule_a": float, "n_passes": int,
}


def _cmd_kl(args):
    mesh = make_mesh(args.mesh)
    basis = build_kl_basis(CovarianceKernel(args.sigma2, args.ell), mesh, args.nkl)
    io.save_basis(basis, args.out)
    print(f"wrote {args.out}: {basis.n_kl} modes, relative energy {basis.relative_energy(basis.n_kl):.4f}")


def _cmd_quantize(args):
    basis = io.load_basis(args.basis)
    spec = QuantizerSpec(method=args.method, P=args.P, map=args.map, seed=args.seed, n_s=args.ns,
                         max_iter=args.max_iter, rel_tol=args.rel_tol)
    cb = build_codebook(spec, basis, args.m)
    io.save_codebook(cb, args.out)
    print(f"wrote {args.out}: P={cb.P}, m={cb.m}, method={cb.method.value}, map={cb.t2.kind.value}")


def _config_from_args(args) -> CampaignConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise VQPError("artifact-not-found", str(path))
        data = json.loads(path.read_text())
    q = dict(data.get("quantizer") or {})
    for name in _RUN_FLAGS:
        v = getattr(args, name)
        if v is not None:
            data[name] = v
    for name in _QUANT_FLAGS:
        v = getattr(args, "q_" + name)
        if v is not None:
            q[name] = v
    data["quantizer"] = q
    return CampaignConfig.from_dict(data)


def _cmd_run(args):
    config = _config_from_args(args)
    report = run_campaign(config, workers=args.workers)
    out = config.output_dir or "."
    write_report(report, out)
    print(f"E[J] = {report.mean_iterations:.6g} over {report.n_realizations} realizations "
          f"({report.n_unconverged} unconverged); outputs in {out}")


def _cmd_ideal_sweep(args):
    config = _config_from_args(args)
    rows = ideal_sweep(config, args.m_list, workers=args.workers)
    out = Path(config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_ideal_sweep(rows, out / "ideal_sweep.csv")
    for m, energy, mean in rows:
        print(f"m={m:4d}  energy={energy:.4f}  E[J]={mean:.4f}")


def _cmd_report(args):
    if args.codebook:
        cb = io.load_codebook(args.codebook)
        profile = frequency_profile(cb, args.ns, args.seed)
        out = Path(args.out or "frequencies.csv")
        write_frequencies(profile, out)
        print(f"wrote {out} ({cb.P} cells)")
    if args.run_dir:
        summary = json.loads((Path(args.run_dir) / "summary.json").read_text())
        rows = io.read_csv(Path(args.run_dir) / "per_centroid.csv")
        lb = summary["load_balance"]
        print(f"P={summary['P']}  E[J]={summary['mean_J']:.6g}  max sum_J={summary['max_sum_J']}  "
              f"min sum_J={summary['min_sum_J']}  range={lb['range']:.6g}  cv={lb['cv']:.6g}")
        busiest = sorted(rows, key=lambda r: -int(r["sum_J"]))[: args.top]
        for r in busiest:
            print(f"  p={r['p']:>5} |xi_p|={float(r['centroid_norm']):.4f} n_p={r['n_p']} sum_J={r['sum_J']}")
    if not args.codebook and not args.run_dir:
        raise SystemExit("report: give --run-dir and/or --codebook")


def _add_campaign_flags(p):
    p.add_argument("--config", help="JSON file mirroring CampaignConfig")
    for name, typ in _RUN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    for name, typ in _QUANT_FLAGS.items():
        flag = "--quantizer-" + name.replace("_", "-")
        p.add_argument(flag, dest="q_" + name, type=typ)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kl", help="build a KL basis file")
    p.add_argument("--mesh", type=int, required=True, help="mesh resolution r (r x r cells)")
    p.add_argument("--ell", type=float, default=0.1)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--nkl", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_kl)

    p = sub.add_parser("quantize", help="build a codebook file")
    p.add_argument("--basis", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--P", type=int, default=1)
    p.add_argument("--map", choices=["scale", "cdf"], default="scale")
    p.add_argument("--method", choices=["kmeans", "clvq", "grid"], default="kmeans")
    p.add_argument("--ns", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("run", help="run a Monte Carlo campaign")
    _add_campaign_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ideal-sweep", help="E[J] versus m with per-realization truncated preconditioners")
    _add_campaign_flags(p)
    p.add_argument("--m-list", type=int, nargs="+", default=[0, 2, 4, 8, 16, 32])
    p.set_defaults(func=_cmd_ideal_sweep)

    p = sub.add_parser("report", help="summarize a run directory or profile a codebook")
    p.add_argument("--run-dir")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--codebook")
    p.add_argument("--ns", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except VQPError as exc:
        print(f"vqp: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
