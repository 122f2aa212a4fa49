"""Command line entry point: ``ehlod <subcommand> [options]``."""
from __future__ import annotations

import argparse
import math
import os
import sys

COMMANDS = ("basis", "solve", "spatial", "temporal", "decay", "localization")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="coefficient sampling seed")
    common.add_argument("--out", help="output path (CSV, or .npz for 'basis'); stdout if omitted")
    common.add_argument("--profile", choices=("desk", "paper"), default="desk")
    common.add_argument("--dim", type=int, choices=(1, 2), default=1, help="profile dimension")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent sweep points")
    p = argparse.ArgumentParser(prog="ehlod", description="Enriched higher-order LOD for the wave equation")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("basis", parents=[common], help="build and save one enriched multiscale basis")
    sub.add_parser("solve", parents=[common], help="one reduced solve and its energy error")
    sub.add_parser("spatial", parents=[common], help="error over the coarse mesh list")
    sub.add_parser("temporal", parents=[common], help="error over step halvings for a fixed space")
    sub.add_parser("decay", parents=[common], help="exterior energy of an ideal basis function")
    sub.add_parser("localization", parents=[common], help="error against patch size per strategy")
    return p


def _set_threads(n: int) -> None:
    # one BLAS thread per worker keeps results independent of the worker count
    if n < 1:
        raise SystemExit("ehlod: error: --threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def _config(args):
    from . import harness

    cfg = harness.profile_config(args.command, args.profile, args.dim)
    if args.config:
        cfg = harness.load_config(args.config, cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    cfg.workers = args.threads
    return cfg.validate()


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    from . import harness
    from .mesh import MeshError

    try:
        cfg = _config(args)
        if args.command == "basis":
            ell = cfg.ell[0]
            strategy = "ideal" if math.isinf(ell) else cfg.strategy
            pr, B = harness.build_enriched_basis(cfg, cfg.coarse_n[0], strategy, ell)
            from .multiscale import save_basis

            out = cfg.out or "basis.npz"
            save_basis(out, B, harness._basis_meta(cfg, cfg.coarse_n[0], strategy, ell, cfg.j_value))
            print(f"saved {B.shape[1]} basis functions on {B.shape[0]} fine dofs to {out}")
        elif args.command == "solve":
            ell = cfg.ell[0]
            strategy = "ideal" if math.isinf(ell) else cfg.strategy
            rec = harness.run_single(cfg, cfg.coarse_n[0], strategy, ell, cfg.tau_coarse)
            _emit(harness.write_csv([rec]), cfg.out)
        elif args.command == "spatial":
            recs = harness.run_spatial_convergence(cfg)
            _emit(harness.write_csv(recs), cfg.out)
            print(f"# least-squares EOC: {harness.least_squares_eoc(recs):.4f}", file=sys.stderr)
        elif args.command == "temporal":
            recs, floor = harness.run_temporal_convergence(cfg)
            _emit(harness.write_csv(recs), cfg.out)
            print(f"# spatial floor {floor:.6e}; least-squares EOC {harness.temporal_eoc(recs):.4f}",
                  file=sys.stderr)
        elif args.command == "decay":
            table = harness.run_decay(cfg)
            text = "ell,relative_exterior_energy\n" + "".join(f"{l},{r:.17g}\n" for l, r in table)
            _emit(text, cfg.out)
            print(f"# log-linear slope {harness.decay_slope(table):.4f}", file=sys.stderr)
        elif args.command == "localization":
            recs, summary = harness.run_localization_sweep(cfg)
            _emit(harness.write_csv(recs), cfg.out)
            for s in cfg.strategies:
                print(f"# {s}: plateau at ell={summary[s]}", file=sys.stderr)
    except (MeshError, ValueError, FileNotFoundError) as exc:
        print(f"ehlod: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
