"""Command-line entry point: ``dqanneal {compile,run,sweep,classical,figures}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .. import nmrsim
from .config import ExperimentConfig, canonical_json


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.instance is not None:
        changes["instance"] = args.instance
    if args.runs is not None:
        changes["monte_carlo_runs"] = args.runs
    cfg = cfg.with_(**changes) if changes else cfg
    if args.gradient is not None:
        cfg = cfg.with_gradient(args.gradient)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--instance", choices=("neg", "pos"))
    common.add_argument("--gradient", type=float, help="field gradient in G/cm")
    common.add_argument("--runs", type=int, help="Monte-Carlo runs per gradient")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dqanneal", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("compile", parents=[common], help="compile (or load cached) pulse program")
    sub.add_parser("run", parents=[common], help="single noisy run at one gradient")
    sp = sub.add_parser("sweep", parents=[common], help="run every gradient in the config sweep")
    sp.add_argument("--workers", type=int, default=1)
    sub.add_parser("classical", parents=[common], help="Bloch-equation baseline")
    sub.add_parser("figures", parents=[common], help="render SVGs from an output directory")
    sub.add_parser("init-config", parents=[common], help="print the default config as JSON")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = _config(args)

    # imported lazily so `init-config` stays cheap
    from . import runner

    try:
        if args.cmd == "init-config":
            print(canonical_json(cfg.to_dict()))
            return 0
        if args.cmd == "compile":
            blocks, prog, hit = runner.compile_or_load(cfg)
            worst = min(b.phase_fidelity for b in blocks)
            print(f"{'loaded' if hit else 'compiled'} {len(blocks)} blocks: {prog.pulse_count} pulses, "
                  f"{prog.wall_time * 1e3:.1f} ms, worst block fidelity {worst:.5f}")
            return 0 if worst >= runner.digitizer.BLOCK_FIDELITY_TARGET else 1
        if args.cmd == "run":
            art = runner.run_single(cfg)
            r = art.record
            print(f"{art.directory}: mean fidelity {r.time_average('fidelity')[0]:.4f}, "
                  f"mean negativity {r.time_average('negativity')[0]:.4f}, "
                  f"classical {art.classical.time_average_fidelity:.4f}")
            for name, ok in art.checks.items():
                print(f"  {'ok  ' if ok else 'FAIL'} {name}")
            return 0 if art.ok else 1
        if args.cmd == "sweep":
            summary, _ = runner.run_sweep(cfg, workers=args.workers)
            print(f"instance {summary.instance}  classical fidelity {summary.classical_fidelity:.4f}")
            print("gradient  fidelity  success  negativity  max_neg")
            for r in summary.rows:
                print(f"{r['gradient']:8.3f}  {r['mean_fidelity']:.4f}    {r['mean_success']:.4f}   "
                      f"{r['mean_negativity']:.4f}      {r['max_negativity']:.4f}")
            print(f"spearman(fidelity, negativity) = {summary.spearman_fidelity_negativity():.3f}")
            return 0
        if args.cmd == "classical":
            res = runner.run_classical(cfg)
            print(f"time-averaged fidelity {res.time_average_fidelity:.5f}, success {res.time_average_success:.5f}")
            return 0
        if args.cmd == "figures":
            from .figures import emit_figures

            made, missing = emit_figures(cfg.output_dir)
            for p in made:
                print(p)
            for m in missing:
                print(f"missing: {m}", file=sys.stderr)
            return 0 if made else 1
    except (nmrsim.InvariantError, runner.SweepError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
