"""Full pipeline for both instances: compile, sweep the gradient, plot.

    python scripts/reproduce_figures.py --out runs --runs 100
"""
import argparse
import logging

from dqanneal.harness import ExperimentConfig, run_sweep
from dqanneal.harness.figures import emit_figures


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    for label in ("neg", "pos"):
        cfg = ExperimentConfig(instance=label, output_dir=args.out, monte_carlo_runs=args.runs, seed=args.seed)
        summary, _ = run_sweep(cfg, workers=args.workers, figures=False)
        print(f"[{label}] classical fidelity {summary.classical_fidelity:.4f}")
        for r in summary.rows:
            print(f"  G={r['gradient']:<5g} F={r['mean_fidelity']:.4f}+-{r['mean_fidelity_std']:.4f}"
                  f"  S={r['mean_success']:.4f}  N={r['mean_negativity']:.4f}  Nmax={r['max_negativity']:.4f}")
        print(f"  spearman(F, N) = {summary.spearman_fidelity_negativity():.3f}")
    made, missing = emit_figures(args.out)
    print(f"{len(made)} figures in {args.out}/figures", *(f"missing: {m}" for m in missing), sep="\n")


if __name__ == "__main__":
    main()
