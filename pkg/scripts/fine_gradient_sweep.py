"""Dense gradient scan below 0.25 G/cm, where the knob actually bites.

The default five-point sweep jumps from no gradient straight to the regime
where entanglement is already gone; this scan resolves the transition and
reports, per point, whether the quantum run still beats the classical
baseline and how much entanglement it carries.  Pass --no-relaxation to
isolate the gradient and pulse-error contributions.

    python scripts/fine_gradient_sweep.py --instance neg --runs 20
"""
import argparse
import dataclasses

import numpy as np

from dqanneal.harness import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instance", choices=("neg", "pos"), default="neg")
    ap.add_argument("--out", default="runs_fine")
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--points", type=float, nargs="+",
                    default=[0.0, 0.005, 0.01, 0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.25])
    ap.add_argument("--no-relaxation", action="store_true")
    args = ap.parse_args()

    cfg = ExperimentConfig(instance=args.instance, output_dir=args.out, monte_carlo_runs=args.runs,
                           sweep=tuple(args.points))
    if args.no_relaxation:
        cfg = cfg.with_(noise=dataclasses.replace(cfg.noise, relaxation_enabled=False))
    summary, _ = run_sweep(cfg, figures=False)
    fc = summary.classical_fidelity
    print(f"classical fidelity {fc:.4f}")
    print("G (G/cm)   F        N_mean   N_max    F<classical  N>0.05")
    for r in summary.rows:
        print(f"{r['gradient']:<10g} {r['mean_fidelity']:.4f}   {r['mean_negativity']:.4f}   "
              f"{r['max_negativity']:.4f}   {str(r['mean_fidelity'] < fc):<12} {r['mean_negativity'] > 0.05}")
    f, n = summary.column("mean_fidelity"), summary.column("mean_negativity")
    print(f"largest mean negativity {n.max():.4f} at G={summary.column('gradient')[np.argmax(n)]:g}, "
          f"fidelity there {f[np.argmax(n)]:.4f}")


if __name__ == "__main__":
    main()
