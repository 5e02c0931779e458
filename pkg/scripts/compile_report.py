"""Compile (or load) the pulse program for one instance and summarize it:
per-stage block fidelities, pulse count, wall time and free-evolution share.

    python scripts/compile_report.py --instance pos
"""
import argparse

import numpy as np

from dqanneal.harness import ExperimentConfig, compile_or_load


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instance", choices=("neg", "pos"), default="neg")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    cfg = ExperimentConfig(instance=args.instance, output_dir=args.out)
    blocks, prog, hit = compile_or_load(cfg)
    print(f"{'cached' if hit else 'compiled'}: {len(blocks)} blocks, {prog.pulse_count} pulses, "
          f"{prog.wall_time * 1e3:.1f} ms of free evolution")
    start = 0
    for a, b, n in cfg.stages:
        stage = blocks[start:start + n]
        fid = np.array([blk.phase_fidelity for blk in stage])
        dts = np.array([blk.dt for blk in stage]) * 1e3
        print(f"  stage [{a:.2f}, {b:.2f}] us, {n:3d} steps: fidelity min {fid.min():.5f} mean {fid.mean():.5f}, "
              f"dt {dts.sum():6.1f} ms total, max {dts.max():.2f} ms")
        start += n


if __name__ == "__main__":
    main()
