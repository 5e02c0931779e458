"""Deterministic SVG figures from the files a run or sweep leaves on disk."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .. import digitizer, nmrsim  # noqa: E402
from ..model import Schedule  # noqa: E402
from .config import ExperimentConfig  # noqa: E402
from .runner import SweepSummary, ideal_trajectory  # noqa: E402

_RC = {"svg.hashsalt": "dqanneal", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_schedule(s: Schedule, path: Path) -> Path:
    t = np.linspace(0, s.total_time, 600)
    g, lam, om = s.envelopes(t)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(t, g, label="Gamma(t)")
        ax.plot(t, lam, label="Lambda(t)")
        ax.plot(t, om, label="Omega(t)")
        ax.set_xlabel("t (us)")
        ax.set_ylabel("envelope")
        ax.legend()
        return _save(fig, path)


def plot_ideal(cfg: ExperimentConfig, classical_rows: list[dict], path: Path) -> Path:
    ideal = ideal_trajectory(cfg)
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 4.5), sharex=True)
        a1.plot(ideal["t_us"], ideal["fidelity"], label="quantum (ideal)")
        a1.plot([r["t_us"] for r in classical_rows], [r["fidelity"] for r in classical_rows], "--", label="classical")
        a1.set_ylabel("fidelity")
        a1.legend()
        a2.plot(ideal["t_us"], ideal["negativity"])
        a2.set_ylabel("negativity")
        a2.set_xlabel("t (us)")
        return _save(fig, path)


def plot_trajectories(runs: dict[float, list[dict]], classical_rows: list[dict], path: Path) -> Path:
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 4.5), sharex=True)
        for g, rows in sorted(runs.items()):
            t = [r["t_us"] for r in rows]
            a1.plot(t, [r["fidelity"] for r in rows], label=f"G={g:g} G/cm")
            a2.plot(t, [r["negativity"] for r in rows])
        a1.plot([r["t_us"] for r in classical_rows], [r["fidelity"] for r in classical_rows], "k--", label="classical")
        a1.set_ylabel("fidelity")
        a1.legend(fontsize=7)
        a2.set_ylabel("negativity")
        a2.set_xlabel("t (us)")
        return _save(fig, path)


def plot_sweep(summary: SweepSummary, path: Path) -> Path:
    g = summary.column("gradient")
    with plt.rc_context(_RC):
        fig, (a1, a2, a3) = plt.subplots(1, 3, figsize=(10, 3.2))
        for name, ls in (("mean_fidelity", "o-"), ("mean_success", "s-")):
            a1.errorbar(g, summary.column(name), yerr=summary.column(name + "_std"), fmt=ls, label=name[5:])
        a1.axhline(summary.classical_fidelity, color="k", ls="--", label="classical fidelity")
        a1.axhline(summary.classical_success, color="grey", ls=":", label="classical success")
        a1.set_xlabel("gradient (G/cm)")
        a1.legend(fontsize=7)
        for name, ls in (("mean_negativity", "o-"), ("max_negativity", "s-")):
            a2.errorbar(g, summary.column(name), yerr=summary.column(name + "_std"), fmt=ls, label=name.split("_")[0])
        a2.set_xlabel("gradient (G/cm)")
        a2.set_ylabel("negativity")
        a2.legend(fontsize=7)
        a3.errorbar(summary.column("mean_negativity"), summary.column("mean_fidelity"),
                    xerr=summary.column("mean_negativity_std"), yerr=summary.column("mean_fidelity_std"), fmt="o-")
        a3.axhline(summary.classical_fidelity, color="k", ls="--")
        a3.set_xlabel("time-averaged negativity")
        a3.set_ylabel("time-averaged fidelity")
        return _save(fig, path)


def plot_block_errors(blocks: list[digitizer.PulseBlock], path: Path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.semilogy([b.t_end for b in blocks], [max(b.achieved_hs, 1e-16) for b in blocks], ".")
        ax.set_xlabel("t (us)")
        ax.set_ylabel("HS distance to exact block")
        return _save(fig, path)


def emit_figures(out_dir: str | Path) -> tuple[list[Path], list[str]]:
    """Render every figure the files under ``out_dir`` support.  Identical
    inputs give byte-identical SVGs.  Returns (written, missing)."""
    out = Path(out_dir)
    fig_dir = out / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    made: list[Path] = []
    missing: list[str] = []
    for label in ("neg", "pos"):
        manifests = sorted((out / label).glob("G_*/manifest.json"))
        if not manifests:
            missing.append(f"{label}: no completed runs")
            continue
        cfg = ExperimentConfig.from_dict(json.loads(manifests[0].read_text())["config"])
        runs = {}
        for m in manifests:
            g = json.loads(m.read_text())["gradient"]
            runs[g] = nmrsim.read_snapshot_csv(m.parent / "quantum.csv")
        classical = nmrsim.read_snapshot_csv(manifests[0].parent / "classical.csv")
        made.append(plot_schedule(cfg.schedule, fig_dir / f"schedule_{label}.svg"))
        made.append(plot_ideal(cfg, classical, fig_dir / f"ideal_{label}.svg"))
        made.append(plot_trajectories(runs, classical, fig_dir / f"trajectories_{label}.svg"))
        blocks_csv = out / "cache" / cfg.compile_hash() / "blocks.csv"
        if blocks_csv.exists():
            made.append(plot_block_errors(digitizer.read_blocks(blocks_csv), fig_dir / f"block_errors_{label}.svg"))
        else:
            missing.append(str(blocks_csv))
        sweep_csv = out / f"sweep_{label}.csv"
        if sweep_csv.exists():
            made.append(plot_sweep(SweepSummary.from_csv(sweep_csv, label), fig_dir / f"sweep_{label}.svg"))
        else:
            missing.append(str(sweep_csv))
    return made, missing
