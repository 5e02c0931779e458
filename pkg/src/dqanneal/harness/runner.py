"""Compile (with caching), simulate, and persist runs and gradient sweeps."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .. import __version__, blochsim, digitizer, nmrsim, qmath
from ..model import ground_states
from .config import ExperimentConfig, canonical_json, sha256_text

log = logging.getLogger(__name__)


def _fmt_gradient(g: float) -> str:
    return f"G_{g:.6g}"


# -- compilation cache -----------------------------------------------------------

def compile_or_load(cfg: ExperimentConfig) -> tuple[list[digitizer.PulseBlock], digitizer.PhysicalPulseProgram, bool]:
    """Return (blocks, program, cache_hit).  Programs are cached under
    ``<output_dir>/cache/<compile hash>``; a key mismatch forces a recompile."""
    inst = cfg.problem_instance()
    grid = digitizer.build_grid(cfg.schedule.total_time, cfg.stages)
    key = cfg.compile_key()
    cdir = Path(cfg.output_dir) / "cache" / cfg.compile_hash()
    files = {n: cdir / n for n in ("key.json", "program.tsv", "blocks.csv")}
    if all(p.exists() for p in files.values()):
        if json.loads(files["key.json"].read_text()) == json.loads(canonical_json(key)):
            targets = digitizer.exact_blocks(inst, cfg.schedule, grid)
            blocks = digitizer.read_blocks(files["blocks.csv"], targets)
            return blocks, digitizer.read_program(files["program.tsv"]), True
        log.warning("cache key mismatch in %s; recompiling", cdir)
    log.info("compiling %d blocks for instance %s", grid.n_steps, inst.label)
    blocks = digitizer.compile_program(inst, cfg.schedule, grid, seed=cfg.compile_seed)
    program = digitizer.expand_to_physical(blocks)
    cdir.mkdir(parents=True, exist_ok=True)
    digitizer.write_program(program, files["program.tsv"])
    digitizer.write_blocks(blocks, files["blocks.csv"])
    files["key.json"].write_text(canonical_json(key) + "\n")
    return blocks, program, False


# -- ideal and classical references ------------------------------------------------

def ideal_trajectory(cfg: ExperimentConfig) -> dict[str, np.ndarray]:
    """Continuous (undigitized, noiseless) evolution sampled at every grid boundary."""
    inst, s = cfg.problem_instance(), cfg.schedule
    grid = digitizer.build_grid(s.total_time, cfg.stages)
    us = digitizer.exact_blocks(inst, s, grid)
    gs = ground_states(inst, s, grid.boundaries)
    psi = qmath.MINUS_MINUS.copy()
    fid, neg = [], []
    for k, t in enumerate(grid.boundaries):
        if k:
            psi = us[k - 1] @ psi
        f = abs(np.vdot(gs[k], psi)) ** 2
        fid.append(np.sqrt(f) if cfg.root_fidelity else f)
        neg.append(qmath.negativity(qmath.ket2dm(psi)))
    return {"t_us": grid.boundaries.copy(), "fidelity": np.array(fid), "negativity": np.array(neg)}


@dataclass
class ClassicalResult:
    times: np.ndarray
    fidelity: np.ndarray
    success: np.ndarray
    time_average_fidelity: float
    time_average_success: float
    snapshot_rows: list[dict]


def run_classical(cfg: ExperimentConfig) -> ClassicalResult:
    """Bloch baseline.  Takes no noise settings by construction: only the
    instance, schedule, grid and step count enter."""
    inst, s = cfg.problem_instance(), cfg.schedule
    grid = digitizer.build_grid(s.total_time, cfg.stages)
    times = blochsim.refined_times(grid.boundaries, cfg.bloch_steps)
    times, traj = blochsim.integrate_bloch(inst, s, times=times)
    gs = ground_states(inst, s, times)
    states = blochsim.product_states(traj)
    f = np.abs(np.einsum("ti,ti->t", gs.conj(), states)) ** 2
    bc = np.sqrt(np.abs(states) ** 2 * np.abs(gs) ** 2).sum(axis=1).clip(0.0, 1.0)
    succ = bc if cfg.root_fidelity else bc**2
    fid = np.sqrt(f) if cfg.root_fidelity else f

    snaps = nmrsim.snapshot_indices(grid.n_steps)
    idx = np.searchsorted(times, grid.boundaries[snaps + 1])
    rows = []
    for n, i in zip(snaps, idx):
        row = {"k": int(n), "t_us": float(times[i]), "fidelity": float(fid[i]), "success": float(succ[i]),
               "negativity": 0.0, "purity": 1.0}
        row.update({f"{m}_std": 0.0 for m in nmrsim.METRICS})
        rows.append(row)
    return ClassicalResult(
        times=times,
        fidelity=fid,
        success=succ,
        time_average_fidelity=blochsim.time_average(times, fid),
        time_average_success=blochsim.time_average(times, succ),
        snapshot_rows=rows,
    )


# -- single runs ----------------------------------------------------------------

@dataclass
class RunArtifacts:
    directory: Path
    record: nmrsim.TrajectoryRecord
    classical: ClassicalResult
    gradient: float
    cache_hit: bool
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _file_digest(path: Path) -> str:
    return sha256_text(path.read_text())


def run_single(cfg: ExperimentConfig, gradient: float | None = None) -> RunArtifacts:
    """One noisy run at ``gradient`` (default: ``cfg.noise.gradient``).

    Writes quantum.csv, classical.csv and manifest.json under
    ``<output_dir>/<instance>/G_<gradient>/``.
    """
    if gradient is not None:
        cfg = cfg.with_gradient(gradient)
    inst = cfg.problem_instance()
    blocks, program, hit = compile_or_load(cfg)
    record = nmrsim.run_protocol(
        program, inst, cfg.schedule, cfg.noise, runs=cfg.monte_carlo_runs, seed=cfg.seed,
        root_fidelity=cfg.root_fidelity,
    )
    classical = run_classical(cfg)

    out = Path(cfg.output_dir) / inst.label / _fmt_gradient(cfg.noise.gradient)
    out.mkdir(parents=True, exist_ok=True)
    record.to_csv(out / "quantum.csv")
    nmrsim.write_snapshot_csv(classical.snapshot_rows, out / "classical.csv")

    final_f = record.samples["fidelity"][:, -1]
    final_s = record.samples["success"][:, -1]
    checks = {
        "blocks_above_fidelity_target": all(b.phase_fidelity >= digitizer.BLOCK_FIDELITY_TARGET for b in blocks),
        "final_success_matches_fidelity": bool(np.all(np.abs(final_s - final_f) < 0.02)),
        "metrics_in_range": all(
            np.all((record.samples[m] >= -1e-12) & (record.samples[m] <= 1 + 1e-12)) for m in nmrsim.METRICS
        ),
    }
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "compile_hash": cfg.compile_hash(),
        "gradient": cfg.noise.gradient,
        "seed": cfg.seed,
        "run_streams": [[cfg.seed, r] for r in range(cfg.monte_carlo_runs if cfg.noise.stochastic else 1)],
        "pulse_count": program.pulse_count,
        "wall_time_s": program.wall_time,
        "checks": checks,
        "files": {n: _file_digest(out / n) for n in ("quantum.csv", "classical.csv")},
    }
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    return RunArtifacts(out, record, classical, cfg.noise.gradient, hit, checks)


def rerun_from_manifest(path: str | Path, output_dir: str | Path | None = None) -> RunArtifacts:
    m = json.loads(Path(path).read_text())
    cfg = ExperimentConfig.from_dict(m["config"])
    if output_dir is not None:
        cfg = cfg.with_(output_dir=str(output_dir))
    return run_single(cfg)


# -- sweeps --------------------------------------------------------------------------

SUMMARY_COLUMNS = (
    "gradient", "mean_fidelity", "mean_fidelity_std", "mean_success", "mean_success_std",
    "mean_negativity", "mean_negativity_std", "max_negativity", "max_negativity_std",
)


class SweepError(RuntimeError):
    pass


@dataclass
class SweepSummary:
    instance: str
    rows: list[dict]
    classical_fidelity: float
    classical_success: float

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def spearman_fidelity_negativity(self) -> float:
        return float(spearmanr(self.column("mean_fidelity"), self.column("mean_negativity"))[0])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# classical_fidelity={self.classical_fidelity!r} classical_success={self.classical_success!r}\n")
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({c: repr(float(r[c])) for c in SUMMARY_COLUMNS})

    @classmethod
    def from_csv(cls, path: str | Path, instance: str = "") -> "SweepSummary":
        with open(path, newline="") as fh:
            head = fh.readline().lstrip("# ").split()
            consts = {k: float(v) for k, v in (h.split("=") for h in head)}
            rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        return cls(instance, rows, consts["classical_fidelity"], consts["classical_success"])


def summarize(art: RunArtifacts) -> dict:
    r = art.record
    mf, sf = r.time_average("fidelity")
    ms, ss = r.time_average("success")
    mn, sn = r.time_average("negativity")
    xn, sx = r.time_max("negativity")
    return dict(zip(SUMMARY_COLUMNS, (art.gradient, mf, sf, ms, ss, mn, sn, xn, sx)))


def _run_member(args):
    cfg, g = args
    return run_single(cfg, g)


def run_sweep(cfg: ExperimentConfig, workers: int = 1, figures: bool = True) -> tuple[SweepSummary, list[RunArtifacts]]:
    """run_single for every gradient in ``cfg.sweep``; writes sweep_<instance>.csv."""
    if not cfg.sweep:
        raise ValueError("empty gradient sweep")
    compile_or_load(cfg)  # compile once before fanning out
    jobs = [(cfg, g) for g in cfg.sweep]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            arts = list(ex.map(_run_member, jobs))
    else:
        arts = [_run_member(j) for j in jobs]
    failed = [a.gradient for a in arts if not a.ok]
    if failed:
        raise SweepError(f"member runs failed invariant checks at G={failed}; per-run artifacts kept")
    cl = arts[0].classical
    summary = SweepSummary(
        cfg.problem_instance().label, [summarize(a) for a in arts], cl.time_average_fidelity, cl.time_average_success
    )
    out = Path(cfg.output_dir)
    summary.to_csv(out / f"sweep_{summary.instance}.csv")
    if figures:
        from .figures import emit_figures

        emit_figures(out)
    return summary, arts
