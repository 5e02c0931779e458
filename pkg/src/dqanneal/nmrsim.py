"""Pulse-level density-matrix simulation of a compiled NMR program.

The sample is an ensemble of z-slices.  During free evolution slice z sees
H'_NMR plus the gradient term (gamma_H G z sigma_z^H + gamma_C G z sigma_z^C)/2,
so each coherence precesses at gamma G z (Larmor convention).  Slices are
kept separate for the whole protocol and averaged only when the state is
read out, which is what the spatially unresolved measurement sees.

Pulses are instantaneous.  Intrinsic relaxation is a unital per-qubit
channel (generalized amplitude damping toward I/2 at rate 1/T1 composed with
pure dephasing at rate 1/T2 - 1/(2 T1)), applied after each free-evolution
segment.

Density arrays carry leading axes (runs, slices, 4, 4).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import qmath
from .digitizer import FreeEvolution, PhysicalPulseProgram, Rotation, rot, zz_rate
from .model import ProblemInstance, Schedule, ground_states

log = logging.getLogger(__name__)

METRICS = ("fidelity", "success", "negativity", "purity")
SNAPSHOT_STRIDE = 3

_ZZ = np.array([1.0, -1.0, -1.0, 1.0])
_Z1 = np.array([1.0, 1.0, -1.0, -1.0])
_Z2 = np.array([1.0, -1.0, 1.0, -1.0])


@dataclass(frozen=True)
class NoiseConfig:
    gradient: float = 0.0  # G/cm
    sample_length: float = 2.0  # cm
    gamma_h: float = 2.675e4  # rad/(s G)
    gamma_c: float = 6.728e3  # rad/(s G)
    n_slices: int = 101
    t1_h: float = 7.4  # s
    t2_h: float = 0.245
    t1_c: float = 11.3
    t2_c: float = 0.157
    epsilon: float = 1.0
    pulse_angle_sigma: float = 1.0  # degrees
    dt_sigma: float = 10e-9  # s
    relaxation_enabled: bool = True

    def __post_init__(self):
        if self.gradient < 0:
            raise ValueError("gradient must be non-negative")
        if self.n_slices < 1 or self.n_slices % 2 == 0:
            raise ValueError("n_slices must be a positive odd integer")
        for t1, t2 in ((self.t1_h, self.t2_h), (self.t1_c, self.t2_c)):
            if not (0 < t2 <= 2 * t1):
                raise ValueError("relaxation times must satisfy 0 < T2 <= 2 T1")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")

    @classmethod
    def noiseless(cls, **overrides) -> "NoiseConfig":
        base = dict(gradient=0.0, pulse_angle_sigma=0.0, dt_sigma=0.0, relaxation_enabled=False, n_slices=1)
        return cls(**{**base, **overrides})

    @property
    def stochastic(self) -> bool:
        return self.pulse_angle_sigma > 0 or self.dt_sigma > 0

    def to_dict(self) -> dict:
        return asdict(self)


def initial_state(cfg: NoiseConfig) -> np.ndarray:
    """Pseudo-pure state (1 - eps)/4 I + eps |-->< --|."""
    eps = cfg.epsilon
    return (1 - eps) / 4 * np.eye(4, dtype=complex) + eps * qmath.ket2dm(qmath.MINUS_MINUS)


def deviation_state(rho: np.ndarray, epsilon: float) -> np.ndarray:
    """Remove the identity background and renormalize: the reported state."""
    if epsilon == 1:
        return rho
    return (rho - (1 - epsilon) / 4 * np.eye(4)) / epsilon


def slice_positions(cfg: NoiseConfig) -> np.ndarray:
    """Midpoints of n equal slices of [-L/2, L/2] (symmetric; 0 included)."""
    n = cfg.n_slices
    return (np.arange(n) - (n - 1) / 2) * cfg.sample_length / n


# -- elementary channels ---------------------------------------------------------

def _single_qubit_unitaries(qubit: int, axis: str, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    r = np.zeros(angles.shape + (2, 2), dtype=complex)
    if axis == "x":
        r[..., 0, 0] = r[..., 1, 1] = c
        r[..., 0, 1] = r[..., 1, 0] = -1j * s
    elif axis == "y":
        r[..., 0, 0] = r[..., 1, 1] = c
        r[..., 0, 1], r[..., 1, 0] = -s, s
    else:
        raise ValueError(f"pulses must lie in the xy plane, got axis {axis!r}")
    eye = np.eye(2)
    if qubit == 1:
        u = np.einsum("...ij,kl->...ikjl", r, eye)
    elif qubit == 2:
        u = np.einsum("ij,...kl->...ikjl", eye, r)
    else:
        raise ValueError(f"qubit index must be 1 or 2, got {qubit!r}")
    return u.reshape(angles.shape + (4, 4))


def rotate(rho: np.ndarray, qubit: int, axis: str, angles: np.ndarray) -> np.ndarray:
    """Conjugate rho (runs, slices, 4, 4) by per-run rotations (angles in rad)."""
    u = _single_qubit_unitaries(qubit, axis, np.asarray(angles, dtype=float))[:, None]
    return u @ rho @ np.swapaxes(u, -1, -2).conj()


def apply_pulse(
    rho: np.ndarray, pulse: Rotation, cfg: NoiseConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Instantaneous rotation; with ``rng`` the angle is jittered by a Gaussian
    of std ``cfg.pulse_angle_sigma`` degrees (one draw for the whole input)."""
    if pulse.axis not in ("x", "y"):
        raise ValueError("z pulses are not physical; expand them into xy pulses first")
    angle = pulse.angle
    if rng is not None and cfg.pulse_angle_sigma > 0:
        angle += rng.normal(0.0, cfg.pulse_angle_sigma)
    r2 = rot(pulse.axis, math.radians(angle))
    u = qmath.embed(r2, pulse.qubit)
    return u @ rho @ u.conj().T


def relax_factors(dt: np.ndarray, t1: float, t2: float) -> tuple[np.ndarray, np.ndarray]:
    """(longitudinal, transverse) survival factors for a relaxation segment."""
    return np.exp(-dt / t1), np.exp(-dt / t2)


def relax(rho: np.ndarray, dt: np.ndarray, cfg: NoiseConfig) -> np.ndarray:
    """Apply the per-qubit T1/T2 channel; ``dt`` broadcasts over the runs axis."""
    dt = np.asarray(dt, dtype=float)
    shp = rho.shape[:-2]
    r = rho.reshape(shp + (2, 2, 2, 2))
    bshape = dt.shape + (1,) * (r.ndim - dt.ndim)
    for axes, (t1, t2) in (((-4, -2), (cfg.t1_h, cfg.t2_h)), ((-3, -1), (cfg.t1_c, cfg.t2_c))):
        a, c = (f.reshape(bshape) for f in relax_factors(dt, t1, t2))
        r = np.moveaxis(r, axes, (-2, -1))
        p00, p11 = r[..., 0, 0], r[..., 1, 1]
        new = np.empty_like(r)
        new[..., 0, 0] = 0.5 * (1 + a[..., 0, 0]) * p00 + 0.5 * (1 - a[..., 0, 0]) * p11
        new[..., 1, 1] = 0.5 * (1 - a[..., 0, 0]) * p00 + 0.5 * (1 + a[..., 0, 0]) * p11
        new[..., 0, 1] = c[..., 0, 0] * r[..., 0, 1]
        new[..., 1, 0] = c[..., 0, 0] * r[..., 1, 0]
        r = np.moveaxis(new, (-2, -1), axes)
    return r.reshape(rho.shape)


def gad_kraus(t: float, t1: float) -> list[np.ndarray]:
    """Generalized amplitude damping toward I/2 (p = 1/2) for time t."""
    g = 1 - math.exp(-t / t1)
    s = math.sqrt(0.5)
    return [
        s * np.array([[1, 0], [0, math.sqrt(1 - g)]]),
        s * np.array([[0, math.sqrt(g)], [0, 0]]),
        s * np.array([[math.sqrt(1 - g), 0], [0, 1]]),
        s * np.array([[0, 0], [math.sqrt(g), 0]]),
    ]


def dephasing_kraus(t: float, t1: float, t2: float) -> list[np.ndarray]:
    """Pure dephasing making the total coherence decay exp(-t/T2)."""
    lam = math.exp(-t * (1 / t2 - 1 / (2 * t1)))
    p = (1 - lam) / 2
    return [math.sqrt(1 - p) * np.eye(2), math.sqrt(p) * np.diag([1.0, -1.0])]


def free_energies(dt_scale: float, z: np.ndarray, cfg: NoiseConfig, j_nmr: float) -> np.ndarray:
    """Diagonal of H'_NMR + gradient term for each slice, rad/s, shape (S, 4)."""
    g = cfg.gradient
    return (
        zz_rate(j_nmr) * _ZZ[None, :]
        + 0.5 * g * z[:, None] * (cfg.gamma_h * _Z1[None, :] + cfg.gamma_c * _Z2[None, :])
    ) * dt_scale


def _free(rho: np.ndarray, dts: np.ndarray, z: np.ndarray, cfg: NoiseConfig, j_nmr: float) -> np.ndarray:
    e = free_energies(1.0, z, cfg, j_nmr)  # (S, 4)
    phase = np.exp(-1j * e[None, :, :] * dts[:, None, None])  # (R, S, 4)
    rho = rho * phase[..., :, None] * phase.conj()[..., None, :]
    if cfg.relaxation_enabled:
        rho = relax(rho, dts, cfg)
    return rho


def free_evolve(
    rho: np.ndarray, dt: float, cfg: NoiseConfig, rng: np.random.Generator | None = None, j_nmr: float = 215.0
) -> np.ndarray:
    """Free evolution of a slice ensemble for ``dt`` seconds.

    ``rho`` is either one 4x4 state (replicated over the slices) or an
    ensemble of shape (slices, 4, 4).  Returns the evolved ensemble; use
    ``ensemble_average`` to read it out.
    """
    if rng is not None and cfg.dt_sigma > 0:
        dt = dt + rng.normal(0.0, cfg.dt_sigma)
    dt = max(dt, 0.0)
    z = slice_positions(cfg)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 2:
        rho = np.broadcast_to(rho, (len(z), 4, 4))
    return _free(rho[None], np.array([dt]), z, cfg, j_nmr)[0]


def ensemble_average(rho: np.ndarray) -> np.ndarray:
    """Average over the slice axis (second to last non-matrix axis)."""
    return rho.mean(axis=-3)


# -- protocol -----------------------------------------------------------------------

def run_streams(seed: int, runs: int) -> list[np.random.Generator]:
    """One Philox stream per Monte-Carlo run, keyed by (seed, run index)."""
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, r]))) for r in range(runs)]


@dataclass
class TrajectoryRecord:
    """Snapshot metrics for every run; aggregate with mean/std."""

    k: np.ndarray
    t_us: np.ndarray
    samples: dict[str, np.ndarray]  # metric -> (runs, snapshots)
    initial: dict[str, float]
    seed: int = 0
    runs: int = 1
    root_fidelity: bool = True
    meta: dict = field(default_factory=dict)

    def mean(self, metric: str) -> np.ndarray:
        return self.samples[metric].mean(axis=0)

    def std(self, metric: str) -> np.ndarray:
        x = self.samples[metric]
        return x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])

    def _with_start(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        x = self.samples[metric]
        t = np.concatenate([[0.0], self.t_us])
        x = np.concatenate([np.full((x.shape[0], 1), self.initial[metric]), x], axis=1)
        return t, x

    def time_average(self, metric: str) -> tuple[float, float]:
        """Trapezoid time-average from t=0 (initial state) through the last
        snapshot, per run; returns (mean, std) over runs."""
        t, x = self._with_start(metric)
        per_run = np.trapezoid(x, t, axis=1) / (t[-1] - t[0])
        return float(per_run.mean()), float(per_run.std(ddof=1)) if len(per_run) > 1 else 0.0

    def time_max(self, metric: str) -> tuple[float, float]:
        per_run = self.samples[metric].max(axis=1)
        return float(per_run.mean()), float(per_run.std(ddof=1)) if len(per_run) > 1 else 0.0

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.k)):
            row = {"k": int(self.k[i]), "t_us": float(self.t_us[i])}
            for m in METRICS:
                row[m] = float(self.mean(m)[i])
                row[f"{m}_std"] = float(self.std(m)[i])
            out.append(row)
        return out

    def to_csv(self, path: str | Path) -> None:
        write_snapshot_csv(self.rows(), path)


CSV_COLUMNS = ("k", "t_us") + tuple(c for m in METRICS for c in (m, f"{m}_std"))


def write_snapshot_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (r[c] if c == "k" else repr(float(r[c]))) for c in CSV_COLUMNS})


def read_snapshot_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{c: (int(v) if c == "k" else float(v)) for c, v in r.items()} for r in csv.DictReader(fh)]


def snapshot_indices(n_blocks: int, stride: int = SNAPSHOT_STRIDE) -> np.ndarray:
    return np.arange(0, n_blocks, stride)


class InvariantError(RuntimeError):
    pass


def run_protocol(
    program: PhysicalPulseProgram,
    inst: ProblemInstance,
    s: Schedule,
    cfg: NoiseConfig,
    runs: int = 1,
    seed: int = 0,
    root_fidelity: bool = True,
    check_every_event: bool = False,
) -> TrajectoryRecord:
    """Simulate the program for ``runs`` Monte-Carlo realizations.

    Snapshot n (n % 3 == 0) is the slice-averaged state after blocks 0..n,
    scored against the ground state of H at the end of block n.
    """
    times = np.asarray(program.times)
    if len(times) != program.n_blocks + 1 or abs(times[-1] - s.total_time) > 1e-9 or np.any(np.diff(times) <= 0):
        raise ValueError("program grid times do not align with the schedule")
    snaps = snapshot_indices(program.n_blocks)
    ground = ground_states(inst, s, times[snaps + 1])
    g0 = ground_states(inst, s, [0.0])[0]

    rots = [e for e in program.events if isinstance(e, Rotation)]
    frees = [e for e in program.events if isinstance(e, FreeEvolution)]
    eff_runs = runs if cfg.stochastic else 1
    streams = run_streams(seed, eff_runs)
    sig = math.radians(cfg.pulse_angle_sigma)
    angle_err = np.array([g.normal(0.0, 1.0, len(rots)) * sig for g in streams]).reshape(eff_runs, len(rots))
    dt_err = np.array([g.normal(0.0, 1.0, len(frees)) * cfg.dt_sigma for g in streams]).reshape(eff_runs, len(frees))

    z = slice_positions(cfg) if cfg.gradient > 0 else np.zeros(1)
    rho0 = initial_state(cfg)
    rho = np.broadcast_to(rho0, (eff_runs, len(z), 4, 4)).copy()

    def metrics(rbar: np.ndarray, g: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "fidelity": qmath.batch_fidelity(rbar, g, root=root_fidelity),
            "success": qmath.batch_success(rbar, g, root=root_fidelity),
            "negativity": qmath.batch_negativity(rbar),
            "purity": qmath.batch_purity(rbar),
        }

    dev0 = deviation_state(rho0, cfg.epsilon)
    initial = {m: float(v[0]) for m, v in metrics(dev0[None], g0).items()}
    out = {m: np.empty((eff_runs, len(snaps))) for m in METRICS}

    i_rot = i_free = 0
    start = 0
    snap_pos = {int(n): i for i, n in enumerate(snaps)}
    for k, end in enumerate(program.block_ends):
        for e in program.events[start:end]:
            if isinstance(e, Rotation):
                rho = rotate(rho, e.qubit, e.axis, math.radians(e.angle) + angle_err[:, i_rot])
                i_rot += 1
            else:
                dts = np.maximum(e.dt + dt_err[:, i_free], 0.0)
                rho = _free(rho, dts, z, cfg, program.j_nmr)
                i_free += 1
            if check_every_event:
                _check_trace(rho)
        start = end
        if k in snap_pos:
            _check_trace(rho)
            rbar = deviation_state(ensemble_average(rho), cfg.epsilon)
            if np.linalg.eigvalsh(rbar).min() < -1e-8:
                raise InvariantError(f"snapshot {k}: density matrix lost positivity")
            for m, v in metrics(rbar, ground[snap_pos[k]]).items():
                out[m][:, snap_pos[k]] = v

    if eff_runs != runs:
        out = {m: np.repeat(v, runs, axis=0) for m, v in out.items()}
    return TrajectoryRecord(
        k=snaps, t_us=times[snaps + 1], samples=out, initial=initial, seed=seed, runs=runs,
        root_fidelity=root_fidelity, meta={"noise": cfg.to_dict(), "instance": inst.to_dict()},
    )


def _check_trace(rho: np.ndarray) -> None:
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1)) > 1e-9:
        raise InvariantError(f"trace drifted by {np.max(np.abs(tr - 1)):.3e}")
