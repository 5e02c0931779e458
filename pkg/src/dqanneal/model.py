"""Ising instances, tanh annealing schedules and the time-dependent Hamiltonian.

Units: simulated time in microseconds, energies as angular frequencies in
rad/us.  Quoted "MHz" values v are read as ordinary frequencies, so the
angular frequency is ``unit_factor * v`` with ``unit_factor = 2*pi`` by default.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qmath

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class ProblemInstance:
    """Annealing parameters in quoted MHz; angular values via ``omega``."""

    h1: float
    h2: float
    j12: float
    delta1: float
    delta2: float
    j_nmr: float = 215.0  # Hz
    unit_factor: float = TWO_PI

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ValueError("transverse fields delta1, delta2 must be positive")

    def omega(self, name: str) -> float:
        """Angular frequency (rad/us) of one of h1, h2, j12, delta1, delta2."""
        return self.unit_factor * getattr(self, name)

    @property
    def label(self) -> str:
        return "neg" if self.j12 < 0 else "pos"

    def to_dict(self) -> dict:
        return asdict(self)


def default_instances(unit_factor: float = TWO_PI) -> tuple[ProblemInstance, ProblemInstance]:
    """The two canonical instances, J12 < 0 first."""
    common = dict(h1=62.5, h2=15.625, delta1=28.125, delta2=15.625, j_nmr=215.0, unit_factor=unit_factor)
    return ProblemInstance(j12=-53.75, **common), ProblemInstance(j12=53.75, **common)


def instance_by_label(label: str, unit_factor: float = TWO_PI) -> ProblemInstance:
    neg, pos = default_instances(unit_factor)
    try:
        return {"neg": neg, "pos": pos}[label]
    except KeyError:
        raise ValueError(f"instance must be 'neg' or 'pos', got {label!r}") from None


@dataclass(frozen=True)
class Envelope:
    """(1 + sign*tanh((t - center)/width)) / 2"""

    sign: int
    center: float
    width: float

    def __call__(self, t):
        return 0.5 * (1 + self.sign * np.tanh((np.asarray(t, dtype=float) - self.center) / self.width))


@dataclass(frozen=True)
class Schedule:
    gamma: Envelope = field(default_factory=lambda: Envelope(-1, 0.3, 0.01))
    lam: Envelope = field(default_factory=lambda: Envelope(+1, 0.3, 0.075))
    omega: Envelope = field(default_factory=lambda: Envelope(+1, 0.2, 0.06))
    total_time: float = 0.6

    def validate(self) -> None:
        g0, _, _ = self.envelopes(0.0)
        gT, lT, oT = self.envelopes(self.total_time)
        if not (g0 > 0.99 and gT < 0.01 and abs(lT - oT) < 1e-3):
            raise ValueError("schedule violates the annealing boundary conditions")

    def envelopes(self, t, *, check: bool = True):
        t = np.asarray(t, dtype=float)
        if check and (np.any(t < -1e-12) or np.any(t > self.total_time + 1e-12)):
            raise ValueError(f"t outside [0, {self.total_time}] us")
        return self.gamma(t), self.lam(t), self.omega(t)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            gamma=Envelope(**d["gamma"]),
            lam=Envelope(**d["lam"]),
            omega=Envelope(**d["omega"]),
            total_time=d["total_time"],
        )


def envelopes(s: Schedule, t: float) -> tuple[float, float, float]:
    g, l, o = s.envelopes(t)
    return float(g), float(l), float(o)


_X1, _X2 = qmath.pauli("x", 1), qmath.pauli("x", 2)
_Z1, _Z2 = qmath.pauli("z", 1), qmath.pauli("z", 2)
_ZZ = _Z1 @ _Z2


def hamiltonian_terms(inst: ProblemInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H_easy, local Ising fields, Ising coupling) in rad/us."""
    easy = inst.omega("delta1") * _X1 + inst.omega("delta2") * _X2
    fields = inst.omega("h1") * _Z1 + inst.omega("h2") * _Z2
    coupling = inst.omega("j12") * _ZZ
    return easy, fields, coupling


def hamiltonian_at(inst: ProblemInstance, s: Schedule, t, *, check: bool = True) -> np.ndarray:
    """H(t); vectorized over an array of times (result shape (..., 4, 4))."""
    g, l, o = s.envelopes(t, check=check)
    easy, fields, coupling = hamiltonian_terms(inst)
    g, l, o = (np.asarray(a)[..., None, None] for a in (g, l, o))
    return g * easy + l * fields + o * coupling


def ising_energies(inst: ProblemInstance) -> dict[tuple[int, int], float]:
    """Brute-force H_Ising energy of every computational basis assignment."""
    out = {}
    for k1, k2 in itertools.product((0, 1), repeat=2):
        s1, s2 = (-1) ** k1, (-1) ** k2
        out[(k1, k2)] = inst.omega("h1") * s1 + inst.omega("h2") * s2 + inst.omega("j12") * s1 * s2
    return out


def ising_minimizer(inst: ProblemInstance) -> tuple[int, int]:
    e = ising_energies(inst)
    return min(sorted(e), key=e.__getitem__)


@dataclass(frozen=True)
class SpectralPoint:
    t: float
    energies: np.ndarray
    ground: np.ndarray
    gap: float
    degenerate: bool = False


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Make the largest |amplitude| real positive (ties go to the lowest
    basis index); works on a single vector or a stack of them."""
    mag = np.abs(v)
    k = np.argmax(mag >= mag.max(axis=-1, keepdims=True) - 1e-12, axis=-1)
    lead = np.take_along_axis(v, k[..., None], axis=-1)
    return v * (np.abs(lead) / lead)


def spectrum_at(inst: ProblemInstance, s: Schedule, t: float, previous: np.ndarray | None = None) -> SpectralPoint:
    """Eigendecomposition of H(t) with a phase-fixed ground state.

    When ``previous`` is given the ground vector's sign is chosen to
    maximize the overlap with it, keeping a scan continuous.
    """
    h = hamiltonian_at(inst, s, t)
    w, v = np.linalg.eigh(h)
    g = _fix_phase(v[:, 0])
    if previous is not None and np.vdot(previous, g).real < 0:
        g = -g
    gap = float(w[1] - w[0])
    degenerate = gap <= 1e-9 * max(np.abs(w).max(), 1.0)
    if degenerate:
        log.warning("degenerate ground level at t=%.6g us (gap %.3g)", t, gap)
    return SpectralPoint(t=float(t), energies=w, ground=g, gap=gap, degenerate=bool(degenerate))


def spectrum_scan(inst: ProblemInstance, s: Schedule, times) -> list[SpectralPoint]:
    out: list[SpectralPoint] = []
    prev = None
    for t in times:
        p = spectrum_at(inst, s, t, previous=prev)
        out.append(p)
        prev = p.ground
    return out


def ground_states(inst: ProblemInstance, s: Schedule, times) -> np.ndarray:
    """Instantaneous ground vectors, shape (len(times), 4); same phase and
    sign-continuity rules as ``spectrum_scan``, computed in one batch."""
    times = np.asarray(times, dtype=float)
    w, v = np.linalg.eigh(hamiltonian_at(inst, s, times))
    g = _fix_phase(v[..., 0])
    gap = w[:, 1] - w[:, 0]
    bad = gap <= 1e-9 * np.maximum(np.abs(w).max(axis=1), 1.0)
    if bad.any():
        log.warning("degenerate ground level at %d of %d times (first t=%.6g us)", bad.sum(), len(times), times[bad][0])
    overlap = np.einsum("ti,ti->t", g[:-1].conj(), g[1:]).real.tolist()
    sign = np.ones(len(times))
    for i, ov in enumerate(overlap):
        if sign[i] * ov < 0:
            sign[i + 1] = -1.0
    return g * sign[:, None]
