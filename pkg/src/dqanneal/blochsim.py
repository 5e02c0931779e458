"""Classical magnet-compass baseline.

Each spin is a unit magnetization M_i obeying the noise-free Bloch equations

    dM_i/dt = (-Gamma Delta_i e_x - Lambda h_i e_z - Omega sum_j J_ij M_j^z e_z) x M_i

and is mapped to the pure product state with <sigma^j_i> = M_i^j.
"""
from __future__ import annotations

import math

import numpy as np

from . import qmath
from .model import ProblemInstance, Schedule, ground_states

MIN_STEPS = 10_000
DEFAULT_M0 = np.array([[-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])


def bloch_rhs(m: np.ndarray, t: float, inst: ProblemInstance, s: Schedule) -> np.ndarray:
    """dM/dt for both spins; ``m`` has shape (2, 3)."""
    g, l, o = s.envelopes(t, check=False)
    j = inst.omega("j12")
    b1 = np.array([-g * inst.omega("delta1"), 0.0, -l * inst.omega("h1") - o * j * m[1, 2]])
    b2 = np.array([-g * inst.omega("delta2"), 0.0, -l * inst.omega("h2") - o * j * m[0, 2]])
    return np.array([np.cross(b1, m[0]), np.cross(b2, m[1])])


def uniform_times(total_time: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, total_time, n_steps + 1)


def refined_times(boundaries: np.ndarray, min_steps: int = MIN_STEPS) -> np.ndarray:
    """Subdivide each interval of ``boundaries`` evenly, >= min_steps in total."""
    boundaries = np.asarray(boundaries, dtype=float)
    m = math.ceil(min_steps / (len(boundaries) - 1))
    pieces = [np.linspace(a, b, m + 1)[:-1] for a, b in zip(boundaries[:-1], boundaries[1:])]
    return np.concatenate([*pieces, boundaries[-1:]])


def integrate_bloch(
    inst: ProblemInstance,
    s: Schedule,
    m0: np.ndarray | None = None,
    n_steps: int = 20_000,
    times: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 from t=0 to T, renormalizing each spin after every step.

    Returns (times, trajectory) with trajectory shape (len(times), 2, 3).
    Pass ``times`` to step through a custom (e.g. block-aligned) node set.
    """
    m = np.array(DEFAULT_M0 if m0 is None else m0, dtype=float)
    if np.max(np.abs(np.linalg.norm(m, axis=1) - 1)) > 1e-8:
        raise ValueError("initial magnetizations must be unit vectors")
    if times is None:
        if n_steps < MIN_STEPS:
            raise ValueError(f"need at least {MIN_STEPS} RK4 steps for the norm budget")
        times = uniform_times(s.total_time, n_steps)
    elif len(times) - 1 < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} RK4 steps for the norm budget")
    times = np.asarray(times, dtype=float)
    h = np.diff(times)
    # envelope values at t, t + h/2, t + h for every step, evaluated in one go
    stages = np.stack([times[:-1], times[:-1] + 0.5 * h, times[1:]])
    g, l, o = s.envelopes(stages, check=False)
    d1, d2 = inst.omega("delta1"), inst.omega("delta2")
    h1, h2, j = inst.omega("h1"), inst.omega("h2"), inst.omega("j12")
    coef = np.stack([-g * d1, -g * d2, -l * h1, -l * h2, -o * j], axis=-1).tolist()  # (3, n, 5)

    def rhs(c, x1, y1, z1, x2, y2, z2):
        bx1, bx2, bz1, bz2, cj = c
        bz1 += cj * z2
        bz2 += cj * z1
        # b x m with b = (bx, 0, bz)
        return (-bz1 * y1, bz1 * x1 - bx1 * z1, bx1 * y1, -bz2 * y2, bz2 * x2 - bx2 * z2, bx2 * y2)

    traj = np.empty((len(times), 2, 3))
    traj[0] = m
    y = tuple(m.ravel().tolist())
    out = [y]
    for i, hh in enumerate(h.tolist()):
        c0, c1, c2 = coef[0][i], coef[1][i], coef[2][i]
        k1 = rhs(c0, *y)
        k2 = rhs(c1, *(a + 0.5 * hh * b for a, b in zip(y, k1)))
        k3 = rhs(c1, *(a + 0.5 * hh * b for a, b in zip(y, k2)))
        k4 = rhs(c2, *(a + hh * b for a, b in zip(y, k3)))
        x1, y1, z1, x2, y2, z2 = (a + hh / 6 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(y, k1, k2, k3, k4))
        n1 = math.sqrt(x1 * x1 + y1 * y1 + z1 * z1)
        n2 = math.sqrt(x2 * x2 + y2 * y2 + z2 * z2)
        y = (x1 / n1, y1 / n1, z1 / n1, x2 / n2, y2 / n2, z2 / n2)
        out.append(y)
    traj = np.array(out).reshape(-1, 2, 3)
    return times, traj


def qubit_state(mvec: np.ndarray) -> np.ndarray:
    mx, my, mz = mvec
    theta = math.atan2(math.hypot(mx, my), mz)  # acos(mz) is inaccurate near the poles
    phi = math.atan2(my, mx)
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def state_from_magnetization(m: np.ndarray) -> np.ndarray:
    """Product state whose Pauli expectations reproduce both magnetizations."""
    m = np.asarray(m, dtype=float)
    if np.max(np.abs(np.linalg.norm(m, axis=1) - 1)) > 1e-8:
        raise ValueError("magnetizations must be unit vectors")
    return np.kron(qubit_state(m[0]), qubit_state(m[1]))


def product_states(traj: np.ndarray) -> np.ndarray:
    """Batched ``state_from_magnetization`` for a trajectory (n, 2, 3)."""
    traj = np.asarray(traj, dtype=float)
    if np.max(np.abs(np.linalg.norm(traj, axis=-1) - 1)) > 1e-8:
        raise ValueError("magnetizations must be unit vectors")
    theta = np.arctan2(np.hypot(traj[..., 0], traj[..., 1]), traj[..., 2])
    phi = np.arctan2(traj[..., 1], traj[..., 0])
    q = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)  # (n, 2, 2)
    return np.einsum("ni,nj->nij", q[:, 0], q[:, 1]).reshape(len(traj), 4)


def classical_fidelities(
    inst: ProblemInstance, s: Schedule, times: np.ndarray, traj: np.ndarray, root: bool = True
) -> np.ndarray:
    gs = ground_states(inst, s, times)
    f = np.abs(np.einsum("ti,ti->t", gs.conj(), product_states(traj))) ** 2
    return np.sqrt(f) if root else f


def classical_negativities(traj: np.ndarray) -> np.ndarray:
    states = product_states(traj)
    return qmath.batch_negativity(np.einsum("ti,tj->tij", states, states.conj()))


def time_average(times: np.ndarray, values: np.ndarray) -> float:
    """Continuous-time mean by the trapezoid rule."""
    times = np.asarray(times)
    return float(np.trapezoid(values, times) / (times[-1] - times[0]))


def classical_time_average(
    inst: ProblemInstance, s: Schedule, n_steps: int = 20_000, root: bool = True, m0: np.ndarray | None = None
) -> float:
    times, traj = integrate_bloch(inst, s, m0=m0, n_steps=n_steps)
    return time_average(times, classical_fidelities(inst, s, times, traj, root=root))
