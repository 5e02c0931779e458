"""Dense two-qubit linear algebra and figures of merit.

Basis ordering is |00>, |01>, |10>, |11> with qubit 1 (hydrogen) as the left
tensor factor, and sigma_z|k> = (-1)^k |k>.
"""
from __future__ import annotations

import numpy as np

ATOL = 1e-10
NEG_EIG_CLIP = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"x": SX, "y": SY, "z": SZ}

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
MINUS_MINUS = np.kron(KET_MINUS, KET_MINUS)


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


def embed(op2: np.ndarray, qubit: int) -> np.ndarray:
    """Lift a single-qubit operator onto qubit 1 or 2 of the pair."""
    if qubit == 1:
        return np.kron(op2, I2)
    if qubit == 2:
        return np.kron(I2, op2)
    raise ValueError(f"qubit index must be 1 or 2, got {qubit!r}")


def pauli(axis: str, qubit: int) -> np.ndarray:
    if axis not in _PAULI:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return embed(_PAULI[axis], qubit)


def basis_state(k1: int, k2: int) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[2 * k1 + k2] = 1.0
    return psi


def ket2dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def is_hermitian(a: np.ndarray, atol: float = ATOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= atol)


def is_unitary(u: np.ndarray, atol: float = ATOL) -> bool:
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= atol)


def check_density(rho: np.ndarray, atol: float = ATOL) -> None:
    """Raise InvalidStateError unless rho is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 density matrix, got shape {rho.shape}")
    if not is_hermitian(rho, atol):
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > atol:
        raise InvalidStateError(f"density matrix trace is {tr.real:.3e}, not 1")
    if np.linalg.eigvalsh(rho).min() < -NEG_EIG_CLIP:
        raise InvalidStateError("density matrix has negative eigenvalues")


def clip_density(rho: np.ndarray) -> np.ndarray:
    """Zero out tiny negative eigenvalues left by long channel compositions."""
    w, v = np.linalg.eigh(rho)
    if w.min() >= 0:
        return rho
    if w.min() < -NEG_EIG_CLIP:
        raise InvalidStateError(f"eigenvalue {w.min():.3e} below clipping tolerance")
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Return exp(-i h t) via eigendecomposition.

    Accepts a stack of Hermitian matrices with shape (..., n, n); `t` may
    broadcast against the leading dimensions.
    """
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - np.swapaxes(h, -1, -2).conj())) > ATOL * max(1.0, np.max(np.abs(h))):
        raise NotHermitianError("expm_hermitian needs a Hermitian generator")
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * np.asarray(t)[..., None])
    return (v * phase[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def _check_target(target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=complex)
    if abs(np.linalg.norm(target) - 1) > 1e-12:
        raise InvalidStateError("target state is not normalized")
    return target


def fidelity_pure(rho: np.ndarray, target: np.ndarray, *, root: bool = False) -> float:
    """Overlap <g|rho|g> of a density matrix with a pure target.

    With ``root=True`` the square root is returned, i.e. |<g|psi>| for a pure
    rho (the convention used for all reported trajectories).
    """
    check_density(rho)
    g = _check_target(target)
    f = float(np.clip((g.conj() @ rho @ g).real, 0.0, 1.0))
    return float(np.sqrt(f)) if root else f


def success(rho: np.ndarray, target: np.ndarray, *, root: bool = False) -> float:
    """Bhattacharyya fidelity between computational-basis diagonals.

    Squared by default, (sum_i sqrt(p_i q_i))**2, which equals the target
    population when the target is a basis state.
    """
    check_density(rho)
    g = _check_target(target)
    p = np.clip(np.diag(rho).real, 0, None)
    q = np.abs(g) ** 2
    bc = float(np.clip(np.sum(np.sqrt(p * q)), 0.0, 1.0))
    return bc if root else bc * bc


def partial_transpose(rho: np.ndarray, qubit: int = 2) -> np.ndarray:
    r = np.asarray(rho).reshape(2, 2, 2, 2)
    if qubit == 2:
        r = r.transpose(0, 3, 2, 1)
    elif qubit == 1:
        r = r.transpose(2, 1, 0, 3)
    else:
        raise ValueError(f"qubit index must be 1 or 2, got {qubit!r}")
    return r.reshape(4, 4)


def negativity(rho: np.ndarray) -> float:
    """Sum of |negative eigenvalues| of the partial transpose over qubit 2."""
    check_density(rho, atol=1e-9)
    w = np.linalg.eigvalsh(partial_transpose(rho, 2))
    return float(-w[w < 0].sum())


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.einsum("ij,ji->", rho, rho).real)


# -- batched versions used by the simulator ---------------------------------

def batch_fidelity(rhos: np.ndarray, target: np.ndarray, root: bool = False) -> np.ndarray:
    g = np.asarray(target, dtype=complex)
    f = np.clip(np.einsum("i,...ij,j->...", g.conj(), rhos, g).real, 0.0, 1.0)
    return np.sqrt(f) if root else f


def batch_success(rhos: np.ndarray, target: np.ndarray, root: bool = False) -> np.ndarray:
    p = np.clip(np.diagonal(rhos, axis1=-2, axis2=-1).real, 0, None)
    q = np.abs(np.asarray(target)) ** 2
    bc = np.clip(np.sqrt(p * q).sum(axis=-1), 0.0, 1.0)
    return bc if root else bc**2


def batch_negativity(rhos: np.ndarray) -> np.ndarray:
    shp = rhos.shape[:-2]
    pt = rhos.reshape(shp + (2, 2, 2, 2)).swapaxes(-3, -1).reshape(shp + (4, 4))
    w = np.linalg.eigvalsh(pt)
    return -np.where(w < 0, w, 0.0).sum(axis=-1)


def batch_purity(rhos: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ji->...", rhos, rhos).real
