import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from dqanneal import qmath
from dqanneal.qmath import MINUS_MINUS, SX, SZ, basis_state, ket2dm

from conftest import random_density, random_unitary

seeds = st.integers(0, 2**32 - 1)
BELL = (basis_state(0, 0) + basis_state(1, 1)) / np.sqrt(2)


def test_pauli_actions():
    assert np.allclose(qmath.pauli("z", 1) @ basis_state(0, 0), basis_state(0, 0))
    assert np.allclose(qmath.pauli("x", 2) @ basis_state(0, 0), basis_state(0, 1))
    assert np.trace(qmath.pauli("z", 1) @ qmath.pauli("z", 2)) == 0
    with pytest.raises(ValueError):
        qmath.pauli("z", 3)


def test_basis_ordering_qubit1_is_left_factor():
    assert np.allclose(qmath.pauli("x", 1) @ basis_state(0, 0), basis_state(1, 0))
    assert np.argmax(np.abs(basis_state(1, 0))) == 2


def test_expm_examples():
    assert np.allclose(qmath.expm_hermitian(np.zeros((4, 4)), 3.7), np.eye(4))
    h = qmath.embed(SZ, 1)
    u = qmath.expm_hermitian(h, np.pi)
    assert np.allclose(u, np.diag([-1, -1, -1, -1]))
    u = qmath.expm_hermitian(h, np.pi / 2)
    assert np.allclose(u, np.diag([-1j, -1j, 1j, 1j]))


def test_expm_small_t_series():
    h = qmath.embed(SZ, 1) + 0.3 * qmath.embed(SX, 2)
    t = 1e-4
    series = np.eye(4) - 1j * h * t - h @ h * t**2 / 2
    assert np.max(np.abs(qmath.expm_hermitian(h, t) - series)) < 1e-11


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_expm_group_and_adjoint(seed, t1, t2):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = (a + a.conj().T) / 2
    u1, u2 = qmath.expm_hermitian(h, t1), qmath.expm_hermitian(h, t2)
    assert np.max(np.abs(u1 @ u2 - qmath.expm_hermitian(h, t1 + t2))) < 1e-9
    assert np.max(np.abs(u1.conj().T - qmath.expm_hermitian(h, -t1))) < 1e-10
    assert np.max(np.abs(u1 - expm(-1j * h * t1))) < 1e-9
    assert qmath.is_unitary(u1)


def test_expm_rejects_non_hermitian():
    with pytest.raises(qmath.NotHermitianError):
        qmath.expm_hermitian(np.triu(np.ones((4, 4))), 1.0)


def test_fidelity_examples():
    g = MINUS_MINUS
    assert qmath.fidelity_pure(ket2dm(g), g) == pytest.approx(1.0)
    assert qmath.fidelity_pure(np.eye(4) / 4, g) == pytest.approx(0.25)
    assert qmath.fidelity_pure(ket2dm(basis_state(0, 0)), g) == pytest.approx(0.25)
    assert qmath.fidelity_pure(np.eye(4) / 4, g, root=True) == pytest.approx(0.5)


def test_success_examples():
    rho = np.diag([0.8, 0.1, 0.05, 0.05]).astype(complex)
    assert qmath.success(rho, basis_state(0, 0)) == pytest.approx(0.8)
    assert qmath.success(ket2dm(MINUS_MINUS), basis_state(0, 0)) == pytest.approx(0.25)
    assert qmath.success(ket2dm(basis_state(1, 0)), basis_state(1, 0)) == pytest.approx(1.0)


def test_negativity_examples():
    assert qmath.negativity(ket2dm(BELL)) == pytest.approx(0.5)
    werner = 0.5 * ket2dm(BELL) + 0.5 * np.eye(4) / 4
    assert qmath.negativity(werner) == pytest.approx(0.125, abs=1e-12)


@given(st.floats(0, 1))
def test_werner_closed_form(p):
    # oracle: eigenvalues of the partial transpose are (1+p)/4 (x3) and (1-3p)/4
    rho = p * ket2dm(BELL) + (1 - p) * np.eye(4) / 4
    assert qmath.negativity(rho) == pytest.approx(max(0.0, (3 * p - 1) / 4), abs=1e-12)


@given(seeds)
def test_product_states_have_zero_negativity(seed):
    rng = np.random.default_rng(seed)
    a, b = (random_density_1q(rng) for _ in range(2))
    assert qmath.negativity(np.kron(a, b)) < 1e-12


def random_density_1q(rng):
    v = rng.normal(size=3)
    v *= rng.uniform() / np.linalg.norm(v)
    return (np.eye(2) + v[0] * SX + v[1] * qmath.SY + v[2] * SZ) / 2


def test_purity_examples():
    assert qmath.purity(ket2dm(BELL)) == pytest.approx(1.0)
    assert qmath.purity(np.eye(4) / 4) == pytest.approx(0.25)
    eps = 1e-5
    rho = (1 - eps) / 4 * np.eye(4) + eps * ket2dm(MINUS_MINUS)
    assert qmath.purity(rho) == pytest.approx(0.25, abs=1e-4)


@given(seeds)
def test_partial_transpose_involution(seed):
    rho = random_density(np.random.default_rng(seed))
    assert np.array_equal(qmath.partial_transpose(qmath.partial_transpose(rho)), rho)
    # transposing qubit 1 instead is the full transpose of the qubit-2 version
    assert np.allclose(qmath.partial_transpose(rho, 1), qmath.partial_transpose(rho, 2).T)


@given(seeds)
def test_negativity_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, rank=int(rng.integers(1, 5)))
    u = np.kron(random_unitary(rng), random_unitary(rng))
    assert abs(qmath.negativity(u @ rho @ u.conj().T) - qmath.negativity(rho)) < 1e-9


@given(seeds)
def test_fidelity_orthogonal_targets_sum(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    assert qmath.fidelity_pure(rho, q[:, 0]) + qmath.fidelity_pure(rho, q[:, 1]) <= 1 + 1e-12


@given(seeds, st.integers(0, 3))
def test_success_equals_fidelity_for_diagonal(seed, k):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4))
    rho = np.diag(p).astype(complex)
    g = np.eye(4, dtype=complex)[k]
    assert abs(qmath.success(rho, g) - qmath.fidelity_pure(rho, g)) < 1e-10
    assert abs(qmath.success(rho, g, root=True) - qmath.fidelity_pure(rho, g, root=True)) < 1e-10


@given(seeds)
def test_batched_metrics_match_scalar(seed):
    rng = np.random.default_rng(seed)
    rhos = np.array([random_density(rng) for _ in range(3)])
    g = random_unitary(rng, 4)[:, 0]
    for root in (False, True):
        assert np.allclose(qmath.batch_fidelity(rhos, g, root), [qmath.fidelity_pure(r, g, root=root) for r in rhos])
        assert np.allclose(qmath.batch_success(rhos, g, root), [qmath.success(r, g, root=root) for r in rhos])
    assert np.allclose(qmath.batch_negativity(rhos), [qmath.negativity(r) for r in rhos])
    assert np.allclose(qmath.batch_purity(rhos), [qmath.purity(r) for r in rhos])


def test_check_density_and_clip():
    qmath.check_density(np.eye(4) / 4)
    with pytest.raises(qmath.InvalidStateError):
        qmath.check_density(np.eye(4) / 2)
    with pytest.raises(qmath.InvalidStateError):
        qmath.check_density(np.diag([0.6, 0.5, -0.1, 0.0]))
    rho = np.diag([0.5, 0.5 + 5e-10, -5e-10, 0.0]).astype(complex)
    clipped = qmath.clip_density(rho)
    assert np.linalg.eigvalsh(clipped).min() >= 0
    assert np.trace(clipped).real == pytest.approx(1.0)
