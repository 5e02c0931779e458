import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqanneal import digitizer, qmath
from dqanneal.model import (
    TWO_PI,
    Envelope,
    ProblemInstance,
    Schedule,
    default_instances,
    ground_states,
    hamiltonian_at,
    ising_minimizer,
    spectrum_at,
    spectrum_scan,
)

NEG, POS = default_instances()
S = Schedule()
times = st.floats(0.0, 0.6)


def test_instance_values():
    assert NEG.j12 == -53.75 and POS.j12 == 53.75
    assert NEG.delta2 == NEG.h2 == 15.625
    assert NEG.j_nmr == 215.0
    assert NEG.omega("h1") == pytest.approx(TWO_PI * 62.5)
    assert (NEG.label, POS.label) == ("neg", "pos")


def test_instance_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        ProblemInstance(h1=1, h2=2, j12=3, delta1=0.0, delta2=1.0)


def test_schedule_examples():
    g, l, o = S.envelopes(np.array([0.3, 0.3, 0.2]))
    assert g[0] == pytest.approx(0.5) and l[1] == pytest.approx(0.5) and o[2] == pytest.approx(0.5)
    assert S.gamma(0.6) < 1e-10
    assert S.omega(0.0) == pytest.approx((1 + np.tanh(-10 / 3)) / 2)
    S.validate()
    with pytest.raises(ValueError):
        S.envelopes(0.61)
    assert Schedule.from_dict(S.to_dict()) == S


def test_schedule_validate_rejects_bad_boundary():
    with pytest.raises(ValueError):
        Schedule(gamma=Envelope(-1, 0.7, 0.01)).validate()


@pytest.mark.parametrize("inst", [NEG, POS], ids=["neg", "pos"])
def test_hamiltonian_endpoints(inst):
    h0 = hamiltonian_at(inst, S, 0.0)
    g0 = spectrum_at(inst, S, 0.0).ground
    assert abs(np.vdot(qmath.MINUS_MINUS, g0)) ** 2 >= 0.999
    hT = hamiltonian_at(inst, S, S.total_time)
    off = hT - np.diag(np.diag(hT))
    assert np.linalg.norm(off) / np.linalg.norm(hT) < 1e-6
    assert abs(np.trace(h0)) < 1e-12
    # leading term commutes with the easy part
    easy = inst.omega("delta1") * qmath.pauli("x", 1) + inst.omega("delta2") * qmath.pauli("x", 2)
    comm = h0 @ easy - easy @ h0
    assert np.linalg.norm(comm) < 0.02 * np.linalg.norm(h0) * np.linalg.norm(easy)


@given(times)
def test_hamiltonian_hermitian_traceless(t):
    for inst in (NEG, POS):
        h = hamiltonian_at(inst, S, t)
        assert np.max(np.abs(h - h.conj().T)) < 1e-12
        assert abs(np.trace(h)) < 1e-9


def test_hamiltonian_vectorized():
    ts = np.linspace(0, 0.6, 7)
    hs = hamiltonian_at(NEG, S, ts)
    assert np.allclose(hs[3], hamiltonian_at(NEG, S, ts[3]))


@pytest.mark.parametrize("inst", [NEG, POS], ids=["neg", "pos"])
def test_final_ground_state_is_ising_minimizer(inst):
    k1, k2 = ising_minimizer(inst)
    g = spectrum_at(inst, S, S.total_time).ground
    assert np.allclose(np.abs(g), np.abs(qmath.basis_state(k1, k2)), atol=1e-8)
    assert np.argmax(np.abs(g)) == 2 * k1 + k2


@pytest.mark.parametrize("inst", [NEG, POS], ids=["neg", "pos"])
def test_gap_and_continuity(inst):
    scan = spectrum_scan(inst, S, np.linspace(0, S.total_time, 1000))
    assert min(p.gap for p in scan) > 0
    gs = np.array([p.ground for p in scan])
    overlaps = np.abs(np.einsum("ti,ti->t", gs[:-1].conj(), gs[1:]))
    assert overlaps.min() > 0.99
    # sign continuity: the real overlap stays positive along the scan
    assert np.einsum("ti,ti->t", gs[:-1].conj(), gs[1:]).real.min() > 0


def test_degenerate_tie_break_prefers_lowest_index():
    # H = 0 at an instant: every vector is a ground state
    inst = ProblemInstance(h1=0.0, h2=0.0, j12=0.0, delta1=1.0, delta2=1.0)
    zero = Schedule(gamma=Envelope(-1, -10.0, 0.01))
    p = spectrum_at(inst, zero, 0.3)
    assert p.degenerate
    assert np.allclose(p.ground, qmath.basis_state(0, 0))


def _scaled(s: Schedule, k: float) -> Schedule:
    sc = lambda e: Envelope(e.sign, e.center / k, e.width / k)  # noqa: E731
    return Schedule(sc(s.gamma), sc(s.lam), sc(s.omega), s.total_time / k)


@pytest.mark.parametrize("k", [2.0, 0.5])
def test_unit_consistency(k):
    """Energies scaled by k with times scaled by 1/k: same fidelity trajectory."""
    base, scaled = NEG, ProblemInstance(**{**NEG.to_dict(), "unit_factor": NEG.unit_factor * k})
    sk = _scaled(S, k)
    grid = np.linspace(0, S.total_time, 25)

    def traj(inst, s, ts):
        psi, out = qmath.MINUS_MINUS.copy(), []
        gs = ground_states(inst, s, ts)
        for i in range(1, len(ts)):
            psi = digitizer.exact_block(inst, s, ts[i - 1], ts[i], tol=1e-11) @ psi
            out.append(abs(np.vdot(gs[i], psi)))
        return np.array(out)

    assert np.max(np.abs(traj(base, S, grid) - traj(scaled, sk, grid / k))) < 1e-8


def test_batched_ground_states_match_scan():
    ts = np.linspace(0, S.total_time, 300)
    for inst in (NEG, POS):
        ref = np.array([p.ground for p in spectrum_scan(inst, S, ts)])
        assert np.max(np.abs(ground_states(inst, S, ts) - ref)) < 1e-12
