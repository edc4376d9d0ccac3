import numpy as np
import pytest

from nhqc.model import SpinChainParams, subsystem_hamiltonian
from nhqc.oracle import QuantumState, rk4_step, solve_quantum, trace_law_identity, trace_law_projector

PAPER_SP = SpinChainParams(jx=-1.0, jy=-1.0, jz=0.5)


def test_rk4_hermitian_block_oscillation():
    # |eg> under the paper spin Hamiltonian: population returns as cos^2(2t)
    h = subsystem_hamiltonian(PAPER_SP)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[1, 1] = 1.0
    t_final = np.pi / 4
    n = 800
    states = solve_quantum(rho0, h, np.zeros((4, 4)), t_final / n, n)
    assert abs(states[-1].rho[1, 1]) < 1e-8
    mid = states[n // 2]
    assert states[-1].t == pytest.approx(t_final)
    assert np.real(mid.rho[1, 1]) == pytest.approx(np.cos(2 * mid.t) ** 2, abs=1e-8)


def test_rk4_uniform_decay_trace():
    h = subsystem_hamiltonian(PAPER_SP)
    gamma1 = 0.3
    rho0 = np.full((4, 4), 0.25, dtype=complex)
    states = solve_quantum(rho0, h, gamma1 * np.eye(4), 1e-3, 1000)
    for s in states[::100]:
        assert np.real(np.trace(s.rho)) == pytest.approx(np.exp(-2 * gamma1 * s.t), abs=1e-10)


def test_rk4_free_state_constant():
    rho0 = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    out = rk4_step(QuantumState(rho0), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
    assert np.allclose(out.rho, rho0)


def test_rk4_rejects_bad_dt():
    with pytest.raises(ValueError):
        rk4_step(QuantumState(np.eye(4, dtype=complex)), np.zeros((4, 4)), np.zeros((4, 4)), 0.0)


def exact_block_solution(t):
    """|eg> evolved under the paper couplings: a rotation inside the
    {|eg>, |ge>} block at frequency 2 on top of a jz phase."""
    psi = np.zeros(4, dtype=complex)
    psi[1] = np.cos(2 * t)
    psi[2] = -1j * np.sin(2 * t)
    psi *= np.exp(-0.5j * t)
    return np.outer(psi, psi.conj())


def test_rk4_self_convergence_fourth_order():
    h = subsystem_hamiltonian(PAPER_SP)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[1, 1] = 1.0
    t_final = 0.8

    def error(n_steps):
        states = solve_quantum(rho0, h, np.zeros((4, 4)), t_final / n_steps, n_steps)
        return np.max(np.abs(states[-1].rho - exact_block_solution(t_final)))

    coarse, fine = error(40), error(80)
    assert coarse / fine == pytest.approx(16.0, rel=0.15)


def test_rk4_preserves_hermiticity():
    h = subsystem_hamiltonian(PAPER_SP)
    gamma = np.diag([0.1, 0, 0, 0]).astype(complex)
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    state = QuantumState(rho)
    for _ in range(10_000):
        state = rk4_step(state, h, gamma, 1e-3)
    assert np.max(np.abs(state.rho - state.rho.conj().T)) < 1e-12


@pytest.mark.parametrize(
    "gamma1,t,expected",
    [(0.1, 10.0, 0.1353352832366127), (0.0, 3.0, 1.0), (1.0, 1.0, 0.1353352832366127)],
)
def test_trace_law_identity(gamma1, t, expected):
    assert trace_law_identity(gamma1, t) == pytest.approx(expected, abs=1e-15)


def test_trace_law_identity_matches_rk4():
    # the trace law must agree with the dense integrator, not just itself
    h = subsystem_hamiltonian(PAPER_SP)
    gamma1 = 1.0
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[1, 1] = 1.0
    states = solve_quantum(rho0, h, gamma1 * np.eye(4), 1e-3, 1000)
    assert np.real(np.trace(states[-1].rho)) == pytest.approx(
        trace_law_identity(gamma1, 1.0), abs=1e-10
    )


def test_trace_law_projector():
    assert trace_law_projector(0.1, 10.0, 0.5) == pytest.approx(0.5676676416183064, abs=1e-15)
    assert trace_law_projector(0.0, 17.0, 0.5) == 1.0
    assert trace_law_projector(0.1, 1e4, 0.5) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        trace_law_projector(0.1, 1.0, 1.5)
