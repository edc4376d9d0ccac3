"""Independent reference integrators and closed-form decay laws.

These validate the trajectory engine in the regimes where exact answers
exist: the bath-decoupled limit (dense-matrix RK4) and the two analytic
trace laws.  Nothing here shares code with the ensemble propagator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuantumState", "rk4_step", "solve_quantum", "trace_law_identity", "trace_law_projector"]


@dataclass(frozen=True)
class QuantumState:
    """Dense 4x4 density matrix at time t."""

    rho: np.ndarray
    t: float = 0.0


def _rhs(rho: np.ndarray, h: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    # d rho/dt = -i [H, rho] - {Gamma, rho}   (hbar = 1)
    return -1j * (h @ rho - rho @ h) - (gamma @ rho + rho @ gamma)


def rk4_step(state: QuantumState, h: np.ndarray, gamma: np.ndarray, dt: float) -> QuantumState:
    """Classic fourth-order step of the non-unitary von Neumann equation."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    rho = np.asarray(state.rho, dtype=complex)
    k1 = _rhs(rho, h, gamma)
    k2 = _rhs(rho + 0.5 * dt * k1, h, gamma)
    k3 = _rhs(rho + 0.5 * dt * k2, h, gamma)
    k4 = _rhs(rho + dt * k3, h, gamma)
    return QuantumState(rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), state.t + dt)


def solve_quantum(rho0: np.ndarray, h: np.ndarray, gamma: np.ndarray, dt: float, n_steps: int) -> list[QuantumState]:
    """Integrate n_steps and return the state after every step (t=0 included)."""
    states = [QuantumState(np.asarray(rho0, dtype=complex), 0.0)]
    for _ in range(n_steps):
        states.append(rk4_step(states[-1], h, gamma, dt))
    return states


def trace_law_identity(gamma1: float, t: float) -> float:
    """Trace of a unit-trace state under uniform decay: exp(-2 gamma1 t).

    Exact for any Hamiltonian and any bath coupling, because a uniform decay
    operator commutes with everything.
    """
    return float(np.exp(-2.0 * gamma1 * t))


def trace_law_projector(gamma2: float, t: float, p_ee0: float) -> float:
    """Trace under the doubly-excited-state drain, adiabatic dynamics.

    The |ee> population p_ee0 decays at rate 2*gamma2 while the rest is
    conserved; exact for this model because |ee> is an adiabatic state at
    every bath configuration and the decay operator has no off-diagonal
    part in the adiabatic basis.
    """
    if not 0.0 <= p_ee0 <= 1.0:
        raise ValueError("p_ee0 must be in [0, 1]")
    return float((1.0 - p_ee0) + p_ee0 * np.exp(-2.0 * gamma2 * t))
