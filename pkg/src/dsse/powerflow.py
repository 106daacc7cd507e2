"""Polar Newton-Raphson load flow used to produce ground-truth voltages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import NetworkModel


class PowerFlowError(RuntimeError):
    def __init__(self, message: str, mismatch: float, iterations: int):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class VoltageState:
    magnitudes: np.ndarray
    angles: np.ndarray

    @property
    def V(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.angles)

    @classmethod
    def from_complex(cls, V: np.ndarray) -> "VoltageState":
        return cls(np.abs(V), np.angle(V))

    def wrapped(self) -> "VoltageState":
        return VoltageState(self.magnitudes.copy(), wrap_angle(self.angles))


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def flat_voltage(model: NetworkModel) -> VoltageState:
    n = model.n_nodes
    return VoltageState(np.full(n, model.reference_magnitude), model.phase_angles())


def power_injection(Y: np.ndarray, V: np.ndarray) -> np.ndarray:
    return V * np.conj(Y @ V)


def dS_dV(Y: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partials of S = V * conj(YV) w.r.t. voltage magnitudes and angles.

    Returns full M x M complex matrices ``(dS/d|V|, dS/dtheta)``.
    """
    I = Y @ V
    Vnorm = V / np.abs(V)
    dS_dm = V[:, None] * np.conj(Y * Vnorm[None, :]) + np.diag(np.conj(I) * Vnorm)
    dS_da = 1j * V[:, None] * np.conj(np.diag(I) - Y * V[None, :])
    return dS_dm, dS_da


def power_mismatch(model: NetworkModel, Y: np.ndarray, V, injections: np.ndarray) -> np.ndarray:
    """Per-node |S_i - (V o conj(YV))_i| over the non-reference nodes."""
    if isinstance(V, VoltageState):
        V = V.V
    if V.shape != injections.shape or Y.shape != (V.size, V.size):
        raise ValueError("dimension mismatch between Y, V and injections")
    free = model.free_nodes
    return np.abs(injections[free] - power_injection(Y, V)[free])


def solve_power_flow(
    model: NetworkModel,
    Y: np.ndarray,
    injections: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 50,
    init: VoltageState | None = None,
) -> VoltageState:
    """Solve S = V o conj(YV) at every non-reference (PQ) node.

    ``injections`` is generation-positive, so loads enter with a negative sign.
    Reference nodes are held at the model's reference phasing regardless of
    ``init``; their entries in ``injections`` are ignored.
    """
    injections = np.asarray(injections, dtype=complex)
    if not np.all(np.isfinite(injections)):
        raise ValueError("injections must be finite")
    state = init or flat_voltage(model)
    m = state.magnitudes.astype(float).copy()
    a = state.angles.astype(float).copy()
    ref = model.reference_nodes
    free = model.free_nodes
    V_ref = model.reference_voltage()
    m[ref], a[ref] = np.abs(V_ref), np.angle(V_ref)
    nf = free.size

    worst = np.inf
    for it in range(max_iter + 1):
        V = m * np.exp(1j * a)
        mis = injections[free] - power_injection(Y, V)[free]
        worst = float(np.max(np.abs(mis))) if nf else 0.0
        if worst < tol:
            return VoltageState(m, wrap_angle(a))
        if it == max_iter or not np.isfinite(worst):
            break
        dSm, dSa = dS_dV(Y, V)
        sub = np.ix_(free, free)
        J = np.block([[dSm[sub].real, dSa[sub].real], [dSm[sub].imag, dSa[sub].imag]])
        dx = np.linalg.solve(J, np.concatenate([mis.real, mis.imag]))
        m[free] += dx[:nf]
        a[free] += dx[nf:]
    raise PowerFlowError(
        f"power flow did not converge in {max_iter} iterations (max mismatch {worst:.3e})",
        worst,
        max_iter,
    )
