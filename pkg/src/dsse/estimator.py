"""Weighted-least-squares voltage state estimation.

Minimizes (H(V) - z)^T Sigma^-1 (H(V) - z) over the polar state of the
non-reference nodes subject to v_min <= |V_i| <= v_max, using
Levenberg-Marquardt on the whitened residual with trial steps projected
onto the magnitude box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .feeder import NetworkModel, NodeId
from .measurement import CompiledMeasurements, MeasurementSet
from .powerflow import VoltageState, flat_voltage, wrap_angle


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorOptions:
    v_min: float = 0.8
    v_max: float = 1.1
    tol_grad: float = 1e-8
    tol_step: float = 1e-10
    max_iter: int = 100
    damping_init: float = 1e-3

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.tol_grad <= 0 or self.tol_step <= 0 or self.damping_init <= 0:
            raise ValueError("tolerances and damping must be positive")


@dataclass(frozen=True, eq=False)
class EstimationResult:
    V_hat: VoltageState
    objective: float
    iterations: int
    converged: bool
    active_bounds: list[NodeId] = field(default_factory=list)
    history: list[float] = field(default_factory=list, repr=False)


def flat_start(model: NetworkModel) -> VoltageState:
    return flat_voltage(model)


def _whitener(mset: MeasurementSet):
    """Return a function mapping a residual r to L^-1 r, with Sigma = L L^T."""
    Sigma = mset.Sigma
    if Sigma.shape[0] and np.count_nonzero(Sigma - np.diag(np.diag(Sigma))) == 0:
        d = np.diag(Sigma)
        if np.any(d <= 0):
            raise EstimationError("measurement covariance is not positive definite")
        inv_sd = 1.0 / np.sqrt(d)
        return lambda r: (r.T * inv_sd).T
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise EstimationError("measurement covariance is not positive definite") from None
    return lambda r: solve_triangular(L, r, lower=True)


def objective(V, mset: MeasurementSet, model: NetworkModel, Y: np.ndarray) -> float:
    """Weighted sum of squared residuals, computed through the Cholesky factor of Sigma."""
    try:
        L = np.linalg.cholesky(mset.Sigma)
    except np.linalg.LinAlgError:
        raise EstimationError("measurement covariance is not positive definite") from None
    cm = CompiledMeasurements(mset.specs, model, Y)
    V = V.V if isinstance(V, VoltageState) else V
    r = _residual(cm, V, mset.z)
    w = solve_triangular(L, r, lower=True)
    return float(w @ w)


def _residual(cm: CompiledMeasurements, V: np.ndarray, z: np.ndarray) -> np.ndarray:
    r = cm.H(V) - z
    r[cm.angle_mask] = wrap_angle(r[cm.angle_mask])
    return r


def estimate(
    model: NetworkModel,
    Y: np.ndarray,
    mset: MeasurementSet,
    options: EstimatorOptions | None = None,
    init: VoltageState | None = None,
) -> EstimationResult:
    opts = options or EstimatorOptions()
    whiten = _whitener(mset)
    cm = CompiledMeasurements(mset.specs, model, Y)
    free = model.free_nodes
    nf = free.size
    z = mset.z

    start = init or flat_start(model)
    m_all = start.magnitudes.astype(float).copy()
    a_all = start.angles.astype(float).copy()
    V_ref = model.reference_voltage()
    ref = model.reference_nodes
    m_all[ref], a_all[ref] = np.abs(V_ref), np.angle(V_ref)
    x = np.concatenate([np.clip(m_all[free], opts.v_min, opts.v_max), a_all[free]])
    lo = np.concatenate([np.full(nf, opts.v_min), np.full(nf, -np.inf)])
    hi = np.concatenate([np.full(nf, opts.v_max), np.full(nf, np.inf)])

    def voltage(x):
        m_all[free] = x[:nf]
        a_all[free] = x[nf:]
        return m_all * np.exp(1j * a_all)

    def evaluate(x):
        V = voltage(x)
        r = whiten(_residual(cm, V, z))
        return V, r, float(r @ r)

    V, r, f = evaluate(x)
    history = [f]
    J = whiten(cm.jacobian(V))
    g = J.T @ r
    # damping is relative to the column norms of J (Marquardt scaling)
    mu = opts.damping_init
    nu = 2.0
    converged = stalled = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        # projected gradient of f/2
        pg = x - np.clip(x - g, lo, hi)
        if np.max(np.abs(pg), initial=0.0) < opts.tol_grad * max(1.0, f):
            converged = True
            it -= 1
            break
        d = np.sqrt(np.sum(J * J, axis=0))
        d = np.maximum(d, 1e-12 * max(1.0, float(np.max(d, initial=0.0))))
        step_taken = False
        while not step_taken:
            # min |r + J p|^2 + mu |diag(d) p|^2, solved without forming J^T J
            aug = np.vstack([J, np.diag(np.sqrt(mu) * d)])
            rhs = np.concatenate([-r, np.zeros(2 * nf)])
            q, R = np.linalg.qr(aug)
            p = solve_triangular(R, q.T @ rhs)
            x_new = np.clip(x + p, lo, hi)
            p = x_new - x
            if np.linalg.norm(p) <= opts.tol_step * (np.linalg.norm(x) + opts.tol_step):
                converged = True
                break
            V_new, r_new, f_new = evaluate(x_new)
            lin = r + J @ p
            predicted = f - float(lin @ lin)
            rho = (f - f_new) / predicted if predicted > 0 else -1.0
            if f_new < f and rho > 0:
                x, V, r, f = x_new, V_new, r_new, f_new
                history.append(f)
                J = whiten(cm.jacobian(V))
                g = J.T @ r
                mu *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
                nu = 2.0
                step_taken = True
            else:
                mu *= nu
                nu *= 2
                if mu > 1e30:
                    stalled = True
                    break
        if converged or stalled:
            break

    voltage(x)
    # taken from x directly: a round trip through the complex phasor can step outside the box
    state = VoltageState(m_all.copy(), wrap_angle(a_all.copy()))
    span = 1e-9 * (opts.v_max - opts.v_min)
    mags = x[:nf]
    active = [
        model.nodes[i]
        for i, mv in zip(free, mags)
        if mv <= opts.v_min + span or mv >= opts.v_max - span
    ]
    return EstimationResult(state, f, it, converged, active, history)
