"""State propagation: spectral exponentials, eigenbasis ODE and direct stepping."""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .config import ENGINES
from .hilbert import OperatorMatrix
from .spectra import EigenSystem, diagonalize

logger = logging.getLogger(__name__)

METHODS = ENGINES
NORM_TOL = 1e-8
# solve_ivp clamps rtol below 100 * machine epsilon
MIN_RTOL = 1e-13

# Gauss nodes and weights of the fourth-order commutator-free exponential scheme
_CF4_NODES = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)
_CF4_A1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
_CF4_A2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0


class IntegrationError(Exception):
    """Error during time integration."""

    def __init__(self, message: str, max_drift: float):
        super().__init__(f"{message} (max norm drift {max_drift:.3e})")
        self.max_drift = max_drift


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    sector: str = "full"

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.amplitudes / self.norm, self.sector)

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def expectation(self, op: OperatorMatrix) -> complex:
        return complex(np.vdot(self.amplitudes, op.apply(self.amplitudes)))


@dataclass(frozen=True)
class PropagatorPlan:
    method: str = "eigenbasis-ode"
    dt: float = 1e-3
    tol: float = 1e-6
    max_refinements: int = 4
    # solve_ivp tolerances of the eigenbasis engine
    rtol: float = 1e-10
    atol: float = 1e-12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown propagation method {self.method!r}")
        if not self.dt > 0 or not self.tol > 0:
            raise ValueError("Plan needs dt > 0 and tol > 0")
        if not self.rtol > 0 or not self.atol > 0:
            raise ValueError("Plan needs rtol > 0 and atol > 0")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States (rows) at the requested times."""
    times: np.ndarray
    states: np.ndarray
    max_drift: float
    method: str
    dt: float
    sector: str = "full"

    def state(self, k: int) -> StateVector:
        return StateVector(self.states[k], self.sector)

    @property
    def final(self) -> StateVector:
        return self.state(-1)


@dataclass(frozen=True)
class Propagation:
    state: StateVector
    norm_drift: float
    warning: bool


def _check_state(psi: StateVector, dim: int) -> None:
    if psi.dim != dim:
        raise ValueError(f"State dim {psi.dim} does not match operator dim {dim}")
    if abs(psi.norm - 1.0) > NORM_TOL:
        raise ValueError(f"Initial state not normalized (norm {psi.norm:.12f})")


def _check_grid(t_grid) -> np.ndarray:
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("Time grid must be a nonempty 1D sequence")
    if np.any(np.diff(times) < 0):
        raise ValueError("Time grid must be ascending")
    return times


def _row_sum_bound(op: OperatorMatrix) -> float:
    """Infinity-norm, an upper bound on the spectral norm of a Hermitian op."""
    if op.dim == 0:
        return 0.0
    if op.is_sparse:
        return float(abs(op.sparse()).sum(axis=1).max())
    return float(np.abs(op.dense()).sum(axis=1).max())


def expm_apply(
    H: OperatorMatrix,
    dt: float,
    psi: StateVector,
    eigensystem: EigenSystem | None = None,
) -> StateVector:
    """exp(-i H dt) psi through the spectral decomposition of H."""
    if psi.dim != H.dim:
        raise ValueError(f"State dim {psi.dim} does not match operator dim {H.dim}")
    es = eigensystem if eigensystem is not None else diagonalize(H)
    coeffs = es.vectors.conj().T @ psi.amplitudes
    return StateVector(es.vectors @ (np.exp(-1j * es.values * dt) * coeffs), psi.sector)


def evolve_ramp_eigenbasis(
    hf: OperatorMatrix,
    coupling: OperatorMatrix,
    profile: Callable[[float], float],
    psi0: StateVector,
    t_grid,
    plan: PropagatorPlan,
    eigensystem: EigenSystem | None = None,
) -> Trajectory:
    """Integrate i dc_n/dt = eps_n c_n + sum_m Lambda_nm(t) c_m in the basis of hf.

    The perturbation is deltaH(t) = profile(t) * coupling, so Lambda is one
    fixed matrix times a scalar. psi0 sits at t_grid[0]; states come back in
    the original basis. Steps are adaptive (DOP853) and capped at plan.dt;
    a solution whose norm drifts above plan.tol is recomputed with tolerances
    a hundred times tighter.

    Raises:
        IntegrationError: the solver fails, or the drift stays above plan.tol
            after all refinements
    """
    _check_state(psi0, hf.dim)
    times = _check_grid(t_grid)

    es = eigensystem if eigensystem is not None else diagonalize(hf)
    V = es.vectors
    lam = V.conj().T @ coupling.apply(V)
    c_start = V.conj().T @ psi0.amplitudes

    # Global phase from the initial energy is removed during stepping.
    shift = float(np.real(np.vdot(c_start, es.values * c_start)))
    eps = es.values - shift

    def rhs(t: float, c: np.ndarray) -> np.ndarray:
        return -1j * (eps * c + profile(t) * (lam @ c))

    rtol, atol = plan.rtol, plan.atol
    for attempt in range(plan.max_refinements + 1):
        coeffs, max_drift = _solve_samples(rhs, c_start, times, plan.dt, rtol, atol)
        if max_drift <= plan.tol:
            break
        logger.debug("Eigenbasis drift %.3e at rtol=%.1e, tightening", max_drift, rtol)
        rtol = max(rtol / 100.0, MIN_RTOL)
        atol /= 100.0
    else:
        raise IntegrationError(
            f"Eigenbasis integration did not reach tol {plan.tol:.1e} after "
            f"{plan.max_refinements} refinements", max_drift)

    phases = np.exp(-1j * shift * (times - times[0]))
    states = (coeffs @ V.T) * phases[:, np.newaxis]
    return Trajectory(times, states, max_drift, "eigenbasis-ode", plan.dt, psi0.sector)


def _solve_samples(rhs, y0: np.ndarray, times: np.ndarray, max_step: float,
                   rtol: float, atol: float) -> tuple[np.ndarray, float]:
    """solve_ivp through every sample time; returns samples and max norm drift."""
    y0 = np.array(y0, dtype=complex)
    if times[-1] == times[0]:
        return np.tile(y0, (times.size, 1)), 0.0
    sol = solve_ivp(rhs, (times[0], times[-1]), y0, method="DOP853", t_eval=times,
                    rtol=rtol, atol=atol, max_step=max_step)
    if not sol.success:
        raise IntegrationError(f"ODE solver stopped: {sol.message}", math.nan)
    out = sol.y.T
    return out, float(np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)))


def _rk4_samples(rhs, y0: np.ndarray, times: np.ndarray, dt: float) -> tuple[np.ndarray, float]:
    """Classical RK4 through every sample time; returns samples and max norm drift."""
    y = np.array(y0, dtype=complex)
    out = np.empty((times.size, y.size), dtype=complex)
    out[0] = y
    max_drift = 0.0
    for k in range(1, times.size):
        t_a, t_b = times[k - 1], times[k]
        n = max(1, math.ceil((t_b - t_a) / dt - 1e-9))
        h = (t_b - t_a) / n
        t = t_a
        for _ in range(n):
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2, y + (h / 2) * k1)
            k3 = rhs(t + h / 2, y + (h / 2) * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        out[k] = y
        max_drift = max(max_drift, abs(float(np.linalg.norm(y)) - 1.0))
    return out, max_drift


def evolve_direct_trajectory(
    hamiltonian: Callable[[float], OperatorMatrix],
    psi0: StateVector,
    t_grid,
    plan: PropagatorPlan,
) -> Trajectory:
    """RK4 in the computational basis; psi0 sits at t_grid[0]."""
    times = _check_grid(t_grid)
    h_start = hamiltonian(float(times[0]))
    _check_state(psi0, h_start.dim)
    if plan.dt * _row_sum_bound(h_start) > 0.5:
        logger.warning("dt=%.3e is coarse for |H|~%.3e", plan.dt, _row_sum_bound(h_start))

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * hamiltonian(t).apply(y)

    states, max_drift = _rk4_samples(rhs, psi0.amplitudes, times, plan.dt)
    if max_drift > plan.tol:
        logger.warning("Direct RK4 norm drift %.3e exceeds %.1e", max_drift, plan.tol)
    return Trajectory(times, states, max_drift, "direct-rk4", plan.dt, psi0.sector)


def evolve_direct(
    hamiltonian: Callable[[float], OperatorMatrix],
    psi0: StateVector,
    t0: float,
    t1: float,
    plan: PropagatorPlan,
) -> Propagation:
    """Fourth-order stepping of i d/dt psi = H(t) psi from t0 to t1.

    Drift above plan.tol is reported through `warning`, never corrected.
    """
    traj = evolve_direct_trajectory(hamiltonian, psi0, [t0, t1], plan)
    return Propagation(traj.final, traj.max_drift, traj.max_drift > plan.tol)


def evolve_magnus(
    hamiltonian: Callable[[float], OperatorMatrix],
    psi0: StateVector,
    t_grid,
    plan: PropagatorPlan,
) -> Trajectory:
    """Fourth-order commutator-free exponential stepping.

    Each step applies two exponentials of Gauss-point combinations of H(t),
    so a constant H is propagated exactly.
    """
    times = _check_grid(t_grid)
    _check_state(psi0, hamiltonian(float(times[0])).dim)

    y = np.array(psi0.amplitudes, dtype=complex)
    states = np.empty((times.size, y.size), dtype=complex)
    states[0] = y
    max_drift = 0.0
    for k in range(1, times.size):
        t_a, t_b = times[k - 1], times[k]
        n = max(1, math.ceil((t_b - t_a) / plan.dt - 1e-9))
        h = (t_b - t_a) / n
        for step in range(n):
            t = t_a + step * h
            h1 = hamiltonian(t + _CF4_NODES[0] * h)
            h2 = hamiltonian(t + _CF4_NODES[1] * h)
            first = _CF4_A2 * h1 + _CF4_A1 * h2
            second = _CF4_A1 * h1 + _CF4_A2 * h2
            y = expm_multiply(-1j * h * first.matrix, y)
            y = expm_multiply(-1j * h * second.matrix, y)
        states[k] = y
        max_drift = max(max_drift, abs(float(np.linalg.norm(y)) - 1.0))
    if max_drift > plan.tol:
        logger.warning("Exponential stepping norm drift %.3e exceeds %.1e", max_drift, plan.tol)
    return Trajectory(times, states, max_drift, "eigen-exponential", plan.dt, psi0.sector)
