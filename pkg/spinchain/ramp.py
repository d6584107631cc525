"""Ramp protocols, fidelity / residual-energy traces and ramp-time sweeps."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import RAMP_KINDS
from .evolve import (
    IntegrationError,
    PropagatorPlan,
    StateVector,
    Trajectory,
    evolve_direct_trajectory,
    evolve_magnus,
    evolve_ramp_eigenbasis,
)
from .models import LAMBDA_C_RATIO, RampModel
from .spectra import diagonalize, ground_manifold

logger = logging.getLogger(__name__)

F_FLOOR = -690.0
OVERLAP_FLOOR = 1e-300
DEFAULT_SAMPLES = 201

PXP_KINDS = RAMP_KINDS["pxp"]
KINDS = RAMP_KINDS["degenerate"] + PXP_KINDS


@dataclass(frozen=True)
class RampProtocol:
    """Time dependence of the ramped field on [t_start, t_end] within [0, tau].

    `amplitude` is h0 for the degenerate kinds and lambda_0 for the PXP kinds,
    whose ramps are centred on lambda_c = -1.31 w.
    """
    kind: str
    amplitude: float
    tau: float
    t_start: float = 0.0
    t_end: float | None = None
    w: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown ramp kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.t_end is None:
            object.__setattr__(self, "t_end", self.tau)
        if not 0.0 <= self.t_start < self.t_end <= self.tau:
            raise ValueError(f"Need 0 <= t_start < t_end <= tau, got [{self.t_start}, {self.t_end}]")

    @property
    def center(self) -> float:
        return LAMBDA_C_RATIO * self.w if self.kind in PXP_KINDS else 0.0


def field_of_t(p: RampProtocol, t: float) -> float:
    """h(t) or lambda(t) of the protocol."""
    slack = 1e-9 * p.tau
    if t < -slack or t > p.tau + slack:
        raise ValueError(f"t={t} outside [0, {p.tau}]")
    if p.kind.startswith("linear"):
        shape = 2.0 * t / p.tau - 1.0
    else:
        shape = math.cos(2.0 * math.pi * t / p.tau)
    return p.center + p.amplitude * shape


@dataclass(frozen=True, eq=False)
class RampTrace:
    times: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    E_G: np.ndarray
    degenerate: np.ndarray
    tau: float
    max_drift: float
    energy_scale: float = 1.0

    @property
    def t_over_tau(self) -> np.ndarray:
        return self.times / self.tau


def log_overlap(overlap: float) -> float:
    """ln of a squared overlap, clamped to F_FLOOR."""
    overlap = min(overlap, 1.0)
    if overlap < OVERLAP_FLOOR:
        return F_FLOOR
    return math.log(overlap)


def _propagate(model: RampModel, p: RampProtocol, psi0: StateVector, times: np.ndarray,
               plan: PropagatorPlan) -> Trajectory:
    def hamiltonian(t: float):
        return model.hamiltonian(field_of_t(p, t))

    if plan.method == "eigenbasis-ode":
        field_ref = field_of_t(p, p.t_end)
        return evolve_ramp_eigenbasis(
            model.hamiltonian(field_ref),
            model.drive,
            lambda t: field_of_t(p, t) - field_ref,
            psi0,
            times,
            plan,
        )
    if plan.method == "direct-rk4":
        return evolve_direct_trajectory(hamiltonian, psi0, times, plan)
    return evolve_magnus(hamiltonian, psi0, times, plan)


def default_plan(p: RampProtocol, method: str = "eigenbasis-ode", steps_per_tau: int = 5000,
                 tol: float = 1e-6) -> PropagatorPlan:
    return PropagatorPlan(method=method, dt=p.tau / steps_per_tau, tol=tol)


def run_ramp(
    model: RampModel,
    p: RampProtocol,
    n_samples: int = DEFAULT_SAMPLES,
    plan: PropagatorPlan | None = None,
) -> RampTrace:
    """Evolve the ground state of H(t_start) and sample F(t), Q(t).

    At each sample F = ln ||P_G psi||^2 with P_G projecting on the ground
    manifold of H(t) (a single state unless the ground level is degenerate)
    and Q = <psi|H(t)|psi> - E_G.
    """
    if n_samples < 2:
        raise ValueError("A ramp trace needs at least two samples")
    plan = plan or default_plan(p)
    sector = "blockaded" if model.family == "pxp" else "full"

    start = diagonalize(model.hamiltonian(field_of_t(p, p.t_start)))
    _, start_manifold = ground_manifold(start)
    if start_manifold.shape[1] > 1:
        logger.warning("Initial ground level is %d-fold degenerate; starting from its first member",
                       start_manifold.shape[1])
    psi0 = StateVector(start.vectors[:, 0], sector)

    times = np.linspace(p.t_start, p.t_end, n_samples)
    traj = _propagate(model, p, psi0, times, plan)

    F = np.empty(n_samples)
    Q = np.empty(n_samples)
    E_G = np.empty(n_samples)
    degenerate = np.zeros(n_samples, dtype=bool)
    for k, t in enumerate(times):
        H = model.hamiltonian(field_of_t(p, t))
        e0, manifold = ground_manifold(diagonalize(H))
        psi = traj.states[k]
        overlap = float(np.sum(np.abs(manifold.conj().T @ psi) ** 2))
        F[k] = log_overlap(overlap)
        Q[k] = float(np.real(np.vdot(psi, H.apply(psi)))) - e0
        E_G[k] = e0
        degenerate[k] = manifold.shape[1] > 1

    if degenerate.any():
        logger.info("%d samples used a degenerate ground manifold", int(degenerate.sum()))
    return RampTrace(times, F, Q, E_G, degenerate, p.tau, traj.max_drift, model.energy_scale)


@dataclass(frozen=True)
class RampFamily:
    """Protocol shape shared by every point of a ramp-time sweep."""
    kind: str
    amplitude: float
    start_fraction: float = 0.0
    end_fraction: float = 1.0
    w: float = 1.0

    def protocol(self, tau: float) -> RampProtocol:
        return RampProtocol(
            kind=self.kind,
            amplitude=self.amplitude,
            tau=tau,
            t_start=self.start_fraction * tau,
            t_end=self.end_fraction * tau,
            w=self.w,
        )


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    Q: float
    F: float
    status: str = "ok"
    message: str = ""
    max_drift: float = 0.0


def sweep_tau(
    model: RampModel,
    family: RampFamily,
    taus,
    method: str = "eigenbasis-ode",
    steps_per_tau: int = 5000,
    tol: float = 1e-6,
    workers: int = 1,
    done: dict[float, SweepPoint] | None = None,
    on_point: Callable[[SweepPoint], None] | None = None,
) -> list[SweepPoint]:
    """Terminal Q and F for each ramp time, in the order of `taus`.

    Points already in `done` are reused. A failed integration is recorded on
    its point and the sweep goes on; a finished point whose norm drifted past
    `tol` keeps its values but gets status "drift".
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("Sweep needs at least one tau")
    if any(b <= a for a, b in zip(taus, taus[1:])) or taus[0] <= 0:
        raise ValueError("Sweep taus must be positive and ascending")
    done = done or {}

    def _point(tau: float) -> SweepPoint:
        if tau in done:
            return done[tau]
        p = family.protocol(tau)
        try:
            trace = run_ramp(model, p, 2, default_plan(p, method, steps_per_tau, tol))
            if trace.max_drift > tol:
                message = f"norm drift {trace.max_drift:.3e} exceeds {tol:.1e}"
                logger.warning("tau=%g: %s", tau, message)
                point = SweepPoint(tau, float(trace.Q[-1]), float(trace.F[-1]), "drift", message,
                                   trace.max_drift)
            else:
                point = SweepPoint(tau, float(trace.Q[-1]), float(trace.F[-1]), max_drift=trace.max_drift)
        except IntegrationError as e:
            logger.warning("tau=%g failed: %s", tau, e)
            point = SweepPoint(tau, math.nan, math.nan, "failed", str(e), e.max_drift)
        logger.info("tau=%g Q=%.6g F=%.6g", tau, point.Q, point.F)
        if on_point is not None:
            on_point(point)
        return point

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(_point, taus))


def sweep_grid(tau_min: float, tau_max: float, points: int) -> list[float]:
    """Log-spaced ramp times, both ends included."""
    if points == 1:
        return [float(tau_min)]
    return [float(t) for t in np.logspace(math.log10(tau_min), math.log10(tau_max), points)]
