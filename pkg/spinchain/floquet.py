"""Square-pulse Floquet operator, quasienergies and stroboscopic dynamics."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as la

from .evolve import StateVector
from .hilbert import OperatorMatrix, SpinBasis, pauli_string, total_sx
from .models import segment_hamiltonians
from .spectra import diagonalize

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-10
STROBOSCOPIC_DRIFT_TOL = 1e-6
BRANCH_TOL = 1e-9
SPECIAL_TOL = 1e-12


class FloquetError(Exception):
    """Error during Floquet evolution."""
    pass


@dataclass(frozen=True)
class DriveConfig:
    """Square pulse h(t) = -h0 on the first half period, +h0 on the second."""
    h0: float
    omega_d: float
    V0: float
    p_special: int | None = None

    def __post_init__(self):
        if not self.h0 > 0 or not self.omega_d > 0:
            raise ValueError("Drive needs h0 > 0 and omega_d > 0")
        if self.p_special is not None:
            mismatch = abs(self.h0 * self.T - 2.0 * math.pi * self.p_special)
            if mismatch > SPECIAL_TOL * max(1.0, self.p_special):
                raise ValueError(f"h0*T misses 2*pi*{self.p_special} by {mismatch:.3e}")

    @property
    def T(self) -> float:
        return 2.0 * math.pi / self.omega_d

    @classmethod
    def at_special(cls, h0: float, p: int, V0: float) -> "DriveConfig":
        """Drive at omega_p* = h0 / p."""
        return cls(h0=h0, omega_d=h0 / p, V0=V0, p_special=p)

    @classmethod
    def from_ratio(cls, h0: float, h0_over_omega: float, V0: float) -> "DriveConfig":
        return cls(h0=h0, omega_d=h0 / h0_over_omega, V0=V0)


def special_frequencies(h0: float, p_max: int = 8) -> list[tuple[int, float]]:
    """(p, omega_p*) for p = 1..p_max."""
    return [(p, h0 / p) for p in range(1, p_max + 1)]


def unitarity_error(U: np.ndarray) -> float:
    return float(np.abs(U.conj().T @ U - np.eye(U.shape[0])).max())


@dataclass(frozen=True, eq=False)
class FloquetOperator:
    U: np.ndarray
    T: float

    def __post_init__(self):
        error = unitarity_error(self.U)
        if error > UNITARITY_TOL:
            raise FloquetError(f"Floquet operator is not unitary (deviation {error:.3e})")

    @property
    def dim(self) -> int:
        return self.U.shape[0]


def segment_propagator(H: OperatorMatrix, duration: float) -> np.ndarray:
    """exp(-i H duration) from the spectral decomposition of H."""
    es = diagonalize(H)
    return (es.vectors * np.exp(-1j * es.values * duration)) @ es.vectors.conj().T


def build_floquet(H_first: OperatorMatrix, H_second: OperatorMatrix, T: float) -> FloquetOperator:
    """U(T) = exp(-i H_second T/2) exp(-i H_first T/2)."""
    if H_first.dim != H_second.dim:
        raise ValueError(f"Segment dims differ: {H_first.dim} vs {H_second.dim}")
    U = segment_propagator(H_second, T / 2) @ segment_propagator(H_first, T / 2)
    return FloquetOperator(U, T)


def floquet_for_drive(basis: SpinBasis, drive: DriveConfig) -> FloquetOperator:
    first, second = segment_hamiltonians(basis, drive.h0, drive.V0)
    return build_floquet(first, second, drive.T)


@dataclass(frozen=True, eq=False)
class QuasiSpectrum:
    """Eigenphases theta in (-pi, pi], ascending, with eigenvector columns."""
    phases: np.ndarray
    vectors: np.ndarray
    T: float

    @property
    def quasienergies(self) -> np.ndarray:
        return -self.phases / self.T

    @property
    def arccos_energies(self) -> np.ndarray:
        """-arccos(Re lambda)/T; loses the sign of the phase."""
        return -np.arccos(np.clip(np.cos(self.phases), -1.0, 1.0)) / self.T

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @property
    def near_branch_cut(self) -> bool:
        return bool(np.any(np.abs(self.phases) > math.pi - BRANCH_TOL))


def quasienergies(U: FloquetOperator) -> QuasiSpectrum:
    """Phase spectrum of U from its complex Schur form (diagonal for unitary U)."""
    error = unitarity_error(U.U)
    if error > UNITARITY_TOL:
        raise FloquetError(f"Floquet operator is not unitary (deviation {error:.3e})")
    triangular, Z = la.schur(U.U, output="complex")
    phases = np.angle(np.diag(triangular))
    phases = np.where(phases <= -math.pi, math.pi, phases)
    order = np.argsort(phases, kind="stable")
    return QuasiSpectrum(phases[order], Z[:, order], U.T)


def _chain_length(dim: int) -> int:
    L = dim.bit_length() - 1
    if dim != 1 << L:
        raise ValueError(f"State dim {dim} is not a power of two")
    return L


def initial_state(basis: SpinBasis, theta: float) -> StateVector:
    """Normalized cos(theta)|+...+> + sin(theta)|up...up>."""
    if not 0.0 <= theta <= math.pi / 2 + 1e-15:
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    plus = np.full(basis.dim, 2.0 ** (-basis.L / 2), dtype=complex)
    up = np.zeros(basis.dim, dtype=complex)
    up[basis.dim - 1] = 1.0
    return StateVector(math.cos(theta) * plus + math.sin(theta) * up).normalized()


@lru_cache(maxsize=None)
def correlator_operator(L: int) -> OperatorMatrix:
    """C_zz - C_yy = sum_j (s^z_j s^z_{j+1} - s^y_j s^y_{j+1}) on the ring."""
    basis = SpinBasis(L)
    total = None
    for j in range(L):
        k = (j + 1) % L
        term = pauli_string(basis, {j: "z", k: "z"}) - pauli_string(basis, {j: "y", k: "y"})
        total = term if total is None else total + term
    return OperatorMatrix(total.matrix, hermitian=True)


@lru_cache(maxsize=None)
def _total_sx(L: int) -> OperatorMatrix:
    return total_sx(SpinBasis(L))


def delta_c(psi: StateVector) -> float:
    """<psi| C_zz - C_yy |psi>."""
    return float(np.real(psi.expectation(correlator_operator(_chain_length(psi.dim)))))


def sigma_x_expectation(psi: StateVector) -> float:
    """<psi| sum_j s^x_j |psi>."""
    return float(np.real(psi.expectation(_total_sx(_chain_length(psi.dim)))))


DEFAULT_OBSERVABLES: dict[str, Callable[[StateVector], float]] = {"delta_c": delta_c}


@dataclass(frozen=True, eq=False)
class StroboscopicTrace:
    m: np.ndarray
    values: dict[str, np.ndarray]
    max_drift: float
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def delta_c(self) -> np.ndarray:
        return self.values["delta_c"]

    @property
    def m_max(self) -> int:
        return int(self.m[-1])


def stroboscopic_run(
    U: FloquetOperator,
    psi0: StateVector,
    m_max: int,
    observables: dict[str, Callable[[StateVector], float]] | None = None,
    snapshot_every: int | None = None,
) -> StroboscopicTrace:
    """Apply U m_max times, evaluating every observable after each period.

    Raises:
        FloquetError: the state norm drifts by more than 1e-6
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if psi0.dim != U.dim:
        raise ValueError(f"State dim {psi0.dim} does not match U dim {U.dim}")
    observables = observables or DEFAULT_OBSERVABLES

    values = {name: np.empty(m_max + 1) for name in observables}
    snapshots = {}
    psi = psi0
    max_drift = 0.0
    for m in range(m_max + 1):
        if m > 0:
            psi = StateVector(U.U @ psi.amplitudes, psi.sector)
            drift = abs(psi.norm - 1.0)
            max_drift = max(max_drift, drift)
            if drift > STROBOSCOPIC_DRIFT_TOL:
                raise FloquetError(f"Norm drifted by {drift:.3e} after {m} periods")
        for name, observable in observables.items():
            values[name][m] = observable(psi)
        if snapshot_every and m % snapshot_every == 0:
            snapshots[m] = psi.amplitudes.copy()
    return StroboscopicTrace(np.arange(m_max + 1), values, max_drift, snapshots)


def average_samples(m0: int, window: int, stride: int, mode: str = "stride") -> np.ndarray:
    """Stroboscopic times entering the long-time average.

    stride:  m0+stride, m0+2*stride, ..., m0+window
    all:     m0+1, ..., m0+window
    literal: m0+1, m0+1+stride, ... up to m0+window
    """
    if mode == "stride":
        return np.arange(m0 + stride, m0 + window + 1, stride)
    if mode == "all":
        return np.arange(m0 + 1, m0 + window + 1)
    if mode == "literal":
        return np.arange(m0 + 1, m0 + window + 1, stride)
    raise ValueError(f"Unknown averaging mode {mode!r}")


def long_time_average(
    trace: StroboscopicTrace,
    m0: int = 1500,
    window: int = 1000,
    stride: int = 5,
    mode: str = "stride",
    observable: str = "delta_c",
) -> float:
    """Mean of an observable over the late stroboscopic window."""
    if stride < 1 or window < 1 or m0 < 0:
        raise ValueError("Need m0 >= 0, window >= 1 and stride >= 1")
    if m0 + window > trace.m_max:
        raise FloquetError(f"Window end m0+window={m0 + window} exceeds trace length {trace.m_max}")
    samples = average_samples(m0, window, stride, mode)
    series = trace.values[observable]
    if mode == "literal":
        return float(series[samples].sum() * stride / window)
    return float(series[samples].mean())


def horizon_periods(m0: int, window: int, factor: int = 10) -> int:
    """Length of a long run: the averaging start plus `factor` windows."""
    if factor < 1:
        raise ValueError("Horizon factor must be at least 1")
    return m0 + factor * window


def late_time_average(
    trace: StroboscopicTrace,
    window: int = 1000,
    stride: int = 5,
    mode: str = "stride",
    observable: str = "delta_c",
) -> float:
    """long_time_average over the last `window` periods of the trace."""
    return long_time_average(trace, trace.m_max - window, window, stride, mode, observable)
