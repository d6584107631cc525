"""Dense diagonalization, degeneracy counting and field scans."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .hilbert import DENSE_DIM_CAP, OperatorMatrix, SpinBasis
from .models import DegenerateModelParams, build_h

logger = logging.getLogger(__name__)

DEFAULT_SCAN_POINTS = 101


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvector columns."""
    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def scale(self) -> float:
        return max(1.0, float(np.abs(self.values).max())) if self.dim else 1.0

    def default_tol(self) -> float:
        return 1e-10 * self.scale()


@dataclass(frozen=True)
class DegeneracyReport:
    target_energy: float
    tol: float
    count: int
    members: tuple[int, ...]


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real positive."""
    vectors = np.array(vectors, dtype=complex)
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    pivot_values = vectors[pivots, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivot_values) / pivot_values)[np.newaxis, :]


def diagonalize(op: OperatorMatrix) -> EigenSystem:
    """Full eigensystem of a Hermitian operator."""
    if not op.hermitian:
        raise ValueError("diagonalize needs an operator tagged Hermitian")
    if op.dim > DENSE_DIM_CAP:
        raise ValueError(f"Dimension {op.dim} exceeds dense cap {DENSE_DIM_CAP}")
    values, vectors = la.eigh(op.dense())
    return EigenSystem(values=values, vectors=fix_phases(vectors))


def degeneracy_count(es: EigenSystem, energy: float, tol: float) -> DegeneracyReport:
    """Eigenvalues within [energy - tol, energy + tol]."""
    if not tol > 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    members = np.nonzero(np.abs(es.values - energy) <= tol)[0]
    return DegeneracyReport(
        target_energy=energy,
        tol=tol,
        count=int(members.size),
        members=tuple(int(k) for k in members),
    )


def ground_manifold(es: EigenSystem, tol: float | None = None) -> tuple[float, np.ndarray]:
    """Ground energy and the eigenvectors within tol of it (columns)."""
    tol = es.default_tol() if tol is None else tol
    e0 = float(es.values[0])
    count = int(np.count_nonzero(es.values - e0 <= tol))
    return e0, es.vectors[:, :count]


def spectral_gap(es: EigenSystem) -> float:
    return float(es.values[1] - es.values[0]) if es.dim > 1 else 0.0


@dataclass(frozen=True, eq=False)
class SpectrumTable:
    """Sorted spectra on a field grid; energies[i] belongs to h_values[i]."""
    h_values: np.ndarray
    energies: np.ndarray

    def rows(self):
        for h, levels in zip(self.h_values, self.energies):
            for n, energy in enumerate(levels):
                yield float(h), n, float(energy)


def spectrum_scan(basis: SpinBasis, V0: float, h_grid, workers: int = 1) -> SpectrumTable:
    """Spectrum of H(h) for every h in the grid, in grid order."""
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.size == 0:
        raise ValueError("Spectrum scan needs a nonempty h grid")

    def _levels(h: float) -> np.ndarray:
        return diagonalize(build_h(basis, DegenerateModelParams(h=float(h), V0=V0))).values

    logger.info("Scanning %d field values at L=%d", h_grid.size, basis.L)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        energies = list(pool.map(_levels, h_grid))
    return SpectrumTable(h_values=h_grid, energies=np.array(energies))
