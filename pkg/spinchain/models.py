"""Hamiltonians of the degenerate chain and the PXP chain, plus drive segments."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    ConstrainedSubspace,
    OperatorMatrix,
    SpinBasis,
    rotate_left,
    total_sx,
)

# lambda_c / w at the PXP critical point
LAMBDA_C_RATIO = -1.31


@dataclass(frozen=True)
class DegenerateModelParams:
    h: float
    V0: float

    def __post_init__(self):
        if self.V0 <= 0:
            raise ValueError(f"V0 must be positive, got {self.V0}")


@dataclass(frozen=True)
class PxpParams:
    w: float
    lam: float = 0.0

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError(f"w must be positive, got {self.w}")

    @property
    def lambda_c(self) -> float:
        return LAMBDA_C_RATIO * self.w


def popcount(indices: np.ndarray) -> np.ndarray:
    """Number of set bits of each (non-negative) index."""
    values = np.asarray(indices, dtype=np.int64).copy()
    counts = np.zeros_like(values)
    while np.any(values):
        counts += values & 1
        values >>= 1
    return counts


def build_h1(basis: SpinBasis, V0: float) -> OperatorMatrix:
    """Nearest-neighbour interaction V0/4 sum_j (1+s^z_j)(1+s^z_{j+1}).

    Diagonal: V0 times the number of up-up bonds on the ring.
    """
    idx = basis.indices
    bonds = popcount(idx & rotate_left(idx, basis.L))
    return OperatorMatrix(sp.diags((V0 * bonds).astype(complex), format="csr"), hermitian=True)


def build_h(basis: SpinBasis, params: DegenerateModelParams) -> OperatorMatrix:
    """H = -h sum_j s^x_j + H_1."""
    return -params.h * total_sx(basis) + build_h1(basis, params.V0)


def _free_sites(states: np.ndarray, L: int) -> list[np.ndarray]:
    """Per site, a mask of states whose two neighbours are both down."""
    masks = []
    for j in range(L):
        left = (states >> ((j - 1) % L)) & 1
        right = (states >> ((j + 1) % L)) & 1
        masks.append((left == 0) & (right == 0))
    return masks


def build_pxp(sub: ConstrainedSubspace, params: PxpParams) -> OperatorMatrix:
    """PXP chain in a longitudinal field, on the blockaded sector.

    H = sum_j (-w P_{j-1} s^x_j P_{j+1} + lam s^z_j / 2), P projecting on down.
    """
    states = sub.states
    rows, cols, data = [], [], []
    for j, free in enumerate(_free_sites(states, sub.L)):
        source = np.nonzero(free)[0]
        target = sub.position(states[source] ^ (1 << j))
        rows.append(target)
        cols.append(source)
        data.append(np.full(source.size, -params.w, dtype=complex))

    sz = 2.0 * popcount(states) - sub.L
    rows.append(np.arange(sub.dim_sub))
    cols.append(np.arange(sub.dim_sub))
    data.append((params.lam * sz / 2.0).astype(complex))

    matrix = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sub.dim_sub, sub.dim_sub),
    )
    return OperatorMatrix(matrix, hermitian=True)


def segment_hamiltonians(basis: SpinBasis, h0: float, V0: float) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Square-pulse halves: h = -h0 for t <= T/2, h = +h0 afterwards.

    Returns (H_first, H_second) = (+h0 sum s^x + H_1, -h0 sum s^x + H_1).
    """
    if h0 < 0:
        raise ValueError(f"Drive amplitude must be non-negative, got {h0}")
    sx = total_sx(basis)
    h1 = build_h1(basis, V0)
    return h0 * sx + h1, -h0 * sx + h1


@dataclass(frozen=True)
class RampModel:
    """Ramped Hamiltonian H(field) = static + field * drive.

    For the degenerate chain field is h and drive is -sum s^x. For the PXP
    chain field is lambda and drive is sum s^z / 2 in the blockaded sector.
    """
    family: str
    L: int
    static: OperatorMatrix
    drive: OperatorMatrix
    energy_scale: float
    offset: float = 0.0

    @property
    def dim(self) -> int:
        return self.static.dim

    def hamiltonian(self, field: float) -> OperatorMatrix:
        return self.static + field * self.drive


def degenerate_ramp_model(basis: SpinBasis, V0: float) -> RampModel:
    return RampModel(
        family="degenerate",
        L=basis.L,
        static=build_h1(basis, V0),
        drive=-total_sx(basis),
        energy_scale=V0,
    )


def pxp_ramp_model(sub: ConstrainedSubspace, w: float) -> RampModel:
    """PXP ramp model; `offset` is the critical field lambda_c."""
    params = PxpParams(w=w)
    return RampModel(
        family="pxp",
        L=sub.L,
        static=build_pxp(sub, params),
        drive=build_pxp(sub, PxpParams(w=1.0, lam=1.0)) - build_pxp(sub, PxpParams(w=1.0, lam=0.0)),
        energy_scale=w,
        offset=params.lambda_c,
    )
