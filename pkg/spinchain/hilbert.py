"""Spin-1/2 ring bases, Pauli operators and the blockaded subspace.

Encoding: bit j of a basis index holds the spin at site j, bit 1 is "up"
(sigma^z = +1). The Rydberg density n_j = (1 + sigma^z_j)/2 is therefore the
bit value itself.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .config import ConfigError, DEFAULT_L_MAX

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")
HERMITIAN_TOL = 1e-12
# Above this dimension operators are only handled in sparse form.
DENSE_DIM_CAP = 2**14


@dataclass(frozen=True)
class SpinBasis:
    """Computational basis of an L-site periodic chain."""
    L: int

    @property
    def dim(self) -> int:
        return 1 << self.L

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.dim, dtype=np.int64)

    def bits(self, site: int) -> np.ndarray:
        """Occupation (0/1) of `site` for every basis index."""
        return (self.indices >> site) & 1


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Operator on a full or constrained Hilbert space.

    `matrix` is either a scipy sparse matrix or a dense ndarray. When
    `hermitian` is set the tag is verified on construction.
    """
    matrix: sp.spmatrix | np.ndarray
    hermitian: bool = False

    # numpy scalars must defer to the reflected operators below
    __array_ufunc__ = None

    def __post_init__(self):
        shape = self.matrix.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"Operator must be square, got shape {shape}")
        if self.hermitian:
            deviation = self.hermiticity_error()
            scale = max(1.0, self.max_abs())
            if deviation > HERMITIAN_TOL * scale:
                raise ValueError(f"Operator tagged Hermitian deviates by {deviation:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            if self.dim > DENSE_DIM_CAP:
                raise ValueError(f"Refusing dense conversion of dim {self.dim} > {DENSE_DIM_CAP}")
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def max_abs(self) -> float:
        if self.is_sparse:
            data = self.sparse().data
            return float(np.abs(data).max()) if data.size else 0.0
        return float(np.abs(self.matrix).max()) if self.matrix.size else 0.0

    def hermiticity_error(self) -> float:
        if self.is_sparse:
            diff = self.sparse() - self.sparse().conj().T
            return float(np.abs(diff.data).max()) if diff.nnz else 0.0
        m = np.asarray(self.matrix)
        return float(np.abs(m - m.conj().T).max()) if m.size else 0.0

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T, hermitian=self.hermitian)

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_dim(self, other)
        return OperatorMatrix(_combine(self, other, 1.0), self.hermitian and other.hermitian)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_dim(self, other)
        return OperatorMatrix(_combine(self, other, -1.0), self.hermitian and other.hermitian)

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(-self.matrix, self.hermitian)

    def __mul__(self, scalar: complex) -> "OperatorMatrix":
        keeps = self.hermitian and complex(scalar).imag == 0.0
        return OperatorMatrix(self.matrix * scalar, keeps)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same_dim(self, other)
        return OperatorMatrix(self.matrix @ other.matrix)


def _check_same_dim(a: OperatorMatrix, b: OperatorMatrix) -> None:
    if a.dim != b.dim:
        raise ValueError(f"Dimension mismatch: {a.dim} vs {b.dim}")


def _combine(a: OperatorMatrix, b: OperatorMatrix, sign: float):
    # Mixed sparse/dense sums come back dense.
    if a.is_sparse and b.is_sparse:
        return (a.matrix + sign * b.matrix).tocsr()
    return a.dense() + sign * b.dense()


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    """[a, b] = ab - ba."""
    return (a @ b) - (b @ a)


def operator_norm_max(op: OperatorMatrix) -> float:
    """Largest absolute matrix element."""
    return op.max_abs()


def identity(dim: int) -> OperatorMatrix:
    return OperatorMatrix(sp.identity(dim, dtype=complex, format="csr"), hermitian=True)


def build_basis(L: int, l_max: int = DEFAULT_L_MAX) -> SpinBasis:
    """Build the 2^L computational basis of a periodic chain."""
    if not isinstance(L, (int, np.integer)) or isinstance(L, bool):
        raise ConfigError(f"Chain length must be an integer, got {L!r}")
    if L < 3 or L > l_max:
        raise ConfigError(f"Chain length L={L} outside [3, {l_max}]")
    return SpinBasis(int(L))


def _check_site(basis: SpinBasis, site: int) -> None:
    if not 0 <= site < basis.L:
        raise ValueError(f"Site {site} outside [0, {basis.L})")


def pauli_op(basis: SpinBasis, site: int, axis: str) -> OperatorMatrix:
    """Single-site Pauli matrix sigma^axis at `site`."""
    _check_site(basis, site)
    if axis not in AXES:
        raise ValueError(f"Unknown Pauli axis {axis!r}")

    idx = basis.indices
    up = basis.bits(site).astype(bool)
    if axis == "z":
        data = np.where(up, 1.0, -1.0).astype(complex)
        return OperatorMatrix(sp.diags(data, format="csr"), hermitian=True)

    rows = idx ^ (1 << site)
    if axis == "x":
        data = np.ones(basis.dim, dtype=complex)
    else:
        # sigma^y |up> = i |down>, sigma^y |down> = -i |up>
        data = np.where(up, 1j, -1j)
    matrix = sp.csr_matrix((data, (rows, idx)), shape=(basis.dim, basis.dim))
    return OperatorMatrix(matrix, hermitian=True)


def pauli_string(basis: SpinBasis, factors: dict[int, str]) -> OperatorMatrix:
    """Product of single-site Pauli matrices, e.g. {0: "z", 1: "y"}."""
    result = identity(basis.dim)
    for site, axis in sorted(factors.items()):
        result = result @ pauli_op(basis, site % basis.L, axis)
    return OperatorMatrix(result.matrix, hermitian=True)


def total_sx(basis: SpinBasis) -> OperatorMatrix:
    """Sum over sites of sigma^x_j."""
    total = pauli_op(basis, 0, "x")
    for site in range(1, basis.L):
        total = total + pauli_op(basis, site, "x")
    return total


def total_sz(basis: SpinBasis) -> OperatorMatrix:
    """Sum over sites of sigma^z_j (diagonal)."""
    ups = np.array([bin(i).count("1") for i in range(basis.dim)], dtype=float)
    return OperatorMatrix(sp.diags((2.0 * ups - basis.L).astype(complex), format="csr"), hermitian=True)


def count_blockaded(L: int, method: str = "transfer") -> int:
    """Number of ring configurations with no two adjacent up spins.

    `method` is "transfer" (trace of the 2x2 transfer matrix to the L-th
    power, exact integer arithmetic) or "formula" (golden-ratio closed form,
    rounded).
    """
    if L < 2:
        raise ValueError(f"Blockade count needs L >= 2, got {L}")
    if method == "transfer":
        # Python ints keep this exact for any L.
        a, b, c, d = 1, 0, 0, 1
        for _ in range(L):
            a, b, c, d = a + b, a, c + d, c
        return a + d
    if method == "formula":
        phi = (1.0 + math.sqrt(5.0)) / 2.0
        return int(round(phi**L + (-1.0 / phi) ** L))
    raise ValueError(f"Unknown counting method {method!r}")


def rotate_left(indices: np.ndarray, L: int) -> np.ndarray:
    mask = (1 << L) - 1
    return ((indices << 1) | (indices >> (L - 1))) & mask


def blockade_mask(indices: np.ndarray, L: int) -> np.ndarray:
    """True where no two neighbouring sites on the ring are both up."""
    return (indices & rotate_left(indices, L)) == 0


@dataclass(frozen=True, eq=False)
class ConstrainedSubspace:
    """Blockaded sector: basis indices with no adjacent up bits, ascending."""
    L: int
    states: np.ndarray = field(repr=False)

    @property
    def dim_sub(self) -> int:
        return int(self.states.size)

    @cached_property
    def basis(self) -> SpinBasis:
        return SpinBasis(self.L)

    def position(self, indices: np.ndarray) -> np.ndarray:
        """Sector positions of full-space indices (must be members)."""
        pos = np.searchsorted(self.states, indices)
        if np.any(pos >= self.dim_sub) or np.any(self.states[np.minimum(pos, self.dim_sub - 1)] != indices):
            raise ValueError("Index not in blockaded subspace")
        return pos


def enumerate_blockaded(basis: SpinBasis) -> ConstrainedSubspace:
    """List the blockaded configurations of `basis` in ascending order."""
    idx = basis.indices
    states = idx[blockade_mask(idx, basis.L)]
    sub = ConstrainedSubspace(basis.L, states)
    expected = count_blockaded(basis.L)
    if sub.dim_sub != expected:
        raise RuntimeError(f"Enumerated {sub.dim_sub} blockaded states, transfer matrix gives {expected}")
    logger.debug("L=%d blockaded sector has %d states", basis.L, sub.dim_sub)
    return sub


def project_operator(op: OperatorMatrix, sub: ConstrainedSubspace) -> OperatorMatrix:
    """Restrict a full-space operator to the blockaded states."""
    full_dim = 1 << sub.L
    if op.dim != full_dim:
        raise ValueError(f"Operator dim {op.dim} does not match 2^{sub.L}={full_dim}")
    block = op.sparse()[sub.states][:, sub.states]
    return OperatorMatrix(sp.csr_matrix(block), hermitian=op.hermitian)


def translation_permutation(sub: ConstrainedSubspace) -> OperatorMatrix:
    """Ring translation j -> j+1 acting on the blockaded sector."""
    target = sub.position(rotate_left(sub.states, sub.L))
    source = np.arange(sub.dim_sub)
    data = np.ones(sub.dim_sub, dtype=complex)
    return OperatorMatrix(sp.csr_matrix((data, (target, source)), shape=(sub.dim_sub, sub.dim_sub)))
