"""Floquet perturbation theory for the square-pulse drive, to third order in V0.

In the frame of the drive the interaction splits into five components O_m,
m in {-2..2}, with [sum_j s^x_j, O_m] = 2m O_m. They are written with the
y-z ladder operators

    s^+_j = s^z_j - i s^y_j,    s^-_j = s^z_j + i s^y_j,

which are NOT the usual x-y raising and lowering operators. Each O_m picks
up the phase f_m(t) = exp(2i m h0 t) on the first half period and
exp(2i m h0 (T - t)) on the second. All time-ordered integrals of products
of f_m are evaluated exactly, segment by segment.
"""

import cmath
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from .floquet import FloquetError, FloquetOperator, build_floquet, quasienergies
from .hilbert import (
    OperatorMatrix,
    SpinBasis,
    commutator,
    identity,
    pauli_op,
    pauli_string,
    total_sx,
)
from .models import build_h1, segment_hamiltonians

logger = logging.getLogger(__name__)

MODES = (-2, -1, 0, 1, 2)
QUAD_TOL = 1e-12
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FourierComponent:
    m: int
    op: OperatorMatrix


@dataclass(frozen=True, eq=False)
class FloquetOrder:
    order: int
    op: OperatorMatrix


def _zero(dim: int) -> OperatorMatrix:
    return OperatorMatrix(sp.csr_matrix((dim, dim), dtype=complex), hermitian=True)


def _as_hermitian(op: OperatorMatrix, what: str) -> OperatorMatrix:
    deviation = op.hermiticity_error()
    if deviation > HERMITIAN_TOL * max(1.0, op.max_abs()):
        raise FloquetError(f"{what} deviates from Hermitian by {deviation:.3e}")
    return OperatorMatrix(0.5 * (op.matrix + op.matrix.conj().T), hermitian=True)


def _ladder(basis: SpinBasis, site: int, sign: int) -> OperatorMatrix:
    """s^+ (sign=+1) or s^- (sign=-1) at one site."""
    return pauli_op(basis, site, "z") + (-1j * sign) * pauli_op(basis, site, "y")


def build_fourier_components(basis: SpinBasis, V0: float) -> list[FourierComponent]:
    """O_m for m = -2..2; they sum to the interaction H_1.

    O_0     = V0/4 sum_j [1 + (z_j z_{j+1} + y_j y_{j+1})/2]
    O_{+-1} = V0/4 sum_j s^{+-}_j
    O_{+-2} = V0/16 sum_j s^{+-}_j s^{+-}_{j+1}
    """
    L, dim = basis.L, basis.dim
    a = V0 / 4.0

    zero_terms = identity(dim) * float(L)
    for j in range(L):
        k = (j + 1) % L
        bond = pauli_string(basis, {j: "z", k: "z"}) + pauli_string(basis, {j: "y", k: "y"})
        zero_terms = zero_terms + 0.5 * bond

    components = [FourierComponent(0, a * zero_terms)]
    for sign in (1, -1):
        single = _zero(dim)
        double = _zero(dim)
        for j in range(L):
            single = single + _ladder(basis, j, sign)
            double = double + _ladder(basis, j, sign) @ _ladder(basis, (j + 1) % L, sign)
        components.append(FourierComponent(sign, a * single))
        components.append(FourierComponent(2 * sign, (a / 4.0) * double))
    return sorted(components, key=lambda c: c.m)


def fourier_phase(m: int, h0: float, T: float, t: float) -> complex:
    """f_m(t) over one period."""
    if t <= T / 2:
        return cmath.exp(2j * m * h0 * t)
    return cmath.exp(2j * m * h0 * (T - t))


def drive_integral_Im(m: int, h0: float, T: float) -> complex:
    """I_m = int_0^T f_m = -(i/(m h0)) (exp(i m h0 T) - 1), and T for m = 0."""
    if m == 0:
        return complex(T)
    return -1j / (m * h0) * (cmath.exp(1j * m * h0 * T) - 1.0)


# A function on one half period is a sum of coeff * t^p * exp(2i h0 q t),
# stored as {(p, q): coeff} with integer q so that q == 0 is exact.
_Terms = dict[tuple[int, int], complex]


def _add(terms: _Terms, key: tuple[int, int], value: complex) -> None:
    terms[key] = terms.get(key, 0.0) + value


def _antiderivative(terms: _Terms, h0: float) -> _Terms:
    out: _Terms = {}
    for (p, q), coeff in terms.items():
        if q == 0:
            _add(out, (p + 1, 0), coeff / (p + 1))
            continue
        ik = 2j * h0 * q
        falling = 1.0
        # int t^p e^{ikt} = e^{ikt} sum_j (-1)^j p!/(p-j)! t^{p-j} / (ik)^{j+1}
        for j in range(p + 1):
            _add(out, (p - j, q), coeff * (-1) ** j * falling / ik ** (j + 1))
            falling *= p - j
    return out


def _evaluate(terms: _Terms, h0: float, t: float) -> complex:
    return sum(c * t**p * cmath.exp(2j * h0 * q * t) for (p, q), c in terms.items())


def _shift(terms: _Terms, q: int, factor: complex) -> _Terms:
    return {(p, qq + q): c * factor for (p, qq), c in terms.items()}


def ordered_integral(ms: tuple[int, ...], h0: float, T: float) -> complex:
    """int_{T > t_1 > t_2 > ... > t_n > 0} f_{m_1}(t_1) ... f_{m_n}(t_n).

    Integrates the innermost index first; each step keeps the running
    integral as exact exp-polynomial pieces on [0, T/2] and [T/2, T].
    """
    if not ms:
        return 1.0 + 0j
    half = T / 2.0
    first: _Terms = {(0, 0): 1.0}
    second: _Terms = {(0, 0): 1.0}
    for m in reversed(ms):
        # f_m = e^{2i m h0 t} on the first half, e^{2i m h0 T} e^{-2i m h0 t} on the second
        anti_first = _antiderivative(_shift(first, m, 1.0), h0)
        anti_second = _antiderivative(_shift(second, -m, cmath.exp(2j * m * h0 * T)), h0)

        new_first = dict(anti_first)
        _add(new_first, (0, 0), -_evaluate(anti_first, h0, 0.0))
        new_second = dict(anti_second)
        _add(new_second, (0, 0), _evaluate(new_first, h0, half) - _evaluate(anti_second, h0, half))
        first, second = new_first, new_second
    return complex(_evaluate(second, h0, T))


def coeff_cmn(m: int, n: int, h0: float, T: float) -> complex:
    """c_mn = int_0^T dt1 f_m(t1) int_0^t1 dt2 f_n(t2) (equals I_m I_n / 2)."""
    return ordered_integral((m, n), h0, T)


def coeff_cmnk(m: int, n: int, k: int, h0: float, T: float) -> complex:
    """c_mnk: ordered triple integral with f_m outermost and f_k innermost."""
    return ordered_integral((m, n, k), h0, T)


def _cquad(func, a: float, b: float, breaks: tuple[float, ...] = ()) -> complex:
    """Adaptive quadrature of a complex integrand on [a, b]."""
    if b <= a:
        return 0j
    points = [p for p in breaks if a < p < b] or None
    values = []
    for part in (lambda t: func(t).real, lambda t: func(t).imag):
        value, error = integrate.quad(part, a, b, points=points, limit=200,
                                      epsabs=QUAD_TOL, epsrel=QUAD_TOL)
        if error > 1e-8:
            raise FloquetError(f"Quadrature did not converge (error estimate {error:.3e})")
        values.append(value)
    return complex(values[0], values[1])


def quad_Im(m: int, h0: float, T: float) -> complex:
    """Numerical I_m."""
    return _cquad(lambda t: fourier_phase(m, h0, T, t), 0.0, T, (T / 2,))


def quad_ordered(ms: tuple[int, ...], h0: float, T: float) -> complex:
    """Numerical ordered integral by nested adaptive quadrature (slow oracle)."""
    breaks = (T / 2,)

    def inner(level: int, upper: float) -> complex:
        m = ms[level]
        if level == len(ms) - 1:
            return _cquad(lambda t: fourier_phase(m, h0, T, t), 0.0, upper, breaks)
        return _cquad(lambda t: fourier_phase(m, h0, T, t) * inner(level + 1, t), 0.0, upper, breaks)

    return inner(0, T)


@dataclass(frozen=True, eq=False)
class FptCoefficients:
    h0: float
    T: float
    I: dict[int, complex]
    c2: dict[tuple[int, int], complex]
    c3: dict[tuple[int, int, int], complex]

    def pair_residual(self) -> float:
        """max |c_mn + c_nm - I_m I_n|, relative to max(1, |I_m I_n|)."""
        return max(
            abs(self.c2[m, n] + self.c2[n, m] - self.I[m] * self.I[n]) / max(1.0, abs(self.I[m] * self.I[n]))
            for m, n in product(MODES, repeat=2)
        )

    def half_product_residual(self) -> float:
        """max |c_mn - I_m I_n / 2|."""
        return max(
            abs(self.c2[m, n] - 0.5 * self.I[m] * self.I[n]) / max(1.0, abs(self.I[m] * self.I[n]))
            for m, n in product(MODES, repeat=2)
        )

    def reversal_residual(self) -> float:
        """max |c_mnk - c_knm|."""
        scale = max(1.0, self.T**3)
        return max(abs(self.c3[m, n, k] - self.c3[k, n, m]) / scale for m, n, k in product(MODES, repeat=3))

    def cyclic_residual(self) -> float:
        """max |c_mnk + c_kmn + c_nkm - I_m I_n I_k / 2|."""
        scale = max(1.0, self.T**3)
        return max(
            abs(self.c3[m, n, k] + self.c3[k, m, n] + self.c3[n, k, m]
                - 0.5 * self.I[m] * self.I[n] * self.I[k]) / scale
            for m, n, k in product(MODES, repeat=3)
        )


def compute_coefficients(h0: float, T: float) -> FptCoefficients:
    if not h0 > 0 or not T > 0:
        raise ValueError("Coefficients need h0 > 0 and T > 0")
    return FptCoefficients(
        h0=h0,
        T=T,
        I={m: drive_integral_Im(m, h0, T) for m in MODES},
        c2={(m, n): coeff_cmn(m, n, h0, T) for m, n in product(MODES, repeat=2)},
        c3={(m, n, k): coeff_cmnk(m, n, k, h0, T) for m, n, k in product(MODES, repeat=3)},
    )


def _component_map(basis: SpinBasis, V0: float) -> dict[int, OperatorMatrix]:
    return {c.m: c.op for c in build_fourier_components(basis, V0)}


def hf1(basis: SpinBasis, V0: float, h0: float, T: float) -> FloquetOrder:
    """First-order Floquet Hamiltonian (1/T) sum_m I_m O_m."""
    O = _component_map(basis, V0)
    total = _zero(basis.dim)
    for m in MODES:
        total = total + (drive_integral_Im(m, h0, T) / T) * O[m]
    return FloquetOrder(1, _as_hermitian(total, "H_F^(1)"))


def hf1_closed_form(basis: SpinBasis, V0: float, h0: float, T: float) -> FloquetOrder:
    """First-order Floquet Hamiltonian written out in Pauli strings, y = h0 T.

    V0/4 sum_j [1 + (zz + yy)/2 + (2 sin y / y) z_j + (2 (1 - cos y) / y) y_j
                + (sin 2y / 4y)(zz - yy) + ((1 - cos 2y) / 4y)(zy + yz)]
    """
    y = h0 * T
    single_z = 2.0 * math.sin(y) / y
    single_y = 2.0 * (1.0 - math.cos(y)) / y
    even = math.sin(2.0 * y) / (4.0 * y)
    odd = (1.0 - math.cos(2.0 * y)) / (4.0 * y)

    total = identity(basis.dim) * float(basis.L)
    for j in range(basis.L):
        k = (j + 1) % basis.L
        zz = pauli_string(basis, {j: "z", k: "z"})
        yy = pauli_string(basis, {j: "y", k: "y"})
        zy = pauli_string(basis, {j: "z", k: "y"}) + pauli_string(basis, {j: "y", k: "z"})
        total = (total + 0.5 * (zz + yy) + single_z * pauli_op(basis, j, "z")
                 + single_y * pauli_op(basis, j, "y") + even * (zz - yy) + odd * zy)
    return FloquetOrder(1, (V0 / 4.0) * total)


def _expansion_terms(basis: SpinBasis, V0: float, coeffs: FptCoefficients):
    """U_1, U_2, U_3 of the interaction-picture period propagator."""
    O = _component_map(basis, V0)
    U1 = _zero(basis.dim)
    U2 = _zero(basis.dim)
    U3 = _zero(basis.dim)
    for m in MODES:
        U1 = U1 + (-1j * coeffs.I[m]) * O[m]
    for m, n in product(MODES, repeat=2):
        U2 = U2 + (-coeffs.c2[m, n]) * (O[m] @ O[n])
    for m, n, k in product(MODES, repeat=3):
        U3 = U3 + (1j * coeffs.c3[m, n, k]) * (O[m] @ O[n] @ O[k])
    return U1, U2, U3


def hf2_check(basis: SpinBasis, V0: float, h0: float, T: float) -> float:
    """max |U_2 - U_1^2 / 2|; zero means the second-order term vanishes."""
    U1, U2, _ = _expansion_terms(basis, V0, compute_coefficients(h0, T))
    return (U2 - 0.5 * (U1 @ U1)).max_abs()


def hf3_direct(basis: SpinBasis, V0: float, h0: float, T: float,
               coeffs: FptCoefficients | None = None) -> FloquetOrder:
    """H_F^(3) = (i/T)(U_3 - U_1 U_2 + U_1^3 / 3) from operator products."""
    coeffs = coeffs or compute_coefficients(h0, T)
    U1, U2, U3 = _expansion_terms(basis, V0, coeffs)
    raw = (1j / T) * (U3 - U1 @ U2 + (1.0 / 3.0) * (U1 @ U1 @ U1))
    return FloquetOrder(3, _as_hermitian(raw, "H_F^(3)"))


def third_order_pair_term(O: dict[int, OperatorMatrix], coeffs: FptCoefficients, m: int, k: int) -> OperatorMatrix:
    """-(1/3T)(c_mmk - c_mkm) [[O_k, O_m], O_m]."""
    weight = coeffs.c3[m, m, k] - coeffs.c3[m, k, m]
    return (-weight / (3.0 * coeffs.T)) * commutator(commutator(O[k], O[m]), O[m])


def hf3(basis: SpinBasis, V0: float, h0: float, T: float,
        coeffs: FptCoefficients | None = None) -> FloquetOrder:
    """H_F^(3) from nested commutators weighted by coefficient differences."""
    coeffs = coeffs or compute_coefficients(h0, T)
    O = _component_map(basis, V0)
    c = coeffs.c3

    total = _zero(basis.dim)
    for m, k in product(MODES, repeat=2):
        if m != k:
            total = total + third_order_pair_term(O, coeffs, m, k)

    triples = _zero(basis.dim)
    for m, n, k in combinations(MODES, 3):
        triples = (triples
                   + (c[m, n, k] - c[k, m, n]) * commutator(commutator(O[m], O[n]), O[k])
                   + (c[n, k, m] - c[m, n, k]) * commutator(commutator(O[n], O[k]), O[m])
                   + (c[k, m, n] - c[n, k, m]) * commutator(commutator(O[k], O[m]), O[n]))
    total = total + (-1.0 / (3.0 * T)) * triples
    return FloquetOrder(3, _as_hermitian(total, "H_F^(3)"))


def explicit_zero_zero_one_block(basis: SpinBasis, V0: float, h0: float, T: float,
                                 coeffs: FptCoefficients | None = None) -> OperatorMatrix:
    """The (m=n=0, k=1) part of H_F^(3) as a Pauli-string sum.

    Equals -((c_001 - c_010)/(3T)) (V0/4)^3 sum_j [ i y z z + i z z y - 2i z y z
    + 2 y z y - z y y - y y z + 2 s^+_j + x x s^+ + s^+ x x ] on sites j-1, j, j+1.
    """
    coeffs = coeffs or compute_coefficients(h0, T)
    weight = -(coeffs.c3[0, 0, 1] - coeffs.c3[0, 1, 0]) / (3.0 * T) * (V0 / 4.0) ** 3
    L = basis.L

    total = _zero(basis.dim)
    for j in range(L):
        left, right = (j - 1) % L, (j + 1) % L

        def string(a: str, b: str, c: str) -> OperatorMatrix:
            return pauli_string(basis, {left: a, j: b, right: c})

        total = (total
                 + 1j * string("y", "z", "z") + 1j * string("z", "z", "y")
                 - 2j * string("z", "y", "z") + 2.0 * string("y", "z", "y")
                 - string("z", "y", "y") - string("y", "y", "z")
                 + 2.0 * _ladder(basis, j, 1)
                 + pauli_string(basis, {left: "x", j: "x"}) @ _ladder(basis, right, 1)
                 + _ladder(basis, left, 1) @ pauli_string(basis, {j: "x", right: "x"}))
    return weight * total


@dataclass(frozen=True, eq=False)
class ExactFloquetHamiltonian:
    op: OperatorMatrix
    phases: np.ndarray
    branch_warning: bool


def exact_hf(U: FloquetOperator) -> ExactFloquetHamiltonian:
    """H_F = (i/T) log U on the principal branch of the eigenphases."""
    spectrum = quasienergies(U)
    Z = spectrum.vectors
    H = (Z * spectrum.quasienergies) @ Z.conj().T
    if spectrum.near_branch_cut:
        logger.warning("Floquet phases within %.0e of +-pi; logarithm branch is ambiguous", 1e-9)
    op = OperatorMatrix(0.5 * (H + H.conj().T), hermitian=True)
    return ExactFloquetHamiltonian(op, spectrum.phases, spectrum.near_branch_cut)


def floquet_for_point(basis: SpinBasis, V0: float, h0: float, T: float) -> FloquetOperator:
    first, second = segment_hamiltonians(basis, h0, V0)
    return build_floquet(first, second, T)


def perturbative_residual(basis: SpinBasis, V0: float, h0: float, T: float, order: int = 1) -> float:
    """max |H_F - sum of the perturbative terms up to `order`| (1 or 3)."""
    exact = exact_hf(floquet_for_point(basis, V0, h0, T)).op
    approx = hf1(basis, V0, h0, T).op
    if order >= 3:
        approx = approx + hf3(basis, V0, h0, T).op
    return (exact - approx).max_abs()


@dataclass(frozen=True)
class ParityReport:
    product_error: float
    hf_error: float
    phase_error: float
    branch_warning: bool
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def parity_check_V0(basis: SpinBasis, h0: float, T: float, V0: float,
                    product_tol: float = 1e-10, hf_tol: float = 1e-9) -> ParityReport:
    """U(-V0) U(V0) = I and H_F(-V0) = -H_F(V0)."""
    forward = floquet_for_point(basis, V0, h0, T)
    backward = floquet_for_point(basis, -V0, h0, T)
    product_error = float(np.abs(backward.U @ forward.U - np.eye(forward.dim)).max())

    hf_plus = exact_hf(forward)
    hf_minus = exact_hf(backward)
    hf_error = (hf_plus.op + hf_minus.op).max_abs()
    phase_error = float(np.abs(np.sort(hf_minus.phases) - np.sort(-hf_plus.phases)).max())
    branch = hf_plus.branch_warning or hf_minus.branch_warning
    passed = product_error < product_tol and hf_error < hf_tol and phase_error < hf_tol
    return ParityReport(product_error, hf_error, phase_error, branch, passed)


def commutator_with_drive(op: OperatorMatrix, basis: SpinBasis) -> float:
    """max |[op, sum_j s^x_j]|."""
    return commutator(op, total_sx(basis)).max_abs()


def is_special(h0: float, T: float, tol: float = 1e-12) -> bool:
    """True when h0 T is a positive multiple of 2 pi."""
    p = round(h0 * T / (2.0 * math.pi))
    return p >= 1 and abs(h0 * T - 2.0 * math.pi * p) < tol * max(1.0, p)


@dataclass
class IdentityReport:
    """Residual of every perturbation-theory identity at one (V0, h0, T)."""
    L: int
    V0: float
    h0: float
    T: float
    residuals: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    commutators: dict[str, float] = field(default_factory=dict)
    branch_warning: bool = False

    @property
    def verdicts(self) -> dict[str, bool]:
        return {name: self.residuals[name] <= tol for name, tol in self.tolerances.items()}

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "V0": self.V0,
            "h0": self.h0,
            "T": self.T,
            "special": is_special(self.h0, self.T),
            "residuals": self.residuals,
            "tolerances": self.tolerances,
            "verdicts": self.verdicts,
            "commutators_with_drive": self.commutators,
            "branch_warning": self.branch_warning,
            "passed": self.passed,
        }


def identity_report(basis: SpinBasis, V0: float, h0: float, T: float, tolerances) -> IdentityReport:
    """Evaluate the full identity suite at one parameter point.

    `tolerances` is a ToleranceConfig.
    """
    report = IdentityReport(basis.L, V0, h0, T)
    coeffs = compute_coefficients(h0, T)
    O = _component_map(basis, V0)
    X = total_sx(basis)

    def record(name: str, value: float, tol: float) -> None:
        report.residuals[name] = float(value)
        report.tolerances[name] = tol

    total = _zero(basis.dim)
    for m in MODES:
        total = total + O[m]
    record("decomposition", (total - build_h1(basis, V0)).max_abs(), tolerances.identity)
    record("drive_commutation",
           max((commutator(X, O[m]) - (2.0 * m) * O[m]).max_abs() for m in MODES), tolerances.commutator)
    record("adjoint", max((O[m].adjoint() - O[-m]).max_abs() for m in MODES), tolerances.identity)
    record("pair_sum", coeffs.pair_residual(), tolerances.identity)
    record("reversal", coeffs.reversal_residual(), tolerances.identity)
    record("cyclic_sum", coeffs.cyclic_residual(), tolerances.identity)

    U1, U2, _ = _expansion_terms(basis, V0, coeffs)
    record("second_order", (U2 - 0.5 * (U1 @ U1)).max_abs(), tolerances.identity)

    first = hf1(basis, V0, h0, T).op
    record("first_order_forms", (first - hf1_closed_form(basis, V0, h0, T).op).max_abs(), tolerances.identity)

    third = hf3(basis, V0, h0, T, coeffs).op
    record("third_order_forms", (third - hf3_direct(basis, V0, h0, T, coeffs).op).max_abs(), tolerances.hf_cross)

    block = third_order_pair_term(O, coeffs, 0, 1)
    record("third_order_block", (block - explicit_zero_zero_one_block(basis, V0, h0, T, coeffs)).max_abs(),
           tolerances.hf_cross)

    parity = parity_check_V0(basis, h0, T, V0, tolerances.unitarity, tolerances.parity)
    record("parity_product", parity.product_error, tolerances.unitarity)
    record("parity_hf", max(parity.hf_error, parity.phase_error), tolerances.parity)
    report.branch_warning = parity.branch_warning

    report.commutators["hf1"] = commutator_with_drive(first, basis)
    report.commutators["hf3"] = commutator_with_drive(third, basis)
    if is_special(h0, T):
        record("hf1_symmetry", report.commutators["hf1"], tolerances.identity)
    return report
