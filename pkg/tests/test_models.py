"""Tests for the degenerate chain, the PXP chain and the drive segments."""

import numpy as np
import pytest

from spinchain.hilbert import build_basis, enumerate_blockaded, project_operator, total_sx
from spinchain.models import (
    LAMBDA_C_RATIO,
    DegenerateModelParams,
    PxpParams,
    build_h,
    build_h1,
    build_pxp,
    degenerate_ramp_model,
    popcount,
    pxp_ramp_model,
    segment_hamiltonians,
)


def test_popcount():
    assert list(popcount(np.array([0, 1, 3, 7, 8, 255]))) == [0, 1, 2, 3, 1, 8]


class TestDegenerateModel:

    def setup_method(self):
        self.basis = build_basis(4)
        self.V0 = 1.5

    def test_h1_counts_up_up_bonds(self):
        diag = np.real(build_h1(self.basis, self.V0).dense().diagonal())
        assert diag[0b0000] == 0.0
        assert diag[0b0101] == 0.0
        assert diag[0b0011] == self.V0
        assert diag[0b1001] == self.V0  # bond across the ring boundary
        assert diag[0b1111] == 4 * self.V0

    def test_h1_zero_exactly_on_blockaded_states(self):
        sub = enumerate_blockaded(self.basis)
        diag = np.real(build_h1(self.basis, self.V0).dense().diagonal())
        zeros = np.nonzero(diag == 0.0)[0]
        assert list(zeros) == list(sub.states)

    def test_projected_h1_vanishes(self):
        sub = enumerate_blockaded(self.basis)
        assert project_operator(build_h1(self.basis, self.V0), sub).max_abs() == 0.0

    def test_h_is_hermitian(self):
        h = build_h(self.basis, DegenerateModelParams(h=0.3, V0=self.V0))
        assert h.hermitian
        assert h.hermiticity_error() == 0.0

    def test_zero_field_reduces_to_h1(self):
        h = build_h(self.basis, DegenerateModelParams(h=0.0, V0=self.V0))
        assert np.allclose(h.dense(), build_h1(self.basis, self.V0).dense())

    @pytest.mark.parametrize("h,V0", [(0.3, 1.5), (-1.2, 0.4), (2.0, 3.0)])
    def test_linear_in_field_and_interaction(self, h, V0):
        def dense(h, V0):
            return build_h(self.basis, DegenerateModelParams(h=h, V0=V0)).dense()

        assert np.allclose(dense(2 * h, V0) - dense(h, V0), dense(h, V0) - dense(0.0, V0), atol=1e-14)
        assert np.allclose(dense(h, 2 * V0) - dense(h, V0), build_h1(self.basis, V0).dense(), atol=1e-14)

    def test_rejects_non_positive_V0(self):
        with pytest.raises(ValueError):
            DegenerateModelParams(h=0.0, V0=0.0)


class TestPxp:

    def setup_method(self):
        self.sub = enumerate_blockaded(build_basis(6))

    def test_hermitian_and_sized(self):
        h = build_pxp(self.sub, PxpParams(w=1.0, lam=-0.7))
        assert h.dim == self.sub.dim_sub
        assert h.hermiticity_error() < 1e-14

    def test_zero_field_matches_projected_flips(self):
        # Projecting -w sum s^x onto the sector keeps exactly the allowed flips.
        full = project_operator(-1.0 * total_sx(self.sub.basis), self.sub).dense()
        pxp = build_pxp(self.sub, PxpParams(w=1.0)).dense()
        assert np.allclose(full, pxp)

    def test_field_term_is_diagonal(self):
        h0 = build_pxp(self.sub, PxpParams(w=1.0, lam=0.0)).dense()
        h1 = build_pxp(self.sub, PxpParams(w=1.0, lam=2.0)).dense()
        diff = h1 - h0
        assert np.allclose(diff, np.diag(np.diag(diff)))
        # all-down state has s^z total -L, so lam * (-L) / 2
        assert np.isclose(diff[0, 0], -6.0)

    def test_lambda_c(self):
        assert PxpParams(w=2.0).lambda_c == pytest.approx(2.0 * LAMBDA_C_RATIO)

    def test_rejects_non_positive_w(self):
        with pytest.raises(ValueError):
            PxpParams(w=-1.0)


class TestSegments:

    def test_segment_signs(self):
        basis = build_basis(3)
        first, second = segment_hamiltonians(basis, h0=2.0, V0=1.0)
        sx = total_sx(basis).dense()
        assert np.allclose(first.dense() - second.dense(), 4.0 * sx)
        assert np.allclose(first.dense() + second.dense(), 2.0 * build_h1(basis, 1.0).dense())

    def test_negative_amplitude(self):
        with pytest.raises(ValueError):
            segment_hamiltonians(build_basis(3), h0=-1.0, V0=1.0)


class TestRampModels:

    def test_degenerate_ramp_hamiltonian(self):
        basis = build_basis(4)
        model = degenerate_ramp_model(basis, V0=1.0)
        expected = build_h(basis, DegenerateModelParams(h=0.8, V0=1.0))
        assert np.allclose(model.hamiltonian(0.8).dense(), expected.dense())
        assert model.energy_scale == 1.0
        assert model.offset == 0.0

    def test_pxp_ramp_hamiltonian(self):
        sub = enumerate_blockaded(build_basis(6))
        model = pxp_ramp_model(sub, w=1.0)
        expected = build_pxp(sub, PxpParams(w=1.0, lam=-1.1))
        assert np.allclose(model.hamiltonian(-1.1).dense(), expected.dense())
        assert model.offset == pytest.approx(LAMBDA_C_RATIO)
        assert model.dim == sub.dim_sub
