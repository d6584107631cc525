"""Tests for the square-pulse Floquet operator and stroboscopic dynamics."""

import math

import numpy as np
import pytest
import scipy.linalg as la

from spinchain.evolve import StateVector
from spinchain.floquet import (
    DriveConfig,
    FloquetError,
    FloquetOperator,
    StroboscopicTrace,
    average_samples,
    build_floquet,
    delta_c,
    floquet_for_drive,
    horizon_periods,
    initial_state,
    late_time_average,
    long_time_average,
    quasienergies,
    sigma_x_expectation,
    special_frequencies,
    stroboscopic_run,
)
from spinchain.hilbert import build_basis
from spinchain.models import segment_hamiltonians


class TestDriveConfig:

    def test_special_point(self):
        drive = DriveConfig.at_special(h0=10.0, p=2, V0=1.0)
        assert drive.omega_d == pytest.approx(5.0)
        assert drive.h0 * drive.T == pytest.approx(4.0 * math.pi)

    def test_special_mismatch(self):
        with pytest.raises(ValueError):
            DriveConfig(h0=10.0, omega_d=4.0, V0=1.0, p_special=2)

    def test_from_ratio(self):
        drive = DriveConfig.from_ratio(h0=6.0, h0_over_omega=3.0, V0=1.0)
        assert drive.omega_d == pytest.approx(2.0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            DriveConfig(h0=0.0, omega_d=1.0, V0=1.0)

    def test_special_frequencies(self):
        table = special_frequencies(24.0, p_max=4)
        assert table == [(1, 24.0), (2, 12.0), (3, 8.0), (4, 6.0)]


class TestFloquetOperator:

    def setup_method(self):
        self.basis = build_basis(4)
        self.drive = DriveConfig(h0=3.0, omega_d=2.5, V0=1.0)
        self.U = floquet_for_drive(self.basis, self.drive)

    def test_matches_matrix_exponentials(self):
        first, second = segment_hamiltonians(self.basis, 3.0, 1.0)
        T = self.drive.T
        expected = la.expm(-0.5j * T * second.dense()) @ la.expm(-0.5j * T * first.dense())
        assert np.allclose(self.U.U, expected, atol=1e-10)

    def test_free_drive_returns_identity(self):
        first, second = segment_hamiltonians(self.basis, 3.0, 0.0)
        U = build_floquet(first, second, 0.7)
        assert np.allclose(U.U, np.eye(self.basis.dim), atol=1e-12)

    def test_rejects_non_unitary(self):
        with pytest.raises(FloquetError):
            FloquetOperator(1.01 * np.eye(2), 1.0)

    def test_quasispectrum_reconstructs_u(self):
        qs = quasienergies(self.U)
        rebuilt = qs.vectors @ np.diag(qs.eigenvalues) @ qs.vectors.conj().T
        assert np.allclose(rebuilt, self.U.U, atol=1e-10)
        assert np.all(np.diff(qs.phases) >= 0)
        assert np.all(qs.phases > -math.pi) and np.all(qs.phases <= math.pi)

    def test_quasienergies_of_diagonal_operator(self):
        T = 2.0
        U = FloquetOperator(np.diag(np.exp(-1j * T * np.array([0.3, -0.2]))), T)
        qs = quasienergies(U)
        assert qs.quasienergies == pytest.approx([0.3, -0.2])
        assert not qs.near_branch_cut
        assert qs.arccos_energies == pytest.approx([-0.3, -0.2])

    def test_minus_one_sits_on_the_upper_branch(self):
        qs = quasienergies(FloquetOperator(np.diag([-1.0 + 0j, 1.0]), 1.0))
        assert qs.phases[-1] == pytest.approx(math.pi)
        assert qs.near_branch_cut


class TestObservables:

    def setup_method(self):
        self.basis = build_basis(5)

    def test_initial_state_limits(self):
        plus = initial_state(self.basis, 0.0)
        up = initial_state(self.basis, math.pi / 2)
        assert plus.norm == pytest.approx(1.0)
        assert abs(up.amplitudes[-1]) == pytest.approx(1.0)

    def test_initial_state_is_normalized_in_between(self):
        assert initial_state(self.basis, 0.4).norm == pytest.approx(1.0)

    def test_initial_state_range(self):
        with pytest.raises(ValueError):
            initial_state(self.basis, 2.0)

    def test_correlator_values(self):
        assert delta_c(initial_state(self.basis, math.pi / 2)) == pytest.approx(5.0)
        assert delta_c(initial_state(self.basis, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_sigma_x(self):
        assert sigma_x_expectation(initial_state(self.basis, 0.0)) == pytest.approx(5.0)
        assert sigma_x_expectation(initial_state(self.basis, math.pi / 2)) == pytest.approx(0.0, abs=1e-12)

    def test_non_power_of_two_state(self):
        with pytest.raises(ValueError):
            delta_c(StateVector(np.ones(6, dtype=complex) / math.sqrt(6)))


class TestStroboscopic:

    def setup_method(self):
        self.basis = build_basis(4)
        self.U = floquet_for_drive(self.basis, DriveConfig(h0=2.0, omega_d=3.0, V0=1.0))
        self.psi0 = initial_state(self.basis, 0.3)

    def test_snapshots_match_matrix_powers(self):
        trace = stroboscopic_run(self.U, self.psi0, 6, snapshot_every=3)
        assert sorted(trace.snapshots) == [0, 3, 6]
        expected = np.linalg.matrix_power(self.U.U, 3) @ self.psi0.amplitudes
        assert np.allclose(trace.snapshots[3], expected, atol=1e-12)
        assert trace.m_max == 6
        assert trace.delta_c.shape == (7,)
        assert trace.delta_c[0] == pytest.approx(delta_c(self.psi0))

    def test_extra_observables(self):
        trace = stroboscopic_run(self.U, self.psi0, 2,
                                 observables={"delta_c": delta_c, "sigma_x": sigma_x_expectation})
        assert set(trace.values) == {"delta_c", "sigma_x"}
        assert trace.max_drift < 1e-10

    def test_rejects_zero_periods(self):
        with pytest.raises(ValueError):
            stroboscopic_run(self.U, self.psi0, 0)


class TestLongTimeAverage:

    def setup_method(self):
        m = np.arange(31)
        self.trace = StroboscopicTrace(m, {"delta_c": m.astype(float)}, 0.0)

    def test_sample_sets(self):
        assert list(average_samples(10, 10, 5, "stride")) == [15, 20]
        assert list(average_samples(10, 10, 5, "all")) == list(range(11, 21))
        assert list(average_samples(10, 10, 5, "literal")) == [11, 16]

    @pytest.mark.parametrize("mode,expected", [("stride", 17.5), ("all", 15.5), ("literal", 13.5)])
    def test_modes(self, mode, expected):
        assert long_time_average(self.trace, m0=10, window=10, stride=5, mode=mode) == pytest.approx(expected)

    def test_window_past_end(self):
        with pytest.raises(FloquetError):
            long_time_average(self.trace, m0=25, window=10, stride=5)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            long_time_average(self.trace, m0=10, window=10, stride=5, mode="median")

    def test_late_window(self):
        assert late_time_average(self.trace, window=10, stride=5) == pytest.approx(27.5)
        assert late_time_average(self.trace, window=10, stride=5, mode="all") == pytest.approx(25.5)


def test_horizon_periods():
    assert horizon_periods(1500, 1000) == 11500
    assert horizon_periods(5, 10, factor=3) == 35
    with pytest.raises(ValueError):
        horizon_periods(5, 10, factor=0)


def _sigma_x_window(V0: float, eps: float = 1e-3, m_max: int = 2000) -> int:
    """First period at which <sum s^x> leaves L by more than eps."""
    basis = build_basis(4)
    U = floquet_for_drive(basis, DriveConfig.at_special(10.0, 1, V0))
    trace = stroboscopic_run(U, initial_state(basis, 0.0), m_max, {"sigma_x": sigma_x_expectation})
    outside = np.nonzero(np.abs(trace.values["sigma_x"] - 4.0) > eps)[0]
    return int(outside[0]) if outside.size else m_max + 1


def test_prethermal_window_grows_as_V0_shrinks():
    windows = [_sigma_x_window(V0) for V0 in (1.0, 0.5, 0.25)]
    assert windows[0] > 0
    assert windows == sorted(windows)


@pytest.mark.slow
class TestEmergentSymmetryAtTen:
    """h0/V0 = 25 from |+...+> at L = 10."""

    def setup_method(self):
        self.basis = build_basis(10)
        self.psi0 = initial_state(self.basis, 0.0)

    def _trace(self, drive: DriveConfig) -> np.ndarray:
        return stroboscopic_run(floquet_for_drive(self.basis, drive), self.psi0, 2500).delta_c

    def test_special_frequency_pins_delta_c(self):
        pinned = self._trace(DriveConfig.at_special(25.0, 1, 1.0))
        generic = self._trace(DriveConfig.from_ratio(25.0, 0.4, 1.0))
        assert 10.0 * np.abs(pinned).max() < np.ptp(generic)
