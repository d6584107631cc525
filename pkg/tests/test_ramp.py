"""Tests for ramp protocols, traces and ramp-time sweeps."""

import math

import numpy as np
import pytest

from spinchain import ramp
from spinchain.analysis import fit_powerlaw
from spinchain.evolve import IntegrationError, PropagatorPlan
from spinchain.hilbert import build_basis, enumerate_blockaded
from spinchain.models import LAMBDA_C_RATIO, degenerate_ramp_model, pxp_ramp_model
from spinchain.ramp import (
    F_FLOOR,
    RampFamily,
    RampProtocol,
    SweepPoint,
    default_plan,
    field_of_t,
    log_overlap,
    run_ramp,
    sweep_grid,
    sweep_tau,
)
from spinchain.spectra import diagonalize, ground_manifold


class TestProtocol:

    def test_linear_endpoints(self):
        p = RampProtocol("linear-degen", amplitude=3.0, tau=10.0)
        assert field_of_t(p, 0.0) == pytest.approx(-3.0)
        assert field_of_t(p, 5.0) == pytest.approx(0.0)
        assert field_of_t(p, 10.0) == pytest.approx(3.0)

    def test_cosine_passes_centre_twice(self):
        p = RampProtocol("cosine-degen", amplitude=2.0, tau=8.0)
        assert field_of_t(p, 0.0) == pytest.approx(2.0)
        assert field_of_t(p, 2.0) == pytest.approx(0.0, abs=1e-12)
        assert field_of_t(p, 4.0) == pytest.approx(-2.0)
        assert field_of_t(p, 6.0) == pytest.approx(0.0, abs=1e-12)
        assert field_of_t(p, 8.0) == pytest.approx(2.0)

    def test_pxp_kinds_are_centred_on_lambda_c(self):
        p = RampProtocol("linear-pxp", amplitude=1.0, tau=4.0, w=2.0)
        assert p.center == pytest.approx(2.0 * LAMBDA_C_RATIO)
        assert field_of_t(p, 2.0) == pytest.approx(p.center)

    def test_outside_window(self):
        p = RampProtocol("linear-degen", amplitude=1.0, tau=1.0)
        with pytest.raises(ValueError):
            field_of_t(p, 1.1)
        with pytest.raises(ValueError):
            field_of_t(p, -0.1)

    @pytest.mark.parametrize("kwargs", [
        {"kind": "quadratic", "amplitude": 1.0, "tau": 1.0},
        {"kind": "linear-degen", "amplitude": 1.0, "tau": 0.0},
        {"kind": "linear-degen", "amplitude": 1.0, "tau": 1.0, "t_start": 0.5, "t_end": 0.5},
        {"kind": "linear-degen", "amplitude": 1.0, "tau": 1.0, "t_end": 2.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RampProtocol(**kwargs)

    def test_family_fractions(self):
        p = RampFamily("linear-degen", 5.0, start_fraction=0.0, end_fraction=0.5).protocol(20.0)
        assert (p.t_start, p.t_end, p.tau) == (0.0, 10.0, 20.0)

    def test_default_plan_step(self):
        p = RampProtocol("linear-degen", amplitude=1.0, tau=10.0)
        assert default_plan(p, steps_per_tau=1000).dt == pytest.approx(0.01)


def test_log_overlap_clamps():
    assert log_overlap(0.0) == F_FLOOR
    assert log_overlap(1.0 + 1e-12) == 0.0
    assert log_overlap(math.exp(-2.0)) == pytest.approx(-2.0)


class TestRunRamp:

    def setup_method(self):
        self.model = degenerate_ramp_model(build_basis(4), V0=1.0)

    def test_starts_in_ground_state(self):
        p = RampProtocol("linear-degen", amplitude=2.0, tau=1.0)
        trace = run_ramp(self.model, p, n_samples=11)
        assert trace.F[0] == pytest.approx(0.0, abs=1e-10)
        assert trace.Q[0] == pytest.approx(0.0, abs=1e-10)
        assert np.all(trace.Q > -1e-8)
        assert np.all(trace.F < 1e-8)
        assert trace.t_over_tau[-1] == pytest.approx(1.0)

    def test_sudden_limit(self):
        p = RampProtocol("linear-degen", amplitude=2.0, tau=1e-5, t_end=0.5e-5)
        trace = run_ramp(self.model, p, n_samples=2, plan=default_plan(p, "direct-rk4", 200))
        start = diagonalize(self.model.hamiltonian(-2.0)).vectors[:, 0]
        h_end = self.model.hamiltonian(0.0)
        expected = float(np.real(np.vdot(start, h_end.apply(start))))
        assert trace.Q[-1] == pytest.approx(expected, abs=1e-6)

    def test_slow_ramp_leaves_less_energy(self):
        fast = RampProtocol("linear-degen", amplitude=2.0, tau=0.5, t_end=0.25)
        slow = RampProtocol("linear-degen", amplitude=2.0, tau=20.0, t_end=10.0)
        q_fast = run_ramp(self.model, fast, n_samples=2).Q[-1]
        q_slow = run_ramp(self.model, slow, n_samples=2).Q[-1]
        assert q_slow < q_fast

    def test_degenerate_end_is_flagged(self):
        p = RampProtocol("linear-degen", amplitude=2.0, tau=1.0, t_end=0.5)
        trace = run_ramp(self.model, p, n_samples=3)
        assert list(trace.degenerate) == [False, False, True]
        assert trace.E_G[-1] == pytest.approx(0.0, abs=1e-12)

    def test_engines_agree(self):
        p = RampProtocol("cosine-degen", amplitude=1.0, tau=2.0)
        traces = [
            run_ramp(self.model, p, n_samples=5, plan=default_plan(p, method, 4000))
            for method in ("eigenbasis-ode", "direct-rk4", "eigen-exponential")
        ]
        for other in traces[1:]:
            assert np.allclose(traces[0].Q, other.Q, atol=1e-6)
            assert np.allclose(traces[0].F, other.F, atol=1e-6)

    def test_needs_two_samples(self):
        p = RampProtocol("linear-degen", amplitude=1.0, tau=1.0)
        with pytest.raises(ValueError):
            run_ramp(self.model, p, n_samples=1)

    def test_pxp_ramp(self):
        model = pxp_ramp_model(enumerate_blockaded(build_basis(6)), w=1.0)
        p = RampProtocol("linear-pxp", amplitude=1.0, tau=2.0)
        trace = run_ramp(model, p, n_samples=4)
        assert trace.F[0] == pytest.approx(0.0, abs=1e-10)
        assert trace.E_G.shape == (4,)
        e0, _ = ground_manifold(diagonalize(model.hamiltonian(LAMBDA_C_RATIO + 1.0)))
        assert trace.E_G[-1] == pytest.approx(e0)

    def test_adiabatic_pxp_ramp_on_gapped_path(self):
        # lambda runs from 1.69 w to 3.69 w, far on the paramagnetic side of lambda_c
        model = pxp_ramp_model(enumerate_blockaded(build_basis(4)), w=1.0)
        p = RampProtocol("linear-pxp", amplitude=5.0, tau=400.0, t_start=320.0)
        trace = run_ramp(model, p, n_samples=3)
        assert not trace.degenerate.any()
        assert math.exp(trace.F[-1]) > 0.999


class TestSweep:

    def setup_method(self):
        self.model = degenerate_ramp_model(build_basis(3), V0=1.0)
        self.family = RampFamily("linear-degen", 1.0, end_fraction=0.5)

    def test_order_and_workers(self):
        taus = [0.5, 1.0, 2.0]
        serial = sweep_tau(self.model, self.family, taus, steps_per_tau=500)
        threaded = sweep_tau(self.model, self.family, taus, steps_per_tau=500, workers=3)
        assert [pt.tau for pt in serial] == taus
        assert [pt.Q for pt in serial] == pytest.approx([pt.Q for pt in threaded], abs=1e-12)
        assert all(pt.status == "ok" for pt in serial)

    def test_reuses_done_points(self):
        seen = []
        cached = SweepPoint(1.0, 0.123, -0.5)
        points = sweep_tau(self.model, self.family, [0.5, 1.0], steps_per_tau=500,
                           done={1.0: cached}, on_point=seen.append)
        assert points[1] is cached
        assert [pt.tau for pt in seen] == [0.5]

    def test_failure_is_recorded(self, monkeypatch):
        real = ramp.run_ramp

        def flaky(model, p, n_samples, plan):
            if p.tau == 2.0:
                raise IntegrationError("no convergence", 1e-3)
            return real(model, p, n_samples, plan)

        monkeypatch.setattr(ramp, "run_ramp", flaky)
        points = sweep_tau(self.model, self.family, [1.0, 2.0], steps_per_tau=500)
        assert points[0].status == "ok"
        assert points[1].status == "failed"
        assert math.isnan(points[1].Q)
        assert points[1].max_drift == 1e-3

    def test_norm_drift_marks_point(self):
        points = sweep_tau(self.model, self.family, [1.0, 2.0], method="direct-rk4", steps_per_tau=2)
        assert [pt.status for pt in points] == ["drift", "drift"]
        assert all(pt.max_drift > 1e-6 for pt in points)
        assert all(math.isfinite(pt.Q) for pt in points)
        assert "norm drift" in points[0].message

    @pytest.mark.parametrize("taus", [[], [2.0, 1.0], [0.0, 1.0]])
    def test_rejects_bad_taus(self, taus):
        with pytest.raises(ValueError):
            sweep_tau(self.model, self.family, taus)


def test_sweep_grid():
    grid = sweep_grid(0.01, 100.0, 5)
    assert grid == pytest.approx([0.01, 0.1, 1.0, 10.0, 100.0])
    assert sweep_grid(3.0, 9.0, 1) == [3.0]


@pytest.mark.slow
class TestHalfRampRegimes:
    """Half ramp onto the degenerate point at h0/V0 = 5, L = 6."""

    def setup_method(self):
        self.model = degenerate_ramp_model(build_basis(6), V0=1.0)
        self.family = RampFamily("linear-degen", 5.0, end_fraction=0.5)

    def test_slow_ramps_follow_landau_zener(self):
        points = sweep_tau(self.model, self.family, np.logspace(2, 3, 6), workers=3)
        assert all(pt.status == "ok" for pt in points)
        fit = fit_powerlaw([pt.tau for pt in points], [pt.Q for pt in points])
        assert fit.b == pytest.approx(2.0, abs=0.2)

    def test_fast_ramps_plateau(self):
        points = sweep_tau(self.model, self.family, np.logspace(-4, -3, 5))
        Q = np.array([pt.Q for pt in points])
        assert np.ptp(Q) / Q.mean() < 0.05
