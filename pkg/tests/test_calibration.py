import math

import numpy as np
import pytest
from scipy import integrate, stats

from rlskf.calibration import (
    StepGeometry,
    ao_geometry,
    calibrate_b_efficiency,
    calibrate_b_radius,
    calibrate_policies,
    clipped_moments,
    efficiency_loss,
    io_geometry,
    least_favorable_radius,
    steady_state_geometry,
)
from rlskf.errors import DomainError, Infeasible
from rlskf.kalman import steady_state_predict
from rlskf.model import ModelSpec
from rlskf.numerics import RngStream

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def scalar_geometry(sigma2=1.0, trace_cond=0.6, sigma_pred=1.6, v=1.0):
    s_joint = np.array([[sigma_pred, sigma_pred], [sigma_pred, sigma_pred + v]])
    return StepGeometry(
        s_corr=np.array([[sigma2]]), s_joint=s_joint, trace_cond=trace_cond, p=1
    )


class TestClippedMoments:
    def test_b_zero_scalar(self):
        # m1 = E|Z| from numeric integration; m2 = E Z^2 = 1 exactly
        oracle_m1, _ = integrate.quad(lambda z: abs(z) * stats.norm.pdf(z), -np.inf, np.inf)
        out = clipped_moments(np.array([[1.0]]), 0.0)
        assert out.m1 == pytest.approx(oracle_m1, abs=1e-10)
        assert out.m1 == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-10)
        assert out.m2 == pytest.approx(1.0, abs=1e-10)

    def test_b_infinite(self):
        out = clipped_moments(np.array([[2.0]]), math.inf)
        assert out.m1 == 0.0
        assert out.m2 == 0.0

    def test_scalar_closed_form_matches_quadrature(self):
        # integrate on [b/sigma, inf) where the excess is smooth, using the
        # symmetry of |Z|
        sigma = 1.7
        for b in (0.3, 1.0, 2.5):
            c = b / sigma
            m1_oracle, _ = integrate.quad(
                lambda z: 2.0 * (sigma * z - b) * stats.norm.pdf(z), c, np.inf,
                epsabs=1e-13, epsrel=1e-13,
            )
            m2_oracle, _ = integrate.quad(
                lambda z: 2.0 * (sigma * z - b) ** 2 * stats.norm.pdf(z), c, np.inf,
                epsabs=1e-13, epsrel=1e-13,
            )
            out = clipped_moments(np.array([[sigma**2]]), b)
            assert out.m1 == pytest.approx(m1_oracle, abs=1e-10)
            assert out.m2 == pytest.approx(m2_oracle, abs=1e-10)

    def test_isotropic_2d_mc_vs_chi_quadrature(self):
        # ||N(0, I_2)|| follows the 2-dof chi distribution with pdf x exp(-x^2/2)
        b = 1.0
        m1_oracle, _ = integrate.quad(lambda x: (x - b) * x * np.exp(-(x**2) / 2.0), b, 40)
        out = clipped_moments(np.eye(2), b, method="monte-carlo", n=10**6, stream=RngStream(5))
        assert abs(out.m1 - m1_oracle) < 3 * out.m1_se

    def test_monotone_and_continuous_in_b(self):
        grid = np.linspace(0.0, 4.0, 41)
        m1s = [clipped_moments(np.array([[1.3]]), b).m1 for b in grid]
        m2s = [clipped_moments(np.array([[1.3]]), b).m2 for b in grid]
        assert all(a >= b for a, b in zip(m1s, m1s[1:]))
        assert all(a >= b for a, b in zip(m2s, m2s[1:]))
        assert max(abs(np.diff(m1s))) < 0.15  # no jumps on a 0.1-spaced grid

    def test_negative_b_rejected(self):
        with pytest.raises(DomainError):
            clipped_moments(np.eye(1), -0.5)


class TestCalibrateBRadius:
    def test_large_radius_small_b(self):
        geom = scalar_geometry(sigma2=1.0)
        b = calibrate_b_radius(geom, 0.999)
        assert b < 1e-2

    def test_small_radius_large_b(self):
        geom = scalar_geometry(sigma2=1.0)
        b = calibrate_b_radius(geom, 1e-6)
        assert b > 4.0

    def test_self_consistency(self):
        geom = scalar_geometry(sigma2=1.0)
        b = calibrate_b_radius(geom, 0.1)
        residual = 0.9 * clipped_moments(geom.s_corr, b).m1 - 0.1 * b
        assert abs(residual) < 1e-8

    def test_strictly_decreasing_in_r(self):
        geom = scalar_geometry(sigma2=2.3)
        rs = np.arange(0.05, 0.96, 0.05)
        bs = [calibrate_b_radius(geom, r) for r in rs]
        assert all(a > b for a, b in zip(bs, bs[1:]))

    def test_scale_equivariance(self):
        b1 = calibrate_b_radius(scalar_geometry(sigma2=1.0), 0.2)
        b2 = calibrate_b_radius(scalar_geometry(sigma2=4.0), 0.2)
        assert b2 == pytest.approx(2.0 * b1, rel=1e-9)

    def test_degenerate_geometry(self):
        assert calibrate_b_radius(scalar_geometry(sigma2=0.0), 0.1) == 0.0

    def test_monte_carlo_path_close_to_exact(self):
        geom = scalar_geometry(sigma2=1.0)
        b_exact = calibrate_b_radius(geom, 0.1)
        b_mc = calibrate_b_radius(geom, 0.1, method="monte-carlo", n=200_000,
                                  stream=RngStream(12))
        assert b_mc == pytest.approx(b_exact, rel=0.02)


class TestCalibrateBEfficiency:
    def test_infinite_b_ratio_is_one(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        assert efficiency_loss(geom, math.inf, n=50_000, stream=RngStream(3)) == 1.0

    def test_loss_decreasing_in_b(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        stream = RngStream(4)
        losses = [efficiency_loss(geom, b, n=100_000, stream=stream) for b in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_delta_limit_b_grows(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        b_small_delta = calibrate_b_efficiency(geom, 1e-3)
        b_large_delta = calibrate_b_efficiency(geom, 0.3)
        assert b_small_delta > b_large_delta
        assert b_small_delta > 2.5  # analytic root is ~3.1; MC tail noise at n=1e5

    def test_independent_mc_verification(self):
        # solve at delta = 0.1 (large n: the verification band is tight),
        # then verify the ratio on an independent run
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        b = calibrate_b_efficiency(geom, 0.1, n=4_000_000, stream=RngStream(31))
        # analytic cross-check: under linearity the criterion reduces to
        # m2(b) = delta * trace_cond
        m2 = clipped_moments(geom.s_corr, b).m2
        assert m2 == pytest.approx(0.1 * geom.trace_cond, rel=0.02)
        ratio = efficiency_loss(geom, b, n=10**6, stream=RngStream(777))
        assert ratio == pytest.approx(1.1, abs=0.005)

    def test_infeasible_delta(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        # at b -> 0 the loss tops out at E||dX||^2 / trace_cond = 1.618/0.618
        with pytest.raises(Infeasible):
            calibrate_b_efficiency(geom, 5.0)


class TestLeastFavorableRadius:
    def test_degenerate_interval(self):
        geom = scalar_geometry()
        r0 = least_favorable_radius(geom, 0.3, 0.3 + 1e-9)
        assert r0 == pytest.approx(0.3, abs=1e-6)

    def test_self_consistency(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        r_l, r_u = 0.01, 0.5
        r0 = least_favorable_radius(geom, r_l, r_u)
        assert r_l <= r0 <= r_u

        def a_of(r):
            b = calibrate_b_radius(geom, r)
            return geom.trace_cond + clipped_moments(geom.s_corr, b).m2

        def b_of(r):
            b = calibrate_b_radius(geom, r)
            return geom.s_corr[0, 0] - clipped_moments(geom.s_corr, b).m2 + b * b

        resid = a_of(r0) / a_of(r_l) - b_of(r0) / b_of(r_u)
        assert abs(resid) < 1e-6

    def test_curve_monotonicity(self):
        geom = steady_state_geometry(ModelSpec.steady_state(), "ao")
        rs = np.linspace(0.02, 0.9, 15)
        a_vals, b_vals = [], []
        for r in rs:
            b = calibrate_b_radius(geom, r)
            m2 = clipped_moments(geom.s_corr, b).m2
            a_vals.append(geom.trace_cond + m2)
            b_vals.append(geom.s_corr[0, 0] - m2 + b * b)
        assert all(x <= y + 1e-12 for x, y in zip(a_vals, a_vals[1:]))
        assert all(x >= y - 1e-12 for x, y in zip(b_vals, b_vals[1:]))


class TestGeometries:
    def test_trace_cond_equals_filtered_covariance(self):
        m = ModelSpec.steady_state()
        state = steady_state_predict(m)
        geom = ao_geometry(state, m)
        assert geom.trace_cond == pytest.approx(state.sigma_filt[0, 0], abs=1e-12)
        assert geom.trace_cond == pytest.approx(GOLDEN - 1.0, abs=1e-9)

    def test_ao_s_corr_at_fixed_point(self):
        m = ModelSpec.steady_state()
        geom = steady_state_geometry(m, "ao")
        # M^2 Delta = (golden/ (golden+1))^2 (golden+1) = golden^2/(golden+1) = 1
        assert geom.s_corr[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_gain_recovered_from_joint(self):
        m = ModelSpec.steady_state()
        state = steady_state_predict(m)
        geom = io_geometry(state, m)
        assert geom.gain()[0, 0] == pytest.approx(state.gain[0, 0], abs=1e-12)


class TestCalibratePolicies:
    def test_per_step_converges_to_steady_state(self):
        m = ModelSpec.steady_state()
        ao_pol, io_pol = calibrate_policies(m, 40)
        ao_fixed, io_fixed = calibrate_policies(m, 40, mode="steady-state")
        assert ao_pol.height_at(40) == pytest.approx(ao_fixed.height_at(1), abs=1e-6)
        assert io_pol.height_at(40) == pytest.approx(io_fixed.height_at(1), abs=1e-6)

    def test_heights_positive_and_track_scaled(self):
        m = ModelSpec.steady_state()
        ao_pol, io_pol = calibrate_policies(m, 10)
        for t in range(1, 11):
            assert ao_pol.height_at(t) > io_pol.height_at(t) > 0.0
