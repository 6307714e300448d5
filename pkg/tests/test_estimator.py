import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammainc

from heatuniq.estimator import (Region, class_membership, envelope_integral_bound,
                                envelope_samples, linf_envelope_fn, lp_spacetime_norm,
                                membership_ceiling, patch_spacetime_integral,
                                pointwise_envelope_check, reports_to_csv, scaled_envelope,
                                spacetime_integrals, spatial_integral, weighted_spacetime_l2)
from heatuniq.growth import Constant as ConstantGrowth
from heatuniq.growth import Power
from heatuniq.kernel import (Constant, Gaussian, InitialData, SolutionHandle, SpikeSpec, Zero,
                             ln_unit_ball_volume)
from heatuniq.logscalar import LogScalar
from heatuniq.spikes import SpikedConfig, build_example, spike_radii


def gaussian_ball_l2(A, sigma, n, R, t):
    """int_{B(0,R)} u(x,t)**2 for Gaussian data, closed form in t."""
    s2 = sigma ** 2 + 2 * t
    return A * A * (sigma ** 2 / s2) ** n * (math.pi * s2) ** (n / 2) * gammainc(n / 2, R * R / s2)


def gaussian_weighted(A, sigma, n, R, a):
    val, _ = integrate.quad(lambda t: t ** a * gaussian_ball_l2(A, sigma, n, R, t), 0, 1,
                            epsabs=0, epsrel=1e-13)
    return val


@pytest.fixture(scope="module")
def spiked():
    return SolutionHandle(build_example(SpikedConfig(n=3, i_max=1)))


class TestZero:
    def test_zero_weighted(self):
        rep = weighted_spacetime_l2(SolutionHandle(InitialData(3, Zero())), 1.0, 2.0)
        assert rep.value.sign == 0 and rep.ln_value == -math.inf

    def test_zero_lp(self):
        rep = lp_spacetime_norm(SolutionHandle(InitialData(3, Zero())), 0.5, 2.0)
        assert rep.value.sign == 0 and rep.norm.sign == 0

    def test_zero_inside_every_class(self):
        sol = SolutionHandle(InitialData(3, Zero()))
        reps = class_membership(sol, 1.0, Power(1.0, 2.0), [0.5, 1.0, 4.0])
        assert all(r.inside for r in reps)

    def test_zero_no_envelope_violations(self):
        sol = SolutionHandle(InitialData(3, Zero()))
        chk = pointwise_envelope_check(sol, linf_envelope_fn(sol), envelope_samples(sol, 20, 1))
        assert chk.ok


class TestGaussian:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_whole_space_proxy(self, n):
        A, sigma, R = 1.3, 0.6, 12.0
        rep = weighted_spacetime_l2(SolutionHandle(InitialData(n, Gaussian(A, sigma))), 1.0, R)
        exact = gaussian_weighted(A, sigma, n, R, 1.0)
        assert abs(math.expm1(rep.ln_value - math.log(exact))) <= 1e-4
        assert rep.error >= 0

    @pytest.mark.parametrize("R", [0.3, 1.0, 2.5])
    def test_finite_ball(self, R):
        A, sigma, n = 2.0, 1.0, 3
        rep = weighted_spacetime_l2(SolutionHandle(InitialData(n, Gaussian(A, sigma))), 0.5, R)
        exact = gaussian_weighted(A, sigma, n, R, 0.5)
        assert abs(math.expm1(rep.ln_value - math.log(exact))) <= 1e-6

    @pytest.mark.parametrize("t", [1e-4, 0.1, 1.0])
    def test_spatial_integral(self, t):
        A, sigma, n, R = 1.0, 0.5, 3, 1.2
        rep = spatial_integral(SolutionHandle(InitialData(n, Gaussian(A, sigma))), R, t)
        exact = gaussian_ball_l2(A, sigma, n, R, t)
        assert abs(math.expm1(rep.value.ln - math.log(exact))) <= 1e-8

    def test_lp_one_is_mass_integral(self):
        A, sigma, n, R = 1.0, 0.7, 2, 1.5
        rep = lp_spacetime_norm(SolutionHandle(InitialData(n, Gaussian(A, sigma))), 1.0, R)

        def mass(t):
            s2 = sigma ** 2 + 2 * t
            return A * (2 * math.pi * sigma ** 2) ** (n / 2) * gammainc(n / 2, R * R / (2 * s2))

        exact, _ = integrate.quad(mass, 0, 1, epsrel=1e-13)
        assert rep.norm.to_real() == pytest.approx(exact, rel=1e-7)


class TestConstant:
    @pytest.mark.parametrize("n, R", [(1, 2.0), (3, 1.0), (3, 2.5)])
    def test_lp_one(self, n, R):
        c = 1.7
        rep = lp_spacetime_norm(SolutionHandle(InitialData(n, Constant(c))), 1.0, R)
        assert rep.norm.ln == pytest.approx(math.log(c) + ln_unit_ball_volume(n) + n * math.log(R), abs=1e-10)

    def test_lp_half_norm(self):
        c, n, R, p = 4.0, 3, 1.0, 0.5
        rep = lp_spacetime_norm(SolutionHandle(InitialData(n, Constant(c))), p, R)
        integral = c ** p * math.exp(ln_unit_ball_volume(n))
        assert rep.ln_value == pytest.approx(math.log(integral), abs=1e-10)
        assert rep.norm.ln == pytest.approx(math.log(integral) / p, abs=1e-10)

    def test_lp_range(self):
        with pytest.raises(ValueError):
            lp_spacetime_norm(SolutionHandle(InitialData(3, Constant(1.0))), 1.5, 1.0)


def spiked_minorant(a, i=1, n=3):
    """int_0^1 t**a (omega rt**n / 4 i**4) (4 pi t)**-n exp(-2 rt**2 / t) dt."""
    with mpmath.workdps(30):
        rt = mpmath.e ** mpmath.mpf(spike_radii(n, i)[1])
        w = mpmath.e ** mpmath.mpf(ln_unit_ball_volume(n))
        f = lambda t: t ** a * (4 * mpmath.pi * t) ** (-n) * mpmath.e ** (-2 * rt * rt / t)
        return float(mpmath.log(w * rt ** n / (4 * mpmath.mpf(i) ** 4) * mpmath.quad(f, [0, 2 * rt * rt, 1])))


def spiked_l1_minorant(i=1, n=3):
    with mpmath.workdps(30):
        rt = mpmath.e ** mpmath.mpf(spike_radii(n, i)[1])
        w = mpmath.e ** mpmath.mpf(ln_unit_ball_volume(n))
        f = lambda t: (4 * mpmath.pi * t) ** (-mpmath.mpf(n) / 2) * mpmath.e ** (-rt * rt / t)
        return float(mpmath.log(w * rt ** n / (2 * mpmath.mpf(i) ** 2) * mpmath.quad(f, [0, rt * rt, 1])))


class TestSpiked:
    def test_weighted_above_minorant(self, spiked):
        rep = weighted_spacetime_l2(spiked, 2.0, 2.5)
        assert rep.ln_value >= spiked_minorant(2.0)

    def test_l1_above_minorant(self, spiked):
        rep = lp_spacetime_norm(spiked, 1.0, 2.0)
        assert rep.norm.ln >= spiked_l1_minorant()

    def test_patch_brackets(self, spiked):
        rep = patch_spacetime_integral(spiked, 0, a=2.0)
        assert spiked_minorant(2.0) <= rep.ln_value
        assert rep.ln_upper <= envelope_integral_bound(spiked, 2.0)

    def test_monotone_in_radius(self, spiked):
        radii = [0.5, 1.0, 1.2, 1.9, 2.5, 3.0]
        reps = spacetime_integrals(spiked, [Region("ball", r) for r in radii], a=1.0)
        vals = [r.ln_value for r in reps]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_cut_patch_is_reported(self, spiked):
        # radius 1.5 slices through the first spike
        rep = weighted_spacetime_l2(spiked, 2.0, 1.5)
        assert rep.cut_patches == [0]
        assert rep.ln_upper > rep.ln_value

    def test_shrunk_envelope_violated_near_spike(self):
        sol = SolutionHandle(build_example(SpikedConfig(n=3, i_max=2)))
        env = linf_envelope_fn(sol)
        samples = envelope_samples(sol, 200, seed=3)
        assert pointwise_envelope_check(sol, env, samples).ok
        shrunk = pointwise_envelope_check(sol, scaled_envelope(env, 0.5), samples)
        assert shrunk.violations
        for v in shrunk.violations:
            assert abs(np.linalg.norm(np.array(v["x"]) - [2.5, 0, 0])) < 0.2
            assert v["t"] < 1e-2

    def test_membership_at_ceiling(self, spiked):
        C = membership_ceiling(spiked, 2.0)
        reps = class_membership(spiked, 2.0, ConstantGrowth(C), [1.5, 2.5])
        assert all(r.inside for r in reps)
        assert all(r.comparison["margin"] >= 0 for r in reps)


@pytest.fixture(scope="module")
def pair():
    lam = 3.5
    sp = lambda h: SpikeSpec(1.5, 0.05, 0.1, LogScalar(1, h))
    one = InitialData(3, Gaussian(1.0, 0.8), (sp(2.0),))
    big = InitialData(3, Gaussian(lam, 0.8), (sp(2.0 + math.log(lam)),))
    return lam, SolutionHandle(one), SolutionHandle(big)


class TestScaling:

    def test_weighted_quadratic(self, pair):
        lam, one, big = pair
        a, b = weighted_spacetime_l2(one, 1.0, 2.0), weighted_spacetime_l2(big, 1.0, 2.0)
        assert abs(math.expm1(b.ln_value - a.ln_value - 2 * math.log(lam))) <= 1e-8

    def test_lp_linear(self, pair):
        lam, one, big = pair
        a, b = lp_spacetime_norm(one, 0.5, 2.0), lp_spacetime_norm(big, 0.5, 2.0)
        assert abs(math.expm1(b.norm.ln - a.norm.ln - math.log(lam))) <= 1e-8


@settings(max_examples=8, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.3, 1.5), st.floats(0.0, 2.0), st.floats(0.2, 3.0))
def test_gaussian_property(A, sigma, a, R):
    rep = weighted_spacetime_l2(SolutionHandle(InitialData(3, Gaussian(A, sigma))), a, R)
    exact = gaussian_weighted(A, sigma, 3, R, a)
    assert abs(math.expm1(rep.ln_value - math.log(exact))) <= 1e-6
    assert rep.ln_value <= rep.ln_upper


class TestValidation:
    def test_radii_increasing(self, spiked):
        with pytest.raises(ValueError):
            class_membership(spiked, 2.0, ConstantGrowth(1.0), [2.0, 1.0])

    def test_no_comparison_without_growth(self, spiked):
        rep = weighted_spacetime_l2(SolutionHandle(InitialData(3, Gaussian(1, 1))), 1.0, 1.0)
        assert rep.comparison is None and rep.inside is None

    def test_ceiling_floor(self):
        # tiny data: the envelope bound is far below zero but the ceiling stays usable
        sol = SolutionHandle(InitialData(3, Gaussian(1e-6, 0.5)))
        assert membership_ceiling(sol, 2.0) == 1.0
        assert envelope_integral_bound(sol, 2.0) < 0


class TestEmitters:
    def test_json_and_csv(self):
        sol = SolutionHandle(InitialData(3, Gaussian(1.0, 1.0)))
        reps = class_membership(sol, 1.0, Power(1.0, 2.0), [1.0, 2.0])
        text = json.dumps([r.to_json() for r in reps], sort_keys=True, allow_nan=False)
        assert '"inside": true' in text
        csv = reports_to_csv(reps)
        lines = csv.split("\r\n")
        assert lines[0].startswith("region,radius,mode")
        assert len([ln for ln in lines if ln]) == 3
        assert lines[1].endswith(",inside")
