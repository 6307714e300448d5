import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erf, gammainc

from heatuniq.kernel import (BallIndicator, Constant, Gaussian, GaussianProfile, InitialData,
                             L1RadialTable, PlateauProfile, SolutionHandle, SpikeSpec, TableProfile,
                             Zero, ball_gaussian_mass, ball_gaussian_mass_radial, evolve_axial,
                             evolve_point, heat_kernel, linf_envelope, log_angular,
                             log_angular_bessel, log_shell_convolution, ln_unit_ball_volume,
                             radial_fdm_solve, spike_contribution)
from heatuniq.logscalar import LogScalar
from heatuniq.quadrature import QuadratureError


class TestHeatKernel:
    def test_normalisation(self):
        assert heat_kernel(1, 0.0, 1 / (4 * math.pi)).ln == pytest.approx(0.0, abs=1e-15)

    def test_substitution(self):
        assert heat_kernel(3, 4.0, 1.0).ln == pytest.approx(-1.5 * math.log(4 * math.pi) - 1.0)

    def test_nonpositive_time(self):
        with pytest.raises(ValueError):
            heat_kernel(2, 1.0, 0.0)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
    def test_unit_mass(self, n, t):
        # the ball must be large enough that the Gaussian tail is below 1e-12
        rho = 20.0 * math.sqrt(t)
        assert ball_gaussian_mass(n, 0.0, rho, t).to_real() == pytest.approx(1.0, abs=1e-8)


def three_d_ball_mass(d, rho, t):
    """Closed 1D form of the n = 3 kernel mass of B(p, rho) seen from distance d."""
    c = 1.0 / (d * math.sqrt(4 * math.pi * t))
    f = lambda s: c * s * (math.exp(-(d - s) ** 2 / (4 * t)) - math.exp(-(d + s) ** 2 / (4 * t)))
    pts = [min(max(d, 0.0), rho)]
    val, _ = integrate.quad(f, 0.0, rho, points=pts, epsabs=0, epsrel=1e-13, limit=200)
    return val


class TestBallMass:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    @pytest.mark.parametrize("rho, t", [(1.0, 0.1), (0.3, 1.0), (2.0, 0.01), (1e-3, 1e-8)])
    def test_centred_matches_incomplete_gamma(self, n, rho, t):
        exact = gammainc(n / 2, rho * rho / (4 * t))
        assert ball_gaussian_mass(n, 0.0, rho, t).to_real() == pytest.approx(exact, rel=1e-8)

    def test_one_dimensional_erf(self):
        rho, t = 0.7, 0.2
        assert ball_gaussian_mass(1, 0.0, rho, t).to_real() == pytest.approx(erf(rho / (2 * math.sqrt(t))))

    @pytest.mark.parametrize("d, rho, t", [(0.5, 1.0, 0.1), (2.0, 1.0, 0.1), (1.0, 1.0, 1e-3),
                                           (5.0, 0.2, 0.5), (0.01, 0.3, 0.02)])
    def test_off_centre_three_d(self, d, rho, t):
        assert ball_gaussian_mass(3, d, rho, t).to_real() == pytest.approx(three_d_ball_mass(d, rho, t), rel=1e-8)

    def test_far_upper_bound(self):
        rho, t = 0.5, 0.01
        d = rho + 10 * math.sqrt(t)
        assert ball_gaussian_mass(3, d, rho, t).ln <= -(d - rho) ** 2 / (4 * t)

    def test_deep_tail_in_log_domain(self):
        # e**-2500 is far below double range; mpmath confirms the log value
        d, rho, t, n = 11.0, 1.0, 0.01, 3
        got = ball_gaussian_mass(n, d, rho, t).ln
        with mpmath.workdps(40):
            c = 1 / (d * mpmath.sqrt(4 * mpmath.pi * t))
            ref = mpmath.quad(lambda s: c * s * (mpmath.e ** (-(d - s) ** 2 / (4 * t))
                                                 - mpmath.e ** (-(d + s) ** 2 / (4 * t))), mpmath.linspace(0, 1, 200))
            assert got == pytest.approx(float(mpmath.log(ref)), abs=1e-8)

    @pytest.mark.parametrize("n", [1, 2, 3, 6])
    @pytest.mark.parametrize("t", [1e-4, 0.05, 3.0])
    def test_shell_and_radial_agree(self, n, t):
        shell = float(log_shell_convolution(PlateauProfile(0.8, 0.8), n, [0.0], t)[0])
        radial = ball_gaussian_mass_radial(n, 0.8, t).ln
        assert abs(math.expm1(shell - radial)) <= 1e-8

    def test_large_ball_total_mass(self):
        assert ball_gaussian_mass(2, 0.3, 50.0, 1.0).to_real() == pytest.approx(1.0, abs=1e-10)


class TestAngular:
    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
    def test_bessel_matches_quadrature(self, n):
        kappa = np.concatenate([[0.0, 1e-9, 1e-7], np.logspace(-5, 8, 60)])
        q = log_angular(n, kappa)
        b = log_angular_bessel(n, kappa)
        assert np.max(np.abs(q - b)) < 1e-7

    def test_huge_kappa_asymptotics(self):
        # sigma_{n-2} int exp(-kappa(1-cos)) sin^{n-2} -> sigma_{n-2} Gamma((n-1)/2) 2^{(n-3)/2} kappa^{-(n-1)/2}
        kappa = np.array([1e10, 1e14])
        for n in (3, 4, 5):
            b = log_angular_bessel(n, kappa)
            from heatuniq.kernel import ln_sphere_area
            from scipy.special import gammaln
            lead = (ln_sphere_area(n - 1) + gammaln((n - 1) / 2) + (n - 3) / 2 * math.log(2)
                    - (n - 1) / 2 * np.log(kappa))
            assert np.all(np.abs(b - lead) < 1e-9)

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_zero_kappa_is_sphere_area(self, n):
        from heatuniq.kernel import ln_sphere_area
        want = ln_sphere_area(n)
        assert float(log_angular_bessel(n, np.array([0.0]))[0]) == pytest.approx(want, abs=1e-14)


class TestProfiles:
    def test_plateau_mass(self):
        p = PlateauProfile(0.5, 0.5, math.log(3.0))
        assert p.ln_l1(3) == pytest.approx(math.log(3.0) + ln_unit_ball_volume(3) + 3 * math.log(0.5))

    def test_plateau_ramp_mass_against_scipy(self):
        p = PlateauProfile(0.2, 0.7)
        f = lambda s: 4 * math.pi * s * s * math.exp(float(p.log_value(np.array([s]))[0]))
        val, _ = integrate.quad(f, 0, 0.7, points=[0.2], epsrel=1e-13)
        assert math.exp(p.ln_l1(3)) == pytest.approx(val, rel=1e-12)

    def test_gaussian_mass(self):
        g = GaussianProfile(0.0, 2.0)
        assert g.ln_l1(2) == pytest.approx(math.log(2 * math.pi * 4.0))

    def test_table_mass(self):
        tab = TableProfile((0.0, 1.0, 2.0), (1.0, 1.0, 0.0))
        f = lambda s: 4 * math.pi * s * s * np.interp(s, [0, 1, 2], [1, 1, 0])
        val, _ = integrate.quad(f, 0, 2, points=[1.0])
        assert math.exp(tab.ln_l1(3)) == pytest.approx(val, rel=1e-12)

    @pytest.mark.parametrize("bad", [lambda: PlateauProfile(0.5, 0.2), lambda: GaussianProfile(0.0, -1.0),
                                     lambda: TableProfile((0.1, 1.0), (1.0, 0.0))])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            bad()


class TestEvolve:
    def test_constant_base(self):
        sol = SolutionHandle(InitialData(3, Constant(2.5)))
        for t in (1e-6, 0.3, 1.0):
            assert evolve_point(sol, [1.0, -2.0, 0.5], t).to_real() == pytest.approx(2.5, rel=1e-14)

    def test_zero_data(self):
        sol = SolutionHandle(InitialData(2, Zero()))
        assert evolve_point(sol, [0.0, 0.0], 0.5).sign == 0

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_gaussian_closed_form_100_points(self, n):
        base = Gaussian(1.7, 0.8)
        sol = SolutionHandle(InitialData(n, base))
        rng = np.random.default_rng(n)
        z = rng.uniform(-4, 4, 100)
        rho = np.abs(rng.uniform(0, 3, 100)) if n > 1 else np.zeros(100)
        t = np.exp(rng.uniform(math.log(1e-3), 0, 100))
        ln, sg = evolve_axial(sol, z, rho, t)
        exact = base.closed_form(n, np.hypot(z, rho), t)
        assert np.all(sg == 1)
        assert np.max(np.abs(np.expm1(ln - np.log(exact)))) <= 1e-6

    def test_ball_indicator_small_time(self):
        rho, h = 0.5, 3.0
        sol = SolutionHandle(InitialData(3, BallIndicator(rho, h)))
        assert evolve_point(sol, [0, 0, 0], 1e-6 * rho * rho).to_real() == pytest.approx(h, rel=1e-3)

    def test_time_must_be_positive(self):
        sol = SolutionHandle(InitialData(3, Gaussian(1, 1)))
        with pytest.raises(ValueError):
            evolve_point(sol, [0, 0, 0], 0.0)

    def test_point_dimension_checked(self):
        sol = SolutionHandle(InitialData(3, Gaussian(1, 1)))
        with pytest.raises(ValueError):
            evolve_point(sol, [0, 0], 0.5)

    def test_negative_spike_cancels_base(self):
        sp = SpikeSpec(2.0, 0.1, 0.2, LogScalar(-1, 0.0))
        sol = SolutionHandle(InitialData(3, Constant(1.0), (sp,)))
        u = evolve_point(sol, [2.0, 0, 0], 1e-7)
        assert u.sign == 0 or abs(u.to_real()) < 1e-6


data_strategy = st.builds(
    lambda n, amp, sig, rho, h: InitialData(n, Gaussian(amp, sig)) if rho is None
    else InitialData(n, BallIndicator(rho, h)),
    st.integers(1, 4), st.floats(0.1, 5), st.floats(0.2, 2),
    st.one_of(st.none(), st.floats(0.1, 2)), st.floats(0.1, 5))


@settings(max_examples=40, deadline=None)
@given(data_strategy, st.floats(-3, 3), st.floats(0, 3), st.floats(-6, 0))
def test_positivity_envelope_and_maximum_principle(data, z, rho, log_t):
    sol = SolutionHandle(data)
    t = 10.0 ** log_t
    if data.n == 1:
        rho = 0.0
    ln, sg = evolve_axial(sol, [z], [rho], t)
    assert sg[0] >= 0
    if sg[0] == 0:
        return
    env = linf_envelope(sol, t)
    assert ln[0] <= env.ln + 1e-7
    assert ln[0] <= data.ln_sup() + 1e-7


class TestSpike:
    def test_zero_height(self):
        sp = SpikeSpec(1.0, 0.1, 0.2, LogScalar(0))
        assert spike_contribution(sp, 3, [1.0, 0, 0], 0.1).sign == 0

    def test_centre_plateau_limit_vs_incomplete_gamma(self):
        # a very short ramp: the value at the centre is h times the kernel mass
        # of B(0, inner) plus at most h times the mass of the thin annulus
        inner, outer, t = 0.3, 0.3 * (1 + 1e-9), 0.05
        sp = SpikeSpec(1.0, inner, outer, LogScalar(1, 2.0))
        got = spike_contribution(sp, 3, [1.0, 0, 0], t).ln
        assert got == pytest.approx(2.0 + math.log(gammainc(1.5, inner ** 2 / (4 * t))), abs=1e-8)

    @pytest.mark.parametrize("t", [1e-3, 1e-2, 1e-1, 1.0])
    def test_plateau_lower_bound(self, t):
        inner, h, n = 0.2, 5.0, 3
        sp = SpikeSpec(1.0, inner, 0.3, LogScalar.from_real(h))
        bound = (-1.5 * math.log(4 * math.pi * t) - (2 * inner) ** 2 / (4 * t) + math.log(h)
                 + ln_unit_ball_volume(n) + n * math.log(inner))
        for frac in (0.0, 0.5, 0.99):
            x = [1.0 + frac * inner, 0.0, 0.0]
            assert spike_contribution(sp, n, x, t).ln >= bound

    def test_overlapping_spikes_rejected(self):
        a = SpikeSpec(1.0, 0.1, 0.3, LogScalar(1, 0.0))
        b = SpikeSpec(1.4, 0.1, 0.3, LogScalar(1, 0.0))
        with pytest.raises(ValueError):
            InitialData(3, Zero(), (a, b))


class TestEnvelope:
    def test_unit_mass_n2(self):
        rho = 0.5
        data = InitialData(2, BallIndicator(rho, 1.0 / (math.pi * rho * rho)))
        env = linf_envelope(SolutionHandle(data), 1 / (4 * math.pi))
        assert env.ln == pytest.approx(0.0, abs=1e-12)

    def test_not_applicable_for_constant(self):
        assert linf_envelope(SolutionHandle(InitialData(3, Constant(1.0))), 1.0) is None

    def test_table_base_l1(self):
        data = InitialData(3, L1RadialTable((0.0, 1.0), (2.0, 0.0)))
        # cone of height 2 over the unit ball: 4 pi * 2 * int (1 - s) s**2 ds = 8 pi / 12
        assert math.exp(data.ln_l1()) == pytest.approx(8 * math.pi / 12, rel=1e-12)


class TestFDM:
    def test_gaussian_closed_form(self):
        g = Gaussian(1.0, 0.5)
        T = 0.1
        res = radial_fdm_solve(g, 3, 5.0, 1e-3, T / 600_000, T)
        r = res.r[:3000]
        exact = g.closed_form(3, r, T)
        assert np.max(np.abs(res.snapshots[-1][:3000] - exact) / exact) <= 1e-3
        assert res.mass_drift < 1e-6

    def test_zero_profile(self):
        res = radial_fdm_solve(Zero(), 3, 2.0, 0.01, 1e-5, 0.01)
        assert np.all(res.snapshots[-1] == 0)

    def test_ball_indicator_vs_convolution(self):
        base = BallIndicator(1.0, 1.0)
        times = [0.05, 0.1, 0.5, 1.0]
        dr = 0.005
        res = radial_fdm_solve(base, 3, 10.0, dr, 0.05 / 12_000, times)
        sol = SolutionHandle(InitialData(3, base))
        for k, t in enumerate(times):
            for r in (0.0, 0.5, 1.0, 1.5, 2.0):
                u = evolve_point(sol, [r, 0, 0], t).to_real()
                assert abs(res.at(r, k) - u) <= 1e-3 * u
        assert res.mass_drift < 1e-6

    def test_stability_precondition(self):
        with pytest.raises(ValueError):
            radial_fdm_solve(Gaussian(1, 1), 3, 5.0, 0.01, 1e-4, 0.1)

    def test_boundary_contact_detected(self):
        with pytest.raises(ValueError):
            radial_fdm_solve(Gaussian(1, 1), 3, 2.0, 0.01, 1e-5, 1.0)

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_mass_conservation_other_dimensions(self, n):
        res = radial_fdm_solve(BallIndicator(0.5, 1.0), n, 6.0, 0.01, 0.01 / 800, [0.01, 0.1])
        assert res.mass_drift < 1e-6
