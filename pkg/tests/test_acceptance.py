"""The ten acceptance criteria, each at its stated tolerance and time budget.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from heatuniq.cli import main
from heatuniq.estimator import (Region, class_membership, envelope_samples, linf_envelope_fn,
                                membership_ceiling, pointwise_envelope_check, spacetime_integrals)
from heatuniq.growth import Constant as ConstantGrowth
from heatuniq.growth import (CONVERGENT, DIVERGENT, Power, PowerLog, classify_curvature,
                             classify_osgood)
from heatuniq.kernel import (BallIndicator, Gaussian, InitialData, SolutionHandle, Zero,
                             evolve_axial, evolve_point, heat_kernel, ln_sphere_area,
                             radial_fdm_solve)
from heatuniq.schedule import (NOT_VANISHING, VANISHING, ScheduleParams, build_schedule,
                               cutoff_constant, small_time_vanishing_probe, xi_eikonal_residual)
from heatuniq.spikes import SpikedConfig, build_example, integral_lower_bound


def test_criterion_1_kernel_mass(criterion):
    with criterion(1, "heat kernel has unit mass"):
        start = time.perf_counter()
        for n in (1, 2, 3):
            for t in (0.01, 0.1, 1.0):
                area = math.exp(ln_sphere_area(n))
                f = lambda r: area * r ** (n - 1) * heat_kernel(n, r * r, t).to_real()
                scale = math.sqrt(t)
                mass, _ = integrate.quad(f, 0, 60 * scale, points=[scale, 4 * scale], epsabs=1e-14,
                                         epsrel=1e-13, limit=200)
                assert abs(mass - 1.0) <= 1e-8, (n, t, mass)
        assert time.perf_counter() - start < 5


def test_criterion_2_gaussian_closed_form(criterion):
    with criterion(2, "convolution solver matches Gaussian evolution"):
        start = time.perf_counter()
        base = Gaussian(2.0, 0.6)
        sol = SolutionHandle(InitialData(3, base))
        rng = np.random.default_rng(2)
        z = rng.uniform(-3, 3, 100)
        rho = rng.uniform(0, 3, 100)
        t = np.exp(rng.uniform(math.log(1e-4), 0.0, 100))
        ln, sg = evolve_axial(sol, z, rho, t)
        exact = base.closed_form(3, np.hypot(z, rho), t)
        err = np.max(np.abs(np.expm1(ln - np.log(exact))))
        assert np.all(sg == 1)
        assert err <= 1e-6, err
        assert time.perf_counter() - start < 5


def test_criterion_3_fdm_cross_oracle(criterion):
    with criterion(3, "radial finite differences agree with the convolution"):
        start = time.perf_counter()
        base = BallIndicator(1.0, 1.0)
        times = [0.05, 0.1, 0.5, 1.0]
        dr = 0.005
        dt = 0.05 / math.ceil(0.05 / (dr * dr / 6))
        fdm = radial_fdm_solve(base, 3, 10.0, dr, dt, times)
        sol = SolutionHandle(InitialData(3, base))
        worst = 0.0
        for k, t in enumerate(times):
            for r in (0.0, 0.5, 1.0, 1.5, 2.0):
                u = evolve_point(sol, [r, 0.0, 0.0], t).to_real()
                worst = max(worst, abs(fdm.at(r, k) - u) / u)
        assert worst <= 1e-3, worst
        assert time.perf_counter() - start < 60


def test_criterion_4_xi_identity(criterion):
    with criterion(4, "cutoff weight solves the eikonal identity"):
        R, T = 1.0, 1.0
        grid = [(r, t) for r in np.linspace(0.0, 3.0, 100) for t in np.linspace(0.0, 0.5, 100)
                if abs(r - R) >= 1e-3]
        assert len(grid) >= 9900
        res = xi_eikonal_residual(R, T, grid)
        worst = max(abs(xi_eikonal_residual(R, T, [g])) for g in grid)
        assert worst <= 1e-6 and abs(res) <= 1e-6, worst


def test_criterion_5_constants(criterion):
    with criterion(5, "cutoff constants"):
        assert cutoff_constant(2) == 256
        assert cutoff_constant(3) == 27648


def test_criterion_6_osgood_table(criterion):
    with criterion(6, "Osgood table, analytic and doubling verdicts"):
        start = time.perf_counter()
        growth = [(Power(1, 2), DIVERGENT), (PowerLog(1, 2, 1), DIVERGENT),
                  (PowerLog(1, 2, 2), CONVERGENT), (Power(1, 2.5), CONVERGENT)]
        curvature = [(Power(1, 1), DIVERGENT), (PowerLog(1, 1, 1), DIVERGENT),
                     (Power(1, 1.5), CONVERGENT)]
        for fam, want in growth:
            assert classify_osgood(fam).verdict == want, fam
            assert classify_osgood(fam, numeric=True).verdict == want, fam
        for fam, want in curvature:
            assert classify_curvature(fam).verdict == want, fam
            assert classify_curvature(fam, numeric=True).verdict == want, fam
        assert time.perf_counter() - start < 10


def test_criterion_7_schedule_dichotomy(criterion):
    with criterion(7, "schedule terminates for r**2, not for r**2 ln**2"):
        m, a = 2.0, 0.5
        quad = build_schedule(ScheduleParams(1.0, 1.0, m, a, Power(1, 2)))
        assert quad.terminated and quad.steps_used == 64
        L = PowerLog(1, 2, 2)
        slow = build_schedule(ScheduleParams(1.0, 1.0, m, a, L, max_steps=100_000))
        assert not slow.terminated and slow.steps_used == 100_000
        assert slow.step_sum < 1.0
        # ln(e + 2R_i) >= (i + 1) ln 2 bounds every step by 1 / (64 ln(2)**2 (i + 1)**2),
        # so the series converges and everything past the last row adds at most 1 / (64 ln(2)**2 N)
        c = 1.0 / (64 * math.log(2) ** 2)
        # (steps come from exp of logs near 3e4 in size, so allow that rounding)
        assert all(r.step <= c / (r.i + 1) ** 2 * (1 + 1e-9) for r in slow.rows)
        assert slow.step_sum + c / slow.steps_used < 1.0
        runs = [quad, slow]
        ladder = [build_schedule(ScheduleParams(2.0 ** k, 1.0, m, a, L, max_steps=100_000))
                  for k in range(11)]
        runs += ladder
        for res in runs:
            assert res.telescoped_bound <= res.geometric_ceiling
        bounds = [r.telescoped_bound.ln for r in ladder]
        assert all(b < a_ for a_, b in zip(bounds, bounds[1:]))
        assert bounds[-1] < bounds[0] - 10 * 2 * m * math.log(2) + 1


@pytest.fixture(scope="module")
def spiked_run():
    start = time.perf_counter()
    data = build_example(SpikedConfig(n=3, i_max=3))
    sol = SolutionHandle(data)
    regions = [Region("patch", s.inner_radius, k) for k, s in enumerate(data.spikes)]
    regions += [Region("ball", float(i + 1)) for i in (1, 2, 3)]
    reps = spacetime_integrals(sol, regions, a=0.0)
    return reps, time.perf_counter() - start


def _spiked_chain(reps):
    n = 3
    ln_C = integral_lower_bound(n, 1).ln_C(3)
    for i in (1, 2, 3):
        bound = integral_lower_bound(n, i)
        assert reps[i - 1].ln_value >= bound.exact, (i, reps[i - 1].ln_value, bound.exact)
        assert bound.exact >= (n - 2) / n * i ** 3 + ln_C


@pytest.mark.slow
def test_spiked_lower_bound_chain(spiked_run):
    # the attainable parts of criterion 8, kept green so regressions show
    reps, took = spiked_run
    _spiked_chain(reps)
    assert took < 120


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="ln of the integral over B(0, 4) is about 2.25, "
                                       "below C * 16 for every C >= 0.25")
def test_criterion_8_spiked_lower_bounds(criterion, spiked_run):
    with criterion(8, "spike lower bounds and quadratic-class violation at i = 3"):
        reps, took = spiked_run
        start = time.perf_counter()
        _spiked_chain(reps)
        ln_ball_4 = reps[5].ln_value
        for C in (0.25, 0.5, 1.0):
            assert ln_ball_4 > C * 16, f"ln I(B(0,4)) = {ln_ball_4:.3f} <= {16 * C} for C = {C}"
        assert took + time.perf_counter() - start < 120


@pytest.mark.slow
def test_criterion_9_membership(criterion):
    with criterion(9, "spiked data inside Constant(C*) with a = 2; envelope holds"):
        start = time.perf_counter()
        sol = SolutionHandle(build_example(SpikedConfig(n=3, i_max=3)))
        C_star = membership_ceiling(sol, 2.0)
        reps = class_membership(sol, 2.0, ConstantGrowth(C_star), [1.5, 2.5, 3.5])
        assert all(r.inside for r in reps), [r.comparison for r in reps]
        chk = pointwise_envelope_check(sol, linf_envelope_fn(sol), envelope_samples(sol, 1000, 0))
        assert chk.samples == 1000 and chk.ok, len(chk.violations)
        assert time.perf_counter() - start < 60


def test_criterion_10_small_time_probe(criterion, tmp_path):
    with criterion(10, "small-time probe separates zero and Gaussian data"):
        zero = small_time_vanishing_probe(SolutionHandle(InitialData(3, Zero())), 1.0)
        gauss = small_time_vanishing_probe(SolutionHandle(InitialData(3, Gaussian(1.0, 0.5))), 1.0)
        assert zero.verdict == VANISHING
        assert gauss.verdict == NOT_VANISHING
        cfg = tmp_path / "probe.ini"
        cfg.write_text("data n=3 base=gaussian amplitude=1 sigma=0.5\nevolve probe_radius=1\n")
        texts = []
        for seed in ("0", "1", "12345"):
            out = tmp_path / f"s{seed}"
            assert main(["evolve", "--config", str(cfg), "--out", str(out), "--seed", seed]) == 0
            texts.append((out / "probe.csv").read_bytes())
        assert texts[0] == texts[1] == texts[2]
