"""Spiked initial data: tall thin plateaus with summable L1 mass.

Spike ``i`` has height ``e**(i**3)`` on a ball of radius
``rt_i = r_i / 2**(1/n)`` where ``r_i = (omega_n i**2 e**(i**3))**(-1/n)``,
so each plateau carries mass ``1 / (2 i**2)`` while its space-time L2
integral grows like ``exp((n - 2) i**3 / n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gammaln

from .kernel import (Base, InitialData, SpikeSpec, Zero, ln_unit_ball_volume)
from .logscalar import LogScalar

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SpikedConfig:
    n: int = 3
    i_max: int = 3
    base: Base = field(default_factory=Zero)
    height_scale: float = 1.0
    negative: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("the spiked example needs n >= 3")
        if self.i_max < 0:
            raise ValueError("i_max must be nonnegative")
        if self.height_scale < 0:
            raise ValueError("height_scale must be nonnegative")


def spike_radii(n: int, i: int) -> tuple[float, float]:
    """``(ln r_i, ln rt_i)``."""
    if n < 3 or i < 1:
        raise ValueError("need n >= 3 and i >= 1")
    ln_r = -(ln_unit_ball_volume(n) + 2.0 * math.log(i) + float(i) ** 3) / n
    return ln_r, ln_r - LN2 / n


def plateau_ln_mass(n: int, i: int) -> float:
    """``ln(e**(i**3) omega_n rt_i**n)``; equals ``-ln(2 i**2)`` identically."""
    _, ln_rt = spike_radii(n, i)
    return float(i) ** 3 + ln_unit_ball_volume(n) + n * ln_rt


def spike_center(i: int) -> float:
    return i + 0.5


def build_example(cfg: SpikedConfig) -> InitialData:
    """Spikes ``i = 1..i_max`` centred at ``i + 1/2`` on the first axis.

    Each spike ball is checked to sit inside the annulus ``i < |x| < i + 1``.
    On a nonzero base the plateau height is reduced by the base value at the
    centre, so the plateau still reads ``e**(i**3)`` there.
    """
    spikes = []
    for i in range(1, cfg.i_max + 1):
        ln_r, ln_rt = spike_radii(cfg.n, i)
        r, rt = math.exp(ln_r), math.exp(ln_rt)
        d = spike_center(i)
        if not (d - r > i and d + r < i + 1):
            raise ValueError(f"spike {i} does not fit in its annulus")
        ln_h = float(i) ** 3
        b = float(cfg.base.value(d))
        if b > 0:
            ln_h += math.log1p(-b * math.exp(-ln_h)) if b < math.exp(ln_h) else -math.inf
        if cfg.height_scale == 0 or ln_h == -math.inf:
            height = LogScalar(0)
        else:
            height = LogScalar(-1 if cfg.negative else 1, ln_h + math.log(cfg.height_scale))
        spikes.append(SpikeSpec(d, rt, r, height))
    return InitialData(cfg.n, cfg.base, tuple(spikes))


def pointwise_lower_bound(n: int, i: int, t: float) -> LogScalar:
    """``exp(-rt_i**2 / t) / (2 i**2 (4 pi t)**(n/2))``.

    A lower bound for ``u(x, t)`` at every ``x`` in the plateau ball.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    _, ln_rt = spike_radii(n, i)
    rt2 = math.exp(2.0 * ln_rt)
    return LogScalar(1, -math.log(2.0 * i * i) - 0.5 * n * math.log(4.0 * math.pi * t) - rt2 / t)


@dataclass(frozen=True)
class IntegralLowerBound:
    """The three forms of the plateau space-time bound, as logs.

    ``exact`` uses the upper incomplete gamma ``Gamma(n - 1, 2 rt**2)``;
    ``floor`` replaces it by ``Gamma(n - 1, 1)``; ``asymptotic`` is
    ``ln K_n - q ln i + (n - 2) i**3 / n`` with the constant ``K_n`` and
    the exponent ``q = 4 - 2 (n - 2) / n``.
    """

    n: int
    i: int
    exact: float
    floor: float
    asymptotic: float
    ln_K: float
    q: float

    @property
    def target_exponent(self) -> float:
        return (self.n - 2) / self.n * self.i ** 3

    def ln_C(self, i_max: int) -> float:
        """``ln C(n)`` such that ``floor >= (n-2)/n i**3 + ln C(n)`` for ``i <= i_max``."""
        return self.ln_K - self.q * math.log(i_max)

    def value(self) -> LogScalar:
        return LogScalar(1, self.exact)


def ln_upper_gamma(a: float, x: float) -> float:
    """``ln int_x^inf s**(a-1) e**-s ds``."""
    return float(gammaln(a) + math.log(gammaincc(a, x)))


def ln_K(n: int) -> float:
    """``ln`` of the i-independent factor of the floor form."""
    ln_w = ln_unit_ball_volume(n)
    return (ln_w - (3 * n + 1) * LN2 - n * math.log(math.pi)
            + (n - 2) / n * (LN2 + ln_w) + ln_upper_gamma(n - 1, 1.0))


def integral_lower_bound(n: int, i: int) -> IntegralLowerBound:
    """Closed-form minorant of ``int_0^1 int_{B(p_i, rt_i)} u**2``.

    On the plateau ball ``u >= pointwise_lower_bound``, and squaring and
    integrating over the ball and over ``t`` gives

        (omega_n rt**n / (4 i**4)) int_0^1 (4 pi t)**-n exp(-2 rt**2 / t) dt
        = 2 rt**2 (8 pi rt**2)**-n (omega_n rt**n / (4 i**4)) Gamma(n - 1, 2 rt**2).
    """
    if n < 3:
        raise ValueError("need n >= 3")
    _, ln_rt = spike_radii(n, i)
    x = 2.0 * math.exp(2.0 * ln_rt)
    prefactor = (LN2 + 2.0 * ln_rt - n * (math.log(8.0 * math.pi) + 2.0 * ln_rt)
                 + ln_unit_ball_volume(n) + n * ln_rt - math.log(4.0) - 4.0 * math.log(i))
    exact = prefactor + ln_upper_gamma(n - 1, x)
    floor = prefactor + ln_upper_gamma(n - 1, 1.0)
    q = 4.0 - 2.0 * (n - 2) / n
    K = ln_K(n)
    asym = K - q * math.log(i) + (n - 2) / n * i ** 3
    return IntegralLowerBound(n, i, exact, floor, asym, K, q)


def quadratic_violation_index(C: float, n: int = 3, i_limit: int = 10, computed=None):
    """Smallest ``i*`` with ``ln I(i+1) > C (i+1)**2`` for every ``i*<=i<=i_limit``.

    ``ln I(i+1)`` is the kernel-computed value from ``computed`` (a dict
    ``i -> ln value``) when available and the exact closed-form minorant
    otherwise.  Returns ``None`` if the violation does not persist up to
    ``i_limit``.
    """
    computed = computed or {}
    hits = []
    for i in range(1, i_limit + 1):
        ln_I = computed.get(i, integral_lower_bound(n, i).exact)
        hits.append(ln_I > C * (i + 1) ** 2)
    star = None
    for i in range(i_limit, 0, -1):
        if hits[i - 1]:
            star = i
        else:
            break
    return star


# ---------------------------------------------------------------------------
# end-to-end verification of the spiked example

DEFAULT_C_GRID = (0.25, 0.5, 1.0)


@dataclass
class ExampleCheck:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


@dataclass
class ExampleReport:
    config: SpikedConfig
    a: float
    checks: list
    rows: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ExampleCheck:
        return next(c for c in self.checks if c.name == name)

    def to_json(self) -> dict:
        return {
            "n": self.config.n,
            "i_max": self.config.i_max,
            "a": self.a,
            "passed": self.passed,
            "checks": [c.to_json() for c in self.checks],
            "rows": self.rows,
        }

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        cols = ["i", "ln_lower_bound", "ln_computed_patch", "ln_computed_ball", "target_exponent"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row[k]) for k in cols})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(float(f"{v:.15g}")) if math.isfinite(v) else str(v)
    return v


def _r(v: float) -> float:
    return float(f"{v:.15g}") if math.isfinite(v) else v


def verify_example(cfg: SpikedConfig, a: float = 2.0, C_grid=DEFAULT_C_GRID,
                   samples: int = 1000, seed: int = 0, i_limit: int = 10,
                   rtol: float | None = None) -> ExampleReport:
    """Run the four checks on the spiked example.

    1. ``lower_bounds``: the computed unweighted space-time integral of
       ``u**2`` over each plateau ball and each ``B(0, i + 1)`` is at least
       the closed-form minorant.
    2. ``envelope``: ``|u| <= ||u_0||_1 (4 pi t)**(-n/2)`` at random samples.
    3. ``membership``: the ``t**a`` weighted integral stays inside
       ``L = Constant(C*)`` at radii ``i + 1/2``, with ``C*`` from the
       envelope bound; needs ``a > n/2 - 1``.
    4. ``quadratic_violation``: for every ``C`` in the grid, the unweighted
       ball integrals exceed ``exp(C (i+1)**2)`` for all ``i >= i*(C)``
       (computed values up to ``i_max``, closed form beyond), and ``i*``
       exists within ``i_limit``.
    """
    from .estimator import (Region, class_membership, envelope_samples,
                            linf_envelope_fn, membership_ceiling,
                            pointwise_envelope_check, spacetime_integrals)
    from .growth import Constant
    from .kernel import DEFAULT_RTOL, SolutionHandle

    n = cfg.n
    data = build_example(cfg)
    sol = SolutionHandle(data, DEFAULT_RTOL if rtol is None else rtol)
    checks = []
    rows = []
    # the closed-form chain needs positive spikes; their heights scale the bound
    applicable = cfg.i_max > 0 and not cfg.negative and cfg.height_scale > 0
    shift = 2.0 * math.log(cfg.height_scale) if cfg.height_scale > 0 else -math.inf

    # 1. lower bounds
    ln_ball = {}
    if cfg.i_max > 0:
        regions = [Region("patch", s.inner_radius, k) for k, s in enumerate(data.spikes)]
        regions += [Region("ball", float(i + 1)) for i in range(1, cfg.i_max + 1)]
        reps = spacetime_integrals(sol, regions, a=0.0)
        failures = []
        for i in range(1, cfg.i_max + 1):
            bound = integral_lower_bound(n, i).exact + shift
            patch, ball = reps[i - 1], reps[cfg.i_max + i - 1]
            ln_ball[i] = ball.ln_value
            rows.append({"i": i, "ln_lower_bound": _r(bound), "ln_computed_patch": _r(patch.ln_value),
                         "ln_computed_ball": _r(ball.ln_value),
                         "target_exponent": _r((n - 2) / n * i ** 3)})
            if applicable and not (patch.ln_value >= bound and ball.ln_value >= bound):
                failures.append(i)
        checks.append(ExampleCheck("lower_bounds", not failures, {"failed_indices": failures}))
    else:
        checks.append(ExampleCheck("lower_bounds", True, {"failed_indices": [], "applicable": False}))

    # 2. pointwise envelope
    env = linf_envelope_fn(sol)
    if env is None:
        checks.append(ExampleCheck("envelope", False, {"reason": "data not in L1"}))
    else:
        chk = pointwise_envelope_check(sol, env, envelope_samples(sol, samples, seed))
        checks.append(ExampleCheck("envelope", chk.ok, {"samples": chk.samples,
                                                        "violations": len(chk.violations),
                                                        "min_margin": _r(chk.min_margin)}))

    # 3. membership
    radii = [i + 0.5 for i in range(1, max(cfg.i_max, 1) + 1)]
    if not a > n / 2 - 1:
        checks.append(ExampleCheck("membership", False,
                                   {"reason": f"need a > n/2 - 1 = {n / 2 - 1}"}))
    elif env is None:
        checks.append(ExampleCheck("membership", False, {"reason": "data not in L1"}))
    else:
        C_star = membership_ceiling(sol, a)
        reps = class_membership(sol, a, Constant(C_star), radii)
        checks.append(ExampleCheck("membership", all(r.inside for r in reps), {
            "C_star": _r(C_star),
            "radii": radii,
            "ln_upper": [_r(r.ln_upper) for r in reps],
            "inside": [bool(r.inside) for r in reps],
        }))

    # 4. quadratic-class violation
    if applicable:
        computed = {i: v - shift for i, v in ln_ball.items()}
        stars = {}
        for C in C_grid:
            star = quadratic_violation_index(C, n, max(i_limit, cfg.i_max), computed)
            stars[str(C)] = star
        ok = all(s is not None for s in stars.values())
        checks.append(ExampleCheck("quadratic_violation", ok, {
            "i_star": stars,
            "computed": {str(i): _r(v) for i, v in ln_ball.items()},
        }))
    else:
        checks.append(ExampleCheck("quadratic_violation", True, {"applicable": False}))
    return ExampleReport(cfg, a, checks, rows)
