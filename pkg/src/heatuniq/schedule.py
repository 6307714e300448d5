"""The doubling-radius / shrinking-time iteration behind the uniqueness proof.

Radii double, ``R_i = 2**i R0``, while time steps back by at most
``R_i**2 / (16 L(2 R_i))``.  If the steps exhaust ``tau0`` in finitely
many moves the telescoped estimate closes; whether they do is exactly the
Osgood dichotomy for ``L``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .growth import Growth
from .logscalar import LogScalar, logsumexp_accumulate

LN2 = math.log(2.0)
LN16 = math.log(16.0)


def xi_weight(r: float, R: float, T: float, t: float) -> float:
    """``-(r - R)_+**2 / (4 (T - t))``."""
    if not t < T:
        raise ValueError("xi is only defined for t < T")
    excess = max(r - R, 0.0)
    return -excess * excess / (4.0 * (T - t))


def xi_eikonal_residual(R: float, T: float, grid, h: float = 1e-4) -> float:
    """Max over ``grid`` of ``d_t xi + |grad xi|**2``.

    ``d_t xi`` is a central difference with step ``h``; the gradient is the
    exact radial derivative ``(r - R)_+ / (2 (T - t))`` since ``|grad r| = 1``
    away from the origin.  The two cancel identically, so the result
    measures finite-difference error only.
    """
    worst = -math.inf
    for r, t in grid:
        if r == R:
            raise ValueError("grid point sits on the kink r = R")
        if not t + h < T:
            raise ValueError("grid point too close to T for the difference stencil")
        dt = (xi_weight(r, R, T, t + h) - xi_weight(r, R, T, t - h)) / (2.0 * h)
        grad = max(r - R, 0.0) / (2.0 * (T - t))
        worst = max(worst, dt + grad * grad)
    return worst


def cutoff_ln_constant(m: float) -> float:
    """``ln(4**(2m - 1) * m**m)``."""
    if not m > 0:
        raise ValueError("m must be positive")
    return (2.0 * m - 1.0) * math.log(4.0) + m * math.log(m)


def cutoff_constant(m: float) -> float:
    """``4**(2m - 1) * m**m``; exact for integer ``m`` while it fits an int."""
    if float(m).is_integer() and 0 < m <= 200:
        mi = int(m)
        return float(4 ** (2 * mi - 1) * mi ** mi)
    return LogScalar(1, cutoff_ln_constant(m)).to_real()


def inductive_rhs(R: float, T: float, m: float, a: float) -> LogScalar:
    """``C(m) T**(m - a - 1) / R**(2m)``."""
    if not m > a + 1:
        raise ValueError("need m > a + 1")
    if not (R > 0 and T > 0):
        raise ValueError("R and T must be positive")
    return LogScalar(1, cutoff_ln_constant(m) + (m - a - 1.0) * math.log(T) - 2.0 * m * math.log(R))


@dataclass(frozen=True)
class ScheduleParams:
    R0: float
    tau0: float
    m: float
    a: float
    L: Growth
    max_steps: int = 100_000

    def __post_init__(self):
        if not self.R0 > 0:
            raise ValueError("R0 must be positive")
        if not 0 < self.tau0 <= 1:
            raise ValueError("tau0 must lie in (0, 1]")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.m > self.a + 1:
            raise ValueError("the cutoff exponent needs m > a + 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class ScheduleRow:
    i: int
    ln_R: float
    tau: float
    step: float
    bound_term: LogScalar
    R: float = math.nan  # 2**i * R0 exactly, inf once it overflows


@dataclass
class ScheduleResult:
    params: ScheduleParams
    rows: list
    terminated: bool
    steps_used: int
    telescoped_bound: LogScalar
    step_sum: float
    final_tau: float

    @property
    def geometric_ceiling(self) -> LogScalar:
        """``2 C(m) tau0**(m-1-a) / R0**(2m)``, the bound the telescoped sum obeys."""
        p = self.params
        ln = LN2 + cutoff_ln_constant(p.m) + (p.m - 1 - p.a) * math.log(p.tau0) - 2 * p.m * math.log(p.R0)
        return LogScalar(1, ln)

    def summary(self) -> dict:
        p = self.params
        return {
            "R0": p.R0,
            "tau0": p.tau0,
            "m": p.m,
            "a": p.a,
            "growth": p.L.to_config(),
            "max_steps": p.max_steps,
            "terminated": self.terminated,
            "steps_used": self.steps_used,
            "step_sum": float(f"{self.step_sum:.15g}"),
            "final_tau": float(f"{self.final_tau:.15g}"),
            "telescoped_bound": self.telescoped_bound.to_json(),
            "geometric_ceiling": self.geometric_ceiling.to_json(),
            "within_ceiling": self.telescoped_bound <= self.geometric_ceiling,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["i", "R_i", "tau_i", "step_i", "ln_bound_term"])
        for row in self.rows:
            w.writerow([row.i, repr(row.R), repr(row.tau), repr(row.step), repr(row.bound_term.ln)])
        return buf.getvalue()


def step_size(L: Growth, ln_R: float) -> float:
    """``R**2 / (16 L(2R))`` from ``ln R``; underflows quietly to 0."""
    ln_step = 2.0 * ln_R - LN16 - float(L.ln_eval(ln_R + LN2))
    return math.exp(ln_step) if ln_step > -745.0 else 0.0


def build_schedule(p: ScheduleParams) -> ScheduleResult:
    """Greedy schedule: every step is the largest the constraint allows.

    ``tau_{i+1} = max(0, tau_i - R_i**2 / (16 L(2 R_i)))`` until ``tau``
    hits zero or ``max_steps`` rows were produced.  Running out of steps is
    a reported outcome, not an error.
    """
    ln_c = cutoff_ln_constant(p.m)
    expo = p.m - 1.0 - p.a
    ln_R0 = math.log(p.R0)
    rows = []
    steps = []
    tau = float(p.tau0)
    i = 0
    while tau > 0 and i < p.max_steps:
        ln_R = ln_R0 + i * LN2
        step = step_size(p.L, ln_R)
        term = LogScalar(1, ln_c + expo * math.log(tau) - 2.0 * p.m * ln_R)
        try:
            R = math.ldexp(p.R0, i)
        except OverflowError:
            R = math.inf
        rows.append(ScheduleRow(i, ln_R, tau, step, term, R))
        steps.append(step)
        tau = max(0.0, tau - step)
        i += 1
    bound = logsumexp_accumulate(row.bound_term for row in rows)
    return ScheduleResult(
        params=p,
        rows=rows,
        terminated=tau == 0.0,
        steps_used=len(rows),
        telescoped_bound=bound,
        step_sum=math.fsum(steps),
        final_tau=tau,
    )


# ---------------------------------------------------------------------------
# small-time behaviour


@dataclass
class ProbeResult:
    times: list
    values: list
    verdict: str
    ratios: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "times": self.times,
            "values": [float(f"{v:.15g}") for v in self.values],
            "ratios": [float(f"{v:.15g}") for v in self.ratios],
            "verdict": self.verdict,
        }


VANISHING = "consistent with vanishing"
NOT_VANISHING = "not vanishing"


def halving_times(t0: float = 0.5, count: int = 12) -> list:
    return [t0 * 0.5 ** k for k in range(count)]


def small_time_vanishing_probe(sol, R: float, times: Sequence[float] | None = None,
                               window: int = 5, factor: float = 2.0) -> ProbeResult:
    """Tabulate ``t**-1 int_{B(R)} f(t)**2`` for ``t`` decreasing to 0.

    ``sol`` is either a callable ``(R, t) -> int_{B(R)} f(t)**2`` or an
    object with a ``ball_l2_squared(R, t)`` method (the kernel solution
    handle has one).  The verdict is "consistent with vanishing" when the
    last ``window`` probes are all zero or each one drops by at least
    ``factor`` per halving of ``t``; this is a heuristic and the raw values
    are always returned with it.
    """
    times = halving_times() if times is None else [float(t) for t in times]
    if any(b >= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly decreasing")
    if len(times) < window:
        raise ValueError(f"need at least {window} probe times")
    F = sol if callable(sol) else sol.ball_l2_squared
    values = [float(F(R, t)) / t for t in times]
    tail = values[-window:]
    tail_t = times[-window:]
    ratios = []
    if all(v == 0.0 for v in tail):
        return ProbeResult(times, values, VANISHING, ratios)
    ok = True
    for (t0, v0), (t1, v1) in zip(zip(tail_t, tail), zip(tail_t[1:], tail[1:])):
        need = factor ** math.log2(t0 / t1)
        ratio = v0 / v1 if v1 > 0 else math.inf
        ratios.append(ratio)
        if not (v1 == 0.0 or ratio >= need * (1.0 - 1e-9)):
            ok = False
    return ProbeResult(times, values, VANISHING if ok else NOT_VANISHING, ratios)
