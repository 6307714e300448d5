"""Growth functions ``L(r)``, curvature functions ``k(r)`` and Osgood tests.

The growth side is about ``int_1^inf r / L(r) dr``; the curvature side is
about ``int_1^inf dr / k(r)``.  Both are three-valued: a closed-form family
gets an analytic verdict, anything else the doubling heuristic, which is
allowed to say "Inconclusive".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .logscalar import LogScalar
from .quadrature import adaptive_gl

DIVERGENT = "Divergent"
CONVERGENT = "Convergent"
INCONCLUSIVE = "Inconclusive"

# doubling heuristic
DOUBLING_KS = range(4, 41)
WINDOW = 8
GEOMETRIC_RATIO = 0.9
CONSTANT_RATIO_SPREAD = 1e-4
DIVERGENT_EXPONENT = 1.1
CONVERGENT_EXPONENT = 1.5


def _ln_e_plus(ln_r):
    """``ln(ln(e + r))`` from ``ln r``, safe for huge ``r``."""
    return np.log(np.logaddexp(1.0, ln_r))


class Growth:
    """Base class: a positive nondecreasing function on ``(0, inf)``."""

    closed_form = True

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("growth functions are defined for r >= 0")
        with np.errstate(divide="ignore"):
            out = np.exp(self.ln_eval(np.log(r)))
        return float(out) if out.ndim == 0 else out

    def ln_eval(self, ln_r):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(Growth):
    """``C * r**beta``."""

    C: float
    beta: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("Power needs C > 0")
        if not self.beta >= 0:
            raise ValueError("Power needs beta >= 0 to stay nondecreasing")

    def ln_eval(self, ln_r):
        ln_r = np.asarray(ln_r, dtype=float)
        if self.beta == 0:
            return np.full_like(ln_r, math.log(self.C))
        return math.log(self.C) + self.beta * ln_r

    def to_config(self):
        return {"family": "power", "C": self.C, "beta": self.beta}


@dataclass(frozen=True)
class PowerLog(Growth):
    """``C * r**beta * ln(e + r)**gamma``."""

    C: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("PowerLog needs C > 0")
        if self.beta < 0:
            raise ValueError("PowerLog needs beta >= 0")
        if self.gamma < 0:
            # r**beta * ln(e+r)**gamma is nondecreasing on (0, inf) iff
            # beta >= |gamma| * sup_r r / ((e + r) ln(e + r)); the sup is < 1/e
            if self.beta == 0 or abs(self.gamma) > self.beta * math.e:
                raise ValueError("PowerLog parameters give a decreasing function")

    def ln_eval(self, ln_r):
        ln_r = np.asarray(ln_r, dtype=float)
        with np.errstate(invalid="ignore"):
            base = math.log(self.C) + (self.beta * ln_r if self.beta else 0.0)
        return base + self.gamma * _ln_e_plus(ln_r)

    def to_config(self):
        return {"family": "powerlog", "C": self.C, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class Constant(Growth):
    C: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("Constant needs C > 0")

    def ln_eval(self, ln_r):
        return np.full_like(np.asarray(ln_r, dtype=float), math.log(self.C))

    def to_config(self):
        return {"family": "constant", "C": self.C}


@dataclass(frozen=True)
class FromCurvature(Growth):
    """``L(r) = C * r * k(2r)``, the growth rate a curvature bound produces."""

    C: float
    k: Growth

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("FromCurvature needs C > 0")
        if isinstance(self.k, FromCurvature):
            raise ValueError("k must be a curvature family, not FromCurvature")

    @property
    def closed_form(self):
        return self.k.closed_form

    def ln_eval(self, ln_r):
        ln_r = np.asarray(ln_r, dtype=float)
        return math.log(self.C) + ln_r + self.k.ln_eval(ln_r + math.log(2.0))

    def to_config(self):
        return {"family": "fromcurvature", "C": self.C, "k": self.k.to_config()}


@dataclass(frozen=True)
class PiecewiseLinearMonotone(Growth):
    """Linear interpolation of a table, last slope extrapolated to the right.

    Left of the first node the first value is held, so the function stays
    positive on ``(0, inf)``.
    """

    radii: tuple
    values: tuple
    closed_form = False

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("table needs at least two (r, L) pairs")
        if np.any(np.diff(r) <= 0):
            raise ValueError("table radii must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise ValueError("table values must be nondecreasing")
        if np.any(v <= 0):
            raise ValueError("table values must be positive")
        object.__setattr__(self, "radii", tuple(float(x) for x in r))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def ln_eval(self, ln_r):
        ln_r = np.asarray(ln_r, dtype=float)
        r_tab = np.asarray(self.radii)
        v_tab = np.asarray(self.values)
        slope = (v_tab[-1] - v_tab[-2]) / (r_tab[-1] - r_tab[-2])
        with np.errstate(over="ignore"):
            r = np.exp(np.minimum(ln_r, 700.0))
        inside = np.interp(r, r_tab, v_tab)
        out = np.log(inside)
        far = ln_r > math.log(r_tab[-1])
        if np.any(far):
            if slope > 0:
                # L = v_last + slope * (r - r_last), with r possibly beyond doubles
                lead = math.log(slope) + ln_r
                rest = v_tab[-1] - slope * r_tab[-1]
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    ext = lead + np.log1p(rest * np.exp(-lead))
                out = np.where(far, ext, out)
            else:
                out = np.where(far, math.log(v_tab[-1]), out)
        return out

    def to_config(self):
        return {"family": "table", "radii": list(self.radii), "values": list(self.values)}


# curvature functions share the families; FromCurvature is excluded
CurvatureFunction = Growth
GrowthFunction = Growth


@dataclass
class OsgoodVerdict:
    verdict: str
    method: str
    partial_integral: float
    probe_radius: float
    condition: str = "growth"
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "method": self.method,
            "condition": self.condition,
            "partial_integral": float(f"{self.partial_integral:.15g}"),
            "probe_radius": self.probe_radius,
            "details": self.details,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# evaluation and integrals


def eval_growth(L: Growth, r: float) -> float:
    return L(r)


def _integrand_in_log_r(ln_h: Callable, power: float):
    """``int f(r) dr`` with ``f = r**power / h(r)`` rewritten in ``u = ln r``."""

    def g(u):
        return np.exp((power + 1.0) * u - ln_h(u))

    return g


def _integral(ln_h: Callable, power: float, r_max: float, rtol: float) -> float:
    if not r_max > 1:
        raise ValueError("r_max must exceed 1")
    if math.isinf(r_max):
        # u = ln r = v / (1 - v) maps [1, inf) onto [0, 1) smoothly
        g = _integrand_in_log_r(ln_h, power)

        def f(v):
            v = np.asarray(v, dtype=float)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                out = g(v / (1.0 - v)) / (1.0 - v) ** 2
            return np.where(np.isfinite(out), out, 0.0)

        val, _ = adaptive_gl(f, 0.0, 1.0, rtol=rtol, order=20, max_panels=200000)
        return val
    g = _integrand_in_log_r(ln_h, power)
    top = math.log(r_max)
    # unit-length panels in ln r keep the quadrature local
    edges = np.unique(np.concatenate([np.arange(0.0, top, 1.0), [top]]))
    return math.fsum(adaptive_gl(g, lo, hi, rtol=rtol, order=12)[0]
                     for lo, hi in zip(edges[:-1], edges[1:]))


def osgood_integral(L: Growth, r_max: float, rtol: float = 1e-10) -> float:
    """``int_1^r_max r / L(r) dr``; ``r_max`` may be ``math.inf``."""
    if math.isinf(r_max) and _analytic_L(L) == DIVERGENT:
        return math.inf
    return _integral(L.ln_eval, 1.0, r_max, rtol)


def curvature_integral(k: Growth, r_max: float, rtol: float = 1e-10) -> float:
    """``int_1^r_max dr / k(r)``."""
    if math.isinf(r_max) and _analytic_k(k) == DIVERGENT:
        return math.inf
    return _integral(k.ln_eval, 0.0, r_max, rtol)


# ---------------------------------------------------------------------------
# classification


def _analytic_power_log(beta: float, gamma: float, threshold: float) -> str:
    # int r**(threshold-1-beta) ln(r)**(-gamma): diverges iff beta < threshold,
    # or beta == threshold and gamma <= 1
    if beta < threshold:
        return DIVERGENT
    if beta > threshold:
        return CONVERGENT
    return DIVERGENT if gamma <= 1 else CONVERGENT


def _analytic_k(k: Growth):
    if isinstance(k, Power):
        return _analytic_power_log(k.beta, 0.0, 1.0)
    if isinstance(k, PowerLog):
        return _analytic_power_log(k.beta, k.gamma, 1.0)
    if isinstance(k, Constant):
        return DIVERGENT
    return None


def _analytic_L(L: Growth):
    if isinstance(L, Power):
        return _analytic_power_log(L.beta, 0.0, 2.0)
    if isinstance(L, PowerLog):
        return _analytic_power_log(L.beta, L.gamma, 2.0)
    if isinstance(L, Constant):
        return DIVERGENT
    if isinstance(L, FromCurvature):
        # r / (C r k(2r)) = 1 / (C k(2r)), same verdict as the k-condition
        return _analytic_k(L.k)
    return None


def doubling_table(ln_h: Callable, power: float, ks=DOUBLING_KS, rtol: float = 1e-10):
    """Partial integrals at ``r_max = 2**k`` and their increments."""
    g = _integrand_in_log_r(ln_h, power)
    ln2 = math.log(2.0)
    ks = list(ks)
    total = math.fsum(adaptive_gl(g, lo * ln2, (lo + 1) * ln2, rtol=rtol, order=12)[0]
                      for lo in range(0, ks[0]))
    partials = [total]
    increments = []
    for k in ks[:-1]:
        inc, _ = adaptive_gl(g, k * ln2, (k + 1) * ln2, rtol=rtol, order=12)
        increments.append(inc)
        total += inc
        partials.append(total)
    return ks, partials, increments


def doubling_verdict(ks, increments) -> tuple[str, dict]:
    """Three-valued verdict from the increments over consecutive doublings.

    With ``D_k`` the increment over ``[2**k, 2**(k+1)]``, the last
    ``WINDOW`` ratios ``D_{k+1} / D_k`` decide:

    * all ratios >= 1: the increments do not decay, Divergent;
    * all ratios <= GEOMETRIC_RATIO, or a constant ratio below 1: geometric
      decay, Convergent;
    * otherwise the local exponent ``p_k = ln(D_k/D_{k+1}) / ln((k+1)/k)``
      of a ``D_k ~ k**-p`` fit decides: ``p <= 1.1`` Divergent,
      ``p >= 1.5`` Convergent, anything between Inconclusive.
    """
    inc = np.asarray(increments, dtype=float)
    k = np.asarray(list(ks)[: len(inc)], dtype=float)
    if np.any(inc <= 0):
        return INCONCLUSIVE, {"reason": "nonpositive increment"}
    ratios = inc[1:] / inc[:-1]
    last = ratios[-WINDOW:]
    kk = k[-WINDOW - 1:-1]
    exps = np.log(1.0 / last) / np.log((kk + 1.0) / kk)
    details = {
        "ratios": [float(f"{x:.12g}") for x in last],
        "exponents": [float(f"{x:.12g}") for x in exps],
    }
    if np.all(last >= 1.0 - 1e-12):
        return DIVERGENT, details
    spread = float(np.max(last) - np.min(last))
    if np.all(last <= GEOMETRIC_RATIO) or (spread <= CONSTANT_RATIO_SPREAD and np.max(last) < 1.0 - 1e-9):
        return CONVERGENT, details
    if np.all(exps <= DIVERGENT_EXPONENT):
        return DIVERGENT, details
    if np.all(exps >= CONVERGENT_EXPONENT):
        return CONVERGENT, details
    return INCONCLUSIVE, details


def _classify(ln_h, power, analytic, condition, numeric: bool):
    ks, partials, increments = doubling_table(ln_h, power)
    probe = 2.0 ** ks[-1]
    if analytic is not None and not numeric:
        return OsgoodVerdict(analytic, "analytic", partials[-1], probe, condition)
    verdict, details = doubling_verdict(ks, increments)
    return OsgoodVerdict(verdict, "numeric-doubling", partials[-1], probe, condition, details)


def classify_osgood(L: Growth, numeric: bool = False) -> OsgoodVerdict:
    """Verdict for ``int_1^inf r / L(r) dr = inf``.

    ``numeric=True`` forces the doubling heuristic even for closed-form
    families, which is how the two routes are cross-checked.
    """
    return _classify(L.ln_eval, 1.0, _analytic_L(L), "growth", numeric)


def classify_curvature(k: Growth, numeric: bool = False) -> OsgoodVerdict:
    """Verdict for ``int_1^inf dr / k(r) = inf``."""
    if isinstance(k, FromCurvature):
        raise ValueError("FromCurvature is not a curvature family")
    return _classify(k.ln_eval, 0.0, _analytic_k(k), "curvature", numeric)


# ---------------------------------------------------------------------------
# envelopes derived from a curvature bound


@dataclass(frozen=True)
class CurvatureEnvelopes:
    """Evaluators for the bounds a curvature function ``k`` induces.

    ``pointwise(r, t) = exp(C_pt r k(2r)) / t**a``,
    ``volume(R) = C_vol exp(c_vol R k(R))`` and ``L = FromCurvature(C_L, k)``.
    """

    k: Growth
    C_pt: float
    a: float
    C_vol: float
    c_vol: float
    C_L: float

    def pointwise(self, r: float, t: float) -> LogScalar:
        if t <= 0:
            raise ValueError("t must be positive")
        rk = 0.0 if r == 0 else r * self.k(2.0 * r)
        return LogScalar(1, self.C_pt * rk - self.a * math.log(t))

    def volume(self, R: float) -> LogScalar:
        rk = 0.0 if R == 0 else R * self.k(R)
        return LogScalar(1, math.log(self.C_vol) + self.c_vol * rk)

    @property
    def L(self) -> FromCurvature:
        return FromCurvature(self.C_L, self.k)


def curvature_envelopes(k: Growth, C_pt: float, a: float, C_vol: float, c_vol: float,
                   C_L: float | None = None) -> CurvatureEnvelopes:
    """All constants are free parameters; nothing here fixes their values."""
    C_L = C_pt if C_L is None else C_L
    for name, v in (("C_pt", C_pt), ("a", a), ("C_vol", C_vol), ("c_vol", c_vol), ("C_L", C_L)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return CurvatureEnvelopes(k, C_pt, a, C_vol, c_vol, C_L)


# ---------------------------------------------------------------------------
# config parsing


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(",", " ").split()]


def growth_from_config(cfg: Mapping[str, object], prefix: str = "") -> Growth:
    """Build a family from ``family=power, C=1, beta=2`` style keys.

    Keys are case-insensitive.  ``fromcurvature`` reads its ``k`` from keys
    prefixed ``k_`` (``k_family``, ``k_C``, ...).
    """
    low = {str(k).lower(): v for k, v in cfg.items()}

    def get(name, default=None):
        key = (prefix + name).lower()
        if key in low:
            return low[key]
        if default is None:
            raise KeyError(f"missing growth parameter {prefix + name!r}")
        return default

    family = str(get("family")).strip().lower()
    if family == "power":
        return Power(float(get("C")), float(get("beta")))
    if family == "powerlog":
        return PowerLog(float(get("C")), float(get("beta")), float(get("gamma")))
    if family == "constant":
        return Constant(float(get("C")))
    if family == "fromcurvature":
        return FromCurvature(float(get("C")), growth_from_config(cfg, prefix=prefix + "k_"))
    if family == "table":
        return PiecewiseLinearMonotone(tuple(_floats(get("radii"))), tuple(_floats(get("values"))))
    raise ValueError(f"unknown growth family {family!r}")


def parse_growth(text: str) -> Growth:
    """Parse ``"family=power, C=1, beta=2"``."""
    pairs = {}
    for chunk in text.replace(";", ",").split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, value = chunk.partition("=")
        pairs[key.strip()] = value.strip()
    return growth_from_config(pairs)
