"""Gauss-Legendre panel quadrature, in linear and in log space."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp


class QuadratureError(RuntimeError):
    """A quadrature rule ran out of refinements before meeting tolerance."""


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def panel_rule(breaks, order: int = 10):
    """Composite rule on consecutive breakpoints.

    ``breaks`` has shape ``(..., B)`` and must be sorted along the last axis.
    Returns nodes and weights of shape ``(..., (B - 1) * order)``.  Empty
    panels get zero weight, so callers may pass padded breakpoint sets.
    """
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(order)
    lo = breaks[..., :-1, None]
    hi = breaks[..., 1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half) + half * x
    weights = half * w
    shape = breaks.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def bisect_breaks(breaks):
    """Insert every panel midpoint along the last axis."""
    breaks = np.asarray(breaks, dtype=float)
    mids = 0.5 * (breaks[..., :-1] + breaks[..., 1:])
    out = np.empty(breaks.shape[:-1] + (2 * breaks.shape[-1] - 1,))
    out[..., 0::2] = breaks
    out[..., 1::2] = mids
    return out


def lse(x, axis=-1):
    """Lean ``logsumexp`` for nonnegative terms given as logs (``-inf`` allowed)."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis))
    return out + np.squeeze(m, axis=axis)


def log_weights(weights):
    with np.errstate(divide="ignore"):
        return np.where(weights > 0, np.log(np.where(weights > 0, weights, 1.0)), -np.inf)


def log_panel_sum(log_values, weights, axis=-1):
    """``ln sum(w * exp(log_values))`` for nonnegative integrands."""
    return lse(np.asarray(log_values) + log_weights(weights), axis=axis)


def fixed_gl(f, a: float, b: float, order: int = 10):
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    return half * float(np.dot(w, f(a + half + half * x)))


def adaptive_gl(f, a: float, b: float, rtol: float = 1e-10, atol: float = 0.0,
                order: int = 10, max_panels: int = 20000):
    """Adaptive bisection Gauss-Legendre for a vectorised real ``f``.

    A panel is accepted once its single-rule value and the sum over its two
    halves agree to ``rtol`` relative (or ``atol`` scaled by the panel's share
    of the interval).  Returns ``(value, error_estimate)``.
    """
    if a == b:
        return 0.0, 0.0
    stack = [(a, b, fixed_gl(f, a, b, order))]
    accepted = []
    err = 0.0
    count = 0
    while stack:
        lo, hi, whole = stack.pop()
        mid = 0.5 * (lo + hi)
        left = fixed_gl(f, lo, mid, order)
        right = fixed_gl(f, mid, hi, order)
        both = left + right
        diff = abs(both - whole)
        count += 1
        share = (hi - lo) / abs(b - a)
        if diff <= max(atol * share, rtol * abs(both)) or not lo < mid < hi:
            accepted.append(both)
            err += diff
            continue
        if count > max_panels:
            raise QuadratureError(f"adaptive_gl: no convergence on [{a}, {b}]")
        stack.append((lo, mid, left))
        stack.append((mid, hi, right))
    return math.fsum(accepted), err


def adaptive_log_gl(logf, a: float, b: float, rtol: float = 1e-10,
                    order: int = 10, max_panels: int = 20000, breaks=None):
    """Adaptive quadrature of ``exp(logf)`` returning ``(ln value, rel error)``.

    The integrand is passed as its logarithm so values far outside the
    double range are fine.  A panel is accepted when its two estimates agree
    to ``rtol`` relative, or when its contribution is negligible against the
    largest panel seen so far.
    """
    if breaks is None:
        breaks = [a, b]
    x, w = gauss_legendre(order)

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        if half <= 0:
            return -math.inf
        vals = logf(lo + half + half * x)
        return float(logsumexp(vals + np.log(half * w)))

    stack = [(lo, hi, panel(lo, hi)) for lo, hi in zip(breaks[:-1], breaks[1:]) if hi > lo]
    peak = max((s[2] for s in stack), default=-math.inf)
    accepted = []
    err_terms = []
    count = 0
    while stack:
        lo, hi, whole = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        both = float(np.logaddexp(left, right))
        peak = max(peak, both)
        count += 1
        if both == -math.inf:
            continue
        local = abs(math.expm1(whole - both)) if whole > -math.inf else 1.0
        weight = math.exp(both - peak)
        if local <= rtol or local * weight <= 1e-3 * rtol or not lo < mid < hi:
            accepted.append(both)
            err_terms.append((local, both))
            continue
        if count > max_panels:
            raise QuadratureError(f"adaptive_log_gl: no convergence on [{a}, {b}]")
        stack.append((lo, mid, left))
        stack.append((mid, hi, right))
    if not accepted:
        return -math.inf, 0.0
    total = float(logsumexp(accepted))
    rel = sum(loc * math.exp(ln - total) for loc, ln in err_terms)
    return total, rel
