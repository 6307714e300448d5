"""Heat-kernel convolution for radial data plus spikes on the first axis.

Every non-trivial piece of initial data is a radial profile ``g(|y - c|)``
around a centre ``c`` on the first coordinate axis.  Its convolution with
the heat kernel at a point a distance ``d`` from ``c`` is a two-dimensional
integral over the shell radius ``s`` and the polar angle ``theta``:

    (4 pi t)**(-n/2) int_0^S g(s) s**(n-1) exp(-(d - s)**2 / 4t)
        * sigma_{n-2} int_0^pi exp(-kappa (1 - cos theta)) sin**(n-2)(theta) dtheta ds

with ``kappa = d s / (2t)``.  Both integrals are composite Gauss-Legendre
rules whose panels follow the Gaussian factor, evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numba
import numpy as np
from scipy.special import gammaln, i0e, i1e, ive

from .logscalar import ZERO, LogScalar, signed_logsumexp
from .quadrature import (QuadratureError, adaptive_log_gl, bisect_breaks,
                         gauss_legendre, log_weights, lse, panel_rule)

DEFAULT_RTOL = 1e-8
_EPS = float(np.finfo(float).eps)
_S_ORDER = 10
_THETA_ORDER = 10
_MAX_LEVEL = 3
_CHUNK = 64
# kappa * (1 - cos theta) levels at which angular panels are cut
_THETA_LEVELS = np.array([0.0, 0.25, 1.0, 2.5, 5.0, 10.0, 17.0, 26.0, 37.0, 50.0, 64.0])
# offsets (in units of the local kernel scale) of radial breakpoints
_S_OFFSETS = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0])


def ln_unit_ball_volume(n: int) -> float:
    """``ln omega_n`` with ``omega_n = pi**(n/2) / Gamma(n/2 + 1)``."""
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


def unit_ball_volume(n: int) -> float:
    return math.exp(ln_unit_ball_volume(n))


def ln_sphere_area(n: int) -> float:
    """``ln`` of the area of the unit sphere in ``R**n`` (``n * omega_n``)."""
    return math.log(n) + ln_unit_ball_volume(n)


def heat_kernel_ln(n: int, distsq, t):
    """Vectorised ``ln((4 pi t)**(-n/2) exp(-distsq / 4t))``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    return -0.5 * n * np.log(4.0 * math.pi * t) - np.asarray(distsq, dtype=float) / (4.0 * t)


def heat_kernel(n: int, distsq: float, t: float) -> LogScalar:
    if not t > 0:
        raise ValueError("heat kernel needs t > 0")
    if distsq < 0:
        raise ValueError("distsq must be nonnegative")
    return LogScalar(1, float(heat_kernel_ln(n, distsq, t)))


# ---------------------------------------------------------------------------
# radial profiles


class RadialProfile:
    """Nonnegative radial function with compact (or truncated) support."""

    support: float

    def log_value(self, s):
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        raise NotImplementedError

    def kinks(self) -> np.ndarray:
        """Radii where the profile is not smooth."""
        return self.breakpoints()[1:]

    def ln_l1(self, n: int) -> float:
        """``ln int_{R^n} g(|y|) dy``."""
        raise NotImplementedError

    def ln_sup(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class PlateauProfile(RadialProfile):
    """``h`` on ``[0, inner]``, linear down to 0 on ``[inner, outer]``.

    ``inner == outer`` gives the indicator of a ball.
    """

    inner: float
    outer: float
    ln_height: float = 0.0

    def __post_init__(self):
        if not 0 < self.inner <= self.outer:
            raise ValueError("need 0 < inner <= outer")

    @property
    def support(self):
        return self.outer

    def log_value(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, -np.inf)
        out[s <= self.inner] = self.ln_height
        if self.outer > self.inner:
            ramp = (s > self.inner) & (s < self.outer)
            frac = (self.outer - s[ramp]) / (self.outer - self.inner)
            out[ramp] = self.ln_height + np.log(frac)
        return out

    def breakpoints(self):
        return np.array(sorted({0.0, self.inner, self.outer}))

    def ln_shape_mass(self, n: int) -> float:
        """``ln`` of the L1 mass of the unit-height profile."""
        ln_core = ln_unit_ball_volume(n) + n * math.log(self.inner)
        if self.outer == self.inner:
            return ln_core
        # the ramp integrand is a polynomial of degree n: exact with this order
        x, w = gauss_legendre(n // 2 + 2)
        half = 0.5 * (self.outer - self.inner)
        s = self.inner + half + half * x
        ramp = half * np.dot(w, (self.outer - s) / (self.outer - self.inner) * s ** (n - 1))
        ln_ramp = ln_sphere_area(n) + math.log(ramp)
        return float(np.logaddexp(ln_core, ln_ramp))

    def ln_l1(self, n):
        return self.ln_height + self.ln_shape_mass(n)

    def ln_sup(self):
        return self.ln_height


@dataclass(frozen=True)
class GaussianProfile(RadialProfile):
    """``A exp(-s**2 / (2 sigma**2))``, truncated where it drops below e**-90."""

    ln_amplitude: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def support(self):
        return self.sigma * math.sqrt(180.0)

    def log_value(self, s):
        s = np.asarray(s, dtype=float)
        return self.ln_amplitude - s * s / (2.0 * self.sigma ** 2)

    def breakpoints(self):
        return np.concatenate([[0.0], self.sigma * np.array([0.5, 1, 1.5, 2, 3, 4, 5, 6, 8, 10]),
                               [self.support]])

    def kinks(self):
        # the truncation edge: invisible in values, but the convolution's
        # log drops steeply past it at small t
        return np.array([self.support])

    def ln_l1(self, n):
        return self.ln_amplitude + 0.5 * n * math.log(2.0 * math.pi * self.sigma ** 2)

    def ln_sup(self):
        return self.ln_amplitude


@dataclass(frozen=True)
class TableProfile(RadialProfile):
    """Piecewise-linear radial table, zero beyond the last radius."""

    radii: tuple
    values: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("radial table needs at least two (r, value) pairs")
        if r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("table radii must start at 0 and increase")
        if np.any(v < 0):
            raise ValueError("radial table values must be nonnegative")
        object.__setattr__(self, "radii", tuple(map(float, r)))
        object.__setattr__(self, "values", tuple(map(float, v)))

    @property
    def support(self):
        return self.radii[-1]

    def log_value(self, s):
        s = np.asarray(s, dtype=float)
        v = np.interp(s, self.radii, self.values, right=0.0)
        with np.errstate(divide="ignore"):
            return np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), -np.inf)

    def breakpoints(self):
        return np.asarray(self.radii)

    def ln_l1(self, n):
        x, w = gauss_legendre(n // 2 + 2)
        total = 0.0
        for lo, hi, vlo, vhi in zip(self.radii[:-1], self.radii[1:], self.values[:-1], self.values[1:]):
            half = 0.5 * (hi - lo)
            s = lo + half + half * x
            v = vlo + (vhi - vlo) * (s - lo) / (hi - lo)
            total += half * float(np.dot(w, v * s ** (n - 1)))
        if total <= 0:
            return -math.inf
        return ln_sphere_area(n) + math.log(total)

    def ln_sup(self):
        m = max(self.values)
        return math.log(m) if m > 0 else -math.inf


# ---------------------------------------------------------------------------
# the two-dimensional shell rule


def _theta_breaks(kappa):
    """Angular breakpoints, shape ``kappa.shape + (len(_THETA_LEVELS),)``.

    Cut where ``kappa * 2 sin(theta/2)**2`` crosses each level; the half-angle
    form keeps full precision when ``kappa`` is huge and the angles tiny.
    """
    kappa = np.asarray(kappa, dtype=float)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        half = np.sqrt(_THETA_LEVELS / (2.0 * kappa))
    half = np.where(np.isfinite(half), half, 1.0)
    half[..., 0] = 0.0
    return 2.0 * np.arcsin(np.minimum(half, 1.0))


def log_angular(n: int, kappa, level: int = 0):
    """``ln(sigma_{n-2} int_0^pi exp(-kappa (1 - cos theta)) sin**(n-2) theta dtheta)``.

    For ``n = 1`` the "sphere" is the two points ``theta in {0, pi}`` and the
    value is ``ln(1 + exp(-2 kappa))``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if n == 1:
        return np.log1p(np.exp(-2.0 * kappa))
    breaks = _theta_breaks(kappa)
    for _ in range(level):
        breaks = bisect_breaks(breaks)
    theta, w = panel_rule(breaks, _THETA_ORDER)
    with np.errstate(divide="ignore"):
        vals = -2.0 * kappa[..., None] * np.sin(0.5 * theta) ** 2
        if n > 2:
            vals = vals + (n - 2) * np.log(np.sin(theta))
    ln_sigma = math.log(2.0) if n == 2 else ln_sphere_area(n - 1)
    return ln_sigma + lse(vals + log_weights(w), axis=-1)


def log_angular_bessel(n: int, kappa):
    """Closed form of :func:`log_angular` through the scaled Bessel function.

    ``int_0^pi exp(kappa (cos theta - 1)) sin**(2 nu) theta dtheta
    = sqrt(pi) Gamma(nu + 1/2) (2/kappa)**nu ive(nu, kappa)`` with
    ``nu = (n - 2) / 2``; a two-term series takes over for tiny ``kappa``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if n == 1:
        return np.log1p(np.exp(-2.0 * kappa))
    nu = 0.5 * (n - 2)
    ln_sigma = math.log(2.0) if n == 2 else ln_sphere_area(n - 1)
    if n == 3:
        # elementary: 2 pi (1 - exp(-2 kappa)) / kappa
        out = np.full(kappa.shape, math.log(2.0))
        pos = kappa > 0
        k = kappa[pos]
        out[pos] = np.log(-np.expm1(-2.0 * k)) - np.log(k)
        return ln_sigma + out
    const = ln_sigma + 0.5 * math.log(math.pi) + float(gammaln(nu + 0.5))
    out = np.empty(kappa.shape)
    small = kappa < 1e-6
    large = kappa > 1e6
    mid = ~(small | large)
    k = kappa[small]
    out[small] = -float(gammaln(nu + 1.0)) - k + k * k / (4.0 * (nu + 1.0))
    # Hankel expansion of ive; scipy's ive returns nan beyond ~1e9
    k = kappa[large]
    mu = 4.0 * nu * nu
    x = 1.0 / (8.0 * k)
    corr = 1.0 - (mu - 1.0) * x + 0.5 * (mu - 1.0) * (mu - 9.0) * x * x
    out[large] = nu * np.log(2.0 / k) - 0.5 * np.log(2.0 * math.pi * k) + np.log(corr)
    k = kappa[mid]
    bessel = {2: i0e, 4: i1e}.get(n, lambda x: ive(nu, x))
    out[mid] = nu * np.log(2.0 / k) + np.log(bessel(k))
    return const + out


def _s_breaks(profile: RadialProfile, d, t):
    d = np.asarray(d, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[:, None]
    S = profile.support
    star = np.clip(d, 0.0, S)
    scale = np.sqrt(2.0 * t) * np.ones(d.shape)
    outside = d > S
    with np.errstate(divide="ignore"):
        lin = np.where(outside, 2.0 * t / np.where(outside, d - S, 1.0), np.inf)
    scale = np.minimum(scale, lin)
    offs = scale * _S_OFFSETS
    pts = np.concatenate([np.broadcast_to(profile.breakpoints(), (d.shape[0], len(profile.breakpoints()))),
                          star, star - offs, star + offs], axis=1)
    return _compact(np.clip(pts, 0.0, S))


def _compact(breaks):
    """Sort rows and squeeze out repeated breakpoints (padding with the row max)."""
    b = np.sort(breaks, axis=1)
    dup = np.zeros(b.shape, dtype=bool)
    dup[:, 1:] = b[:, 1:] <= b[:, :-1]
    top = b[:, -1:]
    b = np.sort(np.where(dup, np.inf, b), axis=1)
    keep = np.isfinite(b).sum(axis=1).max()
    b = b[:, :keep]
    return np.where(np.isfinite(b), b, top)


def _shell_log_values(profile: RadialProfile, n: int, d, t, level: int, angular):
    # only the radial rule is refined; the angular rule is accurate to ~1e-12
    # on its own (checked against the Bessel closed form in the tests)
    s_breaks = _s_breaks(profile, d, t)
    for _ in range(level):
        s_breaks = bisect_breaks(s_breaks)
    s, w = panel_rule(s_breaks, _S_ORDER)
    d = np.asarray(d, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[:, None]
    kappa = d * s / (2.0 * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = profile.log_value(s) - (d - s) ** 2 / (4.0 * t)
        if n > 1:
            vals = vals + (n - 1) * np.log(s)
        vals = vals + angular(n, kappa)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    return lse(vals + log_weights(w), axis=1) - 0.5 * n * np.log(4.0 * math.pi * t[:, 0])


def log_shell_convolution(profile: RadialProfile, n: int, d, t,
                          rtol: float = DEFAULT_RTOL, angular: str = "quadrature",
                          negligible: float = -math.inf):
    """``ln int K_t(x - y) g(|y|) dy`` for every ``|x| = d`` in the array ``d``.

    ``t`` is a scalar or an array matching ``d``.  The radial rule is
    evaluated at successive refinement levels (every panel bisected) until
    two levels agree to ``rtol`` in relative terms.  ``angular`` selects the
    Gauss-Legendre angular rule (``"quadrature"``) or its Bessel closed form
    (``"bessel"``, much cheaper, used for dense tables).  Values whose log
    stays below ``negligible`` at every level are accepted unconverged; a
    caller that knows they cannot matter uses this to skip scales below
    floating-point resolution.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), d.shape)
    if not np.all(t > 0):
        raise ValueError("t must be positive")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if angular == "quadrature":
        ang, chunk = log_angular, _CHUNK
    elif angular == "bessel":
        ang, chunk = log_angular_bessel, 16 * _CHUNK
    else:
        raise ValueError(f"unknown angular rule {angular!r}")
    d_flat, t_flat = d.ravel(), t.ravel()
    out = np.empty(d_flat.shape)
    for lo in range(0, d_flat.size, chunk):
        part, tp = d_flat[lo:lo + chunk], t_flat[lo:lo + chunk]
        prev = _shell_log_values(profile, n, part, tp, 0, ang)
        for level in range(1, _MAX_LEVEL + 1):
            cur = _shell_log_values(profile, n, part, tp, level, ang)
            both = np.isfinite(prev) & np.isfinite(cur)
            gap = np.zeros_like(cur)
            with np.errstate(over="ignore"):
                gap[both] = np.abs(np.expm1(cur[both] - prev[both]))
            mismatch = np.isfinite(prev) != np.isfinite(cur)
            # attainable accuracy: ln values of size |x| carry ~1e-15 |x|, and
            # the exponent (d - s)**2 / 4t inherits the rounding of d - s,
            # about eps d |d - s| / 2t with |d - s| ~ sqrt(4 t |ln|)
            mag = np.abs(np.where(np.isfinite(cur), cur, 0.0))
            floor = (rtol + 1e-12 * mag
                     + 8.0 * _EPS * (part + profile.support) * np.sqrt((mag + 1.0) / tp))
            tiny = (np.where(np.isfinite(cur), cur, -np.inf) < negligible) & \
                   (np.where(np.isfinite(prev), prev, -np.inf) < negligible)
            if np.all((gap <= floor) | tiny) and not np.any(mismatch & ~tiny):
                break
            prev = cur
        else:
            raise QuadratureError(f"shell quadrature missed rtol={rtol} after {_MAX_LEVEL} refinements")
        out[lo:lo + chunk] = cur
    return out.reshape(d.shape)


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class SpikeSpec:
    """A plateau of ``height`` on ``B(p, inner)`` tapering to 0 at ``outer``.

    The centre ``p`` sits on the first coordinate axis at ``center_distance``.
    The spike is added on top of the base profile.
    """

    center_distance: float
    inner_radius: float
    outer_radius: float
    height: LogScalar

    def __post_init__(self):
        if not self.center_distance > 0:
            raise ValueError("spike centre distance must be positive")
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")
        if not isinstance(self.height, LogScalar):
            object.__setattr__(self, "height", LogScalar.from_real(self.height))

    @property
    def profile(self) -> PlateauProfile:
        ln_h = self.height.ln if self.height.sign else 0.0
        return PlateauProfile(self.inner_radius, self.outer_radius, ln_h)

    def ln_l1(self, n: int) -> float:
        if self.height.sign == 0:
            return -math.inf
        return self.profile.ln_l1(n)


class Base:
    """Radial base data centred at the origin."""

    name = "base"
    l1 = True

    def profile(self) -> RadialProfile | None:
        return None

    def constant(self) -> float:
        return 0.0

    def value(self, r):
        prof = self.profile()
        r = np.asarray(r, dtype=float)
        if prof is None:
            return np.full(r.shape, self.constant())
        return np.exp(prof.log_value(r))

    def ln_l1(self, n: int) -> float:
        prof = self.profile()
        return -math.inf if prof is None else prof.ln_l1(n)

    def ln_sup(self) -> float:
        prof = self.profile()
        if prof is None:
            c = self.constant()
            return math.log(c) if c > 0 else -math.inf
        return prof.ln_sup()

    def scaled(self, lam: float) -> "Base":
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Base):
    name = "zero"

    def scaled(self, lam):
        return self

    def to_config(self):
        return {"base": "zero"}


@dataclass(frozen=True)
class Constant(Base):
    c: float
    name = "constant"
    l1 = False

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("base data must be nonnegative")

    def constant(self):
        return self.c

    def ln_l1(self, n):
        return math.inf if self.c > 0 else -math.inf

    def scaled(self, lam):
        return Constant(self.c * lam)

    def to_config(self):
        return {"base": "constant", "c": self.c}


@dataclass(frozen=True)
class Gaussian(Base):
    """``amplitude * exp(-|x|**2 / (2 sigma**2))``."""

    amplitude: float
    sigma: float
    name = "gaussian"

    def __post_init__(self):
        if self.amplitude < 0 or not self.sigma > 0:
            raise ValueError("Gaussian base needs amplitude >= 0 and sigma > 0")

    def profile(self):
        if self.amplitude == 0:
            return None
        return GaussianProfile(math.log(self.amplitude), self.sigma)

    def closed_form(self, n: int, r, t):
        """Exact evolution: variance ``sigma**2`` grows to ``sigma**2 + 2t``."""
        v = self.sigma ** 2 + 2.0 * t
        r = np.asarray(r, dtype=float)
        return self.amplitude * (self.sigma ** 2 / v) ** (0.5 * n) * np.exp(-r * r / (2.0 * v))

    def scaled(self, lam):
        return Gaussian(self.amplitude * lam, self.sigma)

    def to_config(self):
        return {"base": "gaussian", "amplitude": self.amplitude, "sigma": self.sigma}


@dataclass(frozen=True)
class BallIndicator(Base):
    """``h`` on the ball of radius ``rho`` about the origin, 0 outside."""

    rho: float
    h: float
    name = "ball"

    def __post_init__(self):
        if not self.rho > 0 or self.h < 0:
            raise ValueError("BallIndicator needs rho > 0 and h >= 0")

    def profile(self):
        if self.h == 0:
            return None
        return PlateauProfile(self.rho, self.rho, math.log(self.h))

    def scaled(self, lam):
        return BallIndicator(self.rho, self.h * lam)

    def to_config(self):
        return {"base": "ball", "rho": self.rho, "h": self.h}


@dataclass(frozen=True)
class L1RadialTable(Base):
    radii: tuple
    values: tuple
    name = "table"

    def __post_init__(self):
        TableProfile(tuple(self.radii), tuple(self.values))  # validates
        object.__setattr__(self, "radii", tuple(map(float, self.radii)))
        object.__setattr__(self, "values", tuple(map(float, self.values)))

    def profile(self):
        if max(self.values) == 0:
            return None
        return TableProfile(self.radii, self.values)

    def scaled(self, lam):
        return L1RadialTable(self.radii, tuple(v * lam for v in self.values))

    def to_config(self):
        return {"base": "table", "radii": list(self.radii), "values": list(self.values)}


@dataclass(frozen=True)
class Component:
    """One radial piece of the data: ``sign * g(|x - center|)``."""

    center: float
    profile: RadialProfile
    sign: int = 1


@dataclass(frozen=True)
class InitialData:
    dimension: int
    base: Base = field(default_factory=Zero)
    spikes: tuple = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        object.__setattr__(self, "spikes", tuple(self.spikes))
        sp = sorted(self.spikes, key=lambda s: s.center_distance)
        for a, b in zip(sp, sp[1:]):
            if b.center_distance - a.center_distance < a.outer_radius + b.outer_radius:
                raise ValueError("spike balls overlap")

    @property
    def n(self) -> int:
        return self.dimension

    @cached_property
    def components(self) -> tuple:
        comps = []
        prof = self.base.profile()
        if prof is not None:
            comps.append(Component(0.0, prof, 1))
        for sp in self.spikes:
            if sp.height.sign != 0:
                comps.append(Component(sp.center_distance, sp.profile, sp.height.sign))
        return tuple(comps)

    @property
    def base_constant(self) -> float:
        return self.base.constant()

    def ln_l1(self) -> float:
        """``ln`` of an upper bound on ``||u_0||_1`` (exact for disjoint supports)."""
        terms = [self.base.ln_l1(self.n)] + [sp.ln_l1(self.n) for sp in self.spikes]
        return float(np.logaddexp.reduce(terms))

    def ln_sup(self) -> float:
        """``ln sup |u_0|``, an upper bound when spikes sit on a nonzero base."""
        base = self.base.ln_sup()
        spikes = [sp.height.ln for sp in self.spikes if sp.height.sign]
        if not spikes:
            return base
        if base == -math.inf:
            return max(spikes)
        return float(np.logaddexp(base, max(spikes)))

    def scaled(self, lam: float) -> "InitialData":
        if not lam >= 0:
            raise ValueError("scale factor must be nonnegative")
        ln_lam = math.log(lam) if lam > 0 else None
        spikes = []
        for sp in self.spikes:
            h = sp.height * LogScalar.from_real(lam) if ln_lam is not None else ZERO
            spikes.append(SpikeSpec(sp.center_distance, sp.inner_radius, sp.outer_radius, h))
        return InitialData(self.dimension, self.base.scaled(lam), tuple(spikes))

    def patch_radii(self) -> list:
        """Disjoint balls around the spike centres, each containing its spike.

        Neighbouring patches share the gap between their spikes equally and
        never reach the origin, which keeps the domain split used by the
        estimators exact.
        """
        sp = self.spikes
        out = []
        for k, s in enumerate(sp):
            gaps = [abs(o.center_distance - s.center_distance) for j, o in enumerate(sp) if j != k]
            half_gap = 0.5 * min(gaps, default=1.0)
            room = min(half_gap, s.center_distance, 0.5 + s.outer_radius)
            if room < s.outer_radius:
                # a lopsided neighbour pair: split the free gap instead
                room = s.outer_radius
                for j, o in enumerate(sp):
                    if j != k:
                        gap = abs(o.center_distance - s.center_distance)
                        room = min(room, s.outer_radius + 0.5 * (gap - s.outer_radius - o.outer_radius))
                room = max(room, s.outer_radius)
            out.append(room)
        return out

    def initial_value(self, x) -> float:
        """``u_0(x)`` read off directly."""
        z, rho = _axial(x, self.n)
        total = float(self.base.value(math.hypot(z, rho)))
        for sp in self.spikes:
            dist = math.hypot(z - sp.center_distance, rho)
            if sp.height.sign:
                lv = float(sp.profile.log_value(dist))
                if lv > -math.inf:
                    total += (LogScalar(sp.height.sign, lv)).to_real()
        return total

    def to_config(self) -> dict:
        cfg = {"dimension": self.dimension, **self.base.to_config()}
        cfg["spikes"] = [
            {"center_distance": s.center_distance, "inner_radius": s.inner_radius,
             "outer_radius": s.outer_radius, "height": s.height.to_json()}
            for s in self.spikes
        ]
        return cfg


def _axial(x, n: int):
    """``(x_1, |x_perp|)`` of a point given as a length-``n`` sequence."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"point must have {n} coordinates")
    return float(x[0]), float(np.linalg.norm(x[1:])) if n > 1 else 0.0


# ---------------------------------------------------------------------------
# solution handle and evaluation


@dataclass(frozen=True)
class SolutionHandle:
    data: InitialData
    rtol: float = DEFAULT_RTOL

    @property
    def n(self) -> int:
        return self.data.dimension

    def ln_components(self, z, rho, t):
        """Signed log values of every component at axial points ``(z, rho)``.

        ``t`` is a scalar or an array broadcasting against the points.
        Returns ``(lns, signs)`` of shape ``(n_components + 1, N)``; the last
        row is the constant base.
        """
        z = np.atleast_1d(np.asarray(z, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        z, rho, t = np.broadcast_arrays(z, rho, np.asarray(t, dtype=float))
        rows, signs = [], []
        for comp in self.data.components:
            dist = np.hypot(z - comp.center, rho)
            rows.append(log_shell_convolution(comp.profile, self.n, dist.ravel(), t.ravel(),
                                              self.rtol).reshape(z.shape))
            signs.append(np.full(z.shape, comp.sign, dtype=float))
        c = self.data.base_constant
        rows.append(np.full(z.shape, math.log(c) if c > 0 else -np.inf))
        signs.append(np.full(z.shape, 1.0 if c > 0 else 0.0))
        return np.array(rows), np.array(signs)

    def ln_u(self, z, rho, t):
        lns, signs = self.ln_components(z, rho, t)
        return signed_logsumexp(lns, signs, axis=0)

    def ball_l2_squared(self, R: float, t: float) -> float:
        from .estimator import spatial_integral

        return spatial_integral(self, R, t, power=2.0).value.to_real()


def evolve_point(sol: SolutionHandle, x, t: float) -> LogScalar:
    """``u(x, t)``, the heat-kernel convolution of the data, as a LogScalar."""
    if not t > 0:
        raise ValueError("evolve_point needs t > 0; read initial data directly at t = 0")
    z, rho = _axial(x, sol.n)
    ln, sign = sol.ln_u(z, rho, t)
    return LogScalar(int(sign[0]), float(ln[0]))


def evolve_axial(sol: SolutionHandle, z, rho, t):
    """Vectorised evaluation at axial coordinates; returns ``(ln|u|, sign)``."""
    if not np.all(np.asarray(t) > 0):
        raise ValueError("t must be positive")
    return sol.ln_u(z, rho, t)


def spike_contribution(spike: SpikeSpec, n: int, x, t: float, rtol: float = DEFAULT_RTOL) -> LogScalar:
    """The convolution of a single spike at the point ``x``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if spike.height.sign == 0:
        return ZERO
    z, rho = _axial(x, n)
    d = math.hypot(z - spike.center_distance, rho)
    ln = float(log_shell_convolution(spike.profile, n, [d], t, rtol)[0])
    return LogScalar(spike.height.sign, ln)


def ball_gaussian_mass_radial(n: int, rho: float, t: float, rtol: float = 1e-12) -> LogScalar:
    """Kernel mass of ``B(x, rho)`` seen from its own centre, as a 1D integral."""
    c = ln_sphere_area(n) - 0.5 * n * math.log(4.0 * math.pi * t)

    def logf(s):
        with np.errstate(divide="ignore"):
            return c + (n - 1) * np.log(s) - s * s / (4.0 * t)

    w = math.sqrt(t)
    breaks = sorted({0.0, rho, *[min(rho, w * k) for k in (0.5, 1, 2, 4, 8, 16)]})
    ln, _ = adaptive_log_gl(logf, 0.0, rho, rtol=rtol, order=12, breaks=breaks)
    return LogScalar(1, ln)


def ball_gaussian_mass(n: int, d: float, rho: float, t: float, rtol: float = DEFAULT_RTOL) -> LogScalar:
    """``int_{B(p, rho)} K_t(x - y) dy`` with ``|x - p| = d``.

    At ``d = 0`` the shell rule is checked against the one-dimensional radial
    reduction and a disagreement beyond ``rtol`` raises QuadratureError.
    """
    if not (rho > 0 and t > 0 and d >= 0):
        raise ValueError("need rho > 0, t > 0, d >= 0")
    ln = float(log_shell_convolution(PlateauProfile(rho, rho), n, [d], t, rtol)[0])
    if d == 0:
        ref = ball_gaussian_mass_radial(n, rho, t)
        if abs(math.expm1(ln - ref.ln)) > max(rtol, 1e-8):
            raise QuadratureError("shell and radial ball masses disagree")
    return LogScalar(1, ln)


def linf_envelope(sol: SolutionHandle, t: float) -> LogScalar | None:
    """``||u_0||_1 / (4 pi t)**(n/2)``, or ``None`` when the data is not L1."""
    if not t > 0:
        raise ValueError("t must be positive")
    ln_l1 = sol.data.ln_l1()
    if ln_l1 == math.inf:
        return None
    if ln_l1 == -math.inf:
        return ZERO
    return LogScalar(1, ln_l1 - 0.5 * sol.n * math.log(4.0 * math.pi * t))


# ---------------------------------------------------------------------------
# radial finite differences (independent oracle)


@dataclass
class RadialFDMResult:
    r: np.ndarray
    times: list
    snapshots: list
    mass0: float
    mass_drift: float
    boundary_outflow: float

    def at(self, r: float, k: int = -1) -> float:
        return float(np.interp(r, self.r, self.snapshots[k]))


@numba.njit(cache=True)
def _fdm_advance(u, coef_lo, coef_hi, steps):
    J = u.shape[0]
    nxt = np.empty_like(u)
    outflow = 0.0
    for _ in range(steps):
        nxt[0] = u[0] + coef_hi[0] * (u[1] - u[0])
        for j in range(1, J - 1):
            nxt[j] = u[j] + coef_hi[j] * (u[j + 1] - u[j]) - coef_lo[j] * (u[j] - u[j - 1])
        nxt[J - 1] = 0.0
        outflow += u[J - 2]
        for j in range(J):
            u[j] = nxt[j]
    return outflow


def _cell_averages(profile_fn, breaks_fn, edges, n):
    x, w = gauss_legendre(8)
    avg = np.empty(len(edges) - 1)
    kinks = np.asarray(breaks_fn)
    for j, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        pts = [lo, *[b for b in kinks if lo < b < hi], hi]
        num = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            half = 0.5 * (b - a)
            s = a + half + half * x
            num += half * float(np.dot(w, profile_fn(s) * s ** (n - 1)))
        avg[j] = num * n / (hi ** n - lo ** n)
    return avg


def radial_fdm_solve(profile, n: int, r_max: float, dr: float, dt: float, T,
                     flux_tol: float = 1e-6) -> RadialFDMResult:
    """Explicit finite-volume solve of ``u_t = u_rr + (n-1)/r u_r``.

    Nodes sit at ``r_j = j dr``; node ``j`` owns the shell between the
    neighbouring midpoints, which makes the scheme conservative and
    symmetric at ``r = 0``.  ``u(r_max) = 0`` absorbs.  ``profile`` is a
    :class:`RadialProfile`, a :class:`Base`, or a vectorised callable.
    ``T`` may be a single time or an increasing list of snapshot times.
    """
    times = [float(T)] if np.isscalar(T) else [float(x) for x in T]
    if any(b <= a for a, b in zip(times, times[1:])) or times[0] <= 0:
        raise ValueError("snapshot times must be positive and increasing")
    J = int(round(r_max / dr)) + 1
    r = dr * np.arange(J)
    edges = np.concatenate([[0.0], 0.5 * (r[:-1] + r[1:]), [r[-1]]])
    area = edges ** (n - 1) if n > 1 else np.ones_like(edges)
    vol = (edges[1:] ** n - edges[:-1] ** n) / n
    coef_hi = np.zeros(J)
    coef_lo = np.zeros(J)
    coef_hi[:-1] = area[1:-1] / (vol[:-1] * dr)
    coef_lo[1:] = area[1:-1] / (vol[1:] * dr)
    dt_stable = 1.0 / float(np.max(coef_hi + coef_lo))
    if dt > min(dr * dr / 4.0, dt_stable) * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates explicit stability (max {min(dr * dr / 4.0, dt_stable):.3g})")

    if isinstance(profile, Base):
        prof = profile.profile()
        fn = (lambda s: np.zeros_like(s)) if prof is None else (lambda s: np.exp(prof.log_value(s)))
        kinks = [] if prof is None else list(prof.breakpoints())
    elif isinstance(profile, RadialProfile):
        fn = lambda s: np.exp(profile.log_value(s))
        kinks = list(profile.breakpoints())
    else:
        fn, kinks = profile, []
    u = _cell_averages(fn, kinks, edges, n)
    u[-1] = 0.0
    mass0 = float(np.dot(vol, u))

    snaps = []
    outflow = 0.0
    now_steps = 0
    for T_k in times:
        target = int(round(T_k / dt))
        if abs(target * dt - T_k) > 1e-9 * T_k:
            raise ValueError("snapshot times must be multiples of dt")
        outflow += _fdm_advance(u, coef_lo * dt, coef_hi * dt, target - now_steps) * dt * area[-2] / dr
        now_steps = target
        snaps.append(u.copy())
    mass = float(np.dot(vol, u))
    scale = abs(mass0) if mass0 != 0 else 1.0
    if abs(outflow) > flux_tol * scale:
        raise ValueError("solution reached the absorbing boundary; enlarge r_max")
    drift = abs(mass + outflow - mass0) / scale
    return RadialFDMResult(r, times, snaps, mass0, drift, outflow)
