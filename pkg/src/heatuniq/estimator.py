"""Space-time integrals of the evolved data over balls, and class checks.

A ball ``B(0, R)`` is split into disjoint patches around the spikes (polar
coordinates about each spike centre) and the remainder (polar coordinates
about the origin with the patches cut out).  The data is axially symmetric
about the first axis, so each piece is a two-dimensional integral.
Component values come from cubic splines of ``ln c_j(dist)``, tabulated per
time on distance grids graded at the profile kinks.

Time integrals run in ``s = ln t`` from 0 downwards, panel by panel, until
an analytic bound on the remaining ``(0, e**s)`` tail falls below
``TAIL_RTOL`` of the accumulated value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .growth import Growth
from .kernel import (SolutionHandle, _axial, ln_sphere_area, ln_unit_ball_volume,
                     log_shell_convolution)
from .logscalar import ZERO, LogScalar, signed_logsumexp
from .quadrature import QuadratureError, gauss_legendre, log_weights, lse, panel_rule

TAIL_RTOL = 1e-10
MAX_S = 400.0
NEGLIGIBLE_LN = 1e4
_SPACE_ORDER = 10
_SPACE_CHECK = 7
_TIME_ORDER = 10
_TIME_CHECK = 6
_TIME_WIDTH = 2.0
_MAX_TIME_WIDTH = 16.0
_WIDEN_RTOL = 1e-13
_TABLE_OFFSETS = np.array([0.25, 0.5, 1, 1.5, 2, 3, 4, 6, 8, 12, 16, 24, 32])
_PATCH_OFFSETS = np.array([0.25, 0.5, 1, 2, 4, 8, 16, 32])
_PSI_OFFSETS = np.array([0.5, 2.0, 8.0, 32.0])
_END_GRADING = np.array([1e-3, 1e-2, 0.1, 0.3])


def _ln_sigma(n: int) -> float:
    """``ln`` of the area of the unit sphere ``S^(n-2)`` (2 points for n = 2)."""
    return math.log(2.0) if n == 2 else ln_sphere_area(n - 1)


def distance_nodes(profile, t: float, d_max: float) -> np.ndarray:
    """Interpolation nodes for ``ln c(dist)`` on ``[0, d_max]`` at time ``t``.

    Nodes cluster within a few kernel widths of every kink and are graded
    geometrically towards both ends of each interval between kinks (a
    linear taper has a log singularity where it reaches zero).
    """
    w = math.sqrt(2.0 * t)
    kinks = [float(k) for k in profile.kinks() if 0 < k < d_max]
    pts = [np.array([0.0, d_max]), np.linspace(0.0, d_max, 17)]
    for f in kinks:
        pts += [f + w * _TABLE_OFFSETS, f - w * _TABLE_OFFSETS, np.array([f])]
    ends = [0.0, *kinks]
    for a, b in zip(ends[:-1], ends[1:]):
        L = b - a
        steps = max(4, 2 * int(math.log2(L / w)) + 4) if L > w else 3
        g = 0.5 ** (0.5 * np.arange(2, steps))
        pts += [a + L * g, b - L * g]
    x = np.unique(np.clip(np.concatenate(pts), 0.0, d_max))
    return np.unique(np.concatenate([x, 0.5 * (x[1:] + x[:-1])]))


class _Tables:
    """Splines of every component's ``ln c_j(dist)`` at a batch of times."""

    def __init__(self, sol: SolutionHandle, times: np.ndarray, extent: float):
        self.n = sol.n
        comps = sol.data.components
        self.centers = [c.center for c in comps]
        self.signs = [float(c.sign) for c in comps]
        c = sol.data.base_constant
        self.ln_const = math.log(c) if c > 0 else -math.inf
        self.splines = [[None] * len(comps) for _ in times]
        # far below the data's peak nothing contributes to any integral
        ln_floor = sol.data.ln_sup() - NEGLIGIBLE_LN
        for j, comp in enumerate(comps):
            d_max = abs(comp.center) + extent
            grids = [distance_nodes(comp.profile, float(t), d_max) for t in times]
            D = np.concatenate(grids)
            T = np.concatenate([np.full(len(g), t) for g, t in zip(grids, times)])
            ln = log_shell_convolution(comp.profile, sol.n, D, T, sol.rtol, angular="bessel",
                                       negligible=ln_floor)
            if not np.all(np.isfinite(ln)):
                raise QuadratureError("component table has non-finite log values")
            lo = 0
            for k, g in enumerate(grids):
                vals = ln[lo:lo + len(g)]
                self.splines[k][j] = (CubicSpline(g, vals), float(vals.max()))
                lo += len(g)

    def ln_abs_u(self, k: int, z, rho):
        z, rho = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(rho, dtype=float))
        lns, signs = [], []
        for (spl, top), c, sg in zip(self.splines[k], self.centers, self.signs):
            # clamp: a cubic may ring past a steep drop it barely resolves
            lns.append(np.minimum(spl(np.hypot(z - c, rho)), top))
            signs.append(np.full(z.shape, sg))
        if self.ln_const > -math.inf:
            lns.append(np.full(z.shape, self.ln_const))
            signs.append(np.ones(z.shape))
        if not lns:
            return np.full(z.shape, -np.inf), np.zeros(z.shape)
        if all(sg > 0 for sg in self.signs):
            out = lns[0] if len(lns) == 1 else lse(np.array(lns), axis=0)
            return out, np.where(np.isfinite(out), 1.0, 0.0)
        return signed_logsumexp(np.array(lns), np.array(signs), axis=0)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Patch:
    """A ball around spike ``index`` used as a polar-coordinate sub-domain."""

    index: int
    center: float
    radius: float
    kinks: tuple


def spike_patches(sol: SolutionHandle) -> list:
    data = sol.data
    return [Patch(i, sp.center_distance, P, (sp.inner_radius, sp.outer_radius))
            for i, (sp, P) in enumerate(zip(data.spikes, data.patch_radii()))]


def _split(patches, R: float):
    inside = [p for p in patches if p.center + p.radius <= R]
    cut = [p for p in patches if p.center - p.radius < R < p.center + p.radius]
    return inside, cut


class _Spatial:
    """Spatial quadratures at the time nodes of one table batch."""

    def __init__(self, tables: _Tables, times, power: float):
        self.tab = tables
        self.times = times
        self.power = power
        self.n = tables.n
        self._patch_cache = {}

    def _weighted(self, k, z, rho, ln_w):
        ln_u, sgn = self.tab.ln_abs_u(k, z, rho)
        with np.errstate(invalid="ignore"):
            vals = np.where(sgn != 0, self.power * ln_u, -np.inf) + ln_w
        vals = np.where(np.isnan(vals), -np.inf, vals)
        return float(lse(vals.ravel()))

    def patch(self, k: int, center: float, radius: float, kinks, order: int) -> float:
        key = (k, center, radius, order)
        if key in self._patch_cache:
            return self._patch_cache[key]
        n = self.n
        w = math.sqrt(2.0 * self.times[k])
        br = [np.array([0.0, radius])]
        for f in kinks:
            if f <= radius:
                br += [np.array([f]), f + w * _PATCH_OFFSETS, f - w * _PATCH_OFFSETS]
        br = np.unique(np.clip(np.concatenate(br), 0.0, radius))
        r, wr = panel_rule(br, order)
        if n == 1:
            cos_p, sin_p = np.array([1.0, -1.0]), np.zeros(2)
            ln_wp = np.zeros(2)
        else:
            phi, wp = panel_rule(np.linspace(0.0, math.pi, 5), order)
            cos_p, sin_p = np.cos(phi), np.sin(phi)
            ln_wp = _ln_sigma(n) + log_weights(wp) + (n - 2) * np.log(sin_p)
        with np.errstate(divide="ignore"):
            ln_wr = log_weights(wr) + (n - 1) * np.log(r)
        z = center + r[:, None] * cos_p[None, :]
        rho = r[:, None] * np.abs(sin_p)[None, :]
        val = self._weighted(k, z, rho, ln_wr[:, None] + ln_wp[None, :])
        self._patch_cache[key] = val
        return val

    def outer(self, k: int, R: float, excluded, base_kinks, order: int) -> float:
        """``ln int |u|**p`` over ``B(0, R)`` minus the ``excluded`` patches."""
        n = self.n
        t = self.times[k]
        w = math.sqrt(2.0 * t)
        br = [np.array([0.0, R]), np.linspace(0.0, R, 9)]
        for f in base_kinks[0]:
            br.append(np.array([f]))
        for f in base_kinks[1]:
            br += [np.array([f]), f + w * _PATCH_OFFSETS, f - w * _PATCH_OFFSETS]
        for p in excluded:
            lo, hi = p.center - p.radius, p.center + p.radius
            br += [np.array([lo, p.center, hi]), lo + p.radius * _END_GRADING,
                   hi - p.radius * _END_GRADING]
        br = np.unique(np.clip(np.concatenate(br), 0.0, R))
        r, wr = panel_rule(br, order)
        with np.errstate(divide="ignore"):
            ln_wr = log_weights(wr) + (n - 1) * np.log(r)

        # smallest admissible polar angle: the cone hiding an excluded patch
        psi_lo = np.zeros_like(r)
        for p in excluded:
            inside = (r > p.center - p.radius) & (r < p.center + p.radius)
            with np.errstate(divide="ignore", invalid="ignore"):
                c = (r * r + p.center ** 2 - p.radius ** 2) / (2.0 * r * p.center)
            psi = np.arccos(np.clip(np.where(np.isfinite(c), c, 1.0), -1.0, 1.0))
            psi_lo = np.where(inside, np.maximum(psi_lo, psi), psi_lo)

        if n == 1:
            keep_pos = np.where(psi_lo > 0, -np.inf, 0.0)
            z = np.stack([r, -r], axis=1)
            ln_w = ln_wr[:, None] + np.stack([keep_pos, np.zeros_like(r)], axis=1)
            return self._weighted(k, z, np.zeros_like(z), ln_w)

        cols = [psi_lo, np.full_like(r, math.pi)]
        cols += [psi_lo + (math.pi - psi_lo) * f for f in (0.25, 0.5, 0.75)]
        for c in set(self.tab.centers):
            if c == 0:
                continue
            D_lo = np.sqrt(np.maximum(r * r + c * c - 2.0 * r * c * np.cos(psi_lo), 0.0))
            for off in _PSI_OFFSETS:
                D = D_lo + w * off
                cosv = (r * r + c * c - D * D) / (2.0 * r * c)
                cols.append(np.clip(np.arccos(np.clip(cosv, -1.0, 1.0)), psi_lo, math.pi))
        breaks = np.sort(np.stack(cols, axis=1), axis=1)
        psi, wpsi = panel_rule(breaks, order)
        with np.errstate(divide="ignore"):
            ln_w = (_ln_sigma(n) + log_weights(wpsi) + (n - 2) * np.log(np.sin(psi))
                    + ln_wr[:, None])
        return self._weighted(k, r[:, None] * np.cos(psi), r[:, None] * np.sin(psi), ln_w)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SpatialReport:
    """``ln int_{B(0,R)} |u(t)|**p`` with cut spike patches excluded / included."""

    radius: float
    t: float
    power: float
    value: LogScalar
    upper: LogScalar
    error: float
    cut_patches: list = field(default_factory=list)


@dataclass
class IntegralReport:
    """A space-time integral over ``B(0, radius) x (0, 1]`` (or a spike patch).

    ``value`` leaves out spike patches cut by the sphere of radius
    ``radius``; ``upper`` includes them whole and adds ``tail_bound``, the
    analytic bound on the part of the time integral below ``exp(s_min)``.
    ``error`` is a quadrature error estimate in log units.
    """

    radius: float
    mode: str
    a: float | None
    p: float | None
    value: LogScalar
    upper: LogScalar
    error: float
    tail_bound: LogScalar
    s_min: float
    region: str = "ball"
    cut_patches: list = field(default_factory=list)
    comparison: dict | None = None

    @property
    def ln_value(self) -> float:
        return self.value.ln if self.value.sign else -math.inf

    @property
    def ln_upper(self) -> float:
        return self.upper.ln if self.upper.sign else -math.inf

    @property
    def norm(self) -> LogScalar | None:
        """``value**(1/p)`` in Lp mode."""
        if self.mode != "lp":
            return None
        return self.value ** (1.0 / self.p) if self.value.sign else ZERO

    @property
    def inside(self) -> bool | None:
        return None if self.comparison is None else self.comparison["inside"]

    def compared(self, L: Growth) -> "IntegralReport":
        """Attach the comparison with ``L(radius)``.

        Weighted mode compares ``ln`` of the integral, Lp mode ``ln`` of the
        norm; "inside" needs the upper report plus its error to stay below.
        """
        bound = float(L(self.radius))
        scale = 1.0 / self.p if self.mode == "lp" else 1.0
        worst = scale * (self.ln_upper + self.error)
        self.comparison = {
            "L": bound,
            "ln_value": scale * self.ln_value,
            "ln_upper": scale * self.ln_upper,
            "margin": bound - worst,
            "inside": bool(worst <= bound),
        }
        return self

    def to_json(self) -> dict:
        out = {
            "radius": self.radius,
            "region": self.region,
            "mode": self.mode,
            "a": self.a,
            "p": self.p,
            "value": self.value.to_json(),
            "upper": self.upper.to_json(),
            "error": float(f"{self.error:.6g}"),
            "tail_bound": self.tail_bound.to_json(),
            "s_min": self.s_min,
            "cut_patches": list(self.cut_patches),
        }
        if self.mode == "lp":
            out["norm"] = self.norm.to_json()
        if self.comparison is not None:
            out["comparison"] = {k: (float(f"{v:.15g}") if isinstance(v, float) else v)
                                 for k, v in self.comparison.items()}
        return out


# ---------------------------------------------------------------------------
# the space-time engine


@dataclass(frozen=True)
class Region:
    """``kind == "ball"``: ``B(0, radius)``; ``"patch"``: ``B(p_index, radius)``."""

    kind: str
    radius: float
    index: int | None = None


def _region_volume_ln(n: int, region: Region) -> float:
    return ln_unit_ball_volume(n) + n * math.log(region.radius)


def _ln_tail_coefficient(sol: SolutionHandle, region: Region, power: float) -> float:
    """``ln B`` with ``int_region |u(t)|**p <= B`` for every ``t``.

    Uses ``sup|u| <= sup|u_0|`` and ``||u(t)||_1 <= ||u_0||_1``:
    ``B = sup**(p-1) ||u_0||_1`` for ``p >= 1``, ``vol**(1-p) ||u_0||_1**p``
    for ``p < 1``, and always ``sup**p vol``; the smallest applies.
    """
    data = sol.data
    ln_sup = data.ln_sup()
    ln_l1 = data.ln_l1()
    if ln_sup == -math.inf:
        return -math.inf
    ln_vol = _region_volume_ln(sol.n, region)
    cands = [power * ln_sup + ln_vol]
    if ln_l1 < math.inf:
        if power >= 1:
            cands.append((power - 1.0) * ln_sup + ln_l1)
        else:
            cands.append((1.0 - power) * ln_vol + power * ln_l1)
    return min(cands)


def _ln_envelope_tail(sol: SolutionHandle, a: float, power: float, s: float) -> float:
    """``ln`` of ``int_0^{e^s} t**a ||u(t)||_inf**(p-1) ||u_0||_1 dt`` under the
    L1-to-Linf bound; ``inf`` when that integral diverges at 0."""
    ln_l1 = sol.data.ln_l1()
    if power < 1 or ln_l1 == math.inf:
        return math.inf
    if ln_l1 == -math.inf:
        return -math.inf
    half_n = 0.5 * sol.n
    expo = a + 1.0 - (power - 1.0) * half_n
    if expo <= 0:
        return math.inf
    return (power * ln_l1 - (power - 1.0) * half_n * math.log(4.0 * math.pi)
            + expo * s - math.log(expo))


def envelope_integral_bound(sol: SolutionHandle, a: float, power: float = 2.0) -> float:
    """``ln`` of an upper bound on ``int_0^1 t**a int |u|**power dx dt`` over all
    of space, from ``|u| <= ||u_0||_1 (4 pi t)**(-n/2)``; finite iff
    ``a > (power - 1) n / 2 - 1``."""
    return _ln_envelope_tail(sol, a, power, 0.0)


def membership_ceiling(sol: SolutionHandle, a: float) -> float:
    """A constant ``C`` with ``int_0^1 t**a int u**2 <= exp(C)`` at every radius.

    The envelope bound, floored at 1 because growth functions are carried
    in log form and must stay positive.
    """
    return max(envelope_integral_bound(sol, a, 2.0), 1.0)


def _spatial_values(sol, tables, times, power, regions, patches, base_kinks, orders):
    """``[k][region] -> (ln lower, ln upper)`` for each requested order."""
    sp = _Spatial(tables, times, power)
    out = {o: [] for o in orders}
    for k in range(len(times)):
        for o in orders:
            row = []
            for reg in regions:
                if reg.kind == "patch":
                    p = patches[reg.index]
                    v = sp.patch(k, p.center, reg.radius, p.kinks, o)
                    row.append((v, v))
                    continue
                inside, cut = _split(patches, reg.radius)
                parts = [sp.outer(k, reg.radius, inside + cut, base_kinks, o)]
                parts += [sp.patch(k, p.center, p.radius, p.kinks, o) for p in inside]
                lower = float(lse(parts))
                extra = [sp.patch(k, p.center, p.radius, p.kinks, o) for p in cut]
                upper = float(lse([lower] + extra))
                row.append((lower, upper))
            out[o].append(row)
    return out


def _base_breaks(sol):
    """Radial breakpoints of the base profile: ``(smooth ones, kinks)``."""
    smooth, kinks = [], []
    for comp in sol.data.components:
        if comp.center == 0:
            smooth += [float(k) for k in comp.profile.breakpoints() if k > 0]
            kinks += [float(k) for k in comp.profile.kinks() if k > 0]
    return smooth, kinks


def _extent(regions, patches) -> float:
    e = 0.0
    for reg in regions:
        if reg.kind == "patch":
            e = max(e, patches[reg.index].center + reg.radius)
        else:
            e = max(e, reg.radius)
            for p in patches:
                if p.center - p.radius < reg.radius:
                    e = max(e, p.center + p.radius)
    return e


def _check_regions(sol, regions, patches):
    for reg in regions:
        if not reg.radius > 0:
            raise ValueError("radius must be positive")
        if reg.kind == "patch":
            if reg.index is None or not 0 <= reg.index < len(patches):
                raise ValueError("patch region needs a valid spike index")
            if reg.radius > patches[reg.index].radius:
                raise ValueError("patch radius exceeds the spike's free neighbourhood")
        elif reg.kind != "ball":
            raise ValueError(f"unknown region kind {reg.kind!r}")


def spacetime_integrals(sol: SolutionHandle, regions: Sequence[Region], a: float = 0.0,
                        power: float = 2.0, mode: str = "weighted") -> list:
    """``int_0^1 t**a int_region |u|**power dx dt`` for every region at once.

    All regions share the per-time component tables, so asking for several
    radii costs little more than asking for the largest.
    """
    if not a > -1:
        raise ValueError("the time weight needs a > -1")
    if not power > 0:
        raise ValueError("power must be positive")
    regions = list(regions)
    patches = spike_patches(sol)
    _check_regions(sol, regions, patches)
    n = sol.n
    a1 = a + 1.0
    tails = [_ln_tail_coefficient(sol, reg, power) for reg in regions]
    cut_lists = [[p.index for p in _split(patches, reg.radius)[1]] if reg.kind == "ball" else []
                 for reg in regions]

    def report(reg, cuts, value, upper, err, tail, s_min):
        return IntegralReport(
            radius=reg.radius, mode=mode, a=a if mode == "weighted" else None,
            p=power if mode == "lp" else None, value=value, upper=upper, error=err,
            tail_bound=tail, s_min=s_min, region=reg.kind if reg.index is None else f"patch{reg.index}",
            cut_patches=cuts)

    if not sol.data.components and sol.data.base_constant == 0:
        return [report(reg, cuts, ZERO, ZERO, 0.0, ZERO, 0.0) for reg, cuts in zip(regions, cut_lists)]

    base_kinks = _base_breaks(sol)
    extent = _extent(regions, patches)
    xm, wm = gauss_legendre(_TIME_ORDER)
    xc, wc = gauss_legendre(_TIME_CHECK)
    nreg = len(regions)
    panels_lo = [[] for _ in range(nreg)]
    panels_up = [[] for _ in range(nreg)]
    time_err = [[] for _ in range(nreg)]
    space_err = [[] for _ in range(nreg)]

    def panel(s_lo, width):
        half = 0.5 * width
        mid = s_lo + half
        s_main = mid + half * xm
        s_chk = mid + half * xc
        times = np.exp(np.concatenate([s_main, s_chk]))
        tables = _Tables(sol, times, extent)
        nm = len(s_main)
        vals_main = _spatial_values(sol, tables, times[:nm], power, regions, patches, base_kinks,
                                    (_SPACE_ORDER, _SPACE_CHECK))
        tables.splines = tables.splines[nm:]
        vals_chk = _spatial_values(sol, tables, times[nm:], power, regions, patches, base_kinks,
                                   (_SPACE_ORDER,))
        ln_wm = np.log(half * wm) + a1 * s_main
        ln_wc = np.log(half * wc) + a1 * s_chk
        res = []
        for j in range(nreg):
            lo_m = np.array([vals_main[_SPACE_ORDER][k][j][0] for k in range(nm)])
            up_m = np.array([vals_main[_SPACE_ORDER][k][j][1] for k in range(nm)])
            up_s = np.array([vals_main[_SPACE_CHECK][k][j][1] for k in range(nm)])
            up_c = np.array([vals_chk[_SPACE_ORDER][k][j][1] for k in range(len(s_chk))])
            p_lo = float(lse(lo_m + ln_wm))
            p_up = float(lse(up_m + ln_wm))
            t_err = s_err = -math.inf
            if p_up > -math.inf:
                p_chk = float(lse(up_c + ln_wc))
                t_err = p_up + math.log(abs(math.expm1(p_chk - p_up)) + 1e-300)
                with np.errstate(invalid="ignore"):
                    rel = np.abs(np.expm1(np.where(np.isfinite(up_m), up_s - up_m, 0.0)))
                s_err = float(lse(up_m + ln_wm + np.log(rel + 1e-300)))
            res.append((p_lo, p_up, t_err, s_err))
        return res

    def negligible_error(res):
        # panel error small against everything accumulated so far
        for j, (_, p_up, t_err, _) in enumerate(res):
            total = float(lse(panels_up[j] + [p_up]))
            if t_err - total > math.log(_WIDEN_RTOL):
                return False
        return True

    # panels are widened through featureless stretches in ln t and redone at
    # the base width whenever the check rule disagrees
    s_hi = 0.0
    width = _TIME_WIDTH
    while True:
        res = panel(s_hi - width, width)
        if width > _TIME_WIDTH and not negligible_error(res):
            width = _TIME_WIDTH
            continue
        s_lo = s_hi - width
        for j, (p_lo, p_up, t_err, s_err) in enumerate(res):
            panels_lo[j].append(p_lo)
            panels_up[j].append(p_up)
            if p_up > -math.inf:
                time_err[j].append(t_err)
                space_err[j].append(s_err)
        if negligible_error(res):
            width = min(2.0 * width, _MAX_TIME_WIDTH)
        s_hi = s_lo
        done = True
        for j in range(nreg):
            total = float(lse(panels_lo[j]))
            tail = min(tails[j] + a1 * s_lo - math.log(a1), _ln_envelope_tail(sol, a, power, s_lo))
            if tail > math.log(TAIL_RTOL) + total:
                done = False
        if done or -s_lo >= MAX_S:
            break

    out = []
    for j, reg in enumerate(regions):
        lo = float(lse(panels_lo[j]))
        up = float(lse(panels_up[j]))
        ln_tail = min(tails[j] + a1 * s_hi - math.log(a1), _ln_envelope_tail(sol, a, power, s_hi))
        rel = 0.0
        if up > -math.inf:
            terms = time_err[j] + space_err[j]
            rel = math.exp(float(lse(terms)) - up) if terms else 0.0
        value = LogScalar(1, lo) if lo > -math.inf else ZERO
        upper_ln = float(np.logaddexp(up, ln_tail))
        upper = LogScalar(1, upper_ln) if upper_ln > -math.inf else ZERO
        tail = LogScalar(1, ln_tail) if ln_tail > -math.inf else ZERO
        out.append(report(reg, cut_lists[j], value, upper, math.log1p(rel), tail, s_hi))
    return out


def spatial_integral(sol: SolutionHandle, R: float, t: float, power: float = 2.0) -> SpatialReport:
    """``int_{B(0,R)} |u(x, t)|**power dx`` at a single time."""
    if not (R > 0 and t > 0 and power > 0):
        raise ValueError("need R > 0, t > 0 and power > 0")
    if not sol.data.components and sol.data.base_constant == 0:
        return SpatialReport(R, t, power, ZERO, ZERO, 0.0)
    patches = spike_patches(sol)
    reg = Region("ball", R)
    times = np.array([float(t)])
    tables = _Tables(sol, times, _extent([reg], patches))
    base_kinks = _base_breaks(sol)
    vals = _spatial_values(sol, tables, times, power, [reg], patches, base_kinks,
                           (_SPACE_ORDER, _SPACE_CHECK))
    lo, up = vals[_SPACE_ORDER][0][0]
    chk = vals[_SPACE_CHECK][0][0][1]
    err = abs(math.expm1(chk - up)) if up > -math.inf else 0.0
    as_ls = lambda ln: LogScalar(1, ln) if ln > -math.inf else ZERO
    cuts = [p.index for p in _split(patches, R)[1]]
    return SpatialReport(R, t, power, as_ls(lo), as_ls(up), math.log1p(err), cuts)


def weighted_spacetime_l2(sol: SolutionHandle, a: float, radius: float,
                          L: Growth | None = None) -> IntegralReport:
    """``int_0^1 t**a int_{B(0, radius)} u**2 dx dt``."""
    rep = spacetime_integrals(sol, [Region("ball", radius)], a=a, power=2.0)[0]
    return rep.compared(L) if L is not None else rep


def lp_spacetime_norm(sol: SolutionHandle, p: float, radius: float,
                      L: Growth | None = None) -> IntegralReport:
    """``int_0^1 int_{B(0, radius)} |u|**p`` and its ``1/p`` power (``.norm``)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rep = spacetime_integrals(sol, [Region("ball", radius)], a=0.0, power=p, mode="lp")[0]
    return rep.compared(L) if L is not None else rep


def patch_spacetime_integral(sol: SolutionHandle, index: int, radius: float | None = None,
                             a: float = 0.0, power: float = 2.0) -> IntegralReport:
    """``int_0^1 t**a int_{B(p_index, radius)} |u|**power`` (default: the plateau ball)."""
    sp = sol.data.spikes[index]
    radius = sp.inner_radius if radius is None else radius
    return spacetime_integrals(sol, [Region("patch", radius, index)], a=a, power=power)[0]


def class_membership(sol: SolutionHandle, a: float, L: Growth, radii: Sequence[float]) -> list:
    """Per radius: the weighted integral against ``exp(L(radius))``.

    A radius is "inside" when ``ln`` of the upper report plus its error
    estimate stays at or below ``L(radius)``.
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b <= a_ for a_, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and increasing")
    reps = spacetime_integrals(sol, [Region("ball", r) for r in radii], a=a, power=2.0)
    return [r.compared(L) for r in reps]


# ---------------------------------------------------------------------------
# pointwise envelopes


@dataclass
class EnvelopeCheck:
    samples: int
    violations: list
    min_margin: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "samples": self.samples,
            "violations": self.violations,
            "min_margin": float(f"{self.min_margin:.15g}"),
        }


def linf_envelope_fn(sol: SolutionHandle) -> Callable[[float, float], LogScalar] | None:
    """``(r, t) -> ||u_0||_1 / (4 pi t)**(n/2)`` or ``None`` for non-L1 data."""
    ln_l1 = sol.data.ln_l1()
    if ln_l1 == math.inf:
        return None
    n = sol.n

    def env(r, t):
        if ln_l1 == -math.inf:
            return ZERO
        return LogScalar(1, ln_l1 - 0.5 * n * math.log(4.0 * math.pi * t))

    return env


def scaled_envelope(env: Callable, factor: float) -> Callable:
    """``exp(factor * ln env)``: shrinks (factor < 1) a log-domain envelope."""

    def out(r, t):
        v = env(r, t)
        return LogScalar(v.sign, factor * v.ln) if v.sign else v

    return out


def envelope_samples(sol: SolutionHandle, count: int, seed: int = 0,
                     t_range=(1e-12, 1.0)) -> list:
    """Deterministic ``(x, t)`` samples: half uniform in a ball covering the
    data, half within twice the outer radius of a spike centre; ``t`` is
    log-uniform on ``t_range``."""
    rng = np.random.default_rng(seed)
    n = sol.n
    spikes = sol.data.spikes
    reach = max([s.center_distance + s.outer_radius for s in spikes], default=1.0) + 1.0
    out = []
    for k in range(count):
        t = float(np.exp(rng.uniform(math.log(t_range[0]), math.log(t_range[1]))))
        if spikes and k % 2:
            sp = spikes[int(rng.integers(len(spikes)))]
            d = rng.normal(size=n)
            d *= 2.0 * sp.outer_radius * rng.uniform() ** (1.0 / n) / np.linalg.norm(d)
            d[0] += sp.center_distance
        else:
            d = rng.normal(size=n)
            d *= reach * rng.uniform() ** (1.0 / n) / np.linalg.norm(d)
        out.append((d, t))
    return out


def pointwise_envelope_check(sol: SolutionHandle, envelope: Callable, samples: Sequence,
                             tol: float | None = None) -> EnvelopeCheck:
    """Compare ``u(x, t)`` with ``envelope(|x|, t)`` at every sample.

    Violations (``|u|`` above the envelope by more than the quadrature
    tolerance) are listed with their log margins.
    """
    tol = 10.0 * sol.rtol if tol is None else tol
    if not samples:
        return EnvelopeCheck(0, [], math.inf)
    axial = [_axial(x, sol.n) for x, _ in samples]
    z = np.array([q[0] for q in axial])
    rho = np.array([q[1] for q in axial])
    t = np.array([float(s[1]) for s in samples])
    if np.any(t <= 0):
        raise ValueError("sample times must be positive")
    ln_u, sgn = sol.ln_u(z, rho, t)
    violations = []
    min_margin = math.inf
    for k, (x, tk) in enumerate(samples):
        env = envelope(float(np.hypot(z[k], rho[k])), float(tk))
        ln_env = env.ln if env.sign > 0 else -math.inf
        lu = float(ln_u[k]) if sgn[k] != 0 else -math.inf
        if lu == -math.inf:
            margin = math.inf
        else:
            margin = ln_env - lu
        min_margin = min(min_margin, margin)
        if margin < -math.log1p(tol):
            violations.append({"index": k, "x": [float(v) for v in np.atleast_1d(x)], "t": float(tk),
                               "ln_u": lu, "ln_envelope": ln_env, "margin": margin})
    return EnvelopeCheck(len(samples), violations, min_margin)


# ---------------------------------------------------------------------------
# emitters

CSV_COLUMNS = ["region", "radius", "mode", "a", "p", "sign", "ln_value", "ln_upper", "error",
               "ln_tail", "L", "margin", "verdict"]


def reports_to_csv(reports: Sequence[IntegralReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    fmt = lambda v: "" if v is None else repr(float(v))
    for r in reports:
        cmp = r.comparison or {}
        verdict = "" if not cmp else ("inside" if cmp["inside"] else "outside")
        w.writerow([r.region, repr(r.radius), r.mode, fmt(r.a), fmt(r.p), r.value.to_json()["sign"],
                    fmt(r.ln_value), fmt(r.ln_upper), fmt(r.error),
                    fmt(r.tail_bound.ln if r.tail_bound.sign else -math.inf),
                    fmt(cmp.get("L")), fmt(cmp.get("margin")), verdict])
    return buf.getvalue()


def plot_script(csv_name: str, title: str = "space-time integrals") -> str:
    """A gnuplot script drawing ``ln_value`` (and ``L`` when present) against radius."""
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        "set xlabel 'radius'",
        "set ylabel 'log value'",
        f"plot '{csv_name}' using 2:7 with linespoints title 'ln value', \\",
        f"     '{csv_name}' using 2:11 with lines title 'L(r)'",
        "",
    ])
