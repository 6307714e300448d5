"""Signed log-magnitude reals.

Values like ``exp(i**3)`` for the spike heights or ``exp(-r**2 / 4t)`` for
kernel tails at tiny ``t`` leave the double range long before the
computation is finished.  :class:`LogScalar` stores ``(sign, ln|x|)`` so
products are additions and sums are log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "LogScalar",
    "LogOverflowError",
    "CANCELLATION_RTOL",
    "ZERO",
    "ONE",
    "from_real",
    "from_log",
    "logsumexp_accumulate",
    "signed_logsumexp",
]

#: sums smaller than this fraction of the largest operand are flagged
CANCELLATION_RTOL = 1e-10

_LN_MAX = math.log(np.finfo(float).max)


class LogOverflowError(OverflowError):
    """Raised by :meth:`LogScalar.to_real` when the value has no double."""


@total_ordering
@dataclass(frozen=True)
class LogScalar:
    """A real number as ``sign * exp(ln)``.

    ``sign`` is -1, 0 or +1.  ``ln`` is meaningless when ``sign == 0`` and is
    normalised to ``-inf`` there.  ``cancelled`` is sticky: it is set when an
    addition lost all significant digits and carried through every later
    operation that touches the value.
    """

    sign: int
    ln: float = -math.inf
    cancelled: bool = False

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign!r}")
        if math.isnan(self.ln):
            raise ValueError("ln is NaN")
        if self.sign != 0 and self.ln == -math.inf:
            object.__setattr__(self, "sign", 0)
        if self.sign == 0:
            object.__setattr__(self, "ln", -math.inf)
        elif self.ln == math.inf:
            raise ValueError("infinite magnitude")

    # construction -----------------------------------------------------

    @classmethod
    def from_real(cls, x: float) -> "LogScalar":
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            raise ValueError(f"cannot represent {x!r}")
        if x == 0.0:
            return cls(0)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def exp(cls, ln: float, sign: int = 1) -> "LogScalar":
        """``sign * e**ln`` without ever forming ``e**ln``."""
        return cls(sign, float(ln))

    def to_real(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.ln > _LN_MAX:
            raise LogOverflowError(f"exp({self.ln}) overflows a double")
        return self.sign * math.exp(self.ln)

    def __float__(self) -> float:
        return self.to_real()

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    # arithmetic -------------------------------------------------------

    def __add__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        flag = self.cancelled or other.cancelled
        if other.sign == 0:
            return LogScalar(self.sign, self.ln, flag)
        if self.sign == 0:
            return LogScalar(other.sign, other.ln, flag)
        big, small = (self, other) if self.ln >= other.ln else (other, self)
        delta = small.ln - big.ln  # <= 0
        if big.sign == small.sign:
            return LogScalar(big.sign, big.ln + math.log1p(math.exp(delta)), flag)
        # opposite signs: |big| - |small| = |big| * (1 - e^delta)
        rest = -math.expm1(delta)
        if rest < CANCELLATION_RTOL:
            return LogScalar(0, cancelled=True)
        return LogScalar(big.sign, big.ln + math.log(rest), flag)

    __radd__ = __add__

    def __neg__(self) -> "LogScalar":
        return LogScalar(-self.sign, self.ln, self.cancelled)

    def __sub__(self, other: "LogScalar") -> "LogScalar":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "LogScalar":
        return _coerce(other) + (-self)

    def __mul__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        flag = self.cancelled or other.cancelled
        if self.sign == 0 or other.sign == 0:
            return LogScalar(0, cancelled=flag)
        return LogScalar(self.sign * other.sign, self.ln + other.ln, flag)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogScalar") -> "LogScalar":
        other = _coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogScalar division by zero")
        flag = self.cancelled or other.cancelled
        if self.sign == 0:
            return LogScalar(0, cancelled=flag)
        return LogScalar(self.sign * other.sign, self.ln - other.ln, flag)

    def __rtruediv__(self, other) -> "LogScalar":
        return _coerce(other) / self

    def __pow__(self, e: float) -> "LogScalar":
        e = float(e)
        if self.sign == 0:
            if e > 0:
                return LogScalar(0, cancelled=self.cancelled)
            if e == 0:
                return LogScalar(1, 0.0, self.cancelled)
            raise ZeroDivisionError("zero raised to a negative power")
        if self.sign < 0:
            if not (e.is_integer() and e >= 0):
                raise ValueError("negative base needs a nonnegative integer exponent")
            sign = -1 if int(e) % 2 else 1
        else:
            sign = 1
        return LogScalar(sign, self.ln * e, self.cancelled)

    def sqrt(self) -> "LogScalar":
        return self ** 0.5

    def __abs__(self) -> "LogScalar":
        return LogScalar(abs(self.sign), self.ln, self.cancelled)

    # ordering ---------------------------------------------------------

    def _key(self):
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.ln)

    def cmp(self, other: "LogScalar") -> int:
        """-1, 0 or 1, consistent with the order of the represented reals."""
        a, b = self._key(), _coerce(other)._key()
        return (a > b) - (a < b)

    def __eq__(self, other) -> bool:
        if not isinstance(other, (LogScalar, int, float)):
            return NotImplemented
        return self.cmp(other) == 0

    def __lt__(self, other) -> bool:
        return self.cmp(other) < 0

    def __hash__(self):
        return hash(self._key())

    def isclose(self, other: "LogScalar", rtol: float = 1e-12) -> bool:
        other = _coerce(other)
        if self.sign != other.sign:
            return False
        if self.sign == 0:
            return True
        # |ln a - ln b| is the relative error to first order
        return abs(self.ln - other.ln) <= rtol

    # serialisation ----------------------------------------------------

    def to_json(self) -> dict:
        tag = {1: "+", -1: "-", 0: "0"}[self.sign]
        ln = None if self.sign == 0 else float(f"{self.ln:.15g}")
        out = {"sign": tag, "ln": ln}
        if self.cancelled:
            out["cancelled"] = True
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LogScalar":
        sign = {"+": 1, "-": -1, "0": 0}[obj["sign"]]
        ln = -math.inf if obj.get("ln") is None else float(obj["ln"])
        return cls(sign, ln, bool(obj.get("cancelled", False)))

    def __repr__(self) -> str:
        if self.sign == 0:
            return "LogScalar(0)"
        tag = "+" if self.sign > 0 else "-"
        return f"LogScalar({tag}, ln={self.ln!r})"


ZERO = LogScalar(0)
ONE = LogScalar(1, 0.0)


def _coerce(x) -> LogScalar:
    if isinstance(x, LogScalar):
        return x
    return LogScalar.from_real(x)


def from_real(x: float) -> LogScalar:
    return LogScalar.from_real(x)


def from_log(ln: float, sign: int = 1) -> LogScalar:
    return LogScalar(sign, float(ln))


def logsumexp_accumulate(terms: Iterable[LogScalar]) -> LogScalar:
    """Sum nonnegative terms in log space.

    The whole stream is reduced by a single log-sum-exp, so the result does
    not depend on the order of the terms beyond rounding.
    """
    lns = []
    flag = False
    for term in terms:
        term = _coerce(term)
        if term.sign < 0:
            raise ValueError("negative term in a nonnegative accumulation")
        flag = flag or term.cancelled
        if term.sign > 0:
            lns.append(term.ln)
    if not lns:
        return LogScalar(0, cancelled=flag)
    return LogScalar(1, float(logsumexp(lns)), flag)


def signed_logsumexp(lns, signs, axis=None):
    """Vectorised signed log-sum-exp.

    Returns ``(ln|sum|, sign(sum))`` arrays.  Entries with ``sign == 0`` or
    ``ln == -inf`` contribute nothing.  Sums that cancel below
    :data:`CANCELLATION_RTOL` of the largest term come back as exact zeros.
    """
    lns = np.asarray(lns, dtype=float)
    signs = np.asarray(signs, dtype=float)
    lns, signs = np.broadcast_arrays(lns, signs)
    live = (signs != 0) & np.isfinite(lns)
    safe = np.where(live, lns, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.all(signs[live] > 0) if live.any() else True:
            out = logsumexp(safe, axis=axis)
            sgn = np.where(np.isfinite(out), 1.0, 0.0)
            return out, sgn
        out, sgn = logsumexp(safe, axis=axis, b=np.where(live, signs, 0.0), return_sign=True)
        peak = np.max(safe, axis=axis)
    dead = ~np.isfinite(out) | (out - peak < math.log(CANCELLATION_RTOL))
    out = np.where(dead, -np.inf, out)
    sgn = np.where(dead, 0.0, sgn)
    return out, sgn
