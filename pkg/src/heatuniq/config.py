"""Plain-text run configuration.

The format is INI (``[section]`` headers, ``key = value`` lines).  A line of
the form ``name key=value key=value`` is shorthand for a one-line section,
so ``spiked n=3 i_max=3`` reads the same as::

    [spiked]
    n = 3
    i_max = 3
"""

from __future__ import annotations

import configparser
import math
import re

from .growth import Growth, growth_from_config
from .kernel import (Base, BallIndicator, Constant, Gaussian, InitialData, L1RadialTable,
                     SpikeSpec, Zero)
from .logscalar import LogScalar
from .spikes import SpikedConfig, build_example

_SHORTHAND = re.compile(r"^([A-Za-z_][\w-]*)((?:\s+[^\s=]+=\S*)+)\s*$")


class ConfigError(ValueError):
    """Unparseable or incomplete configuration."""


def expand_shorthand(text: str) -> str:
    out = []
    for line in text.splitlines():
        m = _SHORTHAND.match(line.strip())
        if m and not line.lstrip().startswith(("[", "#", ";")):
            out.append(f"[{m.group(1)}]")
            out.extend(f"{k} = {v}" for k, _, v in (p.partition("=") for p in m.group(2).split()))
        else:
            out.append(line)
    return "\n".join(out) + "\n"


def parse_config(text: str) -> dict:
    """``{section: {key: value}}`` with lower-cased section and key names."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str.lower
    try:
        cp.read_string(expand_shorthand(text))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return {s.lower(): dict(cp.items(s)) for s in cp.sections()}


def read_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


# ---------------------------------------------------------------------------
# typed getters


def get_float(sec: dict, key: str, default=None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return float(default)
    try:
        return float(sec[key])
    except ValueError as exc:
        raise ConfigError(f"{key} = {sec[key]!r} is not a number") from exc


def get_int(sec: dict, key: str, default=None) -> int:
    v = get_float(sec, key, default)
    if v != int(v):
        raise ConfigError(f"{key} must be an integer")
    return int(v)


def get_bool(sec: dict, key: str, default: bool = False) -> bool:
    if key not in sec:
        return default
    v = str(sec[key]).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} = {sec[key]!r} is not a boolean")


def get_floats(sec: dict, key: str, default=None) -> list:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return list(default)
    try:
        return [float(x) for x in str(sec[key]).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key} must be a list of numbers") from exc


def get_points(sec: dict, key: str) -> list:
    """``"0 0 0; 1 0 0"`` -> list of coordinate lists."""
    if key not in sec:
        raise ConfigError(f"missing key {key!r}")
    pts = []
    for chunk in str(sec[key]).split(";"):
        if chunk.strip():
            try:
                pts.append([float(x) for x in chunk.replace(",", " ").split()])
            except ValueError as exc:
                raise ConfigError(f"bad point {chunk.strip()!r}") from exc
    return pts


def growth_section(cfg: dict, *names: str) -> Growth:
    """The growth function from the first named section that has ``family``."""
    for name in names:
        sec = cfg.get(name, {})
        if "family" in sec:
            try:
                return growth_from_config(sec)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
    raise ConfigError(f"no growth family given in any of {', '.join('[' + n + ']' for n in names)}")


def base_from_config(sec: dict) -> Base:
    kind = str(sec.get("base", "zero")).strip().lower()
    try:
        if kind == "zero":
            return Zero()
        if kind == "constant":
            return Constant(get_float(sec, "c"))
        if kind == "gaussian":
            return Gaussian(get_float(sec, "amplitude", 1.0), get_float(sec, "sigma", 1.0))
        if kind == "ball":
            return BallIndicator(get_float(sec, "rho"), get_float(sec, "h", 1.0))
        if kind == "table":
            return L1RadialTable(tuple(get_floats(sec, "radii")), tuple(get_floats(sec, "values")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"base {kind}: {exc}") from exc
    raise ConfigError(f"unknown base {kind!r}")


def spikes_from_config(text: str) -> list:
    """``"d inner outer ln_height [sign]; ..."``."""
    out = []
    for chunk in str(text).split(";"):
        parts = chunk.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) not in (4, 5):
            raise ConfigError(f"spike needs 'd inner outer ln_height [sign]', got {chunk.strip()!r}")
        try:
            d, inner, outer, ln_h = (float(x) for x in parts[:4])
            sign = int(float(parts[4])) if len(parts) == 5 else 1
            height = LogScalar(sign, ln_h) if sign and ln_h > -math.inf else LogScalar(0)
            out.append(SpikeSpec(d, inner, outer, height))
        except ValueError as exc:
            raise ConfigError(f"bad spike {chunk.strip()!r}: {exc}") from exc
    return out


def spiked_from_config(sec: dict) -> SpikedConfig:
    try:
        return SpikedConfig(n=get_int(sec, "n", 3), i_max=get_int(sec, "i_max", 3),
                              base=base_from_config(sec),
                              height_scale=get_float(sec, "height_scale", 1.0),
                              negative=get_bool(sec, "negative"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def data_from_config(cfg: dict) -> InitialData:
    """Initial data from ``[data]``, or the spiked example from ``[spiked]``."""
    if "data" in cfg:
        sec = cfg["data"]
        try:
            return InitialData(get_int(sec, "n", 3), base_from_config(sec),
                               tuple(spikes_from_config(sec.get("spikes", ""))))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[data]: {exc}") from exc
    if "spiked" in cfg:
        try:
            return build_example(spiked_from_config(cfg["spiked"]))
        except ValueError as exc:
            raise ConfigError(f"[spiked]: {exc}") from exc
    raise ConfigError("no initial data: give a [data] or [spiked] section")
