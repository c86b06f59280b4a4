"""Scenario files: line-oriented ``key = value`` with ``#`` comments.

Speeds are given in km/h and angles in degrees; every quantity also has an
SI spelling (``v_x_ms``, ``psi_rad``, ...) which the writer falls back to
when no decimal in the friendly unit converts back to the exact float.
Missing keys take their defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

from critzone.errors import ScenarioError
from critzone.models import ComfortBounds, VehicleParams
from critzone.scenario import Scenario

__all__ = ["ConfigError", "KEYS", "dump_scenario", "load_scenario", "parse_scenario"]


class ConfigError(ScenarioError):
    """Malformed scenario text. ``line`` is 1-based, or 0 when not tied to a line."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class _Key:
    name: str
    target: str  # "scenario", "params" or "comfort"
    field: str
    to_si: Callable[[float], float]
    from_si: Callable[[float], float]
    si_name: str | None = None


def _ident(x):
    return x


def _kmh(x):
    return x / 3.6


def _to_kmh(x):
    return x * 3.6


_KEYS = [
    _Key("v_x_kmh", "scenario", "v_x", _kmh, _to_kmh, "v_x_ms"),
    _Key("v_L_kmh", "scenario", "v_L", _kmh, _to_kmh, "v_L_ms"),
    _Key("gap_m", "scenario", "gap", _ident, _ident),
    _Key("offset_m", "scenario", "offset", _ident, _ident),
    _Key("psi_deg", "scenario", "psi", math.radians, math.degrees, "psi_rad"),
    _Key("vs_ms", "scenario", "v_s", _ident, _ident),
    _Key("psidot_degs", "scenario", "psi_dot", math.radians, math.degrees, "psidot_rads"),
    _Key("delta_deg", "scenario", "delta", math.radians, math.degrees, "delta_rad"),
    _Key("as_ms2", "scenario", "a_s", _ident, _ident),
    _Key("ab_ms2", "scenario", "a_b", _ident, _ident),
    _Key("mu", "scenario", "mu", _ident, _ident),
    _Key("x_margin_m", "scenario", "x_margin", _ident, _ident),
    _Key("y_margin_m", "scenario", "y_margin", _ident, _ident),
    _Key("lane_width_m", "scenario", "lane_width", _ident, _ident),
    _Key("m_kg", "params", "m", _ident, _ident),
    _Key("Iz_kgm2", "params", "I_z", _ident, _ident),
    _Key("cf_Nrad", "params", "c_f", _ident, _ident),
    _Key("cr_Nrad", "params", "c_r", _ident, _ident),
    _Key("lf_m", "params", "l_f", _ident, _ident),
    _Key("lr_m", "params", "l_r", _ident, _ident),
    _Key("Lf_m", "params", "L_f", _ident, _ident),
    _Key("L_m", "params", "L", _ident, _ident),
    _Key("W_m", "params", "W", _ident, _ident),
    _Key("delta_Vmax_deg", "params", "delta_Vmax", math.radians, math.degrees, "delta_Vmax_rad"),
    _Key("omega_Vmax_degs", "params", "omega_Vmax", math.radians, math.degrees, "omega_Vmax_rads"),
    _Key("g_ms2", "params", "g", _ident, _ident),
    _Key("ab_min_ms2", "comfort", "a_bmin", _ident, _ident),
    _Key("jb_min_ms3", "comfort", "j_bmin", _ident, _ident),
    _Key("as_max_ms2", "comfort", "a_smax", _ident, _ident),
    _Key("js_max_ms3", "comfort", "j_smax", _ident, _ident),
]

KEYS: tuple[str, ...] = tuple(k.name for k in _KEYS)
_BY_NAME = {k.name: (k, False) for k in _KEYS}
_BY_NAME.update({k.si_name: (k, True) for k in _KEYS if k.si_name})


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises :class:`ConfigError` or :class:`ScenarioError`."""
    values: dict[str, dict[str, float]] = {"scenario": {}, "params": {}, "comfort": {}}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        name, _, value = (part.strip() for part in line.partition("="))
        if name not in _BY_NAME:
            raise ConfigError(f"unknown key {name!r}", lineno)
        key, is_si = _BY_NAME[name]
        if key.name in seen:
            raise ConfigError(f"{name!r} duplicates the quantity set on line {seen[key.name]}", lineno)
        seen[key.name] = lineno
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(f"value for {name!r} is not a number: {value!r}", lineno) from None
        if not math.isfinite(number):
            raise ConfigError(f"value for {name!r} must be finite", lineno)
        values[key.target][key.field] = number if is_si else key.to_si(number)
    try:
        params = VehicleParams(**values["params"])
        comfort = ComfortBounds(**values["comfort"])
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return Scenario(params=params, comfort=comfort, **values["scenario"])


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _friendly_text(key: _Key, si: float) -> str | None:
    # a decimal in the friendly unit that converts back to exactly `si`
    guess = key.from_si(si)
    if key.to_si(float(repr(guess))) == si:
        return repr(guess)
    for direction in (math.inf, -math.inf):
        cand = guess
        for _ in range(64):
            cand = math.nextafter(cand, direction)
            if key.to_si(cand) == si:
                return repr(cand)
    return None


def dump_scenario(scenario: Scenario) -> str:
    """Serialise so that ``parse_scenario(dump_scenario(s)) == s``."""
    sources = {"scenario": scenario, "params": scenario.params, "comfort": scenario.comfort}
    lines = []
    for key in _KEYS:
        si = float(getattr(sources[key.target], key.field))
        text = _friendly_text(key, si)
        if text is None:
            lines.append(f"{key.si_name} = {si!r}")
        else:
            lines.append(f"{key.name} = {text}")
    return "\n".join(lines) + "\n"


def scenario_fields(scenario: Scenario) -> dict[str, float]:
    """Flat SI view used by the JSON writer."""
    out = {f.name: getattr(scenario, f.name) for f in dataclasses.fields(scenario) if f.name not in ("params", "comfort")}
    out.update({f"params.{k}": v for k, v in dataclasses.asdict(scenario.params).items()})
    out.update({f"comfort.{k}": v for k, v in dataclasses.asdict(scenario.comfort).items()})
    return out
