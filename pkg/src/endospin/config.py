"""Scenario configuration: flat ``key = value`` text with ``[section]`` headers.

Top-level keys come before the first section. Numeric values may carry a unit
suffix (``9.67 GHz``, ``0.3 uT``, ``500 ns``); list values are comma separated
or written as ``start:stop:count`` for an evenly spaced grid. ``#`` starts a
comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constants import BOHR_MHZ_PER_MT
from .species import FieldConfig, SpeciesParams, field_for_resonance, get_species, preset_names

KINDS = ("levels", "cw", "eseem", "rabi", "nuclear-rabi", "bb1", "dimer")

# unit -> (dimension, factor to the canonical unit of that dimension)
UNITS = {
    "GHz": ("frequency", 1e3), "MHz": ("frequency", 1.0), "kHz": ("frequency", 1e-3),
    "mT": ("field", 1.0), "G": ("field", 0.1), "uT": ("field", 1e-3),
    "ns": ("time", 1.0), "us": ("time", 1e3), "ms": ("time", 1e6),
    "K": ("temperature", 1.0),
    "nm": ("length", 1.0),
}
CANONICAL = {"frequency": "MHz", "field": "mT", "time": "ns", "temperature": "K", "length": "nm"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = ""
        if line is not None:
            where = f"line {line}, column {column or 1}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Key:
    kind: str  # str|int|float|bool|choice|qty|list|qtylist|angle|hyperfine
    default: object = None
    dim: str | None = None  # physical dimension for qty kinds
    unit: str | None = None  # unit assumed when no suffix is given
    choices: tuple = ()


_F, _B, _T = "frequency", "field", "time"

SCHEMA: dict[str, dict[str, Key]] = {
    "": {
        "scenario": Key("choice", None, choices=KINDS),
        "species": Key("str", None),
    },
    "species": {
        "base": Key("str", None),
        "name": Key("str", None),
        "S": Key("float", None),
        "I": Key("float", None),
        "g": Key("float", None),
        "gI": Key("float", None),
        "a": Key("hyperfine", None),
    },
    "field": {
        "mwFreq": Key("qty", 9.67e3, _F, "GHz"),
        "B0": Key("qty", "auto", _B, "mT"),
        "temperature": Key("qty", 300.0, "temperature", "K"),
    },
    "levels": {
        "order": Key("int", 2),
    },
    "cw": {
        "linewidth": Key("qty", 0.3e-3, _B, "mT"),
        "lineshape": Key("choice", "gaussian", choices=("gaussian", "lorentzian")),
        "derivative": Key("bool", True),
        "step": Key("qty", "auto", _B, "mT"),
        "margin": Key("qty", "auto", _B, "mT"),
        "c13": Key("choice", "natural", choices=("natural", "none")),
        "abundance": Key("float", None),
        "a13": Key("qty", None, _F, "MHz"),
        "max_k": Key("int", 2),
        "cage": Key("choice", None, choices=("C60", "C70")),
    },
    "eseem": {
        "tau_start": Key("qty", 0.0, _T, "ns"),
        "tau_stop": Key("qty", 1.0e5, _T, "ns"),
        "points": Key("int", 2048),
        "pad": Key("int", 4),
    },
    "rabi": {
        "nutationAmp": Key("qty", 31.25, _F, "MHz"),
        "t_stop": Key("qty", 500.0, _T, "ns"),
        "points": Key("int", 2001),
        "distribution": Key("choice", "delta", choices=("delta", "gaussian", "uniform")),
        "sigma": Key("float", 0.0),
        "lo": Key("float", 1.0),
        "hi": Key("float", 1.0),
        "nodes": Key("int", 21),
        "T1": Key("qty", math.inf, _T, "ms"),
        "T2": Key("qty", math.inf, _T, "ms"),
        "target_mi": Key("float", None),
        "reference_T2": Key("qty", 0.25e6, _T, "ms"),
    },
    "nuclear-rabi": {
        "rfAmp": Key("qtylist", (1.0,), _F, "MHz"),
        "targets": Key("qtylist", "auto", _F, "MHz"),
        "t_stop": Key("qty", 2.0e4, _T, "ns"),
        "points": Key("int", 2001),
        "snap": Key("bool", True),
        "pad": Key("int", 4),
    },
    "bb1": {
        "angle": Key("angle", math.pi),
        "phase": Key("angle", 0.0),
        "eps": Key("list", (0.0, 0.1)),
        "detuning": Key("qtylist", (0.0,), _F, "MHz"),
        "nutationRate": Key("qty", 31.25, _F, "MHz"),
    },
    "dimer": {
        "species_b": Key("str", None),
        "J": Key("qty", 52.0, _F, "MHz"),
        "D": Key("qty", None, _F, "MHz"),
        "distance": Key("qty", None, "length", "nm"),
        "t_stop": Key("qty", "auto", _T, "ns"),
        "points": Key("int", 201),
    },
}

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QTY = re.compile(rf"^({_NUM}|[-+]?inf)\s*([A-Za-z]+)?$")
_ANGLE = re.compile(rf"^({_NUM})?\s*\*?\s*(pi)?(?:\s*/\s*({_NUM}))?$")
_GRID = re.compile(r"^([^:]+):([^:]+):\s*(\d+)\s*$")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    species: SpeciesParams | None
    field: FieldConfig | None
    params: dict
    echo: dict = field(default_factory=dict)
    source: str | None = None


@dataclass
class _Entry:
    value: str
    line: int
    column: int


def _tokenize(text: str) -> dict[str, dict[str, _Entry]]:
    sections: dict[str, dict[str, _Entry]] = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw
        hash_at = line.find("#")
        if hash_at >= 0:
            line = line[:hash_at]
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, col)
            current = stripped[1:-1].strip()
            if current not in SCHEMA or current == "":
                raise ConfigError(f"unknown section [{current}]; known: "
                                  + ", ".join(s for s in SCHEMA if s), lineno, col)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno, col)
            sections[current] = {}
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, col)
        key, _, value = line.partition("=")
        key = key.strip()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
            raise ConfigError(f"invalid key {key!r}", lineno, col)
        if key not in SCHEMA[current]:
            where = f"section [{current}]" if current else "top level"
            raise ConfigError(f"unknown key {key!r} at {where}; allowed: "
                              + ", ".join(SCHEMA[current]), lineno, col)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", lineno, col)
        vcol = line.index("=") + 2 + (len(value) - len(value.lstrip()))
        value = value.strip()
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno, vcol)
        sections[current][key] = _Entry(value, lineno, vcol)
    return sections


def _quantity(text: str, spec: Key, entry: _Entry, name: str) -> float:
    m = _QTY.match(text.strip())
    if not m:
        raise ConfigError(f"{name}: cannot parse {text!r} as a number with optional unit",
                          entry.line, entry.column)
    number, unit = float(m.group(1)), m.group(2)
    unit = unit or spec.unit
    if unit not in UNITS:
        raise ConfigError(f"{name}: unknown unit {unit!r}; allowed: {', '.join(UNITS)}",
                          entry.line, entry.column)
    dim, factor = UNITS[unit]
    if dim != spec.dim:
        raise ConfigError(f"{name}: unit {unit} is a {dim}, expected a {spec.dim} "
                          f"(e.g. {CANONICAL[spec.dim]})", entry.line, entry.column)
    return number * factor


def _angle(text: str, entry: _Entry, name: str) -> float:
    m = _ANGLE.match(text.strip())
    if not m or not (m.group(1) or m.group(2)):
        raise ConfigError(f"{name}: cannot parse {text!r} as an angle (radians, or e.g. pi/2)",
                          entry.line, entry.column)
    value = float(m.group(1)) if m.group(1) else 1.0
    if m.group(2):
        value *= math.pi
    if m.group(3):
        value /= float(m.group(3))
    return value


def _split_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",")]


def _convert(spec: Key, entry: _Entry, name: str):
    text = entry.value
    kind = spec.kind
    try:
        if kind == "str":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind}, got {text!r}", entry.line, entry.column) from None
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}", entry.line, entry.column)
    if kind == "choice":
        if text not in spec.choices:
            raise ConfigError(f"{name}: {text!r} is not one of {', '.join(spec.choices)}",
                              entry.line, entry.column)
        return text
    if kind == "angle":
        return _angle(text, entry, name)
    if kind == "qty":
        if text == "auto" and spec.default == "auto":
            return "auto"
        return _quantity(text, spec, entry, name)
    if kind in ("list", "qtylist"):
        if text == "auto" and spec.default == "auto":
            return "auto"
        grid = _GRID.match(text)
        if grid:
            lo, hi, n = grid.groups()
            conv = (lambda s: _quantity(s, spec, entry, name)) if kind == "qtylist" else float
            try:
                return tuple(float(v) for v in np.linspace(conv(lo.strip()), conv(hi.strip()), int(n)))
            except ValueError:
                raise ConfigError(f"{name}: bad grid {text!r}", entry.line, entry.column) from None
        out = []
        for part in _split_list(text):
            if kind == "qtylist":
                out.append(_quantity(part, spec, entry, name))
            else:
                try:
                    out.append(float(part))
                except ValueError:
                    raise ConfigError(f"{name}: expected numbers, got {part!r}",
                                      entry.line, entry.column) from None
        return tuple(out)
    if kind == "hyperfine":
        return text  # resolved once g is known
    raise AssertionError(kind)


def _hyperfine(entry: _Entry, g: float) -> float:
    m = _QTY.match(entry.value)
    if not m:
        raise ConfigError(f"a: cannot parse {entry.value!r}", entry.line, entry.column)
    number, unit = float(m.group(1)), m.group(2) or "MHz"
    if unit not in UNITS or UNITS[unit][0] not in ("frequency", "field"):
        raise ConfigError(f"a: unit must be a frequency or a field, got {unit!r}",
                          entry.line, entry.column)
    dim, factor = UNITS[unit]
    value = number * factor
    return value * g * BOHR_MHZ_PER_MT if dim == "field" else value


def _section(raw: dict[str, _Entry], name: str) -> dict:
    out = {}
    for key, spec in SCHEMA[name].items():
        label = f"{name}.{key}" if name else key
        out[key] = _convert(spec, raw[key], label) if key in raw else spec.default
    return out


def _resolve_species(top: dict, raw: dict[str, dict[str, _Entry]], kind: str) -> SpeciesParams | None:
    sec = raw.get("species", {})
    values = _section(sec, "species") if "species" in raw else {}
    base_name = values.get("base") or top.get("species")
    if top.get("species") and values.get("base") and top["species"] != values["base"]:
        e = sec["base"]
        raise ConfigError("species and [species] base disagree", e.line, e.column)
    if base_name is None and not sec:
        if kind == "bb1":
            return None
        raise ConfigError(f"scenario {kind!r} needs a species (preset name or [species] block)")
    base = None
    if base_name is not None:
        try:
            base = get_species(base_name)
        except KeyError as exc:
            e = raw[""].get("species") or sec.get("base")
            raise ConfigError(str(exc.args[0]), e.line, e.column) from None
    fields = {k: values.get(k) for k in ("S", "I", "g", "gI")}
    if base is None:
        missing = [k for k in ("S", "I", "g", "gI", "a") if k not in sec]
        if missing:
            raise ConfigError("inline species needs " + ", ".join(missing))
        g = fields["g"]
        a = _hyperfine(sec["a"], g)
        name = values.get("name") or "custom"
        try:
            return SpeciesParams(name, fields["S"], fields["I"], g, fields["gI"], a)
        except ValueError as exc:
            raise ConfigError(f"[species]: {exc}") from None
    changes = {k: v for k, v in fields.items() if v is not None}
    if values.get("name"):
        changes["name"] = values["name"]
    try:
        sp = replace(base, **changes) if changes else base
    except ValueError as exc:
        raise ConfigError(f"[species]: {exc}") from None
    if "a" in sec:
        sp = sp.with_hyperfine(_hyperfine(sec["a"], sp.g))
    return sp


def _check_positive(params: dict, section: str, raw: dict[str, _Entry], keys, allow_zero=()):
    for k in keys:
        v = params[k]
        if v is None or v == "auto":
            continue
        vals = v if isinstance(v, tuple) else (v,)
        bad = [x for x in vals if not (x > 0 or (k in allow_zero and x == 0))]
        if bad:
            e = raw.get(k)
            raise ConfigError(f"{section}.{k} must be positive, got {bad[0]}",
                              e.line if e else None, e.column if e else None)


def _validate(kind: str, p: dict, raw: dict[str, _Entry]):
    if kind == "levels":
        if p["order"] not in (1, 2):
            e = raw.get("order")
            raise ConfigError("levels.order must be 1 or 2", e.line, e.column)
    elif kind == "cw":
        _check_positive(p, kind, raw, ("linewidth", "step", "margin", "a13"))
        if p["abundance"] is not None and not 0 <= p["abundance"] <= 1:
            raise ConfigError("cw.abundance must lie in [0, 1]")
        if not 0 <= p["max_k"] <= 2:
            raise ConfigError("cw.max_k must be 0, 1 or 2")
    elif kind == "eseem":
        _check_positive(p, kind, raw, ("tau_stop", "points", "pad"))
        if p["tau_start"] < 0 or p["tau_start"] >= p["tau_stop"] or p["points"] < 4:
            raise ConfigError("eseem grid needs 0 <= tau_start < tau_stop and points >= 4")
    elif kind == "rabi":
        _check_positive(p, kind, raw, ("nutationAmp", "t_stop", "points", "nodes",
                                       "T1", "T2", "reference_T2"))
        if p["distribution"] == "gaussian" and not p["sigma"] > 0:
            raise ConfigError("rabi.sigma must be positive for a gaussian distribution")
        if p["distribution"] == "uniform" and not p["hi"] > p["lo"]:
            raise ConfigError("rabi: uniform distribution needs hi > lo")
    elif kind == "nuclear-rabi":
        _check_positive(p, kind, raw, ("t_stop", "points", "pad", "targets"))
        _check_positive(p, kind, raw, ("rfAmp",), allow_zero=("rfAmp",))
    elif kind == "bb1":
        if not 0 < p["angle"] < 2 * math.pi:
            e = raw.get("angle")
            raise ConfigError("bb1.angle must lie in (0, 2pi)", e.line if e else None,
                              e.column if e else None)
        if any(x <= -1 for x in p["eps"]):
            raise ConfigError("bb1.eps values must exceed -1")
        if not p["eps"] or not p["detuning"]:
            raise ConfigError("bb1 grids must be non-empty")
        _check_positive(p, kind, raw, ("nutationRate",))
    elif kind == "dimer":
        _check_positive(p, kind, raw, ("J", "distance", "t_stop", "points"))
        if p["D"] is not None and p["distance"] is not None:
            raise ConfigError("dimer: give at most one of D and distance")


def _echo_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, tuple):
        return [_echo_value(x) for x in v]
    return v


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    raw = _tokenize(text)
    top = _section(raw[""], "")
    if top["scenario"] is None:
        raise ConfigError("missing required key 'scenario' (one of: " + ", ".join(KINDS) + ")")
    kind = top["scenario"]
    for name in raw:
        if name not in ("", "species", "field", kind):
            raise ConfigError(f"section [{name}] does not apply to scenario {kind!r}")
    species = _resolve_species(top, raw, kind)
    fsec = _section(raw.get("field", {}), "field")
    _check_positive(fsec, "field", raw.get("field", {}), ("mwFreq", "B0"))
    if fsec["temperature"] is not None and not fsec["temperature"] >= 0:
        raise ConfigError("field.temperature must be non-negative")
    mw_ghz = fsec["mwFreq"] / 1e3
    g = species.g if species is not None else 2.0036
    b0 = field_for_resonance(mw_ghz, g) if fsec["B0"] == "auto" else fsec["B0"]
    field_cfg = FieldConfig(b0, mw_ghz, fsec["temperature"])
    params = _section(raw.get(kind, {}), kind)
    _validate(kind, params, raw.get(kind, {}))
    echo = {
        "scenario": kind,
        "species": None if species is None else {
            "name": species.name, "S": species.S, "I": species.I, "g": species.g,
            "gI": species.gI, "a_MHz": species.a},
        "field": {"B0_mT": b0, "mwFreq_GHz": mw_ghz, "temperature_K": fsec["temperature"]},
        kind: {k: _echo_value(v) for k, v in params.items()},
    }
    return ScenarioConfig(kind, species, field_cfg, params, echo, source)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from None
    try:
        return parse_config(text, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "load_config", "KINDS", "UNITS",
           "preset_names"]
