"""Species parameters, field configuration and the preset table."""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

from .constants import BOHR_MHZ_PER_MT, gauss_to_mhz
from .spin_algebra import _as_spin

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class SpeciesParams:
    """Spin parameters of one endohedral species. ``a`` is in MHz."""

    name: str
    S: float
    I: float
    g: float
    gI: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, "S", _as_spin(self.S))
        object.__setattr__(self, "I", _as_spin(self.I))
        if not self.g > 0:
            raise ValueError(f"electron g-factor must be positive, got {self.g}")

    @property
    def dims(self) -> tuple[int, int]:
        return (int(round(2 * self.S)) + 1, int(round(2 * self.I)) + 1)

    def with_hyperfine(self, a: float) -> "SpeciesParams":
        return replace(self, a=a)


@dataclass(frozen=True)
class FieldConfig:
    """Static field (mT), microwave carrier (GHz) and temperature (K)."""

    B0: float
    mwFreq: float = 9.67
    temperature: float = 300.0

    def __post_init__(self):
        if self.B0 < 0:
            raise ValueError(f"B0 must be non-negative, got {self.B0}")
        if not self.mwFreq > 0:
            raise ValueError(f"mwFreq must be positive, got {self.mwFreq}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class Carbon13:
    gI: float
    abundance: float
    sites: dict
    a13: float


def field_for_resonance(mw_freq_ghz: float, g: float) -> float:
    """Static field (mT) at which a free spin with g-factor ``g`` resonates at ``mw_freq_ghz``."""
    if not mw_freq_ghz > 0 or not g > 0:
        raise ValueError("microwave frequency and g must be positive")
    return mw_freq_ghz * 1000.0 / (g * BOHR_MHZ_PER_MT)


def resonant_field(species: SpeciesParams, mw_freq_ghz: float = 9.67,
                   temperature: float = 300.0) -> FieldConfig:
    return FieldConfig(field_for_resonance(mw_freq_ghz, species.g), mw_freq_ghz, temperature)


@lru_cache(maxsize=None)
def _raw_presets() -> dict:
    text = resources.files("endospin").joinpath("data/presets.toml").read_text("utf-8")
    return tomllib.loads(text)


def _species_from_entry(name: str, entry: dict) -> SpeciesParams:
    a = gauss_to_mhz(entry["hyperfine_G"], entry["g"]) * entry["cage_factor"]
    return SpeciesParams(name, entry["S"], entry["I"], entry["g"], entry["gI"], a)


def preset_names() -> list[str]:
    return list(_raw_presets()["species"])


def get_species(name: str) -> SpeciesParams:
    table = _raw_presets()["species"]
    if name not in table:
        raise KeyError(f"unknown species preset {name!r}; available: {', '.join(table)}")
    return _species_from_entry(name, table[name])


def presets() -> dict[str, SpeciesParams]:
    return {name: get_species(name) for name in preset_names()}


def carbon13() -> Carbon13:
    c = _raw_presets()["carbon13"]
    sites = {"C60": c["sites_C60"], "C70": c["sites_C70"]}
    return Carbon13(c["gI"], c["abundance"], sites, c["a13_MHz"])
