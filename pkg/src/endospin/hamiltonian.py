"""Static laboratory-frame spin Hamiltonians in MHz.

H = w_e Sz + w_I Iz + a S.I with w_e = g (beta/h) B0 and w_I = gI (beta_n/h) B0.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .constants import (BOHR_MAGNETON_J_PER_T, BOHR_MHZ_PER_MT, G_FREE_ELECTRON,
                        MU0_OVER_4PI, NUCLEAR_MHZ_PER_MT, PLANCK_J_S)
from .species import FieldConfig, SpeciesParams, carbon13, field_for_resonance
from .spin_algebra import (ELECTRON, MAX_DIM, NUCLEUS, SpinOperator,
                           factor_operators)

__all__ = [
    "CouplingSpec",
    "electron_zeeman",
    "nuclear_zeeman",
    "build_static_hamiltonian",
    "add_c13",
    "build_dimer_hamiltonian",
    "dipolar_coupling",
    "dipolar_constant",
    "field_for_resonance",
]


def electron_zeeman(species: SpeciesParams, field: FieldConfig) -> float:
    return species.g * BOHR_MHZ_PER_MT * field.B0


def nuclear_zeeman(gI: float, field: FieldConfig) -> float:
    return gI * NUCLEAR_MHZ_PER_MT * field.B0


def _dot(a: dict, b: dict) -> np.ndarray:
    return (a["Sx"].matrix @ b["Sx"].matrix + a["Sy"].matrix @ b["Sy"].matrix
            + a["Sz"].matrix @ b["Sz"].matrix)


def build_static_hamiltonian(species: SpeciesParams, field: FieldConfig) -> SpinOperator:
    dims = species.dims
    kinds = (ELECTRON, NUCLEUS)
    s = factor_operators(dims, 0, kinds)
    i = factor_operators(dims, 1, kinds)
    h = (electron_zeeman(species, field) * s["Sz"].matrix
         + nuclear_zeeman(species.gI, field) * i["Sz"].matrix
         + species.a * _dot(s, i))
    return SpinOperator(h, dims, kinds)


def add_c13(species: SpeciesParams, field: FieldConfig, a13: float | None = None,
            n13: int = 1) -> SpinOperator:
    """Static Hamiltonian with ``n13`` cage 13C nuclei coupled isotropically to the electron.

    The 13C factors are appended after the endohedral nucleus.
    """
    c13 = carbon13()
    a13 = c13.a13 if a13 is None else a13
    if n13 not in (0, 1, 2):
        raise ValueError(f"n13 must be 0, 1 or 2, got {n13}")
    if not a13 > 0:
        raise ValueError(f"a13 must be positive, got {a13}")
    base = build_static_hamiltonian(species, field)
    if n13 == 0:
        return base
    dims = base.dims + (2,) * n13
    kinds = base.kinds + (NUCLEUS,) * n13
    s = factor_operators(dims, 0, kinds)
    h = np.kron(base.matrix, np.eye(2 ** n13))
    wc = nuclear_zeeman(c13.gI, field)
    for pos in range(2, 2 + n13):
        c = factor_operators(dims, pos, kinds)
        h = h + wc * c["Sz"].matrix + a13 * _dot(s, c)
    return SpinOperator(h, dims, kinds)


@dataclass(frozen=True)
class CouplingSpec:
    """Electron-electron coupling of a dimer, all in MHz (distance in nm)."""

    exchangeJ: float = 0.0
    dipolarD: float | None = None
    distance: float | None = None

    def __post_init__(self):
        if self.dipolarD is not None and self.distance is not None:
            raise ValueError("give at most one of dipolarD and distance")

    @property
    def D(self) -> float:
        if self.distance is not None:
            return dipolar_coupling(self.distance)
        return 0.0 if self.dipolarD is None else self.dipolarD


def build_dimer_hamiltonian(a: SpeciesParams, b: SpeciesParams, coupling: CouplingSpec,
                            field: FieldConfig) -> SpinOperator:
    """H_A + H_B + J S_A.S_B + D (S_Az S_Bz - (S_Ax S_Bx + S_Ay S_By)/2).

    Factor order is (S_A, I_A, S_B, I_B).
    """
    ha = build_static_hamiltonian(a, field)
    hb = build_static_hamiltonian(b, field)
    dims = ha.dims + hb.dims
    if prod(dims) > MAX_DIM:
        raise ValueError(f"dimer dimension {prod(dims)} exceeds the limit of {MAX_DIM}")
    kinds = ha.kinds + hb.kinds
    h = np.kron(ha.matrix, np.eye(hb.dim)) + np.kron(np.eye(ha.dim), hb.matrix)
    sa = factor_operators(dims, 0, kinds)
    sb = factor_operators(dims, 2, kinds)
    if coupling.exchangeJ:
        h = h + coupling.exchangeJ * _dot(sa, sb)
    d = coupling.D
    if d:
        flip = sa["Sx"].matrix @ sb["Sx"].matrix + sa["Sy"].matrix @ sb["Sy"].matrix
        h = h + d * (sa["Sz"].matrix @ sb["Sz"].matrix - flip / 2)
    return SpinOperator(h, dims, kinds)


def dipolar_constant(g: float = G_FREE_ELECTRON) -> float:
    """Point-dipole prefactor c_dd in MHz nm^3, so that D(r) = c_dd / r^3."""
    hz_m3 = MU0_OVER_4PI * (g * BOHR_MAGNETON_J_PER_T) ** 2 / PLANCK_J_S
    return hz_m3 * 1e27 / 1e6


def dipolar_coupling(distance: float, g: float = G_FREE_ELECTRON) -> float:
    """Secular dipolar coefficient (MHz) for two electron spins ``distance`` nm apart."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return dipolar_constant(g) / distance ** 3
