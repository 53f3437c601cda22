"""Physical constants in the unit system used throughout the package.

Frequencies are linear (MHz, not rad/s), fields are in mT, times in ns,
temperatures in K and distances in nm. Values are CODATA 2018.
"""

#: Bohr magneton over Planck constant, MHz/mT.
BOHR_MHZ_PER_MT = 13.99624493
#: Nuclear magneton over Planck constant, MHz/mT.
NUCLEAR_MHZ_PER_MT = 0.007622593229
#: Boltzmann constant over Planck constant, MHz/K.
BOLTZMANN_MHZ_PER_K = 20836.61912
#: Free-electron g-factor.
G_FREE_ELECTRON = 2.002319304

# SI values for the point-dipole prefactor.
MU0_OVER_4PI = 1.00000000055e-7  # T m / A
BOHR_MAGNETON_J_PER_T = 9.2740100783e-24
PLANCK_J_S = 6.62607015e-34

#: 1 G = 0.1 mT
MT_PER_GAUSS = 0.1
#: 1 uT = 1e-3 mT
MT_PER_MICROTESLA = 1.0e-3


def electron_mhz_per_mt(g):
    """Electron Zeeman frequency per unit field (MHz/mT) for g-factor ``g``."""
    return g * BOHR_MHZ_PER_MT


def mt_to_mhz(field_mt, g):
    """Convert a field-unit splitting (mT) to frequency (MHz) using the electron factor."""
    return field_mt * electron_mhz_per_mt(g)


def mhz_to_mt(freq_mhz, g):
    return freq_mhz / electron_mhz_per_mt(g)


def gauss_to_mhz(value_gauss, g):
    """Hyperfine constant quoted in gauss, expressed in MHz."""
    return mt_to_mhz(value_gauss * MT_PER_GAUSS, g)
