import math

import numpy as np
import pytest

from endospin.constants import BOHR_MHZ_PER_MT
from endospin.hamiltonian import (CouplingSpec, add_c13, build_dimer_hamiltonian,
                                  build_static_hamiltonian, dipolar_constant, dipolar_coupling,
                                  field_for_resonance)
from endospin.spectral import diagonalize, species_lines, transitions
from endospin.species import FieldConfig, SpeciesParams, get_species, preset_names, resonant_field
from endospin.spin_algebra import commutator, factor_operators

# (mu0/4pi) (g muB)^2 / h for g = 2.002319304, evaluated once with CODATA 2018 values
DIPOLAR_CONSTANT_FROZEN = 52.0410


def test_dimension_n14(n14, xband):
    assert build_static_hamiltonian(n14, xband).dim == 12


def test_pure_zeeman_limit(n14, xband):
    sp = SpeciesParams("bare", 1.5, 1, n14.g, 0.0, 0.0)
    e = np.linalg.eigvalsh(build_static_hamiltonian(sp, xband).matrix)
    we = n14.g * BOHR_MHZ_PER_MT * xband.B0
    assert np.allclose(e, np.repeat(we * np.array([-1.5, -0.5, 0.5, 1.5]), 3))


def test_largest_flip_flop_element(n14, xband):
    # <M_S+1, M_I-1| (a/2)(S+ I-) |M_S, M_I>, maximal for M_S = -1/2, M_I = 0 or 1
    h = build_static_hamiltonian(n14, xband).matrix
    off = np.abs(h - np.diag(np.diag(h)))
    expected = n14.a / 2 * math.sqrt(1.5 * 2.5 + 0.5 * 0.5) * math.sqrt(2)
    assert off.max() == pytest.approx(expected, rel=1e-12)
    # brute-force element between |-1/2, 0> and |+1/2, -1>
    i = 2 * 3 + 1
    f = 1 * 3 + 2
    assert abs(h[f, i]) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("name", ["14N@C60", "15N@C60", "14N@C70", "15N@C70"])
def test_hermitian(name, xband):
    h = build_static_hamiltonian(get_species(name), xband).matrix
    assert np.linalg.norm(h - h.conj().T) <= 1e-12 * np.linalg.norm(h)


def test_hyperfine_is_field_independent(n14, xband):
    h1 = build_static_hamiltonian(n14, xband).matrix
    h2 = build_static_hamiltonian(n14, FieldConfig(2 * xband.B0)).matrix
    s = factor_operators((4, 3), 0)
    i = factor_operators((4, 3), 1)
    sdoti = sum(s[c].matrix @ i[c].matrix for c in ("Sx", "Sy", "Sz"))
    assert np.allclose(h2 - 2 * h1, -n14.a * sdoti, atol=1e-9)


def test_isotope_rescaling(xband):
    a14, a15 = get_species("14N@C60"), get_species("15N@C60")
    assert a15.a / a14.a == pytest.approx(7.92 / 5.66, rel=1e-12)
    assert build_static_hamiltonian(a15, xband).dim == 8


def test_preset_values():
    assert set(preset_names()) == {"14N@C60", "15N@C60", "14N@C70", "15N@C70"}
    n14 = get_species("14N@C60")
    assert n14.a == pytest.approx(5.66 * 0.1 * 2.0036 * BOHR_MHZ_PER_MT, rel=1e-12)
    assert n14.a == pytest.approx(15.88, abs=0.01)
    c70 = get_species("15N@C70")
    assert c70.a == pytest.approx(7.92 * 0.95 * 0.1 * c70.g * BOHR_MHZ_PER_MT, rel=1e-15)
    with pytest.raises(KeyError, match="available"):
        get_species("P@C60")


def test_c13_extension(n14, xband):
    assert np.array_equal(add_c13(n14, xband, n13=0).matrix,
                          build_static_hamiltonian(n14, xband).matrix)
    assert add_c13(n14, xband, n13=1).dim == 24
    assert add_c13(n14, xband, n13=2).dim == 48
    with pytest.raises(ValueError):
        add_c13(n14, xband, n13=3)
    with pytest.raises(ValueError):
        add_c13(n14, xband, a13=-0.01)


def test_c13_doublet_and_triplet(n14, xband):
    one = species_lines(n14, xband, 1, 0.036)
    central = sorted(l.frequency for l in one if l.from_label[1] == 0 and l.from_label[0] == 0.5)
    assert central[1] - central[0] == pytest.approx(0.036, abs=2e-5)
    two = species_lines(n14, xband, 2, 0.036)
    group = [l for l in two if l.from_label[1] == 0 and l.from_label[0] == 0.5]
    by_mc = {}
    for l in group:
        by_mc.setdefault(sum(l.from_label[2:]), []).append(l)
    assert sorted(len(v) for v in by_mc.values()) == [1, 1, 2]
    f = {k: np.mean([l.frequency for l in v]) for k, v in by_mc.items()}
    assert abs(f[-1.0] - f[0.0]) == pytest.approx(0.036, abs=2e-5)
    assert abs(f[0.0] - f[1.0]) == pytest.approx(0.036, abs=2e-5)


def test_dimer_additivity(n14, xband):
    b = get_species("15N@C60")
    h = build_dimer_hamiltonian(n14, b, CouplingSpec(), xband)
    ea = np.linalg.eigvalsh(build_static_hamiltonian(n14, xband).matrix)
    eb = np.linalg.eigvalsh(build_static_hamiltonian(b, xband).matrix)
    assert np.allclose(np.sort(np.add.outer(ea, eb).ravel()), np.linalg.eigvalsh(h.matrix))


def test_dimer_zero_coupling_commutes(n14, xband):
    h = build_dimer_hamiltonian(n14, n14, CouplingSpec(), xband)
    ha = np.kron(build_static_hamiltonian(n14, xband).matrix, np.eye(12))
    assert np.allclose(h.matrix @ ha - ha @ h.matrix, 0, atol=1e-6)


def test_singlet_triplet_gap():
    e = SpeciesParams("e", 0.5, 0.0, 2.0, 0.0, 0.0)
    h = build_dimer_hamiltonian(e, e, CouplingSpec(exchangeJ=3.7), FieldConfig(0.0))
    levels = np.linalg.eigvalsh(h.matrix)
    assert levels[1] - levels[0] == pytest.approx(3.7, abs=1e-12)
    assert np.allclose(levels[1:], levels[1])


def test_dimer_sites_distinguishable(xband):
    a, b = get_species("14N@C60"), get_species("15N@C60")
    h = build_dimer_hamiltonian(a, b, CouplingSpec(exchangeJ=0.01), xband)
    assert h.dims == (4, 3, 4, 2)
    lines = transitions(diagonalize(h))
    nu = xband.mwFreq * 1e3
    offsets = sorted({round(l.frequency - nu, 0) for l in lines})
    # outer 14N lines at +-a14, outer 15N lines at +-a15/2
    assert any(abs(o - a.a) < 1 for o in offsets)
    assert any(abs(o - b.a / 2) < 1 for o in offsets)


def test_dipolar_coupling():
    assert dipolar_constant() == pytest.approx(DIPOLAR_CONSTANT_FROZEN, rel=1e-4)
    assert dipolar_coupling(1.0) == pytest.approx(52.04, abs=0.01)
    assert dipolar_coupling(2.0) == pytest.approx(dipolar_coupling(1.0) / 8, rel=1e-14)
    assert dipolar_coupling(10.0) == pytest.approx(0.05204, abs=1e-5)
    with pytest.raises(ValueError):
        CouplingSpec(dipolarD=1.0, distance=1.0)
    with pytest.raises(ValueError):
        dipolar_coupling(0.0)


def test_field_for_resonance():
    b = field_for_resonance(9.67, 2.0036)
    assert b == pytest.approx(344.83, abs=0.01)
    assert 9670 / (b * BOHR_MHZ_PER_MT) == pytest.approx(2.0036, rel=1e-14)
    assert field_for_resonance(19.34, 2.0036) == pytest.approx(2 * b, rel=1e-14)
    assert field_for_resonance(9.67, 2.0023) > b
    assert resonant_field(get_species("14N@C60")).B0 == pytest.approx(b)
