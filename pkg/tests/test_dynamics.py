import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from endospin.constants import BOLTZMANN_MHZ_PER_K
from endospin.dynamics import (DELTA, InhomogeneityModel, PulseSegment, PulseSequence,
                               RelaxationParams, as_density, concurrence, decay_time,
                               entangling_time, exchange_evolution, fft_peaks, fft_trace,
                               frame_generator, oscillation_period, propagate, rabi_components,
                               rabi_envelope, rotating_frame, segment_propagator, simulate_eseem,
                               simulate_nuclear_rabi, simulate_rabi, thermal_state)
from endospin.hamiltonian import build_static_hamiltonian
from endospin.spectral import diagonalize, transitions
from endospin.species import FieldConfig
from endospin.spin_algebra import SpinOperator, commutator, factor_operators
from endospin.traces import SpectrumTrace

T_RABI = np.linspace(0, 500, 2001)


def _electron(h=None):
    m = np.zeros((2, 2)) if h is None else h
    return SpinOperator(m, (2,), ("e",))


def _random_hermitian(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 12), t=st.floats(0, 1000))
@settings(max_examples=40)
def test_propagator_unitary_and_matches_expm(seed, d, t):
    h = _random_hermitian(seed, d)
    u = segment_propagator(h, t)
    assert np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10)
    assert np.allclose(u, expm(-2j * np.pi * h * t * 1e-3), atol=1e-8)


@given(seed=st.integers(0, 2**32 - 1), t1=st.floats(0.001, 1.0), ratio=st.floats(0.1, 1.0))
@settings(max_examples=20, deadline=None)
def test_propagation_preserves_trace_and_positivity(seed, t1, ratio):
    h = _random_hermitian(seed, 4)
    op = SpinOperator(h, (4,), ("e",))
    rho = thermal_state(op, 1e-5)
    relax = RelaxationParams(T1=t1, T2=ratio * t1)
    seq = PulseSequence([PulseSegment("MW", 5.0, 0.3, 200.0), PulseSegment("free", duration=300.0)])
    out = propagate(rho, op, seq, relax, rho_eq=rho.matrix)
    out.rho.validate(tol=1e-9)
    assert np.trace(out.rho.matrix).real == pytest.approx(1.0, abs=1e-12)


def test_thermal_state_matches_boltzmann_sum(n14, xband):
    h = build_static_hamiltonian(n14, xband)
    for temp in (300.0, 4.0, 3000.0):
        oracle = expm(-h.matrix / (BOLTZMANN_MHZ_PER_K * temp))
        oracle /= np.trace(oracle)
        rho = thermal_state(h, temp)
        rho.validate()
        assert np.allclose(rho.matrix, oracle, atol=1e-7, rtol=0)
    assert np.allclose(thermal_state(h, math.inf).matrix, np.eye(12) / 12)
    with pytest.raises(ValueError):
        thermal_state(h, 0.0)


def test_pi_pulse_inverts_spin_half():
    op = _electron()
    rho = as_density(np.diag([1.0, 0.0]), op)
    sz = factor_operators((2,), 0, ("e",))["Sz"]
    seq = PulseSequence([PulseSegment("MW", 31.25, 0.0, 16.0)], detection=sz)
    out = propagate(rho, op, seq)
    assert out.observables[-1] == pytest.approx(-0.5, abs=1e-12)


def test_t2_decay_of_coherence():
    op = _electron()
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    rho = as_density(plus, op)
    sx = factor_operators((2,), 0, ("e",))["Sx"]
    seq = PulseSequence([PulseSegment("free", duration=500.0)], detection=sx)
    out = propagate(rho, op, seq, RelaxationParams(T2=1e-3))
    assert out.observables[-1] == pytest.approx(0.5 * math.exp(-0.5), rel=1e-10)


def test_relaxation_and_segment_validation():
    with pytest.raises(ValueError):
        RelaxationParams(T1=0.1, T2=0.3)
    with pytest.raises(ValueError):
        RelaxationParams(T1=0.0)
    with pytest.raises(ValueError):
        PulseSegment("free", nutation_amp=1.0, duration=1.0)
    with pytest.raises(ValueError):
        PulseSegment("XY")
    with pytest.raises(ValueError):
        PulseSequence([])
    with pytest.raises(ValueError):
        InhomogeneityModel("uniform", lo=1.1, hi=0.9)


def test_inhomogeneity_nodes_normalized():
    for model in (InhomogeneityModel("gaussian", 0.05), InhomogeneityModel("uniform", lo=0.9, hi=1.1),
                  DELTA):
        x, w = model.nodes()
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.dot(w, x) == pytest.approx(1.0, abs=1e-14)
    x, w = InhomogeneityModel("gaussian", 0.05).nodes()
    assert np.dot(w, (x - 1) ** 2) == pytest.approx(0.05 ** 2, rel=1e-12)


def test_frame_generator_commutes(n14, xband):
    h = build_static_hamiltonian(n14, xband)
    g = frame_generator(h, "MW")
    assert np.linalg.norm(commutator(g, h).matrix) < 1e-9 * np.linalg.norm(h.matrix)
    carrier = 9670.0
    h_rot = rotating_frame(h, carrier)
    eig = diagonalize(h)
    e_rot = np.real(np.einsum("ij,ik,kj->j", eig.states.conj(), h_rot.matrix, eig.states))
    for line in transitions(eig):
        gap = e_rot[line.to_level] - e_rot[line.from_level]
        assert gap == pytest.approx(line.frequency - carrier, abs=1e-8)


def test_rabi_period(n14, xband):
    tr = simulate_rabi(n14, xband, 31.25, T_RABI)
    assert oscillation_period(tr) == pytest.approx(32.0, abs=0.5)
    assert tr.amplitude[0] == pytest.approx(0.0, abs=1e-12)


def test_rabi_threads_identical(n14, xband):
    inh = InhomogeneityModel("gaussian", 0.05)
    a = simulate_rabi(n14, xband, 31.25, T_RABI, inh, threads=1)
    b = simulate_rabi(n14, xband, 31.25, T_RABI, inh, threads=4)
    assert np.array_equal(a.amplitude, b.amplitude)


def test_gaussian_dephasing_matches_oracle(n14, xband):
    env = rabi_envelope(n14, xband, 31.25, T_RABI, InhomogeneityModel("gaussian", 0.05))
    oracle = math.sqrt(2) / (2 * math.pi * 0.05 * 31.25e-3)
    assert decay_time(env) == pytest.approx(oracle, rel=0.05)


def test_rabi_with_t2_decays(n14, xband):
    t = np.linspace(0, 2000, 801)
    _, sy, sz, _ = rabi_components(n14, xband, 31.25, t, relax=RelaxationParams(T1=1e-3, T2=1e-3))
    env = np.hypot(sy, sz)
    assert env[-1] < env[0]
    # strong-drive nutation decays at (1/T1 + 1/T2)/2
    assert env[-1] == pytest.approx(math.exp(-2), rel=0.1)


def test_eseem_peak_and_runtime(n14, xband):
    start = time.perf_counter()
    echo, spec = simulate_eseem(n14, xband, np.linspace(0, 1e5, 2048))
    assert time.perf_counter() - start < 30
    assert spec.metadata["peak_kHz"] == pytest.approx(26.0, abs=2.0)
    assert spec.metadata["peak_kHz_vs_tau"] == pytest.approx(2 * spec.metadata["peak_kHz"])
    assert echo.axis_unit == "ns"


def test_eseem_vanishes_without_hyperfine(n14, xband):
    from dataclasses import replace
    echo, spec = simulate_eseem(replace(n14, a=0.0), xband, np.linspace(0, 1e5, 256))
    assert np.ptp(echo.amplitude) < 1e-9
    assert spec.metadata["peak_kHz"] is None


def test_eseem_15n_c70(n15c70, xband):
    _, spec = simulate_eseem(n15c70, xband, np.linspace(0, 1e5, 2048))
    assert spec.metadata["peak_kHz"] == pytest.approx(23.0, abs=2.0)


def test_fft_of_sinusoid():
    t = np.linspace(0, 1e5, 4096, endpoint=False)
    tr = SpectrumTrace(t, np.cos(2 * np.pi * 40e-6 * t))
    (f, _), = fft_peaks(fft_trace(tr), 1)
    assert f == pytest.approx(40.0, abs=0.1)
    with pytest.raises(ValueError):
        fft_trace(SpectrumTrace([0, 1, 3, 4], [0, 1, 0, 1]))


def test_oscillation_period_needs_crossings():
    with pytest.raises(ValueError):
        oscillation_period(SpectrumTrace([0, 1, 2], [1, 1, 1]))
    assert decay_time(SpectrumTrace([0, 1, 2], [1, 1, 1])) == math.inf


def test_nuclear_rabi_zero_power_is_flat(n14, xband):
    t = np.linspace(0, 2e4, 201)
    res = simulate_nuclear_rabi(n14, xband, 0.0, [22.6], t)
    assert np.allclose(res.trace.amplitude, 1.0, atol=1e-12)
    assert res.rabi_MHz is None


def test_nuclear_rabi_linear_in_power(n14, xband):
    t = np.linspace(0, 2e4, 2001)
    r1 = simulate_nuclear_rabi(n14, xband, 0.5, [22.6, 24.8], t).rabi_MHz
    r2 = simulate_nuclear_rabi(n14, xband, 1.0, [22.6, 24.8], t).rabi_MHz
    assert r2 / r1 == pytest.approx(2.0, rel=0.02)


def test_nuclear_rabi_carriers_snap(n14, xband):
    res = simulate_nuclear_rabi(n14, xband, 1.0, [22.6, 24.8], np.linspace(0, 1e3, 11))
    assert sorted(res.carriers) == pytest.approx([22.7666, 24.8501], abs=1e-3)
    with pytest.raises(ValueError):
        simulate_nuclear_rabi(n14, xband, 1.0, [15.0], np.linspace(0, 1e3, 11))


def test_exchange_entangling_time_oracle():
    j = 52.0
    t = entangling_time(j)
    assert t == pytest.approx(1e3 / 208)
    # brute force: 4x4 Heisenberg Hamiltonian built from Pauli matrices
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.diag([0.5, -0.5])
    h = j * sum(np.kron(a, a) for a in (sx, sy, sz))
    psi = expm(-2j * np.pi * h * t * 1e-3) @ np.array([0, 1, 0, 0])
    assert concurrence(psi) == pytest.approx(1.0, abs=1e-12)
    assert concurrence(exchange_evolution(j, t)) == pytest.approx(1.0, abs=1e-6)
    assert concurrence(exchange_evolution(j, 0.0)) == pytest.approx(0.0, abs=1e-12)
    assert concurrence(exchange_evolution(j, 2 * t)) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        entangling_time(0.0)


@given(j=st.floats(0.1, 500.0))
def test_entangling_time_property(j):
    assert concurrence(exchange_evolution(j, entangling_time(j))) == pytest.approx(1.0, abs=1e-9)


def test_time_grid_validation(n14, xband):
    with pytest.raises(ValueError):
        simulate_rabi(n14, xband, 31.25, [0, 2, 1])
    with pytest.raises(ValueError):
        simulate_rabi(n14, xband, 31.25, [])
