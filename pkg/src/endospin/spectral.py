"""Energy levels, allowed transitions and CW-EPR spectrum synthesis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from math import comb, sqrt

import numpy as np

from .constants import electron_mhz_per_mt
from .hamiltonian import add_c13, build_static_hamiltonian, electron_zeeman, nuclear_zeeman
from .species import FieldConfig, SpeciesParams, carbon13
from .spin_algebra import SpinOperator, factor_operators
from .traces import SpectrumTrace

__all__ = [
    "EigenSystem",
    "TransitionLine",
    "C13Profile",
    "MixtureComponent",
    "diagonalize",
    "perturbative_levels",
    "perturbative_transitions",
    "transitions",
    "with_resonance_fields",
    "synthesize_cw_spectrum",
    "isotopologue_weights",
    "composite_spectrum",
    "species_lines",
]

LITERATURE_ISOTOPOLOGUE_PERCENT = (57.0, 30.0, 12.0)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending energies (MHz) and column eigenvectors of ``hamiltonian``."""

    energies: np.ndarray
    states: np.ndarray
    hamiltonian: SpinOperator

    @property
    def expectations(self) -> np.ndarray:
        """<m_k> of every factor k for every level, shape (levels, factors)."""
        h = self.hamiltonian
        out = np.empty((len(self.energies), len(h.dims)))
        for pos in range(len(h.dims)):
            z = factor_operators(h.dims, pos, h.kinds)["Sz"].matrix
            out[:, pos] = np.einsum("ij,ik,kj->j", self.states.conj(), z, self.states).real
        return out

    @property
    def labels(self) -> list[tuple[float, ...]]:
        """Quantum-number labels of each level: <m_k> rounded to the nearest half."""
        return [_label(row) for row in np.round(2 * self.expectations) / 2]


def _label(row) -> tuple[float, ...]:
    return tuple(float(v) + 0.0 for v in row)


def diagonalize(H: SpinOperator, degeneracy_tol: float = 1e-9) -> EigenSystem:
    """Exact eigen-decomposition with a deterministic basis inside degenerate levels.

    Within a degenerate group the eigenvectors are chosen to diagonalize the
    factor z operators, ordered by descending electron <Sz>, then by the
    nuclear <Iz> in factor order.
    """
    m = H.matrix
    scale = max(np.linalg.norm(m, 2), 1.0)
    if np.linalg.norm(m - m.conj().T) > 1e-10 * scale:
        raise ValueError("diagonalize requires a Hermitian operator")
    energies, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    weights = 1000.0 ** -np.arange(len(H.dims))
    label_op = sum(w * factor_operators(H.dims, pos, H.kinds)["Sz"].matrix
                   for pos, w in enumerate(weights))
    tol = degeneracy_tol * scale
    start = 0
    n = len(energies)
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            sub = block.conj().T @ label_op @ block
            lam, w = np.linalg.eigh((sub + sub.conj().T) / 2)
            vecs[:, start:stop] = block @ w[:, np.argsort(-lam, kind="stable")]
        start = stop
    # fix the arbitrary phase: largest component real and positive
    idx = np.argmax(np.abs(vecs), axis=0)
    phase = vecs[idx, np.arange(n)]
    vecs = vecs * (np.abs(phase) / phase)
    return EigenSystem(energies, vecs, H)


def _second_order_shift(ms, mi, S, I, a, gap):
    return (a * a / (2 * gap)) * (ms * (I * (I + 1) - mi * mi) - mi * (S * (S + 1) - ms * ms))


def perturbative_levels(species: SpeciesParams, field: FieldConfig, order: int = 2) -> np.ndarray:
    """High-field energies (MHz) in product-basis order.

    order 1: w_e M_S + w_I M_I + a M_S M_I.
    order 2 adds the flip-flop correction
    (a^2 / 2 w) [M_S (I(I+1) - M_I^2) - M_I (S(S+1) - M_S^2)]
    with w = w_e - w_I, the zeroth-order gap bridged by S+ I- (w ~ w_e).
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported perturbation order {order}")
    we = electron_zeeman(species, field)
    wi = nuclear_zeeman(species.gI, field)
    if order == 2 and we == wi:
        raise ValueError("second-order levels need a non-zero electron Zeeman frequency")
    if abs(we) < 20 * abs(species.a):
        warnings.warn(f"electron Zeeman {we:.4g} MHz is not large compared with a = {species.a:.4g} MHz",
                      stacklevel=2)
    S, I, a = species.S, species.I, species.a
    out = []
    for ms in S - np.arange(int(2 * S) + 1):
        for mi in I - np.arange(int(2 * I) + 1):
            e = we * ms + wi * mi + a * ms * mi
            if order == 2:
                e += _second_order_shift(ms, mi, S, I, a, we - wi)
            out.append(e)
    return np.array(out)


@dataclass(frozen=True)
class TransitionLine:
    """One allowed transition between ``from_level`` (lower) and ``to_level``."""

    from_level: int
    to_level: int
    frequency: float
    intensity: float
    from_label: tuple
    to_label: tuple
    resonance_field: float | None = None

    @property
    def nuclear_label(self) -> tuple:
        return self.from_label[1:]


def perturbative_transitions(species: SpeciesParams, field: FieldConfig, order: int = 2
                             ) -> list[TransitionLine]:
    """ΔM_S = 1 lines from perturbative energies, with zeroth-order (product-state) intensities."""
    energies = perturbative_levels(species, field, order)
    S, I = species.S, species.I
    nI = int(round(2 * I)) + 1
    ms_vals = S - np.arange(int(round(2 * S)) + 1)
    mi_vals = I - np.arange(nI)
    lines = []
    for a_idx in range(1, len(ms_vals)):
        ms = ms_vals[a_idx]  # lower M_S of the pair
        for b, mi in enumerate(mi_vals):
            lo = a_idx * nI + b
            hi = (a_idx - 1) * nI + b
            freq = energies[hi] - energies[lo]
            intensity = (S * (S + 1) - ms * (ms + 1)) / 4
            lo_, hi_ = (lo, hi) if freq >= 0 else (hi, lo)
            lab = {lo: (float(ms), float(mi)), hi: (float(ms + 1), float(mi))}
            lines.append(TransitionLine(lo_, hi_, abs(freq), intensity, lab[lo_], lab[hi_]))
    return sorted(lines, key=lambda l: l.frequency)


def transitions(eig: EigenSystem, operator: SpinOperator | None = None, rule: str = "EPR",
                threshold: float = 1e-6, nucleus: int | None = None) -> list[TransitionLine]:
    """Allowed lines with intensity |<f|X|i>|^2.

    EPR: X is the summed electron Sx; exactly one electron label changes by 1,
    every other label is unchanged. NMR: X is Ix of ``nucleus`` (first nuclear
    factor by default); that label changes by 1, every other is unchanged.
    """
    h = eig.hamiltonian
    rule = rule.upper()
    if rule not in ("EPR", "NMR"):
        raise ValueError(f"unknown selection rule {rule!r}")
    if rule == "EPR":
        movers = h.electron_positions()
    else:
        nuclei = h.nuclear_positions()
        if not nuclei:
            raise ValueError("NMR rule needs a nuclear factor")
        movers = [nuclei[0] if nucleus is None else nucleus]
    if operator is None:
        x = sum(factor_operators(h.dims, p, h.kinds)["Sx"].matrix for p in movers)
    else:
        x = operator.matrix
    xe = eig.states.conj().T @ x @ eig.states
    inten = np.abs(xe) ** 2
    cutoff = threshold * inten.max() if inten.max() > 0 else np.inf
    labels = np.round(2 * eig.expectations) / 2
    lines = []
    n = len(eig.energies)
    for i in range(n):
        for f in range(i + 1, n):
            if inten[f, i] <= cutoff:
                continue
            diff = labels[f] - labels[i]
            changed = np.nonzero(np.abs(diff) > 1e-9)[0]
            if len(changed) != 1 or changed[0] not in movers or abs(abs(diff[changed[0]]) - 1) > 1e-9:
                continue
            lines.append(TransitionLine(i, f, float(eig.energies[f] - eig.energies[i]),
                                        float(inten[f, i]), _label(labels[i]), _label(labels[f])))
    return sorted(lines, key=lambda l: (l.frequency, l.from_level))


def with_resonance_fields(lines, field: FieldConfig, g: float) -> list[TransitionLine]:
    """Attach field-swept resonance positions, linearized around the carrier.

    B_res = B0 + (nu_mw - nu_line) / (g beta/h).
    """
    k = electron_mhz_per_mt(g)
    carrier = field.mwFreq * 1000.0
    return [replace(l, resonance_field=field.B0 + (carrier - l.frequency) / k) for l in lines]


def _lineshape(x, width_pp, kind, derivative):
    if kind == "gaussian":
        sigma = width_pp / 2
        g = np.exp(-x * x / (2 * sigma * sigma)) / (sigma * sqrt(2 * np.pi))
        return -x / (sigma * sigma) * g if derivative else g
    if kind == "lorentzian":
        gamma = sqrt(3) * width_pp / 2
        den = x * x + gamma * gamma
        if derivative:
            return -2 * gamma * x / (np.pi * den * den)
        return gamma / (np.pi * den)
    raise ValueError(f"unknown lineshape {kind!r}")


def _make_axis(axis):
    if isinstance(axis, tuple) and len(axis) == 3:
        start, stop, step = axis
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.asarray(axis, dtype=float)


def synthesize_cw_spectrum(lines, linewidth_pp: float, axis, *, derivative: bool = True,
                           lineshape: str = "gaussian") -> SpectrumTrace:
    """Sum of unit-area lineshapes scaled by line intensity.

    Lines carrying ``resonance_field`` are placed on a field axis (mT, linewidth
    in mT); otherwise their frequency is used (MHz axis, linewidth in MHz).
    ``axis`` is an array or a ``(start, stop, step)`` tuple.
    """
    lines = list(lines)
    if not lines:
        raise ValueError("cannot synthesize a spectrum from an empty line list")
    if not linewidth_pp > 0:
        raise ValueError("linewidth must be positive")
    x = _make_axis(axis)
    if len(x) < 2:
        raise ValueError("axis needs at least two points")
    step = np.max(np.diff(x))
    if step > linewidth_pp / 4:
        raise ValueError(f"axis step {step:.3g} is coarser than linewidth/4 = {linewidth_pp / 4:.3g}")
    field_mode = all(l.resonance_field is not None for l in lines)
    centers = [l.resonance_field if field_mode else l.frequency for l in lines]
    if min(centers) < x[0] or max(centers) > x[-1]:
        raise ValueError("axis does not cover all line positions")
    amp = np.zeros_like(x)
    for c, l in zip(centers, lines):
        amp += l.intensity * _lineshape(x - c, linewidth_pp, lineshape, derivative)
    meta = {"lineshape": lineshape, "linewidth_pp": linewidth_pp, "derivative": derivative}
    return SpectrumTrace(x, amp, "mT" if field_mode else "MHz", "amplitude", meta)


def isotopologue_weights(abundance: float, n_sites: int, max_k: int) -> np.ndarray:
    """Binomial probability of k isotopic sites, k = 0..max_k."""
    if not 0 <= abundance <= 1:
        raise ValueError(f"abundance must lie in [0, 1], got {abundance}")
    if not 0 <= max_k <= n_sites:
        raise ValueError("max_k must lie in [0, n_sites]")
    p = abundance
    return np.array([comb(n_sites, k) * p ** k * (1 - p) ** (n_sites - k) for k in range(max_k + 1)])


@dataclass(frozen=True)
class C13Profile:
    """Binomial 13C isotopologue model for a cage."""

    abundance: float = 0.0107
    n_sites: int = 60
    max_k: int = 2
    a13: float = 0.036

    @classmethod
    def natural(cls, cage: str = "C60", max_k: int = 2) -> "C13Profile":
        c = carbon13()
        return cls(c.abundance, c.sites[cage], max_k, c.a13)


@dataclass(frozen=True)
class MixtureComponent:
    species: SpeciesParams
    weight: float = 1.0
    c13: C13Profile | None = None


def species_lines(species: SpeciesParams, field: FieldConfig, n13: int = 0,
                  a13: float | None = None) -> list[TransitionLine]:
    """Exact EPR lines of a species (optionally with ``n13`` cage 13C) in field-swept form."""
    h = add_c13(species, field, a13, n13) if n13 else build_static_hamiltonian(species, field)
    return with_resonance_fields(transitions(diagonalize(h)), field, species.g)


def composite_spectrum(mixture, field: FieldConfig, linewidth_pp: float, axis, *,
                       derivative: bool = True, lineshape: str = "gaussian") -> SpectrumTrace:
    """Weighted superposition of per-isotopologue spectra, normalized to the total weight.

    A molecule with k cage 13C nuclei has 2^k times as many levels; its line
    intensities are divided by 2^k so each molecule carries the same total
    intensity regardless of isotopic composition.
    """
    mixture = list(mixture)
    if not mixture:
        raise ValueError("empty mixture")
    if any(c.weight < 0 for c in mixture) or not any(c.weight > 0 for c in mixture):
        raise ValueError("mixture weights must be non-negative with at least one positive")
    x = _make_axis(axis)
    total = np.zeros_like(x)
    total_weight = 0.0
    for comp in mixture:
        if comp.c13 is None:
            parts = [(1.0, 0)]
        else:
            p = isotopologue_weights(comp.c13.abundance, comp.c13.n_sites, comp.c13.max_k)
            parts = [(float(pk), k) for k, pk in enumerate(p)]
        for pk, k in parts:
            w = comp.weight * pk
            if w == 0:
                continue
            a13 = comp.c13.a13 if comp.c13 is not None else None
            lines = [replace(l, intensity=l.intensity / 2 ** k)
                     for l in species_lines(comp.species, field, k, a13)]
            trace = synthesize_cw_spectrum(lines, linewidth_pp, x, derivative=derivative,
                                           lineshape=lineshape)
            total += w * trace.amplitude
            total_weight += w
    meta = {"lineshape": lineshape, "linewidth_pp": linewidth_pp, "derivative": derivative}
    return SpectrumTrace(x, total / total_weight, "mT", "amplitude", meta)
