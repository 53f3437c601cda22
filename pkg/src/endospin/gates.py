"""Naive and BB1 composite rotations under systematic control errors.

The gate model is a two-level system. A rotation by ``angle`` about an axis
at azimuth ``phase`` in the x-y plane is exp(-i angle/2 (cos phase X + sin phase Y)).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .traces import SURFACE_DIGITS, _atomic_write_text, _fmt

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2

#: Nutation rate (MHz) used to convert rotation angles into pulse durations.
REFERENCE_NUTATION_MHZ = 31.25


@dataclass(frozen=True)
class RotationSpec:
    angle: float
    phase: float = 0.0

    def __post_init__(self):
        if not 0 < self.angle <= 4 * math.pi:
            raise ValueError(f"rotation angle must lie in (0, 4pi], got {self.angle}")


@dataclass(frozen=True)
class ErrorModel:
    """Pulse-amplitude error (fraction) and resonance offset (MHz)."""

    amplitude_error: float = 0.0
    detuning: float = 0.0
    nutation_rate: float = REFERENCE_NUTATION_MHZ

    def __post_init__(self):
        if not self.amplitude_error > -1:
            raise ValueError("amplitude error must exceed -1")
        if not self.nutation_rate > 0:
            raise ValueError("nutation rate must be positive")


@dataclass(frozen=True)
class CompositeSequence:
    rotations: tuple

    def __post_init__(self):
        object.__setattr__(self, "rotations", tuple(self.rotations))
        if not self.rotations:
            raise ValueError("composite sequence must not be empty")

    @property
    def total_angle(self) -> float:
        return sum(r.angle for r in self.rotations)


def naive_sequence(target: RotationSpec) -> CompositeSequence:
    return CompositeSequence((target,))


def bb1_sequence(target: RotationSpec) -> CompositeSequence:
    """BB1: pi(phi) 2pi(3 phi) pi(phi) followed by the target, phi = arccos(-theta / 4pi).

    Phases are offset by the target's own phase.
    """
    theta = target.angle
    if not 0 < theta < 2 * math.pi:
        raise ValueError("BB1 target angle must lie in (0, 2pi)")
    phi = math.acos(-theta / (4 * math.pi))
    p0 = target.phase
    return CompositeSequence((
        RotationSpec(math.pi, p0 + phi),
        RotationSpec(2 * math.pi, p0 + 3 * phi),
        RotationSpec(math.pi, p0 + phi),
        RotationSpec(theta, p0),
    ))


SCHEMES = {"naive": naive_sequence, "bb1": bb1_sequence}


def rotation(angle: float, phase: float = 0.0) -> np.ndarray:
    """Ideal SU(2) rotation."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phase)],
                     [-1j * s * np.exp(1j * phase), c]])


def realize(seq: CompositeSequence, err: ErrorModel = ErrorModel()) -> np.ndarray:
    """Unitary actually applied: angles scaled by (1 + eps), detuning acting during each pulse."""
    u = np.eye(2, dtype=complex)
    for r in seq.rotations:
        if err.detuning == 0:
            step = rotation((1 + err.amplitude_error) * r.angle, r.phase)
        else:
            duration_us = r.angle / (2 * math.pi * err.nutation_rate)
            amp = (1 + err.amplitude_error) * err.nutation_rate
            h = amp * (math.cos(r.phase) * SX + math.sin(r.phase) * SY) + err.detuning * SZ
            step = expm(-2j * math.pi * h * duration_us)
        u = step @ u
    return u


def gate_fidelity(U: np.ndarray, V: np.ndarray) -> float:
    """Average gate fidelity (|Tr(U^dag V)|^2 + d) / (d (d + 1))."""
    U, V = np.asarray(U), np.asarray(V)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"unitaries must be square with equal shape, got {U.shape} and {V.shape}")
    d = U.shape[0]
    f = (abs(np.trace(U.conj().T @ V)) ** 2 + d) / (d * (d + 1))
    return float(min(max(f, 0.0), 1.0))


def phase_aligned_distance(U: np.ndarray, V: np.ndarray) -> float:
    """Operator-norm distance between U and V after removing the best global phase."""
    tr = np.trace(U.conj().T @ V)
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    return float(np.linalg.norm(U * phase - V, 2))


@dataclass(frozen=True, eq=False)
class FidelitySurface:
    """Fidelity on a grid: ``values[i, j]`` at detuning[i], eps[j]."""

    eps: np.ndarray
    detuning: np.ndarray
    values: np.ndarray
    scheme: str

    def at(self, eps: float, detuning: float = 0.0) -> float:
        i = int(np.argmin(np.abs(self.detuning - detuning)))
        j = int(np.argmin(np.abs(self.eps - eps)))
        return float(self.values[i, j])


def fidelity_sweep(target: RotationSpec, scheme: str, eps_grid, detuning_grid=(0.0,), *,
                   nutation_rate: float = REFERENCE_NUTATION_MHZ, threads: int = 1) -> FidelitySurface:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    eps = np.asarray(eps_grid, dtype=float)
    det = np.asarray(detuning_grid, dtype=float)
    if eps.size == 0 or det.size == 0:
        raise ValueError("error grids must be non-empty")
    seq = SCHEMES[scheme](target)
    ideal = rotation(target.angle, target.phase)

    def row(delta):
        return [gate_fidelity(ideal, realize(seq, ErrorModel(e, delta, nutation_rate))) for e in eps]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, det))
    else:
        rows = [row(d) for d in det]
    return FidelitySurface(eps, det, np.array(rows), scheme)


def surface_to_csv(surface: FidelitySurface) -> str:
    lines = [",".join(["detuning_MHz\\eps"] + [_fmt(e, SURFACE_DIGITS) for e in surface.eps])]
    for d, row in zip(surface.detuning, surface.values):
        lines.append(",".join([_fmt(d, SURFACE_DIGITS)] + [_fmt(v, SURFACE_DIGITS) for v in row]))
    return "\n".join(lines) + "\n"


def write_surface(surface: FidelitySurface, path) -> None:
    _atomic_write_text(path, surface_to_csv(surface))


def read_surface(path, scheme: str = "") -> FidelitySurface:
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    eps = np.array([float(x) for x in rows[0][1:]])
    det = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return FidelitySurface(eps, det, vals, scheme)
