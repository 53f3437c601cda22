"""Spin operators and product-space embedding.

Basis convention used everywhere in the package: the electron factor comes
first, nuclei follow in declaration order, and each factor is ordered by
descending magnetic quantum number.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import prod

import numpy as np

MAX_DIM = 4096
MAX_SPIN = 3.5

ELECTRON = "e"
NUCLEUS = "n"


def _as_spin(s) -> float:
    """Validate a spin quantum number and return it as a float."""
    try:
        twice = Fraction(s).limit_denominator(1000) * 2
    except (TypeError, ValueError):
        raise ValueError(f"spin quantum number must be numeric, got {s!r}") from None
    if twice < 0:
        raise ValueError(f"spin quantum number must be non-negative, got {s}")
    if twice.denominator != 1 or abs(float(twice) - 2 * float(s)) > 1e-12:
        raise ValueError(f"spin quantum number must be a half-integer, got {s}")
    if twice > 2 * MAX_SPIN:
        raise ValueError(f"spins above {MAX_SPIN} are not supported, got {s}")
    return float(twice) / 2


def multiplicity(s) -> int:
    return int(round(2 * _as_spin(s))) + 1


def spin_of_dim(d: int) -> float:
    return (d - 1) / 2


def m_values(s) -> np.ndarray:
    """Magnetic quantum numbers s, s-1, ..., -s."""
    s = _as_spin(s)
    return s - np.arange(int(round(2 * s)) + 1)


@dataclass(frozen=True, eq=False)
class SpinOperator:
    """Dense operator on a product of spin spaces.

    ``dims`` holds the multiplicity of each factor and ``kinds`` marks each
    factor as electron (``"e"``) or nucleus (``"n"``).
    """

    matrix: np.ndarray
    dims: tuple[int, ...]
    kinds: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {m.shape}")
        if m.shape[0] != prod(dims):
            raise ValueError(f"matrix dimension {m.shape[0]} does not match dims {dims}")
        if m.shape[0] > MAX_DIM:
            raise ValueError(f"dimension {m.shape[0]} exceeds the limit of {MAX_DIM}")
        kinds = self.kinds
        if kinds is None:
            kinds = (ELECTRON,) + (NUCLEUS,) * (len(dims) - 1)
        kinds = tuple(kinds)
        if len(kinds) != len(dims):
            raise ValueError("kinds and dims must have equal length")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "kinds", kinds)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def spins(self) -> tuple[float, ...]:
        return tuple(spin_of_dim(d) for d in self.dims)

    @property
    def basis(self) -> list[tuple[float, ...]]:
        """Product-basis labels (m_0, m_1, ...) in matrix order."""
        return list(itertools.product(*(m_values(s) for s in self.spins)))

    def electron_positions(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == ELECTRON]

    def nuclear_positions(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == NUCLEUS]

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        m = self.matrix
        scale = max(np.linalg.norm(m), 1.0)
        return np.linalg.norm(m - m.conj().T) <= rtol * scale

    def with_matrix(self, matrix) -> "SpinOperator":
        return SpinOperator(matrix, self.dims, self.kinds)

    def _check_space(self, other: "SpinOperator"):
        if self.dims != other.dims:
            raise ValueError(f"operator spaces differ: {self.dims} vs {other.dims}")

    def __add__(self, other):
        if isinstance(other, SpinOperator):
            self._check_space(other)
            return self.with_matrix(self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpinOperator):
            self._check_space(other)
            return self.with_matrix(self.matrix - other.matrix)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return self.with_matrix(self.matrix * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_matrix(-self.matrix)

    def __matmul__(self, other):
        if isinstance(other, SpinOperator):
            self._check_space(other)
            return self.with_matrix(self.matrix @ other.matrix)
        return NotImplemented

    def dag(self) -> "SpinOperator":
        return self.with_matrix(self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __repr__(self):
        return f"SpinOperator(dims={self.dims}, kinds={self.kinds})"


def spin_matrices(s) -> dict[str, SpinOperator]:
    """Sx, Sy, Sz, Splus, Sminus for a single spin ``s``.

    >>> ops = spin_matrices(0.5)
    >>> ops["Sz"].matrix.real.diagonal().tolist()
    [0.5, -0.5]
    """
    s = _as_spin(s)
    m = m_values(s)
    d = len(m)
    splus = np.zeros((d, d))
    # <m+1|S+|m>: row index k-1 holds m[k] + 1
    for k in range(1, d):
        splus[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sminus = splus.T
    dims = (d,)
    return {
        "Sx": SpinOperator((splus + sminus) / 2, dims),
        "Sy": SpinOperator((splus - sminus) / 2j, dims),
        "Sz": SpinOperator(np.diag(m), dims),
        "Splus": SpinOperator(splus, dims),
        "Sminus": SpinOperator(sminus, dims),
    }


def embed(op: SpinOperator, position: int, dims, kinds=None) -> SpinOperator:
    """Place a single-factor operator at ``position`` of the product space ``dims``."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= position < len(dims):
        raise ValueError(f"position {position} outside a {len(dims)}-factor space")
    if op.dim != dims[position]:
        raise ValueError(
            f"operator dimension {op.dim} does not match factor {position} of size {dims[position]}"
        )
    if prod(dims) > MAX_DIM:
        raise ValueError(f"dimension {prod(dims)} exceeds the limit of {MAX_DIM}")
    left = np.eye(prod(dims[:position]))
    right = np.eye(prod(dims[position + 1:]))
    return SpinOperator(np.kron(np.kron(left, op.matrix), right), dims, kinds)


def factor_operators(dims, position: int, kinds=None) -> dict[str, SpinOperator]:
    """All spin_matrices of factor ``position`` embedded in the product space."""
    s = spin_of_dim(dims[position])
    return {name: embed(op, position, dims, kinds) for name, op in spin_matrices(s).items()}


def identity(dims, kinds=None) -> SpinOperator:
    return SpinOperator(np.eye(prod(dims)), tuple(dims), kinds)


def commutator(a: SpinOperator, b: SpinOperator) -> SpinOperator:
    return a @ b - b @ a


def total_z(op: SpinOperator, kinds: str | None = None) -> SpinOperator:
    """Sum of z operators over all factors, or over factors of one kind."""
    out = np.zeros((op.dim, op.dim), dtype=complex)
    for pos, k in enumerate(op.kinds):
        if kinds is None or k == kinds:
            out = out + factor_operators(op.dims, pos, op.kinds)["Sz"].matrix
    return op.with_matrix(out)


def total_component(op: SpinOperator, name: str, kind: str) -> SpinOperator:
    """Sum of component ``name`` (e.g. "Sx") over all factors of ``kind``."""
    out = np.zeros((op.dim, op.dim), dtype=complex)
    for pos, k in enumerate(op.kinds):
        if k == kind:
            out = out + factor_operators(op.dims, pos, op.kinds)[name].matrix
    return op.with_matrix(out)
