"""Sampled 1-D traces and their CSV serialization."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_DIGITS = 12
SURFACE_DIGITS = 10


class TraceValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """Axis values plus amplitudes; ``axis_unit`` names the CSV axis column."""

    axis: np.ndarray
    amplitude: np.ndarray
    axis_unit: str = "mT"
    value_name: str = "amplitude"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        amp = np.asarray(self.amplitude, dtype=float)
        if axis.ndim != 1 or amp.ndim != 1 or len(axis) != len(amp):
            raise TraceValidationError("axis and amplitude must be 1-D arrays of equal length")
        if len(axis) > 1 and not np.all(np.diff(axis) > 0):
            raise TraceValidationError("axis must be strictly increasing")
        axis.flags.writeable = False
        amp.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "amplitude", amp)

    def __len__(self):
        return len(self.axis)

    @property
    def header(self) -> tuple[str, str]:
        return (f"axis_{self.axis_unit}", self.value_name)


def _fmt(x: float, digits: int) -> str:
    return f"{x:.{digits}g}"


def _atomic_write_text(path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def trace_to_csv(trace: SpectrumTrace) -> str:
    if len(trace) == 0:
        raise TraceValidationError("refusing to serialize an empty trace")
    lines = [",".join(trace.header)]
    for x, y in zip(trace.axis, trace.amplitude):
        lines.append(f"{_fmt(x, TRACE_DIGITS)},{_fmt(y, TRACE_DIGITS)}")
    return "\n".join(lines) + "\n"


def write_trace(trace: SpectrumTrace, path) -> None:
    """Write ``trace`` as two-column CSV, atomically (temp file + rename)."""
    _atomic_write_text(path, trace_to_csv(trace))


def read_trace(path) -> SpectrumTrace:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) != 2 or not header[0].startswith("axis_"):
        raise TraceValidationError(f"{path}: unexpected trace header {header}")
    data = np.array([[float(a), float(b)] for a, b in body]).reshape(-1, 2)
    return SpectrumTrace(data[:, 0], data[:, 1], header[0][len("axis_"):], header[1])


def write_table(path, header, rows, digits: int = TRACE_DIGITS) -> None:
    """Generic CSV table; floats are written to ``digits`` significant figures."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v, digits) if isinstance(v, float) else v for v in row])
    _atomic_write_text(path, buf.getvalue())


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
