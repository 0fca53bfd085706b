"""On-disk exchange formats for cached features and external F0.

Feature files are row-major float32 matrices behind an 12-byte header
(magic "SSF1", then uint32 row and column counts, little endian). F0
files are one float per line in Hz, with -1 marking unvoiced frames.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, MissingArtifactError

MAGIC = b"SSF1"
_HEADER = struct.Struct("<4sII")


def write_feature_file(path, array: np.ndarray) -> None:
    """Write a (T, D) float32 matrix; 1-D input is stored as (T, 1)."""
    array = np.asarray(array, dtype="<f4")
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise ParseError(f"feature arrays must be 1-D or 2-D, got shape {array.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, array.shape[0], array.shape[1]))
        f.write(np.ascontiguousarray(array).tobytes())


def read_feature_file(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"feature file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(rows, cols).copy()


UNVOICED = -1.0


def write_f0_file(path, f0_hz: np.ndarray, voiced_mask: np.ndarray | None = None) -> None:
    """Write per-frame F0 in Hz, one value per line, -1 for unvoiced."""
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    with open(path, "w") as f:
        for i, value in enumerate(f0_hz):
            if voiced_mask is not None and not voiced_mask[i]:
                f.write("-1\n")
            else:
                f.write(f"{value:.6f}\n")


def read_f0_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a per-frame F0 file. Returns (f0_hz, voiced_mask)."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"F0 file not found: {path}")
    values = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad F0 value {line!r}")
    f0 = np.array(values, dtype=np.float64)
    voiced = f0 > 0
    bad = ~voiced & (f0 != UNVOICED)
    if np.any(bad):
        raise ParseError(
            f"{path}: non-positive F0 other than the -1 unvoiced marker "
            f"(first offender {f0[bad][0]})"
        )
    return f0, voiced
