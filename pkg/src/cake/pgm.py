"""16-bit binary PGM frame dumps.

Intensity mapping: a value ``v`` is stored as ``round(65535 * (v - lo) / (hi - lo))``
after clipping to ``[lo, hi]``; reading inverts the map. With the default
``lo=0, hi=1`` a ``[0, 1]`` scene round-trips to within ``0.5 / 65535``, and a
dump re-imported and dumped again is byte-identical.

Signed images (residuals, difference frames) are folded to magnitude and
scaled symmetrically: ``|v| / max|v|`` over the whole cube maps to ``[0, 1]``.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import FormatError
from .video import _as_array

__all__ = ["MAXVAL", "write_pgm", "read_pgm", "export_frames", "import_frames",
           "magnitude_frames"]

MAXVAL = 65535
_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _quantize(frame: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise ValueError(f"empty intensity range [{lo}, {hi}]")
    scaled = (np.clip(frame, lo, hi) - lo) / (hi - lo)
    return np.rint(scaled * MAXVAL).astype(">u2")


def write_pgm(path, frame: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> None:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError(f"a PGM frame must be 2-D, got shape {frame.shape}")
    rows, cols = frame.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{MAXVAL}\n".encode("ascii"))
        fh.write(_quantize(frame, lo, hi).tobytes())


def read_pgm(path, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    raw = Path(path).read_bytes()
    match = _HEADER.match(raw)
    if match is None:
        raise FormatError(f"{path}: not a binary PGM file")
    cols, rows, maxval = (int(v) for v in match.groups())
    if maxval != MAXVAL:
        raise FormatError(f"{path}: expected 16-bit data (maxval {MAXVAL}), got {maxval}")
    start = match.end()
    if len(raw) - start < rows * cols * 2:
        raise FormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=">u2", count=rows * cols, offset=start)
    return lo + (hi - lo) * data.reshape(rows, cols).astype(np.float64) / MAXVAL


def export_frames(cube, directory, prefix: str, lo: float = 0.0, hi: float = 1.0) -> List[Path]:
    """Write ``prefix_000.pgm``, ``prefix_001.pgm``, ... and return the paths."""
    frames = _as_array(cube)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(frames):
        path = directory / f"{prefix}_{t:03d}.pgm"
        write_pgm(path, frame, lo, hi)
        paths.append(path)
    return paths


def import_frames(paths: Sequence, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.stack([read_pgm(p, lo, hi) for p in paths])


def magnitude_frames(signed) -> np.ndarray:
    """Fold a signed cube to ``|v| / max|v|`` in ``[0, 1]`` (all zeros stay zero)."""
    mag = np.abs(np.asarray(_as_array(signed), dtype=np.float64))
    peak = float(mag.max()) if mag.size else 0.0
    return mag / peak if peak > 0 else mag
