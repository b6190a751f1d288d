"""Core video types, the VCUB cube file format, synthetic scenes and RMSE.

Frames are stored as numpy arrays of shape ``(frames, rows, cols)``. The
first image axis has length ``n1`` and the second ``n2``; velocities and
flow vectors are given as ``(horizontal, vertical)`` i.e. ``(cols, rows)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, FormatError, NormalizationError

__all__ = [
    "SamplingGeometry", "make_geometry", "VideoCube", "NoiseModel",
    "RectRegion", "MovingRect", "MovingDisc", "SceneSpec", "synth_scene",
    "default_scene_spec", "rmse_percent", "read_cube", "write_cube",
]


@dataclass(frozen=True)
class SamplingGeometry:
    """Shape bookkeeping for a high-rate scene and its low-rate measurements."""

    n1: int
    n2: int
    N: int
    d1: int
    d2: int
    B: int

    def __post_init__(self):
        for name in ("n1", "n2", "N", "d1", "d2", "B"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise DimensionError(f"{name} must be a positive integer, got {value!r}")
        for big, small in (("n1", "d1"), ("n2", "d2"), ("N", "B")):
            if getattr(self, big) % getattr(self, small):
                raise DimensionError(
                    f"{small}={getattr(self, small)} does not divide "
                    f"{big}={getattr(self, big)}")

    @property
    def m1(self) -> int:
        return self.n1 // self.d1

    @property
    def m2(self) -> int:
        return self.n2 // self.d2

    @property
    def M(self) -> int:
        return self.N // self.B

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def m(self) -> int:
        return self.m1 * self.m2

    @property
    def d(self) -> int:
        return self.d1 * self.d2

    @property
    def scene_shape(self) -> Tuple[int, int, int]:
        return (self.N, self.n1, self.n2)

    @property
    def measurement_shape(self) -> Tuple[int, int, int]:
        return (self.M, self.m1, self.m2)

    @property
    def compression_ratio(self) -> float:
        """Number of unknowns per measurement, ``nN / mM``."""
        return (self.n * self.N) / (self.m * self.M)

    def block_of(self, t: int) -> int:
        """Exposure block index (0-based) containing high-rate frame ``t``."""
        return t // self.B


def make_geometry(n1, n2, N, d1, d2, B) -> SamplingGeometry:
    return SamplingGeometry(int(n1), int(n2), int(N), int(d1), int(d2), int(B))


@dataclass(frozen=True)
class VideoCube:
    """An immutable stack of equally sized real frames.

    ``kind`` is ``"scene"`` for high-rate cubes (scene, estimates) and
    ``"measurement"`` for low-rate detector data.
    """

    frames: np.ndarray
    kind: str = "scene"
    frame_rate_ratio: int = 1

    def __post_init__(self):
        arr = np.array(self.frames, copy=True)
        if arr.ndim != 3:
            raise DimensionError(f"cube must be 3-D (frames, rows, cols), got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if self.kind not in ("scene", "measurement"):
            raise ValueError(f"unknown cube kind {self.kind!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)

    @property
    def shape(self):
        return self.frames.shape

    def __len__(self):
        return self.frames.shape[0]

    def check_geometry(self, geometry: SamplingGeometry):
        expected = geometry.scene_shape if self.kind == "scene" else geometry.measurement_shape
        if self.frames.shape != expected:
            raise DimensionError(
                f"{self.kind} cube has shape {self.frames.shape}, geometry expects {expected}")


def _as_array(cube) -> np.ndarray:
    return cube.frames if isinstance(cube, VideoCube) else np.asarray(cube)


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian measurement noise; ``kind="none"`` disables it."""

    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def apply(self, data: np.ndarray) -> np.ndarray:
        if self.kind == "none" or self.sigma == 0:
            return data
        rng = np.random.default_rng(self.seed)
        return data + self.sigma * rng.standard_normal(data.shape)


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class RectRegion:
    """Half-open pixel rectangle ``[row0, row1) x [col0, col1)``."""

    row0: int
    row1: int
    col0: int
    col1: int

    def slices(self):
        return slice(self.row0, self.row1), slice(self.col0, self.col1)


@dataclass(frozen=True)
class MovingRect:
    """Axis-aligned rectangle; ``position`` is the top-left corner (x, y) at frame 0."""

    size: Tuple[float, float]          # (width, height)
    position: Tuple[float, float]      # (x, y)
    velocity: Tuple[float, float] = (0.0, 0.0)
    intensity: float = 1.0


@dataclass(frozen=True)
class MovingDisc:
    """Disc with ``center`` (x, y) at frame 0."""

    radius: float
    center: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    intensity: float = 1.0


@dataclass(frozen=True)
class SceneSpec:
    """Objects painted in order over an optional drifting background."""

    objects: Tuple = ()
    background: Optional[np.ndarray] = field(default=None, compare=False)
    background_drift: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    disc_supersample: int = 8


def _interval_coverage(a: float, b: float, n: int) -> np.ndarray:
    """Length of ``[a, b)`` falling in each unit cell of a circle of ``n`` cells."""
    cov = np.zeros(n)
    if b <= a:
        return cov
    for j in range(int(np.floor(a)), int(np.ceil(b))):
        overlap = min(b, j + 1) - max(a, j)
        if overlap > 0:
            cov[j % n] += overlap
    return cov


def _rect_coverage(obj: MovingRect, t: int, n1: int, n2: int) -> np.ndarray:
    x0 = obj.position[0] + obj.velocity[0] * t
    y0 = obj.position[1] + obj.velocity[1] * t
    cx = _interval_coverage(x0, x0 + obj.size[0], n2)
    cy = _interval_coverage(y0, y0 + obj.size[1], n1)
    return np.minimum(np.outer(cy, cx), 1.0)


def _disc_coverage(obj: MovingDisc, t: int, n1: int, n2: int, ss: int) -> np.ndarray:
    # area fraction estimated on an ss x ss sub-pixel grid, circular wrap
    cx = obj.center[0] + obj.velocity[0] * t
    cy = obj.center[1] + obj.velocity[1] * t
    offs = (np.arange(ss) + 0.5) / ss
    ys = (np.arange(n1)[:, None] + offs[None, :]).ravel()
    xs = (np.arange(n2)[:, None] + offs[None, :]).ravel()
    dy = (ys - cy + n1 / 2) % n1 - n1 / 2
    dx = (xs - cx + n2 / 2) % n2 - n2 / 2
    inside = (dy[:, None] ** 2 + dx[None, :] ** 2) <= obj.radius ** 2
    return inside.reshape(n1, ss, n2, ss).mean(axis=(1, 3))


def _fourier_shift(image: np.ndarray, shift_x: float, shift_y: float) -> np.ndarray:
    n1, n2 = image.shape
    ky = np.fft.fftfreq(n1)[:, None]
    kx = np.fft.fftfreq(n2)[None, :]
    phase = np.exp(-2j * np.pi * (ky * shift_y + kx * shift_x))
    return np.fft.ifft2(np.fft.fft2(image) * phase).real


def synth_scene(spec: SceneSpec, geometry: SamplingGeometry) -> VideoCube:
    """Render a translating-objects scene.

    Rectangles use exact area coverage, discs a supersampled estimate.
    Objects that leave the frame wrap around circularly.
    """
    n1, n2, N = geometry.n1, geometry.n2, geometry.N
    frames = np.zeros((N, n1, n2))
    for t in range(N):
        if spec.background is not None:
            bg = np.asarray(spec.background, dtype=float)
            if bg.shape != (n1, n2):
                raise DimensionError(f"background shape {bg.shape} != {(n1, n2)}")
            dx, dy = spec.background_drift
            frame = _fourier_shift(bg, dx * t, dy * t) if (dx or dy) else bg.copy()
        else:
            frame = np.zeros((n1, n2))
        for obj in spec.objects:
            if isinstance(obj, MovingRect):
                cov = _rect_coverage(obj, t, n1, n2)
            elif isinstance(obj, MovingDisc):
                cov = _disc_coverage(obj, t, n1, n2, spec.disc_supersample)
            else:
                raise TypeError(f"unsupported scene object {obj!r}")
            frame = frame * (1.0 - cov) + obj.intensity * cov
        frames[t] = frame
    return VideoCube(frames, kind="scene", frame_rate_ratio=geometry.B)


def default_scene_spec(geometry: SamplingGeometry, seed: int = 0) -> SceneSpec:
    """A static smooth background with three small, slowly moving objects.

    Object sizes scale with the frame; speeds stay below half a pixel per
    frame, the regime in which difference frames remain sparse.
    """
    rng = np.random.default_rng(seed)
    n1, n2 = geometry.n1, geometry.n2
    yy, xx = np.mgrid[0:n1, 0:n2]
    bg = 0.35 + 0.08 * np.sin(2 * np.pi * (xx / n2 + rng.uniform()))
    bg += 0.06 * np.cos(2 * np.pi * (2 * yy / n1 + rng.uniform()))
    scale = min(n1, n2) / 64.0
    objects = (
        MovingRect(size=(7 * scale, 5 * scale),
                   position=(rng.uniform(0.1, 0.3) * n2, rng.uniform(0.15, 0.35) * n1),
                   velocity=(0.375, 0.125), intensity=0.85),
        MovingDisc(radius=3 * scale,
                   center=(rng.uniform(0.55, 0.8) * n2, rng.uniform(0.55, 0.8) * n1),
                   velocity=(-0.25, 0.0), intensity=0.1),
        MovingRect(size=(3 * scale, 3 * scale),
                   position=(rng.uniform(0.6, 0.8) * n2, rng.uniform(0.1, 0.3) * n1),
                   velocity=(0.0, 0.25), intensity=0.65),
    )
    return SceneSpec(objects=objects, background=bg, background_drift=(0.0, 0.0), seed=seed)


# ---------------------------------------------------------------------------
# metrics


def rmse_percent(estimate, truth, roi: Optional[RectRegion] = None,
                 frame_range: Optional[Tuple[int, int]] = None,
                 discount: Optional[int] = None) -> float:
    """Relative error ``100 * ||estimate - truth|| / ||truth||`` in percent.

    Parameters
    ----------
    estimate, truth : VideoCube or ndarray
        Cubes of identical shape.
    roi : RectRegion, optional
        Spatial region; the full frame when omitted.
    frame_range : (start, stop), optional
        Half-open frame range. Overrides ``discount``.
    discount : int, optional
        Number of frames dropped at each end of the sequence. Defaults to the
        truth cube's ``frame_rate_ratio`` (one exposure block) when truth is a
        VideoCube, else 0.
    """
    est = _as_array(estimate).astype(np.float64)
    ref = _as_array(truth).astype(np.float64)
    if est.shape != ref.shape:
        raise DimensionError(f"shape mismatch {est.shape} vs {ref.shape}")
    nframes = ref.shape[0]
    if frame_range is None:
        if discount is None:
            discount = truth.frame_rate_ratio if isinstance(truth, VideoCube) else 0
        frame_range = (discount, nframes - discount)
    start, stop = frame_range
    if not 0 <= start < stop <= nframes:
        raise DimensionError(f"invalid frame range {frame_range} for {nframes} frames")
    if roi is None:
        roi = RectRegion(0, ref.shape[1], 0, ref.shape[2])
    if not (0 <= roi.row0 < roi.row1 <= ref.shape[1] and 0 <= roi.col0 < roi.col1 <= ref.shape[2]):
        raise DimensionError(f"roi {roi} outside frame bounds {ref.shape[1:]}")
    rs, cs = roi.slices()
    diff = est[start:stop, rs, cs] - ref[start:stop, rs, cs]
    denom = np.linalg.norm(ref[start:stop, rs, cs])
    if denom == 0:
        raise NormalizationError("truth is identically zero on the evaluation region")
    return float(100.0 * np.linalg.norm(diff) / denom)


# ---------------------------------------------------------------------------
# VCUB file format
#
# 32-byte little-endian header:
#   magic "VCUB" | version u16 | dtype u16 | n1 u32 | n2 u32 | frames u32 |
#   flags u32 | frame_rate_ratio u32 | 4 reserved bytes
# flags bit 0: 1 for measurement cubes. Payload is row-major frames.

VCUB_MAGIC = b"VCUB"
VCUB_VERSION = 1
_HEADER = struct.Struct("<4sHHIIIII4x")
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_OF = {np.dtype("float32"): 0, np.dtype("float64"): 1}
MAX_PAYLOAD = 1 << 34

PathLike = Union[str, Path]


def pack_header(magic: bytes, dtype: np.dtype, shape: Sequence[int], flags: int = 0,
                extra: int = 0) -> bytes:
    frames, n1, n2 = shape
    return _HEADER.pack(magic, VCUB_VERSION, _CODE_OF[np.dtype(dtype)], n1, n2, frames, flags, extra)


def unpack_header(raw: bytes, magic: bytes):
    """Return ``(dtype, (frames, n1, n2), flags, extra)``; validates size limits."""
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    got, version, code, n1, n2, frames, flags, extra = _HEADER.unpack(raw[:_HEADER.size])
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VCUB_VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}")
    dtype = DTYPE_CODES[code]
    if n1 * n2 * frames * dtype.itemsize > MAX_PAYLOAD:
        raise FormatError(f"dimensions {n1}x{n2}x{frames} overflow the payload limit")
    return dtype, (frames, n1, n2), flags, extra


def write_cube(cube: VideoCube, path: PathLike) -> None:
    arr = cube.frames
    if arr.dtype not in _CODE_OF:
        arr = arr.astype(np.float32)
    flags = 1 if cube.kind == "measurement" else 0
    with open(path, "wb") as fh:
        fh.write(pack_header(VCUB_MAGIC, arr.dtype, arr.shape, flags, cube.frame_rate_ratio))
        fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_cube(path: PathLike) -> VideoCube:
    raw = Path(path).read_bytes()
    dtype, shape, flags, ratio = unpack_header(raw, VCUB_MAGIC)
    nbytes = int(np.prod(shape)) * dtype.itemsize
    payload = raw[_HEADER.size:]
    if len(payload) < nbytes:
        raise FormatError(f"truncated payload: {len(payload)} of {nbytes} bytes")
    frames = np.frombuffer(payload[:nbytes], dtype=dtype).reshape(shape)
    kind = "measurement" if flags & 1 else "scene"
    return VideoCube(frames.astype(dtype.newbyteorder("=")), kind=kind, frame_rate_ratio=max(ratio, 1))
