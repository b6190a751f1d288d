"""Optical flow from the coarse preview and the motion-map operator built on it.

Flow vectors are ``(v1, v2)`` = (horizontal, vertical) displacement in pixels
per frame, defined so that ``f_{t+1}(x) ~= f_t(x - v_t(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.ndimage import correlate

from .errors import DimensionError, FormatError, InvalidFlowError
from .video import SamplingGeometry, VideoCube, _as_array, pack_header, unpack_header

__all__ = [
    "HornSchunckParams", "FlowField", "bilinear_sample", "estimate_flow",
    "estimate_flow_sequence", "upsample_coarse", "warp_matrix",
    "MotionOperator", "build_motion_operator", "read_flow", "write_flow",
]


@dataclass(frozen=True)
class HornSchunckParams:
    smoothness: float = 0.1
    iterations: int = 100
    levels: int = 3
    warps: int = 1


@dataclass(frozen=True)
class FlowField:
    """Per-transition flow, arrays of shape ``(N - 1, n1, n2)``."""

    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        if self.v1.shape != self.v2.shape or self.v1.ndim != 3:
            raise DimensionError(f"flow components have shapes {self.v1.shape}, {self.v2.shape}")

    def __len__(self):
        return self.v1.shape[0]


def bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``image`` at fractional positions with circular wrap."""
    n1, n2 = image.shape
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr, fc = rows - r0, cols - c0
    r0 = r0.astype(np.int64) % n1
    c0 = c0.astype(np.int64) % n2
    r1, c1 = (r0 + 1) % n1, (c0 + 1) % n2
    return ((1 - fr) * (1 - fc) * image[r0, c0] + (1 - fr) * fc * image[r0, c1]
            + fr * (1 - fc) * image[r1, c0] + fr * fc * image[r1, c1])


_AVG_KERNEL = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=float) / 12.0


def _pyramid(image: np.ndarray, levels: int) -> List[np.ndarray]:
    pyr = [image]
    for _ in range(levels - 1):
        top = pyr[-1]
        if top.shape[0] % 2 or top.shape[1] % 2 or min(top.shape) < 8:
            break
        pyr.append(top.reshape(top.shape[0] // 2, 2, top.shape[1] // 2, 2).mean(axis=(1, 3)))
    return pyr


def _central_diff(image, axis):
    return 0.5 * (np.roll(image, -1, axis=axis) - np.roll(image, 1, axis=axis))


def estimate_flow(prev: np.ndarray, nxt: np.ndarray,
                  params: HornSchunckParams = HornSchunckParams()):
    """Coarse-to-fine Horn-Schunck flow from ``prev`` to ``nxt``.

    Returns ``(v1, v2)``. Each pyramid level warps ``nxt`` by the current
    estimate and runs Jacobi iterations on the linearised brightness
    constancy equation. Constant frames give zero flow.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise DimensionError(f"frames must be equal-size 2-D arrays, got {prev.shape}, {nxt.shape}")
    p1 = _pyramid(prev, params.levels)
    p2 = _pyramid(nxt, len(p1))
    u = np.zeros_like(p1[-1])
    v = np.zeros_like(p1[-1])
    lam = params.smoothness
    for level in range(len(p1) - 1, -1, -1):
        i1, i2 = p1[level], p2[level]
        if u.shape != i1.shape:
            u = 2.0 * np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)
            v = 2.0 * np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)
        rows, cols = np.mgrid[0:i1.shape[0], 0:i1.shape[1]].astype(float)
        for _ in range(params.warps):
            warped = bilinear_sample(i2, rows + v, cols + u)
            ix = 0.5 * (_central_diff(i1, 1) + _central_diff(warped, 1))
            iy = 0.5 * (_central_diff(i1, 0) + _central_diff(warped, 0))
            it = warped - i1
            denom = lam + ix * ix + iy * iy
            u0, v0 = u.copy(), v.copy()
            for _ in range(params.iterations):
                ubar = correlate(u, _AVG_KERNEL, mode="wrap")
                vbar = correlate(v, _AVG_KERNEL, mode="wrap")
                resid = (ix * (ubar - u0) + iy * (vbar - v0) + it) / denom
                u = ubar - ix * resid
                v = vbar - iy * resid
    return u, v


def estimate_flow_sequence(cube, params: HornSchunckParams = HornSchunckParams()) -> FlowField:
    frames = _as_array(cube)
    pairs = [estimate_flow(frames[t], frames[t + 1], params) for t in range(frames.shape[0] - 1)]
    if not pairs:
        empty = np.zeros((0,) + frames.shape[1:])
        return FlowField(empty, empty.copy())
    return FlowField(np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]))


def _spline_axis(data: np.ndarray, axis: int, factor: int) -> np.ndarray:
    count = data.shape[axis]
    if factor == 1:
        return data
    if count < 2:
        return np.repeat(data, factor, axis=axis)
    centers = np.arange(count) * factor + (factor - 1) / 2.0
    spline = CubicSpline(centers, data, axis=axis, bc_type="natural", extrapolate=True)
    query = np.arange(count * factor, dtype=float)
    # a natural spline continues linearly past its end knots (zero curvature)
    clipped = np.clip(query, centers[0], centers[-1])
    out = spline(clipped)
    offset = query - clipped
    if offset.any():
        shape = [1] * data.ndim
        shape[axis] = -1
        out = out + spline.derivative()(clipped) * offset.reshape(shape)
    return out


def upsample_coarse(coarse, geometry: SamplingGeometry) -> VideoCube:
    """Separable natural cubic-spline interpolation to full rate and resolution.

    Coarse samples sit at the centres of their ``d1 x d2 x B`` blocks. With
    fewer than two samples along an axis the data are replicated instead.
    """
    data = np.asarray(_as_array(coarse), dtype=np.float64)
    if data.shape != geometry.measurement_shape:
        raise DimensionError(f"coarse cube {data.shape} != {geometry.measurement_shape}")
    out = _spline_axis(data, 0, geometry.B)
    out = _spline_axis(out, 1, geometry.d1)
    out = _spline_axis(out, 2, geometry.d2)
    return VideoCube(out, kind="scene", frame_rate_ratio=geometry.B)


def warp_matrix(v1: np.ndarray, v2: np.ndarray) -> sp.csr_matrix:
    """Sparse ``V_t`` with ``(V_t f)(x) = f(x - v(x))`` by bilinear interpolation."""
    if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
        raise InvalidFlowError("flow contains non-finite values")
    n1, n2 = v1.shape
    rows, cols = np.mgrid[0:n1, 0:n2].astype(float)
    sr, sc = rows - v2, cols - v1
    r0, c0 = np.floor(sr), np.floor(sc)
    fr, fc = (sr - r0).ravel(), (sc - c0).ravel()
    r0 = r0.astype(np.int64).ravel() % n1
    c0 = c0.astype(np.int64).ravel() % n2
    r1, c1 = (r0 + 1) % n1, (c0 + 1) % n2
    target = np.arange(n1 * n2)
    i = np.tile(target, 4)
    j = np.concatenate([r0 * n2 + c0, r0 * n2 + c1, r1 * n2 + c0, r1 * n2 + c1])
    w = np.concatenate([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc])
    return sp.csr_matrix((w, (i, j)), shape=(n1 * n2, n1 * n2))


class MotionOperator:
    """Block-bidiagonal ``V`` mapping a cube to the stacked ``V_t f_t - f_{t+1}``."""

    def __init__(self, warps: List[sp.csr_matrix], frame_shape):
        self.warps = warps
        self.frame_shape = tuple(frame_shape)
        self._assembled = None

    @property
    def transitions(self) -> int:
        return len(self.warps)

    @property
    def assembled(self) -> sp.csr_matrix:
        if self._assembled is None:
            n = int(np.prod(self.frame_shape))
            T = len(self.warps)
            blocks = [[None] * (T + 1) for _ in range(T)]
            for t, Vt in enumerate(self.warps):
                blocks[t][t] = Vt
                blocks[t][t + 1] = -sp.identity(n, format="csr")
            self._assembled = sp.bmat(blocks, format="csr") if T else sp.csr_matrix((0, n))
        return self._assembled

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(_as_array(f), dtype=np.float64)
        n = int(np.prod(self.frame_shape))
        flat = f.reshape(f.shape[0], n)
        out = np.empty((self.transitions, n))
        for t, Vt in enumerate(self.warps):
            out[t] = Vt @ flat[t] - flat[t + 1]
        return out.reshape((self.transitions,) + self.frame_shape)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        n = int(np.prod(self.frame_shape))
        flat = np.asarray(r, dtype=np.float64).reshape(self.transitions, n)
        out = np.zeros((self.transitions + 1, n))
        for t, Vt in enumerate(self.warps):
            out[t] += Vt.T @ flat[t]
            out[t + 1] -= flat[t]
        return out.reshape((self.transitions + 1,) + self.frame_shape)


def build_motion_operator(flow: FlowField) -> MotionOperator:
    warps = [warp_matrix(flow.v1[t], flow.v2[t]) for t in range(len(flow))]
    return MotionOperator(warps, flow.v1.shape[1:])


# ---------------------------------------------------------------------------
# FLOW dump: VCUB-style header with magic "FLOW", frames = transitions,
# then for each transition the v1 plane followed by the v2 plane (float32).

FLOW_MAGIC = b"FLOW"


def write_flow(flow: FlowField, path) -> None:
    T = len(flow)
    shape = (T,) + flow.v1.shape[1:]
    planes = np.stack([flow.v1, flow.v2], axis=1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(pack_header(FLOW_MAGIC, np.float32, shape))
        fh.write(planes.tobytes())


def read_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    dtype, (T, n1, n2), _, _ = unpack_header(raw, FLOW_MAGIC)
    count = T * 2 * n1 * n2
    if len(raw) < 32 + count * dtype.itemsize:
        raise FormatError("truncated flow payload")
    planes = np.frombuffer(raw, dtype=dtype, count=count, offset=32).reshape(T, 2, n1, n2)
    return FlowField(planes[:, 0].astype(np.float64), planes[:, 1].astype(np.float64))
