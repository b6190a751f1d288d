"""Orthonormal 2-D Daubechies-4 wavelet transform with periodic boundaries.

Coefficients are packed in the usual Mallat layout: after each level the
approximation occupies the top-left quarter of the current block.
Works on stacks of frames (``(..., rows, cols)``).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import DimensionError

__all__ = ["D4_LOWPASS", "D4_HIGHPASS", "max_levels", "WaveletTransform",
           "wavelet_forward", "wavelet_inverse"]

_s3 = np.sqrt(3.0)
D4_LOWPASS = np.array([1 + _s3, 3 + _s3, 3 - _s3, 1 - _s3]) / (4 * np.sqrt(2.0))
D4_HIGHPASS = np.array([D4_LOWPASS[3], -D4_LOWPASS[2], D4_LOWPASS[1], -D4_LOWPASS[0]])


def _analysis_last(x: np.ndarray):
    h, g = D4_LOWPASS, D4_HIGHPASS
    xe, xo = x[..., 0::2], x[..., 1::2]
    xe2, xo2 = np.roll(xe, -1, axis=-1), np.roll(xo, -1, axis=-1)
    approx = h[0] * xe + h[1] * xo + h[2] * xe2 + h[3] * xo2
    detail = g[0] * xe + g[1] * xo + g[2] * xe2 + g[3] * xo2
    return np.concatenate([approx, detail], axis=-1)


def _synthesis_last(c: np.ndarray):
    h, g = D4_LOWPASS, D4_HIGHPASS
    half = c.shape[-1] // 2
    a, d = c[..., :half], c[..., half:]
    a1, d1 = np.roll(a, 1, axis=-1), np.roll(d, 1, axis=-1)
    out = np.empty_like(c)
    out[..., 0::2] = h[0] * a + g[0] * d + h[2] * a1 + g[2] * d1
    out[..., 1::2] = h[1] * a + g[1] * d + h[3] * a1 + g[3] * d1
    return out


def _two_adic(k: int) -> int:
    v = 0
    while k % 2 == 0 and k > 0:
        k //= 2
        v += 1
    return v


def max_levels(shape) -> int:
    """Deepest decomposition for which every level has even side lengths."""
    return min(_two_adic(shape[-2]), _two_adic(shape[-1]))


class WaveletTransform:
    """Multi-level separable D4 transform; ``levels=None`` means as deep as possible."""

    def __init__(self, levels: Optional[int] = None):
        self.levels = levels

    def _levels_for(self, shape) -> int:
        deepest = max_levels(shape)
        levels = deepest if self.levels is None else self.levels
        if levels < 0 or levels > deepest:
            raise DimensionError(
                f"frame size {tuple(shape[-2:])} does not support {levels} dyadic levels "
                f"(at most {deepest})")
        return levels

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=np.float64, copy=True)
        r, c = out.shape[-2:]
        for _ in range(self._levels_for(out.shape)):
            block = out[..., :r, :c]
            block = _analysis_last(block)
            block = np.swapaxes(_analysis_last(np.swapaxes(block, -1, -2)), -1, -2)
            out[..., :r, :c] = block
            r, c = r // 2, c // 2
        return out

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.array(coeffs, dtype=np.float64, copy=True)
        levels = self._levels_for(out.shape)
        sizes = [(out.shape[-2] >> j, out.shape[-1] >> j) for j in range(levels)]
        for r, c in reversed(sizes):
            block = out[..., :r, :c]
            block = np.swapaxes(_synthesis_last(np.swapaxes(block, -1, -2)), -1, -2)
            out[..., :r, :c] = _synthesis_last(block)
        return out

    # W is orthonormal, so its adjoint is its inverse
    adjoint = inverse


def wavelet_forward(frame: np.ndarray, levels: Optional[int] = None) -> np.ndarray:
    return WaveletTransform(levels).forward(frame)


def wavelet_inverse(coeffs: np.ndarray, levels: Optional[int] = None) -> np.ndarray:
    return WaveletTransform(levels).inverse(coeffs)
