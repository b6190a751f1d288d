"""Linear maps of the sensing model and the transforms the solvers use.

Everything is circular: convolution is realised with 2-D FFTs in double
precision, and finite differences wrap around the frame edges.
"""

from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator

from .errors import DimensionError
from .masks import MaskSequence, upsample_blocks
from .video import NoiseModel, SamplingGeometry, VideoCube, _as_array

__all__ = [
    "bccb_convolve", "bccb_correlate", "subsample", "subsample_adjoint",
    "integrate_downsample", "integrate_adjoint", "random_signs",
    "random_demod_downsample", "random_demod_adjoint", "CakeOperator",
    "cake_forward", "cake_adjoint", "delta_masks", "frames_to_diff",
    "diff_to_frames", "diff_to_frames_adjoint", "tv_gradient",
    "tv_gradient_adjoint", "tv_norm", "estimate_norm_squared",
]


def bccb_convolve(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Circular 2-D convolution ``frame * mask`` (works on stacks too)."""
    frame = np.asarray(frame, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if frame.shape[-2:] != mask.shape[-2:]:
        raise DimensionError(f"frame {frame.shape} and mask {mask.shape} differ in size")
    return np.fft.ifft2(np.fft.fft2(frame) * np.fft.fft2(mask)).real


def bccb_correlate(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`bccb_convolve` in its first argument."""
    frame = np.asarray(frame, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if frame.shape[-2:] != mask.shape[-2:]:
        raise DimensionError(f"frame {frame.shape} and mask {mask.shape} differ in size")
    return np.fft.ifft2(np.fft.fft2(frame) * np.conj(np.fft.fft2(mask))).real


def _check_block(shape, d1, d2):
    if shape[-2] % d1 or shape[-1] % d2:
        raise DimensionError(f"image {shape[-2:]} is not divisible into {d1}x{d2} blocks")


def subsample(image: np.ndarray, d1: int, d2: int, phase: Tuple[int, int] = (0, 0)) -> np.ndarray:
    """Keep pixel ``(l1*d1 + p1, l2*d2 + p2)`` of every ``d1 x d2`` block."""
    p1, p2 = phase
    if not (0 <= p1 < d1 and 0 <= p2 < d2):
        raise ValueError(f"phase {phase} outside a {d1}x{d2} block")
    image = np.asarray(image)
    _check_block(image.shape, d1, d2)
    return image[..., p1::d1, p2::d2]


def subsample_adjoint(image: np.ndarray, d1: int, d2: int, phase: Tuple[int, int] = (0, 0)) -> np.ndarray:
    p1, p2 = phase
    if not (0 <= p1 < d1 and 0 <= p2 < d2):
        raise ValueError(f"phase {phase} outside a {d1}x{d2} block")
    image = np.asarray(image, dtype=np.float64)
    out = np.zeros(image.shape[:-2] + (image.shape[-2] * d1, image.shape[-1] * d2))
    out[..., p1::d1, p2::d2] = image
    return out


def integrate_downsample(image: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Sum each ``d1 x d2`` block."""
    image = np.asarray(image, dtype=np.float64)
    _check_block(image.shape, d1, d2)
    lead = image.shape[:-2]
    m1, m2 = image.shape[-2] // d1, image.shape[-1] // d2
    return image.reshape(lead + (m1, d1, m2, d2)).sum(axis=(-3, -1))


def integrate_adjoint(image: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Replicate each value over its block."""
    return upsample_blocks(np.asarray(image, dtype=np.float64), d1, d2)


def random_signs(shape: Tuple[int, int], seed=None, binary: bool = False) -> np.ndarray:
    """Random ``{-1, +1}`` (or ``{0, 1}`` when ``binary``) demodulation pattern."""
    bits = np.random.default_rng(seed).integers(0, 2, size=shape).astype(np.float64)
    return bits if binary else 2.0 * bits - 1.0


def _check_signs(signs: np.ndarray, binary: bool):
    allowed = (0.0, 1.0) if binary else (-1.0, 1.0)
    if not np.all(np.isin(signs, allowed)):
        raise ValueError(f"sign sequence must take values in {allowed}")


def random_demod_downsample(image: np.ndarray, signs: np.ndarray, d1: int, d2: int,
                            binary: bool = False) -> np.ndarray:
    """``D diag(s)``: modulate by ``signs`` then integrate over blocks."""
    signs = np.asarray(signs, dtype=np.float64)
    _check_signs(signs, binary)
    return integrate_downsample(np.asarray(image, dtype=np.float64) * signs, d1, d2)


def random_demod_adjoint(image: np.ndarray, signs: np.ndarray, d1: int, d2: int) -> np.ndarray:
    return integrate_adjoint(image, d1, d2) * np.asarray(signs, dtype=np.float64)


def delta_masks(geometry: SamplingGeometry) -> np.ndarray:
    """Kronecker-delta masks; with ``d = 1`` this is the keyed-exposure system."""
    masks = np.zeros(geometry.scene_shape)
    masks[:, 0, 0] = 1.0
    return masks


class CakeOperator:
    """The CAKE sensing map ``y_k = sum_{t in T_k} down(f_t * h_t)``.

    Parameters
    ----------
    geometry : SamplingGeometry
    masks : MaskSequence or ndarray of shape ``(N, n1, n2)``
    downsampler : {"subsample", "integrate", "random_demod"}
    phase : (int, int), optional
        Retained pixel within each block for ``"subsample"``. Defaults to the
        last pixel ``(d1 - 1, d2 - 1)``, the choice under which the block
        replication of a detector-scale kernel commutes with subsampling.
    signs : ndarray, optional
        Demodulation pattern for ``"random_demod"``; drawn from ``sign_seed``
        when omitted.
    binary_signs : bool
        Use a ``{0, 1}`` pattern instead of ``{-1, +1}``.
    """

    DOWNSAMPLERS = ("subsample", "integrate", "random_demod")

    def __init__(self, geometry: SamplingGeometry, masks: Union[MaskSequence, np.ndarray],
                 downsampler: str = "subsample", phase: Optional[Tuple[int, int]] = None,
                 signs: Optional[np.ndarray] = None, sign_seed=None, binary_signs: bool = False):
        if downsampler not in self.DOWNSAMPLERS:
            raise ValueError(f"unknown downsampler {downsampler!r}")
        self.geometry = geometry
        self.mask_sequence = masks if isinstance(masks, MaskSequence) else None
        arr = masks.masks if isinstance(masks, MaskSequence) else np.asarray(masks, dtype=np.float64)
        if arr.shape != geometry.scene_shape:
            raise DimensionError(f"masks shape {arr.shape} != scene shape {geometry.scene_shape}")
        self.masks = arr
        self.downsampler = downsampler
        self.phase = (geometry.d1 - 1, geometry.d2 - 1) if phase is None else tuple(phase)
        if not (0 <= self.phase[0] < geometry.d1 and 0 <= self.phase[1] < geometry.d2):
            raise ValueError(f"phase {self.phase} outside a {geometry.d1}x{geometry.d2} block")
        self.binary_signs = binary_signs
        self.signs = None
        if downsampler == "random_demod":
            if signs is None:
                signs = random_signs((geometry.n1, geometry.n2), sign_seed, binary_signs)
            signs = np.asarray(signs, dtype=np.float64)
            _check_signs(signs, binary_signs)
            self.signs = signs
        self.transfer = np.fft.fft2(self.masks)
        self.transfer.flags.writeable = False
        self._rtransfer = sfft.rfft2(self.masks)
        self._rtransfer_conj = np.conj(self._rtransfer)

    @property
    def shape(self):
        g = self.geometry
        return (g.m * g.M, g.n * g.N)

    def _down(self, frames):
        g = self.geometry
        if self.downsampler == "subsample":
            return subsample(frames, g.d1, g.d2, self.phase)
        if self.downsampler == "integrate":
            return integrate_downsample(frames, g.d1, g.d2)
        return integrate_downsample(frames * self.signs, g.d1, g.d2)

    def _up(self, frames):
        g = self.geometry
        if self.downsampler == "subsample":
            return subsample_adjoint(frames, g.d1, g.d2, self.phase)
        if self.downsampler == "integrate":
            return integrate_adjoint(frames, g.d1, g.d2)
        return random_demod_adjoint(frames, self.signs, g.d1, g.d2)

    def forward(self, scene) -> np.ndarray:
        g = self.geometry
        f = np.asarray(_as_array(scene), dtype=np.float64)
        if f.shape != g.scene_shape:
            raise DimensionError(f"scene shape {f.shape} != {g.scene_shape}")
        # every downsampler is linear and frame-independent, so the exposure
        # sum can be taken on spectra: only M inverse transforms are needed
        spec = (sfft.rfft2(f) * self._rtransfer).reshape((g.M, g.B) + self._rtransfer.shape[1:])
        # fixed left-to-right reduction over the exposure block
        total = spec[:, 0].copy()
        for b in range(1, g.B):
            total += spec[:, b]
        return self._down(sfft.irfft2(total, s=(g.n1, g.n2)))

    def adjoint(self, measurement) -> np.ndarray:
        g = self.geometry
        y = np.asarray(_as_array(measurement), dtype=np.float64)
        if y.shape != g.measurement_shape:
            raise DimensionError(f"measurement shape {y.shape} != {g.measurement_shape}")
        spec = np.repeat(sfft.rfft2(self._up(y)), g.B, axis=0)
        return sfft.irfft2(spec * self._rtransfer_conj, s=(g.n1, g.n2))

    def as_linear_operator(self) -> LinearOperator:
        g = self.geometry
        return LinearOperator(
            self.shape, dtype=np.float64,
            matvec=lambda v: self.forward(v.reshape(g.scene_shape)).ravel(),
            rmatvec=lambda v: self.adjoint(v.reshape(g.measurement_shape)).ravel())

    def dense(self) -> np.ndarray:
        """Explicit matrix, one column per canonical basis vector (toy sizes only)."""
        g = self.geometry
        cols = g.n * g.N
        if cols > 1 << 14:
            raise DimensionError(f"refusing to assemble a dense matrix with {cols} columns")
        eye = np.eye(cols).reshape((cols,) + g.scene_shape)
        return np.stack([self.forward(e).ravel() for e in eye], axis=1)


def estimate_norm_squared(forward, adjoint, shape, iters: int = 50, seed: int = 0) -> float:
    """Power iteration on ``adjoint(forward(.))``; returns the largest eigenvalue estimate."""
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        z = adjoint(forward(x))
        lam = float(np.linalg.norm(z))
        if lam == 0:
            return 0.0
        x = z / lam
    return lam


def cake_forward(operator: CakeOperator, scene, noise: Optional[NoiseModel] = None) -> VideoCube:
    """Simulate CAKE measurements, adding noise after the exposure sum."""
    if isinstance(scene, VideoCube):
        scene.check_geometry(operator.geometry)
    y = operator.forward(scene)
    if noise is not None:
        y = noise.apply(y)
    return VideoCube(y, kind="measurement", frame_rate_ratio=operator.geometry.B)


def cake_adjoint(operator: CakeOperator, measurement) -> VideoCube:
    if isinstance(measurement, VideoCube):
        measurement.check_geometry(operator.geometry)
    return VideoCube(operator.adjoint(measurement), kind="scene",
                     frame_rate_ratio=operator.geometry.B)


# ---------------------------------------------------------------------------
# difference frames: theta_1 = f_1, theta_t = f_t - f_{t-1}


def frames_to_diff(f) -> np.ndarray:
    f = np.asarray(_as_array(f), dtype=np.float64)
    theta = np.empty_like(f)
    theta[0] = f[0]
    theta[1:] = f[1:] - f[:-1]
    return theta


def diff_to_frames(theta) -> np.ndarray:
    """Cumulative sum over time, i.e. ``(L kron I) theta``."""
    return np.cumsum(np.asarray(_as_array(theta), dtype=np.float64), axis=0)


def diff_to_frames_adjoint(f) -> np.ndarray:
    """``(L^T kron I) f``: reverse cumulative sum over time."""
    f = np.asarray(f, dtype=np.float64)
    return np.cumsum(f[::-1], axis=0)[::-1]


# ---------------------------------------------------------------------------
# total variation stencils


def tv_gradient(frame: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Circular forward differences ``(horizontal, vertical)``."""
    frame = np.asarray(frame, dtype=np.float64)
    return np.roll(frame, -1, axis=-1) - frame, np.roll(frame, -1, axis=-2) - frame


def tv_gradient_adjoint(gh: np.ndarray, gv: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`tv_gradient` (negative divergence)."""
    return (np.roll(gh, 1, axis=-1) - gh) + (np.roll(gv, 1, axis=-2) - gv)


def tv_norm(frame: np.ndarray) -> float:
    """Isotropic total variation."""
    gh, gv = tv_gradient(frame)
    return float(np.sqrt(gh * gh + gv * gv).sum())
