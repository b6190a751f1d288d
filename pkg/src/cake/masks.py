"""Coded-aperture mask sequences: Rademacher, phase-shift and dual-scale.

All families are normalised so that every mask has squared norm ``n/m = d``.
Phase spectra use the unitary DFT, ``np.fft.*(..., norm="ortho")``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import BlockParityError, FormatError, UnsupportedMaskError
from .video import SamplingGeometry, pack_header, unpack_header

__all__ = [
    "MaskSequence", "random_phase_spectrum", "gen_phase_shift", "gen_rademacher",
    "gen_phase_shift_sequence", "gen_dsm", "normalize_weights", "AffineRemap",
    "to_physical", "from_physical", "read_masks", "write_masks", "gen_family",
]

FAMILIES = ("rademacher", "phase_shift", "dsm")


@dataclass(frozen=True)
class MaskSequence:
    """Per-frame masks ``h_t`` plus whatever generated them.

    For ``dsm`` sequences ``spectra`` holds the ``M`` low-resolution phase
    sequences (shape ``(M, m1, m2)``) and ``lowres``/``highres`` the two
    components. For ``phase_shift`` sequences ``spectra`` holds one unit
    spectrum per frame (shape ``(N, n1, n2)``).
    """

    geometry: SamplingGeometry
    masks: np.ndarray
    family: str
    seed: int
    alpha: float = 1.0
    beta: float = 0.0
    spectra: Optional[np.ndarray] = None
    lowres: Optional[np.ndarray] = None
    highres: Optional[np.ndarray] = None
    lowres_scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mask family {self.family!r}")
        if self.masks.shape != self.geometry.scene_shape:
            raise ValueError(f"masks shape {self.masks.shape} != {self.geometry.scene_shape}")
        for name in ("masks", "spectra", "lowres", "highres"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    def __len__(self):
        return self.masks.shape[0]

    def __getitem__(self, t):
        return self.masks[t]


def random_phase_spectrum(shape: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus conjugate-symmetric 2-D spectrum.

    Bins that are their own conjugate partner (DC, and Nyquist rows/columns
    for even sizes) get a random sign; every other conjugate pair shares one
    uniform random phase.
    """
    p1, p2 = shape
    a = np.arange(p1)[:, None]
    b = np.arange(p2)[None, :]
    lin = a * p2 + b
    partner = ((-a) % p1) * p2 + ((-b) % p2)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    signs = rng.integers(0, 2, size=shape) * np.pi
    flat_phi = phi.ravel()
    phase = np.where(lin < partner, phi, -flat_phi[partner])
    phase = np.where(lin == partner, signs, phase)
    return np.exp(1j * phase)


def gen_phase_shift(size: Tuple[int, int], seed=None) -> Tuple[np.ndarray, np.ndarray]:
    """Real kernel ``h = F^{-1} sigma`` with a flat unitary spectrum.

    Returns ``(h, sigma)``. ``|fft2(h, norm="ortho")| == 1`` in every bin
    and ``||h||^2`` equals the number of pixels.
    """
    rng = np.random.default_rng(seed)
    sigma = random_phase_spectrum(size, rng)
    h = np.fft.ifft2(sigma, norm="ortho")
    return h.real.copy(), sigma


def gen_rademacher(geometry: SamplingGeometry, seed=None) -> MaskSequence:
    """iid masks with entries ``+-sqrt(d/n)``."""
    rng = np.random.default_rng(seed)
    amp = np.sqrt(geometry.d / geometry.n)
    signs = rng.integers(0, 2, size=geometry.scene_shape) * 2 - 1
    return MaskSequence(geometry, amp * signs.astype(np.float64), "rademacher", _seed_int(seed))


def gen_phase_shift_sequence(geometry: SamplingGeometry, seed=None) -> MaskSequence:
    """Independent phase-shift masks scaled to ``||h_t||^2 = n/m``."""
    rng = np.random.default_rng(seed)
    shape = (geometry.n1, geometry.n2)
    scale = 1.0 / np.sqrt(geometry.m)
    spectra = np.empty(geometry.scene_shape, dtype=complex)
    masks = np.empty(geometry.scene_shape)
    for t in range(geometry.N):
        spectra[t] = random_phase_spectrum(shape, rng)
        masks[t] = scale * np.fft.ifft2(spectra[t], norm="ortho").real
    return MaskSequence(geometry, masks, "phase_shift", _seed_int(seed),
                        spectra=spectra, lowres_scale=scale)


def normalize_weights(alpha: float, beta: float, tol: float = 1e-3) -> Tuple[float, float]:
    """Project ``(alpha, beta)`` onto the unit circle if it is within ``tol``."""
    r2 = alpha * alpha + beta * beta
    if abs(r2 - 1.0) > tol:
        raise ValueError(f"alpha^2 + beta^2 = {r2:.6g} is not within {tol} of 1")
    r = np.sqrt(r2)
    return alpha / r, beta / r


def upsample_blocks(image: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Replicate each pixel over a ``d1 x d2`` block (``D^T``)."""
    return np.repeat(np.repeat(image, d1, axis=-2), d2, axis=-1)


def _zero_sum_blocks(geometry: SamplingGeometry, rng: np.random.Generator) -> np.ndarray:
    g = geometry
    amp = np.sqrt(g.d / g.n)
    base = np.concatenate([np.ones(g.d // 2), -np.ones(g.d // 2)])
    signs = rng.permuted(np.tile(base, (g.m1 * g.m2, 1)), axis=1)
    blocks = signs.reshape(g.m1, g.m2, g.d1, g.d2).transpose(0, 2, 1, 3)
    return amp * blocks.reshape(g.n1, g.n2)


def gen_dsm(geometry: SamplingGeometry, alpha: float, beta: float, seed=None) -> MaskSequence:
    """Dual-scale masks ``h_t = alpha * h_k^L + beta * h_t^H``.

    ``h_k^L`` is a block-replicated phase-shift kernel at detector resolution,
    shared by the ``B`` frames of exposure block ``k``. ``h_t^H`` holds
    ``+-sqrt(d/n)`` values with exactly half of each ``d1 x d2`` block
    positive, so block sums of ``h_t^H`` vanish.
    """
    g = geometry
    if g.d % 2:
        raise BlockParityError(f"d = {g.d} is odd; blocks cannot be split in half")
    alpha, beta = normalize_weights(alpha, beta)
    rng = np.random.default_rng(seed)

    # unitary inverse DFT gives ||F^-1 sigma||^2 = m; Dᵀ multiplies that by d,
    # so 1/sqrt(m) brings ||h^L||^2 to d = n/m
    scale = 1.0 / np.sqrt(g.m)
    spectra = np.empty((g.M, g.m1, g.m2), dtype=complex)
    lowres = np.empty((g.M, g.n1, g.n2))
    for k in range(g.M):
        spectra[k] = random_phase_spectrum((g.m1, g.m2), rng)
        small = scale * np.fft.ifft2(spectra[k], norm="ortho").real
        lowres[k] = upsample_blocks(small, g.d1, g.d2)

    highres = np.empty(g.scene_shape)
    for t in range(g.N):
        highres[t] = _zero_sum_blocks(g, rng)

    block = np.arange(g.N) // g.B
    masks = alpha * lowres[block] + beta * highres
    return MaskSequence(g, masks, "dsm", _seed_int(seed), alpha=alpha, beta=beta,
                        spectra=spectra, lowres=lowres, highres=highres, lowres_scale=scale)


def gen_family(geometry: SamplingGeometry, family: str, seed=None,
               alpha: float = 0.383, beta: float = 0.924) -> MaskSequence:
    """Dispatch to the generator of ``family``; ``alpha``/``beta`` only matter for DSM."""
    if family == "rademacher":
        return gen_rademacher(geometry, seed)
    if family == "phase_shift":
        return gen_phase_shift_sequence(geometry, seed)
    if family == "dsm":
        return gen_dsm(geometry, alpha, beta, seed)
    raise ValueError(f"unknown mask family {family!r}")


@dataclass(frozen=True)
class AffineRemap:
    """``physical = (signed + offset) * gain``; invertible."""

    offset: float
    gain: float

    def forward(self, x):
        return (x + self.offset) * self.gain

    def inverse(self, p):
        return p / self.gain - self.offset


def to_physical(mask: np.ndarray, geometry: SamplingGeometry) -> Tuple[np.ndarray, AffineRemap]:
    """Map a binary ``+-sqrt(d/n)`` mask onto ``[0, 1/n]``.

    Returns the non-negative mask and the affine map that produced it, so a
    reconstruction can undo the mean shift.
    """
    amp = np.sqrt(geometry.d / geometry.n)
    mask = np.asarray(mask, dtype=float)
    if not np.all(np.isclose(np.abs(mask), amp, rtol=0, atol=1e-12 * amp)):
        raise UnsupportedMaskError("to_physical needs a binary +-sqrt(d/n) mask")
    remap = AffineRemap(offset=amp, gain=1.0 / (2.0 * amp * geometry.n))
    return remap.forward(mask), remap


def from_physical(physical: np.ndarray, remap: AffineRemap) -> np.ndarray:
    return remap.inverse(np.asarray(physical, dtype=float))


def _seed_int(seed) -> int:
    return int(seed) if isinstance(seed, (int, np.integer)) else -1


# ---------------------------------------------------------------------------
# MSKS file format
#
# The 32-byte VCUB-style header (magic "MSKS", dtype, n1, n2, N, flags=0,
# B) is followed by a 48-byte extension:
#   family u32 | d1 u32 | d2 u32 | spectra count u32 | seed i64 |
#   alpha f64 | beta f64 | lowres_scale f64
# then the float64 masks, then (phase_shift / dsm) the spectra as
# interleaved real/imag float64.

MSKS_MAGIC = b"MSKS"
_EXT = struct.Struct("<IIIIqddd")


def write_masks(seq: MaskSequence, path) -> None:
    g = seq.geometry
    spectra = seq.spectra if seq.spectra is not None else np.zeros((0, 1, 1), complex)
    with open(path, "wb") as fh:
        fh.write(pack_header(MSKS_MAGIC, np.float64, seq.masks.shape, 0, g.B))
        fh.write(_EXT.pack(FAMILIES.index(seq.family), g.d1, g.d2, spectra.shape[0],
                           seq.seed, seq.alpha, seq.beta, seq.lowres_scale))
        fh.write(np.ascontiguousarray(seq.masks, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(spectra, dtype="<c16").tobytes())


def read_masks(path) -> MaskSequence:
    raw = Path(path).read_bytes()
    dtype, shape, _, B = unpack_header(raw, MSKS_MAGIC)
    pos = 32
    if len(raw) < pos + _EXT.size:
        raise FormatError("truncated mask header")
    fam, d1, d2, nspec, seed, alpha, beta, scale = _EXT.unpack_from(raw, pos)
    pos += _EXT.size
    if fam >= len(FAMILIES):
        raise FormatError(f"unknown family code {fam}")
    N, n1, n2 = shape
    geometry = SamplingGeometry(n1, n2, N, d1, d2, B)
    nmask = N * n1 * n2 * 8
    if len(raw) < pos + nmask:
        raise FormatError("truncated mask payload")
    masks = np.frombuffer(raw, dtype="<f8", count=N * n1 * n2, offset=pos).reshape(shape).copy()
    pos += nmask
    family = FAMILIES[fam]
    spectra = lowres = highres = None
    if nspec:
        sshape = (nspec, geometry.m1, geometry.m2) if family == "dsm" else (nspec, n1, n2)
        count = int(np.prod(sshape))
        if len(raw) < pos + 16 * count:
            raise FormatError("truncated spectra payload")
        spectra = np.frombuffer(raw, dtype="<c16", count=count, offset=pos).reshape(sshape).copy()
    if family == "dsm":
        lowres = np.stack([upsample_blocks(scale * np.fft.ifft2(s, norm="ortho").real, d1, d2)
                           for s in spectra])
        if beta != 0:
            highres = (masks - alpha * lowres[np.arange(N) // B]) / beta
        else:
            highres = np.zeros_like(masks)
    return MaskSequence(geometry, masks, family, seed, alpha=alpha, beta=beta,
                        spectra=spectra, lowres=lowres, highres=highres, lowres_scale=scale)
