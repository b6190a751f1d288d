"""Empirical checks of the restricted-isometry argument at toy scale.

The sensing matrix of one exposure block, ``A_k = [A_t]_{t in T_k}``, has
``nB`` columns. Its Gram matrix ``G = A_k^T A_k`` is assembled densely, its
entries are compared against Hoeffding bounds, and Gersgorin discs are
compared against exact restricted-isometry constants.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .masks import gen_family
from .operators import CakeOperator
from .video import SamplingGeometry

__all__ = [
    "MAX_DENSE", "MAX_SUPPORTS", "block_matrix", "gram_matrix", "GramStats",
    "diagonal_bound", "offdiagonal_bound", "concentration_report",
    "GersgorinResult", "gersgorin_eigen_bounds", "exact_rip_constant", "rip_chain",
]

MAX_DENSE = 4096
MAX_SUPPORTS = 100_000


def _circulant_rows(geometry: SamplingGeometry, phase) -> np.ndarray:
    # flat mask index of h[(r - q) mod n] for retained pixel r and column q
    g = geometry
    r1 = np.arange(phase[0], g.n1, g.d1)
    r2 = np.arange(phase[1], g.n2, g.d2)
    q1, q2 = np.divmod(np.arange(g.n), g.n2)
    i1 = (r1[:, None, None] - q1[None, None, :]) % g.n1
    i2 = (r2[None, :, None] - q2[None, None, :]) % g.n2
    return (i1 * g.n2 + i2).reshape(g.m, g.n)


def _check_size(geometry: SamplingGeometry):
    nb = geometry.n * geometry.B
    if nb > MAX_DENSE:
        raise ValueError(f"nB = {nb} exceeds the dense-assembly limit {MAX_DENSE}")


def block_matrix(operator: CakeOperator, block: int = 0) -> np.ndarray:
    """Dense ``m x nB`` sensing matrix of exposure block ``block``.

    Columns are ordered frame by frame, pixels row-major within a frame.
    """
    g = operator.geometry
    _check_size(g)
    if not 0 <= block < g.M:
        raise ValueError(f"block {block} outside 0..{g.M - 1}")
    frames = range(block * g.B, (block + 1) * g.B)
    if operator.downsampler == "subsample":
        idx = _circulant_rows(g, operator.phase)
        return np.hstack([operator.masks[t].ravel()[idx] for t in frames])
    cols = []
    probe = np.zeros(g.scene_shape)
    for t in frames:
        for q in range(g.n):
            probe.flat[t * g.n + q] = 1.0
            cols.append(operator.forward(probe)[block].ravel())
            probe.flat[t * g.n + q] = 0.0
    return np.column_stack(cols)


def gram_matrix(operator: CakeOperator, block: int = 0) -> np.ndarray:
    """``G = A_k^T A_k`` for one exposure block; symmetrised exactly."""
    a = block_matrix(operator, block)
    G = a.T @ a
    return 0.5 * (G + G.T)


def diagonal_bound(n: int, d: int, delta: float) -> float:
    """Hoeffding bound on ``P(|G_qq - 1| >= delta)``."""
    return min(1.0, 2.0 * np.exp(-2.0 * n * delta ** 2 / d))


def offdiagonal_bound(n: int, d: int, delta: float, s: int) -> float:
    """Bound on ``P(|G_pq| >= delta / s)`` for ``p != q``."""
    return min(1.0, 4.0 * np.exp(-n * delta ** 2 / (4.0 * d * s ** 2)))


OFFDIAG_CLASSES = ("aligned", "unaligned", "cross")


def _offdiag_classes(geometry: SamplingGeometry):
    """Upper-triangle indices of ``G`` and an index class for each.

    ``aligned``: same frame, ``p - q`` a multiple of the block size along both
    axes (the dependent case); ``unaligned``: same frame otherwise;
    ``cross``: different frames.
    """
    g = geometry
    nb = g.n * g.B
    iu, ju = np.triu_indices(nb, k=1)
    ti, pi = np.divmod(iu, g.n)
    tj, pj = np.divmod(ju, g.n)
    p1, p2 = np.divmod(pi, g.n2)
    q1, q2 = np.divmod(pj, g.n2)
    same = ti == tj
    aligned = same & ((p1 - q1) % g.d1 == 0) & ((p2 - q2) % g.d2 == 0)
    cls = np.where(aligned, 0, np.where(same, 1, 2))
    return iu, ju, cls


@dataclass
class GramStats:
    """Gram-entry statistics over repeated mask draws.

    ``diag_dev`` keeps every ``|G_qq - 1|`` (shape ``(trials, nB)``).
    Off-diagonal magnitudes are summarised by per-trial maxima and integer
    exceedance counts per index class; ``offdiag`` holds the raw magnitudes
    only when requested.
    """

    geometry: SamplingGeometry
    family: str
    trials: int
    s: int
    delta_d: float
    delta_o: Tuple[float, ...]
    diag_dev: np.ndarray
    diag_max: np.ndarray
    offdiag_max: np.ndarray
    offdiag_count: int
    class_sizes: Dict[str, int]
    diag_exceed: int = 0
    offdiag_exceed: Dict[float, Dict[str, int]] = field(default_factory=dict)
    offdiag: Optional[np.ndarray] = None

    @property
    def diag_rate(self) -> float:
        return self.diag_exceed / float(self.diag_dev.size)

    def offdiag_rate(self, delta: Optional[float] = None, cls: Optional[str] = None) -> float:
        """Per-entry frequency of ``|G_pq| >= delta / s`` (first threshold by default)."""
        counts = self.offdiag_exceed[self.delta_o[0] if delta is None else delta]
        if cls is None:
            return sum(counts.values()) / float(self.trials * self.offdiag_count)
        size = self.class_sizes[cls]
        return counts[cls] / float(self.trials * size) if size else 0.0

    @property
    def diag_bound(self) -> float:
        return diagonal_bound(self.geometry.n, self.geometry.d, self.delta_d)

    def offdiag_bound(self, delta: Optional[float] = None) -> float:
        delta = self.delta_o[0] if delta is None else delta
        return offdiagonal_bound(self.geometry.n, self.geometry.d, delta, self.s)

    def to_text(self, per_trial: bool = False) -> str:
        g = self.geometry
        lines = [
            f"family={self.family}",
            f"n={g.n} d={g.d} B={g.B} nB={g.n * g.B}",
            f"trials={self.trials}",
            f"s={self.s}",
            f"delta_d={self.delta_d:.6g}",
            f"diag_exceed_rate={self.diag_rate:.6g}",
            f"diag_bound={self.diag_bound:.6g}",
        ]
        for delta in self.delta_o:
            tag = f"{delta:g}"
            lines += [
                f"delta_o[{tag}].threshold={delta / self.s:.6g}",
                f"delta_o[{tag}].exceed_rate={self.offdiag_rate(delta):.6g}",
            ]
            for cls in OFFDIAG_CLASSES:
                lines.append(f"delta_o[{tag}].exceed_rate_{cls}={self.offdiag_rate(delta, cls):.6g}")
            lines.append(f"delta_o[{tag}].bound={self.offdiag_bound(delta):.6g}")
        lines += [
            f"max_diag_dev={float(self.diag_max.max()):.6g}",
            f"max_offdiag={float(self.offdiag_max.max()):.6g}",
        ]
        if per_trial:
            lines.append("trial max_diag_dev max_offdiag")
            for k in range(self.trials):
                lines.append(f"{k} {self.diag_max[k]:.6g} {self.offdiag_max[k]:.6g}")
        return "\n".join(lines) + "\n"


def concentration_report(geometry: SamplingGeometry, family: str = "rademacher",
                         trials: int = 1000, delta_d: float = 0.2,
                         delta_o: Union[float, Sequence[float]] = 0.2, s: int = 2, seed: int = 0,
                         alpha: float = 0.383, beta: float = 0.924,
                         keep_entries: bool = False) -> GramStats:
    """Monte-Carlo Gram statistics for one exposure block.

    Each trial draws a fresh mask sequence (seeded by ``[seed, trial]``),
    assembles ``G`` and counts entries at or above the diagonal threshold
    ``delta_d`` and each off-diagonal threshold ``delta_o / s`` (``delta_o``
    may be a single value or a grid).
    """
    deltas = tuple(float(v) for v in np.atleast_1d(delta_o))
    if trials < 100:
        raise ValueError("concentration statistics need at least 100 trials")
    g = SamplingGeometry(geometry.n1, geometry.n2, geometry.B, geometry.d1, geometry.d2,
                         geometry.B)
    _check_size(g)
    nb = g.n * g.B
    iu, ju, cls = _offdiag_classes(g)
    sizes = {name: int(np.count_nonzero(cls == k)) for k, name in enumerate(OFFDIAG_CLASSES)}
    diag_dev = np.empty((trials, nb))
    off_max = np.empty(trials)
    exceed = {delta: {name: 0 for name in OFFDIAG_CLASSES} for delta in deltas}
    kept = np.empty((trials, iu.size), dtype=np.float32) if keep_entries else None
    idx = None
    for k in range(trials):
        masks = gen_family(g, family, [seed, k], alpha, beta)
        op = CakeOperator(g, masks)
        if idx is None:
            idx = _circulant_rows(g, op.phase)
        a = np.hstack([op.masks[t].ravel()[idx] for t in range(g.B)])
        G = a.T @ a
        diag_dev[k] = np.abs(np.diag(G) - 1.0)
        off = np.abs(G[iu, ju])
        off_max[k] = off.max() if off.size else 0.0
        for delta in deltas:
            hits = off >= delta / s
            for c, name in enumerate(OFFDIAG_CLASSES):
                exceed[delta][name] += int(np.count_nonzero(hits & (cls == c)))
        if kept is not None:
            kept[k] = off
    return GramStats(geometry=g, family=family, trials=trials, s=s, delta_d=delta_d,
                     delta_o=deltas, diag_dev=diag_dev, diag_max=diag_dev.max(axis=1),
                     offdiag_max=off_max, offdiag_count=int(iu.size), class_sizes=sizes,
                     diag_exceed=int(np.count_nonzero(diag_dev >= delta_d)),
                     offdiag_exceed=exceed, offdiag=kept)


def _supports(count: int, s: int, sample: Optional[int], seed) -> np.ndarray:
    total = comb(count, s)
    if sample is None:
        return np.array(list(itertools.combinations(range(count), s)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    rows = [np.sort(rng.choice(count, size=s, replace=False)) for _ in range(min(sample, total))]
    return np.array(rows, dtype=np.int64).reshape(-1, s)


@dataclass
class GersgorinResult:
    """Disc bounds over a family of size-``s`` supports."""

    s: int
    lower: float
    upper: float
    delta: float
    supports: int
    exhaustive: bool
    per_support: np.ndarray

    def to_text(self) -> str:
        return (f"s={self.s}\nsupports={self.supports}\nexhaustive={int(self.exhaustive)}\n"
                f"eig_lower_bound={self.lower:.6g}\neig_upper_bound={self.upper:.6g}\n"
                f"delta_bound={self.delta:.6g}\n")


def _submatrices(G: np.ndarray, supports: np.ndarray, chunk: int = 20000):
    for start in range(0, supports.shape[0], chunk):
        sup = supports[start:start + chunk]
        yield G[sup[:, :, None], sup[:, None, :]]


def gersgorin_eigen_bounds(G: np.ndarray, s: int, sample: Optional[int] = None,
                           seed=0) -> GersgorinResult:
    """Gersgorin localisation of the eigenvalues of every ``s x s`` principal submatrix.

    All supports are visited when there are at most ``MAX_SUPPORTS`` of them;
    otherwise ``sample`` (default ``MAX_SUPPORTS``) supports are drawn at random.
    ``per_support`` holds each support's bound on ``max |lambda - 1|``.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {G.shape}")
    if not 1 <= s <= G.shape[0]:
        raise ValueError(f"support size {s} outside 1..{G.shape[0]}")
    exhaustive = comb(G.shape[0], s) <= MAX_SUPPORTS and sample is None
    supports = _supports(G.shape[0], s, None if exhaustive else (sample or MAX_SUPPORTS), seed)
    lo, hi, per = np.inf, -np.inf, []
    for sub in _submatrices(G, supports):
        diag = np.diagonal(sub, axis1=1, axis2=2)
        radius = np.abs(sub).sum(axis=2) - np.abs(diag)
        low = (diag - radius).min(axis=1)
        high = (diag + radius).max(axis=1)
        lo, hi = min(lo, float(low.min())), max(hi, float(high.max()))
        per.append(np.maximum(np.abs(high - 1.0), np.abs(1.0 - low)))
    per = np.concatenate(per)
    return GersgorinResult(s=s, lower=lo, upper=hi, delta=float(per.max()),
                           supports=int(supports.shape[0]), exhaustive=exhaustive,
                           per_support=per)


def exact_rip_constant(matrix, s: int, sample: Optional[int] = None, seed=0,
                       gram: bool = False, return_all: bool = False):
    """``delta_s = max_S max(|sigma_max^2 - 1|, |1 - sigma_min^2|)`` over supports.

    ``matrix`` is a dense sensing matrix (or its Gram matrix with
    ``gram=True``, or a :class:`CakeOperator`, in which case block 0 is
    used). Supports are enumerated exhaustively unless ``sample`` is given;
    more than ``MAX_SUPPORTS`` supports without sampling is refused.
    """
    if isinstance(matrix, CakeOperator):
        G = gram_matrix(matrix)
    else:
        arr = np.asarray(matrix, dtype=np.float64)
        G = arr if gram else arr.T @ arr
    ncols = G.shape[0]
    if not 1 <= s <= ncols:
        raise ValueError(f"support size {s} outside 1..{ncols}")
    if sample is None and comb(ncols, s) > MAX_SUPPORTS:
        raise ValueError(f"{comb(ncols, s)} supports exceed {MAX_SUPPORTS}; pass sample=")
    supports = _supports(ncols, s, sample, seed)
    per = []
    for sub in _submatrices(G, supports):
        eig = np.linalg.eigvalsh(sub)
        per.append(np.maximum(np.abs(eig[:, -1] - 1.0), np.abs(1.0 - eig[:, 0])))
    per = np.concatenate(per)
    return (float(per.max()), per) if return_all else float(per.max())


def rip_chain(operator: CakeOperator, s: int, sample: Optional[int] = None, seed=0):
    """``(exact delta_s, Gersgorin bound)`` on the same supports of block 0."""
    G = gram_matrix(operator)
    exhaustive = sample is None and comb(G.shape[0], s) <= MAX_SUPPORTS
    n_sample = None if exhaustive else (sample or MAX_SUPPORTS)
    exact = exact_rip_constant(G, s, sample=n_sample, seed=seed, gram=True)
    bound = gersgorin_eigen_bounds(G, s, sample=n_sample, seed=seed)
    return exact, bound.delta

