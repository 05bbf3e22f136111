"""Genome segmentation by penalized least squares, fitted jointly over samples.

The segmentation of n loci minimizes, over all ways of cutting the locus
order into contiguous segments,

    sum over samples and segments of the within-segment squared deviation
    from the segment mean, plus gamma * (number of segments).

Dynamic programming over break positions gives the exact global optimum in
O(n^2 * T) using prefix sums.  Segments never cross chromosome boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ReadData, SegmentMap

__all__ = ["SegSignal", "SegmentationError", "normalize_reads", "multipcf", "select_gamma",
           "default_gamma_candidates"]


class SegmentationError(ValueError):
    pass


@dataclass(eq=False)
class SegSignal:
    """Normalized copy-number signal: one row per locus, one column per sample.

    ``chromosome_starts`` lists the row index opening each chromosome; the
    first entry is always 0.
    """

    values: np.ndarray
    chromosome_starts: list

    def __post_init__(self):
        y = np.asarray(self.values, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise SegmentationError("signal must be a non-empty matrix")
        starts = list(self.chromosome_starts)
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise SegmentationError("chromosome starts must begin at 0 and strictly increase")
        if starts[-1] >= y.shape[0]:
            raise SegmentationError("chromosome start beyond the last locus")
        self.values = y
        self.chromosome_starts = starts

    @property
    def n_loci(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


def normalize_reads(reads: ReadData) -> SegSignal:
    """log2 of total reads over their per-sample median; copy-neutral loci sit near 0.

    Zero counts have no finite log ratio, so loci with zero reads must be
    filtered out (quality control does this) before segmentation.
    """
    d = np.asarray(reads.total, dtype=float)
    med = np.median(d, axis=0)
    if np.any(med <= 0):
        bad = list(np.flatnonzero(med <= 0))
        raise SegmentationError(f"sample(s) {bad} have zero median reads")
    if np.any(d <= 0):
        raise SegmentationError("zero read counts cannot be log-normalized; run QC first")
    values = np.log2(d / med)
    chroms = [p[0] for p in reads.positions]
    starts = [0] + [i for i in range(1, len(chroms)) if chroms[i] != chroms[i - 1]]
    return SegSignal(values=values, chromosome_starts=starts)


def _segment_block(y: np.ndarray, gamma: float):
    """Exact optimal breakpoints of one chromosome block.

    Returns the list of segment lengths.  Ties prefer fewer segments, then
    the earlier position of the final breakpoint.
    """
    n = y.shape[0]
    c1 = np.zeros((n + 1, y.shape[1]))
    c2 = np.zeros((n + 1, y.shape[1]))
    np.cumsum(y, axis=0, out=c1[1:])
    np.cumsum(y * y, axis=0, out=c2[1:])

    # best[m]: (loss, n_segments) of the optimal segmentation of y[:m]
    best = np.empty(n + 1)
    best_k = np.zeros(n + 1, dtype=np.int64)
    back = np.zeros(n + 1, dtype=np.int64)
    best[0] = 0.0
    for m in range(1, n + 1):
        lengths = m - np.arange(m)
        sse = ((c2[m] - c2[:m]) - (c1[m] - c1[:m]) ** 2 / lengths[:, None]).sum(axis=1)
        cand = best[:m] + sse + gamma
        cand_k = best_k[:m] + 1
        a = int(np.argmin(cand))
        # resolve near-ties exactly: fewer segments win, then earlier start
        ties = np.flatnonzero(cand == cand[a])
        if len(ties) > 1:
            a = int(ties[np.argmin(cand_k[ties])])
        best[m] = cand[a]
        best_k[m] = cand_k[a]
        back[m] = a

    cuts = []
    m = n
    while m > 0:
        cuts.append(m)
        m = int(back[m])
    cuts.reverse()
    lengths = np.diff([0] + cuts)
    return [int(v) for v in lengths], float(best[n])


def multipcf(signal: SegSignal, gamma: float) -> SegmentMap:
    """Exact minimizer of the penalized joint segmentation loss."""
    if gamma <= 0:
        raise SegmentationError("gamma must be positive")
    bounds = signal.chromosome_starts + [signal.n_loci]
    ids = np.empty(signal.n_loci, dtype=np.int64)
    next_id = 0
    for lo, hi in zip(bounds, bounds[1:]):
        lengths, _ = _segment_block(signal.values[lo:hi], gamma)
        pos = lo
        for length in lengths:
            ids[pos : pos + length] = next_id
            next_id += 1
            pos += length
    return SegmentMap(segment_of=ids)


def segmentation_loss(signal: SegSignal, segmap: SegmentMap, gamma: float) -> float:
    """Evaluate the penalized loss of an arbitrary segmentation."""
    total = 0.0
    for idx in segmap.segments():
        block = signal.values[idx]
        total += ((block - block.mean(axis=0)) ** 2).sum()
    return float(total + gamma * segmap.n_segments)


def residual_ss(signal: SegSignal, segmap: SegmentMap) -> float:
    return segmentation_loss(signal, segmap, 0.0)


def default_gamma_candidates(n_samples: int) -> list:
    """Penalty grid scaled by the sample count, which scales the residual mass."""
    return [float(g * n_samples) for g in (5, 10, 20, 40, 80)]


def _check_degenerate(fits) -> bool:
    """True when every candidate fits exactly; raises if their sizes disagree.

    With zero residual everywhere the BIC degenerates (log of zero), so no
    comparison is possible unless all candidates agree on the segment count.
    """
    if any(rss != 0.0 for rss, _ in fits):
        return False
    if len({n_seg for _, n_seg in fits}) > 1:
        raise SegmentationError(
            "degenerate fit: zero residual at every candidate penalty, BIC undefined"
        )
    return True


def select_gamma(signal: SegSignal, candidates) -> tuple:
    """Pick the penalty by BIC and return it with its segmentation.

    BIC charges each segment one mean parameter per sample plus one
    breakpoint: n*T*log(RSS/(n*T)) + |S|*(T+1)*log(n*T).  Ties go to the
    larger penalty.
    """
    cands = [float(g) for g in candidates]
    if not cands or any(g <= 0 for g in cands):
        raise SegmentationError("need a non-empty list of positive penalty candidates")
    n_obs = signal.n_loci * signal.n_samples
    rows = []
    for g in cands:
        segmap = multipcf(signal, g)
        rss = residual_ss(signal, segmap)
        rows.append((g, segmap, rss, segmap.n_segments))
    if _check_degenerate([(rss, n_seg) for _, _, rss, n_seg in rows]):
        g, segmap, _, _ = rows[-1]
        return g, segmap
    best = None
    for g, segmap, rss, n_seg in rows:
        bic = (
            n_obs * (np.log(rss / n_obs) if rss > 0 else -np.inf)
            + n_seg * (signal.n_samples + 1) * np.log(n_obs)
        )
        if best is None or bic < best[0] or (bic == best[0] and g > best[1]):
            best = (bic, g, segmap)
    return best[1], best[2]
