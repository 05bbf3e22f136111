"""Locus quality control for real sequencing data.

Three filters applied in order: drop loci with low total reads in any
sample, drop loci whose mean observed allele frequency is too small to be a
credible shared mutation, then thin redundant loci by clustering the
frequency profiles and discarding a random half of every cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from .model import ReadData

__all__ = ["QcError", "QcReport", "quality_control"]


class QcError(ValueError):
    pass


@dataclass
class QcReport:
    n_input: int
    dropped_low_reads: list = field(default_factory=list)
    dropped_low_vaf: list = field(default_factory=list)
    dropped_redundant: list = field(default_factory=list)
    n_kept: int = 0

    def as_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_kept": self.n_kept,
            "dropped_low_reads": self.dropped_low_reads,
            "dropped_low_vaf": self.dropped_low_vaf,
            "dropped_redundant": self.dropped_redundant,
        }


def quality_control(data: ReadData, min_reads: int = 15, min_mean_vaf: float = 0.1,
                    n_clusters: int = 60, drop_fraction: float = 0.5,
                    seed: int = 0) -> tuple:
    """Filter loci and report what each rule removed.

    Rules: (1) drop loci with total reads <= min_reads in any sample;
    (2) drop loci with mean observed VAF <= min_mean_vaf; (3) k-means
    (Lloyd's, single seeded initialization) on the VAF row vectors with
    min(n_clusters, remaining) clusters, then drop floor(drop_fraction *
    size) uniformly chosen loci from each cluster.  Deterministic given the
    seed.
    """
    report = QcReport(n_input=data.n_loci)
    d = np.asarray(data.total, dtype=float)
    x = np.asarray(data.mutant, dtype=float)

    low = (d <= min_reads).any(axis=1)
    report.dropped_low_reads = [data.locus_ids[i] for i in np.flatnonzero(low)]
    keep = np.flatnonzero(~low)
    if keep.size == 0:
        raise QcError("every locus failed the read-depth rule; lower min_reads")

    vaf = np.zeros_like(d)
    np.divide(x, d, out=vaf, where=d > 0)
    mean_vaf = vaf[keep].mean(axis=1)
    shallow = mean_vaf <= min_mean_vaf
    report.dropped_low_vaf = [data.locus_ids[i] for i in keep[shallow]]
    keep = keep[~shallow]
    if keep.size == 0:
        raise QcError("every locus failed the VAF rule; lower min_mean_vaf")

    k = min(n_clusters, keep.size)
    labels = KMeans(n_clusters=k, n_init=1, max_iter=100, algorithm="lloyd",
                    random_state=seed).fit_predict(vaf[keep])
    rng = np.random.default_rng(seed)
    dropped = []
    for cluster in range(k):
        members = keep[labels == cluster]
        n_drop = int(np.floor(drop_fraction * len(members)))
        if n_drop:
            dropped.extend(rng.choice(members, size=n_drop, replace=False).tolist())
    drop_set = set(dropped)
    report.dropped_redundant = [data.locus_ids[i] for i in sorted(drop_set)]
    keep = np.array([i for i in keep if i not in drop_set], dtype=np.int64)
    if keep.size == 0:
        raise QcError("every locus was thinned away; lower drop_fraction")

    report.n_kept = int(keep.size)
    return data.take(keep), report
