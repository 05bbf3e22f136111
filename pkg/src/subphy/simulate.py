"""Ground-truth scenario generation and synthetic read sampling.

Scenarios follow the block layout used throughout the evaluation studies:
mutations arrive in contiguous blocks assigned to the cancer subclones in
order, segments are fixed-length runs of loci, and a fraction of segments
carry single-copy gains or losses spread over the subclones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CnvOrigin,
    ReadData,
    SegmentMap,
    SnvOrigin,
    Tree,
    expand_genotypes,
    genotypes_within_bounds,
    validate_tree,
)

__all__ = ["Scenario", "build_scenario", "generate_reads"]


@dataclass(eq=False)
class Scenario:
    """Complete simulation ground truth."""

    tree: Tree
    snv: SnvOrigin
    cnv: CnvOrigin
    segmap: SegmentMap
    fracs: np.ndarray
    coverage: np.ndarray
    seed: int

    @property
    def n_loci(self) -> int:
        return self.snv.n_loci

    @property
    def n_samples(self) -> int:
        return self.fracs.shape[1]

    @property
    def n_subclones(self) -> int:
        return len(self.tree)

    def genotypes(self):
        return expand_genotypes(self.tree, self.snv, self.cnv, self.segmap)

    def cellularity(self) -> np.ndarray:
        mutant, _ = self.genotypes()
        return (mutant > 0) @ self.fracs


def _leaf_alternatives(tree: Tree):
    """(leaf, other-parent) pairs a rewire move could confuse the tree with."""
    n = len(tree)
    leaves = [k for k in range(2, n + 1) if k not in tree]
    pairs = []
    for k in leaves:
        for q in range(1, k):
            if q != tree[k - 1]:
                pairs.append((k, q))
    return pairs


def _draw_fractions(rng, tree, n_samples, shape, min_top_fraction,
                    require_identifiable, max_tries=100000):
    """Dirichlet fraction columns with rejection guards.

    Every subclone must exceed ``min_top_fraction`` somewhere, and (when
    required) every leaf must exceed each alternative parent's fraction in
    at least one sample, since a leaf whose fraction is dominated by a
    potential parent in all samples yields a likelihood-equivalent tree.
    """
    n = len(tree)
    alpha = np.full(n, shape)
    for _ in range(max_tries):
        cols = rng.dirichlet(alpha, size=n_samples).T
        if cols.max(axis=1).min() <= min_top_fraction:
            continue
        if require_identifiable:
            bad = any(
                not np.any(cols[k - 1] > cols[q - 1])
                for k, q in _leaf_alternatives(tree)
            )
            if bad:
                continue
        return cols
    raise RuntimeError("could not draw admissible subclone fractions; relax the guards")


def build_scenario(tree, depth, n_loci=200, n_samples=4, seed=0, *,
                   loci_per_segment=20, cnv_segment_fraction=0.25,
                   dirichlet_shape=1.5, min_top_fraction=0.05,
                   require_identifiable=True, max_total_copies=4) -> Scenario:
    """Build a ground-truth scenario on the given canonical tree.

    Mutation origins are dealt to subclones 2..K as contiguous blocks of
    loci with a single mutant copy each.  Loci group into fixed-length
    segments; a fraction of the segments receive copy-number events that
    alternate between one-copy gains and losses while cycling through the
    cancer subclones.  Fraction columns come from a symmetric Dirichlet
    with rejection guards (see ``_draw_fractions``).
    """
    tree = validate_tree(tree)
    n = len(tree)
    if n < 2:
        raise ValueError("scenarios need at least one cancer subclone")
    if depth <= 0:
        raise ValueError("sequencing depth must be positive")
    rng = np.random.default_rng(seed)

    blocks = np.array_split(np.arange(n_loci), n - 1)
    snv_subclone = np.empty(n_loci, dtype=np.int64)
    for b, idx in enumerate(blocks):
        snv_subclone[idx] = 2 + b
    snv = SnvOrigin(subclone=snv_subclone, gain=np.ones(n_loci, dtype=np.int64))

    segment_of = np.arange(n_loci) // loci_per_segment
    segmap = SegmentMap(segment_of=segment_of)
    n_seg = segmap.n_segments
    cnv_subclone = np.zeros(n_seg, dtype=np.int64)
    cnv_change = np.zeros(n_seg, dtype=np.int64)
    n_cnv = 0
    if cnv_segment_fraction > 0:
        n_cnv = max(1, round(cnv_segment_fraction * n_seg))
    hit = np.sort(rng.choice(n_seg, size=n_cnv, replace=False))
    for i, s in enumerate(hit):
        cnv_subclone[s] = 2 + (i % (n - 1))
        cnv_change[s] = 1 if i % 2 == 0 else -1
    cnv = CnvOrigin(subclone=cnv_subclone, change=cnv_change)

    fracs = _draw_fractions(rng, tree, n_samples, dirichlet_shape,
                            min_top_fraction, require_identifiable)
    coverage = np.full(n_samples, float(depth))
    scenario = Scenario(tree=tree, snv=snv, cnv=cnv, segmap=segmap,
                        fracs=fracs, coverage=coverage, seed=seed)
    _, total = scenario.genotypes()
    if not genotypes_within_bounds(total, max_total_copies):
        raise ValueError("scenario genotypes exceed the total copy cap")
    return scenario


def generate_reads(scenario: Scenario, rng) -> ReadData:
    """Sample read counts: Poisson totals at dose-scaled coverage, Binomial mutants."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mutant_copies, total_copies = scenario.genotypes()
    dose = total_copies @ scenario.fracs
    lam = scenario.coverage * dose / 2.0
    d = rng.poisson(lam)
    p = np.clip((mutant_copies @ scenario.fracs) / dose, 0.0, 1.0)
    x = rng.binomial(d, p)
    positions = [("1", 1000 * (j + 1)) for j in range(scenario.n_loci)]
    ids = [f"L{j + 1:04d}" for j in range(scenario.n_loci)]
    return ReadData(total=d.astype(np.int64), mutant=x.astype(np.int64),
                    coverage=scenario.coverage.copy(), positions=positions,
                    locus_ids=ids).validate()
