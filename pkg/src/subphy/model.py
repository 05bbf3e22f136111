"""Core data types for phylogeny-constrained subclone genotype models.

A tumor is modeled as a mixture of K subclones related by a rooted tree
whose root (subclone 1) is the normal cell population.  Point mutations
and copy-number events are recorded compactly by *origin*: the subclone
where the event arose plus its copy change.  Every event is inherited by
all descendants of its origin, so full per-subclone genotype matrices
can be expanded on demand from the origin representation.

All types are plain values (dataclasses over numpy arrays); nothing here
mutates its inputs, so instances are safe to copy between workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAX_ENUM_SUBCLONES",
    "Tree",
    "TreeError",
    "validate_tree",
    "descendants",
    "enumerate_trees",
    "descendant_matrix",
    "SnvOrigin",
    "CnvOrigin",
    "SegmentMap",
    "Hyperparams",
    "ReadData",
    "ChainState",
    "expand_genotypes",
    "genotypes_within_bounds",
    "fractions",
]

# Enumeration of all trees on K nodes yields (K-1)! parent vectors; above
# this cap the list (and the slice sampler that draws from it) explodes.
MAX_ENUM_SUBCLONES = 9

# Parent vector in canonical form: entry i is the parent label of subclone
# i+1, with subclone labels 1..K, the root (normal cells) first and every
# parent label strictly smaller than its child's.
Tree = tuple


class TreeError(ValueError):
    """Raised for parent vectors that do not encode a canonical tree."""


def validate_tree(parent) -> Tree:
    """Check a parent vector and return it as a canonical tree tuple.

    Canonical form requires the first entry to be 0 (the root, always the
    normal subclone) and the parent of subclone k to lie in {1, ..., k-1}.
    Any vector satisfying these range constraints is automatically a single
    rooted tree, so no separate cycle check is needed.
    """
    tree = tuple(int(p) for p in parent)
    if len(tree) < 1:
        raise TreeError("parent vector must have at least one entry")
    if tree[0] != 0:
        raise TreeError(f"root parent must be 0, got {tree[0]}")
    for k, p in enumerate(tree[1:], start=2):
        if not 1 <= p <= k - 1:
            raise TreeError(f"parent of subclone {k} is {p}, must be in 1..{k - 1}")
    return tree


def descendants(tree: Tree, k: int) -> set:
    """Subclone k together with every subclone in the subtree below it."""
    n = len(tree)
    if not 1 <= k <= n:
        raise TreeError(f"subclone index {k} out of range 1..{n}")
    out = {k}
    # children always carry larger labels than their parent in canonical form
    for m in range(k + 1, n + 1):
        if tree[m - 1] in out:
            out.add(m)
    return out


def enumerate_trees(n_subclones: int) -> list:
    """All canonical parent vectors on n_subclones nodes, (n-1)! of them."""
    if not 1 <= n_subclones <= MAX_ENUM_SUBCLONES:
        raise TreeError(
            f"can enumerate trees for 1..{MAX_ENUM_SUBCLONES} subclones, got {n_subclones}"
        )
    if n_subclones == 1:
        return [(0,)]
    choices = [range(1, k) for k in range(2, n_subclones + 1)]
    return [(0, *rest) for rest in itertools.product(*choices)]


def descendant_matrix(tree: Tree) -> np.ndarray:
    """Boolean K x K matrix whose entry [k-1, m-1] marks m as descendant of k."""
    n = len(tree)
    out = np.zeros((n, n), dtype=bool)
    for m in range(1, n + 1):
        a = m
        while a != 0:
            out[a - 1, m - 1] = True
            a = tree[a - 1]
    return out


@dataclass(frozen=True, eq=False)
class SnvOrigin:
    """Per-locus mutation origin: subclone where it arose and mutant copies gained.

    ``subclone`` entries are in 2..K (the normal subclone never mutates) and
    ``gain`` entries in 1..max_mutant_copies.
    """

    subclone: np.ndarray
    gain: np.ndarray

    @property
    def n_loci(self) -> int:
        return len(self.subclone)


@dataclass(frozen=True, eq=False)
class CnvOrigin:
    """Per-segment copy-number origin.

    ``subclone == 0 and change == 0`` encodes a copy-neutral segment.
    Otherwise ``subclone`` is in 2..K and ``change`` is the signed change to
    the two normal allele copies, in {-2, ..., max_total_copies - 2} \\ {0}
    (the lower bound keeps the normal copy count non-negative).
    """

    subclone: np.ndarray
    change: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.subclone)


@dataclass(eq=False)
class SegmentMap:
    """Maps each locus (in position order) to a genome segment id.

    Ids are 0-based, non-decreasing along the locus order, and each segment
    is one contiguous run of loci.
    """

    segment_of: np.ndarray

    def __post_init__(self):
        seg = np.asarray(self.segment_of, dtype=np.int64)
        if seg.ndim != 1 or seg.size < 1:
            raise ValueError("segment map must be a non-empty 1-d array")
        if seg[0] != 0 or np.any(np.diff(seg) < 0) or np.any(np.diff(seg) > 1):
            raise ValueError("segment ids must start at 0 and increase in steps of 0 or 1")
        self.segment_of = seg

    @property
    def n_loci(self) -> int:
        return len(self.segment_of)

    @property
    def n_segments(self) -> int:
        return int(self.segment_of[-1]) + 1

    def segments(self) -> list:
        """Index arrays of the loci in each segment."""
        return [np.flatnonzero(self.segment_of == s) for s in range(self.n_segments)]


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters.

    dirichlet_shape     shape of the per-entry Gamma(shape, 1) prior on the
                        subclone weights; equivalently the symmetric Dirichlet
                        parameter of the fraction columns.
    neutral_prior_a/b   Beta prior on the probability that a segment is
                        copy neutral.
    gain_decay          geometric decay of the prior on gaining c mutant
                        copies (probability proportional to gain_decay**c).
    max_mutant_copies   largest allowed mutant copy gain per locus.
    max_total_copies    cap on the total copy number of any locus in any
                        subclone; states breaching it have prior mass zero.
    """

    dirichlet_shape: float = 1.5
    neutral_prior_a: float = 10000.0
    neutral_prior_b: float = 1.0
    gain_decay: float = 0.01
    max_mutant_copies: int = 2
    max_total_copies: int = 4

    def __post_init__(self):
        if self.dirichlet_shape <= 0:
            raise ValueError("dirichlet_shape must be positive")
        if self.neutral_prior_a <= 0 or self.neutral_prior_b <= 0:
            raise ValueError("Beta prior parameters must be positive")
        if not 0 < self.gain_decay < 1:
            raise ValueError("gain_decay must lie in (0, 1)")
        if self.max_mutant_copies < 1:
            raise ValueError("max_mutant_copies must be >= 1")
        if self.max_total_copies < 2:
            raise ValueError("max_total_copies must be >= 2")


@dataclass(eq=False)
class ReadData:
    """Observed read counts for J loci in T samples.

    total, mutant       J x T integer matrices of total and mutant reads,
                        with 0 <= mutant <= total.
    coverage            length-T designed sequencing depths (reads per base
                        at copy number two).
    positions           length-J list of (chromosome, coordinate) pairs,
                        sorted by chromosome then coordinate.
    locus_ids           length-J list of opaque locus labels.
    """

    total: np.ndarray
    mutant: np.ndarray
    coverage: np.ndarray
    positions: list
    locus_ids: list

    @property
    def n_loci(self) -> int:
        return self.total.shape[0]

    @property
    def n_samples(self) -> int:
        return self.total.shape[1]

    def validate(self) -> "ReadData":
        d = np.asarray(self.total)
        x = np.asarray(self.mutant)
        if d.ndim != 2 or d.shape != x.shape:
            raise ValueError("total and mutant must be matrices of the same shape")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("need at least one locus and one sample")
        if np.any(d < 0) or np.any(x < 0) or np.any(x > d):
            raise ValueError("read counts must satisfy 0 <= mutant <= total")
        phi = np.asarray(self.coverage, dtype=float)
        if phi.shape != (d.shape[1],) or np.any(phi <= 0):
            raise ValueError("coverage must be a positive length-T vector")
        if len(self.positions) != d.shape[0] or len(self.locus_ids) != d.shape[0]:
            raise ValueError("positions and locus_ids must have one entry per locus")
        keys = [_position_key(p) for p in self.positions]
        if any(b < a for a, b in zip(keys, keys[1:])):
            raise ValueError("positions must be sorted by (chromosome, coordinate)")
        return self

    def take(self, index) -> "ReadData":
        """New ReadData restricted to the given locus indices (kept in order)."""
        idx = np.asarray(index, dtype=np.int64)
        return ReadData(
            total=self.total[idx],
            mutant=self.mutant[idx],
            coverage=self.coverage,
            positions=[self.positions[i] for i in idx],
            locus_ids=[self.locus_ids[i] for i in idx],
        )


def _position_key(pos):
    """Sort key for (chromosome, coordinate); numeric chromosomes sort first."""
    chrom, coord = pos
    text = str(chrom)
    stripped = text[3:] if text.lower().startswith("chr") else text
    if stripped.isdigit():
        return (0, int(stripped), "", int(coord))
    return (1, 0, text, int(coord))


@dataclass(frozen=True, eq=False)
class ChainState:
    """Full parameter tuple of one sampler chain.

    ``neg_loglik`` caches the negative log-likelihood of the read data under
    this state; it always equals a from-scratch recomputation.
    """

    weights: np.ndarray
    snv: SnvOrigin
    cnv: CnvOrigin
    tree: Tree
    neutral_prob: float
    neg_loglik: float

    @property
    def n_subclones(self) -> int:
        return self.weights.shape[0]

    @property
    def n_samples(self) -> int:
        return self.weights.shape[1]


def expand_genotypes(tree: Tree, snv: SnvOrigin, cnv: CnvOrigin, segmap: SegmentMap):
    """Expand origin records into per-subclone genotype matrices.

    Returns (mutant_copies, total_copies), both J x K integer matrices.  A
    locus carries its mutant gain in the origin subclone and all of that
    subclone's descendants; its normal copies start at two and shift by the
    segment's copy-number change on the CNV origin's descendant set.  Total
    copies are normal plus mutant.
    """
    desc = descendant_matrix(tree)
    z = snv.gain[:, None] * desc[snv.subclone - 1]

    n_seg = cnv.n_segments
    normal = np.full((n_seg, len(tree)), 2, dtype=np.int64)
    hit = cnv.subclone > 0
    if np.any(hit):
        normal[hit] += cnv.change[hit, None] * desc[cnv.subclone[hit] - 1]
    total = normal[segmap.segment_of] + z
    return z.astype(np.int64), total


def genotypes_within_bounds(total_copies: np.ndarray, max_total_copies: int) -> bool:
    """True when every per-subclone total copy number lies in [0, cap]."""
    return bool((total_copies >= 0).all() and (total_copies <= max_total_copies).all())


def fractions(weights: np.ndarray) -> np.ndarray:
    """Normalize positive subclone weights into per-sample fraction columns."""
    w = np.asarray(weights, dtype=float)
    return w / w.sum(axis=0, keepdims=True)
