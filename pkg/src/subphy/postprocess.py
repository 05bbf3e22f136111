"""Point estimation with label alignment, plus the evaluation metrics.

Different samples of the chain can describe the same tree under permuted
subclone labels.  ``align_samples`` walks the sample sequence and, whenever
the tree changes, relabels the sample by the column permutation of its
mutation matrix closest to the previous sample, provided the permuted tree
is still canonical.  Point estimates then come from the majority tree's
samples alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .model import (
    ChainState,
    CnvOrigin,
    ReadData,
    SegmentMap,
    SnvOrigin,
    expand_genotypes,
    fractions,
    validate_tree,
)

__all__ = [
    "PointEstimate",
    "align_samples",
    "apply_permutation",
    "point_estimate",
    "relabel_tree",
    "match_truth_permutation",
    "estimate_matches_tree",
    "cellularity",
    "partition_labels",
    "rand_index",
    "cellularity_error",
    "vaf_fit_error",
    "FitError",
]


def apply_permutation(state: ChainState, order) -> ChainState:
    """Relabel subclones so that new label i takes old label order[i-1].

    ``order`` is a permutation of 1..K with order[0] == 1 (the normal
    subclone keeps its label).  Raises if the relabeled tree is not
    canonical.
    """
    n = state.n_subclones
    order = tuple(int(v) for v in order)
    if sorted(order) != list(range(1, n + 1)) or order[0] != 1:
        raise ValueError("order must permute 1..K and fix label 1")
    inverse = np.zeros(n + 1, dtype=np.int64)
    for new, old in enumerate(order, start=1):
        inverse[old] = new
    new_tree = validate_tree(relabel_tree(state.tree, order))
    idx = np.asarray(order) - 1
    return replace(
        state,
        tree=new_tree,
        weights=state.weights[idx],
        snv=SnvOrigin(subclone=inverse[state.snv.subclone],
                      gain=state.snv.gain.copy()),
        cnv=CnvOrigin(subclone=inverse[state.cnv.subclone],
                      change=state.cnv.change.copy()),
    )


def _permuted_tree_is_canonical(tree, order, inverse) -> bool:
    for new, old in enumerate(order, start=1):
        parent = tree[old - 1]
        new_parent = 0 if parent == 0 else int(inverse[parent])
        if new == 1:
            if new_parent != 0:
                return False
        elif not 1 <= new_parent <= new - 1:
            return False
    return True


def align_samples(samples, segmap: SegmentMap) -> list:
    """Relabel a sample sequence so equivalent trees share one representation.

    For each sample whose tree differs from its (aligned) predecessor's, all
    label permutations fixing the normal subclone are scored by the mean
    absolute difference between the permuted mutation matrix and the
    predecessor's; the best permutation is applied only when it yields a
    canonical tree, otherwise the sample is left as is.  Ties pick the
    lexicographically smallest permutation.
    """
    samples = list(samples)
    if not samples:
        return []
    n = samples[0].n_subclones
    orders = [(1, *rest) for rest in itertools.permutations(range(2, n + 1))]
    inverses = []
    for order in orders:
        inv = np.zeros(n + 1, dtype=np.int64)
        for new, old in enumerate(order, start=1):
            inv[old] = new
        inverses.append(inv)

    def mutant_matrix(state):
        z, _ = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
        return z

    aligned = [samples[0]]
    prev_tree = samples[0].tree
    prev_z = mutant_matrix(samples[0])
    for state in samples[1:]:
        if state.tree == prev_tree:
            aligned.append(state)
            prev_z = mutant_matrix(state)
            continue
        z = mutant_matrix(state)
        best_i = 0
        best_score = np.inf
        for i, order in enumerate(orders):
            score = float(np.abs(z[:, np.asarray(order) - 1] - prev_z).mean())
            if score < best_score:
                best_score = score
                best_i = i
        best_order = orders[best_i]
        if best_i != 0 and _permuted_tree_is_canonical(
            state.tree, best_order, inverses[best_i]
        ):
            state = apply_permutation(state, best_order)
            z = z[:, np.asarray(best_order) - 1]
        aligned.append(state)
        prev_tree = state.tree
        prev_z = z
    return aligned


@dataclass(eq=False)
class PointEstimate:
    """Majority-tree posterior point estimate."""

    tree: tuple
    mutant_copies: np.ndarray
    total_copies: np.ndarray
    fracs: np.ndarray
    tree_counts: dict
    multiple_trees: bool
    n_samples_used: int


def _round_half_down(values: np.ndarray) -> np.ndarray:
    """Round to the nearest integer, resolving exact halves downward."""
    return np.ceil(values - 0.5).astype(np.int64)


def point_estimate(samples, segmap: SegmentMap) -> PointEstimate:
    """Median genotypes and mean fractions over the majority tree's samples.

    Tree ties resolve to the tree encountered first.  Genotype medians round
    to the nearest integer with exact halves going down.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    counts = {}
    for state in samples:
        counts[state.tree] = counts.get(state.tree, 0) + 1
    majority = max(counts, key=lambda t: counts[t])
    chosen = [s for s in samples if s.tree == majority]
    zs, ls, fs = [], [], []
    for state in chosen:
        z, l = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
        zs.append(z)
        ls.append(l)
        fs.append(fractions(state.weights))
    return PointEstimate(
        tree=majority,
        mutant_copies=_round_half_down(np.median(np.stack(zs), axis=0)),
        total_copies=_round_half_down(np.median(np.stack(ls), axis=0)),
        fracs=np.mean(np.stack(fs), axis=0),
        tree_counts={tuple(int(v) for v in t): c for t, c in counts.items()},
        multiple_trees=len(counts) > 1,
        n_samples_used=len(chosen),
    )


def relabel_tree(tree, order) -> tuple:
    """Parent vector after renaming labels so new label i takes old order[i-1].

    The result is not necessarily canonical; callers compare or validate it.
    """
    n = len(tree)
    inverse = {0: 0}
    for new, old in enumerate(order, start=1):
        inverse[old] = new
    return tuple(inverse[tree[old - 1]] for old in order)


def match_truth_permutation(mutant_est: np.ndarray, mutant_truth: np.ndarray):
    """Label permutation making an estimated mutation matrix closest to a truth.

    Subclone identities are only defined by their genotype columns, so any
    comparison against ground truth must first bind labels by matching the
    columns.  Returns the order (fixing the normal label 1) minimizing the
    mean absolute difference; ties pick the lexicographically smallest.
    """
    if mutant_est.shape != mutant_truth.shape:
        raise ValueError("genotype matrices must have matching shapes")
    n = mutant_truth.shape[1]
    best_order = None
    best_score = np.inf
    for rest in itertools.permutations(range(2, n + 1)):
        order = (1, *rest)
        score = float(np.abs(mutant_est[:, np.asarray(order) - 1] -
                             mutant_truth).mean())
        if score < best_score:
            best_score = score
            best_order = order
    return best_order


def estimate_matches_tree(estimate: "PointEstimate", mutant_truth, tree_truth) -> bool:
    """Whether a point estimate recovers a ground-truth tree.

    True when relabeling by the genotype-matching permutation turns the
    estimated parent vector into the truth's.  A fit with a different
    subclone count can never match.
    """
    truth_tree = tuple(int(v) for v in tree_truth)
    if len(estimate.tree) != len(truth_tree) or \
            estimate.mutant_copies.shape != np.asarray(mutant_truth).shape:
        return False
    order = match_truth_permutation(estimate.mutant_copies, mutant_truth)
    return relabel_tree(estimate.tree, order) == truth_tree


def cellularity(mutant_copies: np.ndarray, fracs: np.ndarray) -> np.ndarray:
    """Fraction of cells carrying each mutation in each sample."""
    return (mutant_copies > 0) @ fracs


def partition_labels(mutant_copies: np.ndarray) -> np.ndarray:
    """Cluster loci by their subclone-presence pattern; returns group labels."""
    _, labels = np.unique(mutant_copies > 0, axis=0, return_inverse=True)
    return labels


def rand_index(labels_a, labels_b) -> float:
    """Fraction of locus pairs on which two partitions agree.

    Agreement means the pair is co-clustered in both partitions or separated
    in both.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("partitions must be equal-length label vectors")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(joint, (ai, bi), 1)

    def pairs(counts):
        return float((counts * (counts - 1) // 2).sum())

    all_pairs = n * (n - 1) / 2
    same_both = pairs(joint)
    same_a = pairs(joint.sum(axis=1))
    same_b = pairs(joint.sum(axis=0))
    diff_both = all_pairs - same_a - same_b + same_both
    return float((same_both + diff_both) / all_pairs)


def cellularity_error(true_cellularity, estimated_cellularity) -> float:
    """Mean absolute elementwise difference between cellularity matrices."""
    t = np.asarray(true_cellularity, dtype=float)
    e = np.asarray(estimated_cellularity, dtype=float)
    if t.shape != e.shape:
        raise ValueError("cellularity matrices must have the same shape")
    return float(np.abs(t - e).mean())


class FitError(NamedTuple):
    value: float
    defined: bool


def vaf_fit_error(mutant_copies, total_copies, fracs, data: ReadData) -> FitError:
    """Mean absolute difference between fitted and observed allele frequencies.

    Cells without reads have no observed frequency and are excluded; when
    every cell is excluded the result is flagged undefined.
    """
    d = np.asarray(data.total, dtype=float)
    x = np.asarray(data.mutant, dtype=float)
    mask = d > 0
    if not mask.any():
        return FitError(0.0, False)
    fitted = (mutant_copies @ fracs) / (total_copies @ fracs)
    observed = np.zeros_like(d)
    np.divide(x, d, out=observed, where=mask)
    return FitError(float(np.abs(fitted - observed)[mask].mean()), True)
