from dataclasses import replace

import numpy as np
import pytest

from subphy.likelihood import loglik_reads
from subphy.model import expand_genotypes, fractions
from subphy.postprocess import (
    PointEstimate,
    align_samples,
    apply_permutation,
    cellularity,
    cellularity_error,
    estimate_matches_tree,
    match_truth_permutation,
    partition_labels,
    point_estimate,
    rand_index,
    relabel_tree,
    vaf_fit_error,
)

from helpers import SMALL_HYPER, prior_state, small_dataset, toy_read_data
from test_model import figure_one_instance


class TestCellularity:
    def test_clonal_mutation_complements_normal(self):
        z = np.array([[0, 1, 1, 1]])
        f = np.array([[0.3], [0.3], [0.2], [0.2]])
        assert cellularity(z, f)[0, 0] == pytest.approx(0.7)

    def test_no_carriers(self):
        z = np.zeros((1, 3), dtype=int)
        f = np.full((3, 2), 1 / 3)
        assert np.all(cellularity(z, f) == 0.0)

    def test_canonical_late_locus(self):
        tree, snv, cnv, segmap = figure_one_instance()
        z, _ = expand_genotypes(tree, snv, cnv, segmap)
        f = np.full((4, 1), 0.25)
        assert cellularity(z, f)[2, 0] == pytest.approx(0.25)

    def test_bounded_by_cancer_mass(self):
        rng = np.random.default_rng(0)
        z = rng.integers(0, 2, size=(6, 4))
        z[:, 0] = 0
        w = rng.gamma(1.5, 1.0, size=(4, 3))
        f = fractions(w)
        c = cellularity(z, f)
        assert np.all(c <= 1 - f[0] + 1e-12)


class TestRandIndex:
    def test_identical_partitions(self):
        assert rand_index([0, 0, 1, 2], [5, 5, 7, 9]) == 1.0

    def test_crossing_pairs(self):
        assert rand_index([0, 0, 1], [0, 1, 1]) == pytest.approx(1.0 / 3.0)

    def test_singletons_vs_one_block(self):
        assert rand_index([0, 1, 2], [0, 0, 0]) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 3, size=20)
        b = rng.integers(0, 4, size=20)
        assert rand_index(a, b) == rand_index(b, a)

    def test_one_iff_identical(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 3, size=15)
        b = a.copy()
        b[4] = a[4] + 10  # move one item to its own group
        assert rand_index(a, a) == 1.0
        assert rand_index(a, b) < 1.0

    def test_too_few_items(self):
        with pytest.raises(ValueError):
            rand_index([0], [0])

    def test_partition_from_presence_patterns(self):
        z = np.array([[0, 1, 1], [0, 2, 1], [0, 0, 1], [0, 1, 0]])
        labels = partition_labels(z)
        # rows 0 and 1 share the presence pattern despite different copy counts
        assert labels[0] == labels[1]
        assert len({labels[0], labels[2], labels[3]}) == 3


class TestCellularityError:
    def test_exact_match(self):
        c = np.random.default_rng(0).random((4, 3))
        assert cellularity_error(c, c) == 0.0

    def test_uniform_offset(self):
        c = np.full((5, 2), 0.4)
        assert cellularity_error(c, c + 0.1) == pytest.approx(0.1)

    def test_hand_case(self):
        true = np.array([[0.5, 0.5], [0.5, 0.5]])
        est = true + np.array([[0.1, -0.2], [0.3, -0.4]])
        assert cellularity_error(true, est) == pytest.approx(0.25)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cellularity_error(np.zeros((2, 2)), np.zeros((3, 2)))


class TestVafFitError:
    def test_perfect_fit(self):
        z = np.array([[0, 1]])
        l = np.array([[2, 2]])
        f = np.array([[0.5], [0.5]])
        # fitted VAF 0.25; observed 5 of 20
        data = toy_read_data([[20]], [[5]], [30.0])
        err = vaf_fit_error(z, l, f, data)
        assert err.defined
        assert err.value == 0.0

    def test_flat_zero_prediction(self):
        z = np.zeros((2, 2), dtype=int)
        l = np.full((2, 2), 2)
        f = np.array([[0.5], [0.5]])
        data = toy_read_data([[10], [30]], [[5], [15]], [30.0])
        err = vaf_fit_error(z, l, f, data)
        assert err.value == pytest.approx(0.5)

    def test_hand_case_and_exclusion(self):
        z = np.array([[0, 2], [0, 1], [0, 0]])
        l = np.array([[2, 2], [2, 2], [2, 2]])
        f = np.array([[0.5, 0.25], [0.5, 0.75]])
        data = toy_read_data(
            [[10, 0], [20, 10], [10, 5]],
            [[5, 0], [5, 1], [0, 0]],
            [30.0, 30.0],
        )
        fitted = (z @ f) / (l @ f)
        observed = np.array([[0.5, np.nan], [0.25, 0.1], [0.0, 0.0]])
        expected = np.nanmean(np.abs(fitted - observed))
        err = vaf_fit_error(z, l, f, data)
        assert err.defined
        assert err.value == pytest.approx(expected)

    def test_all_cells_excluded(self):
        z = np.array([[0, 1]])
        l = np.array([[2, 2]])
        f = np.array([[0.5], [0.5]])
        data = toy_read_data([[0]], [[0]], [30.0])
        assert not vaf_fit_error(z, l, f, data).defined


def leaf_swap_states():
    """Two states identical up to swapping the leaf labels 3 and 4.

    Under tree (0,1,1,2) the swap changes the parent vector to (0,1,2,1),
    so the realignment trigger fires and can recover the relabeling.
    """
    reads, segmap, _ = small_dataset(seed=21, n_loci=6, n_samples=2,
                                     tree=(0, 1, 1, 2))
    rng = np.random.default_rng(3)
    base = prior_state(rng, reads, segmap, SMALL_HYPER, 4)
    base = replace(base, tree=(0, 1, 1, 2))
    base = replace(base, neg_loglik=-loglik_reads(base, reads, segmap))
    swapped = apply_permutation(base, (1, 2, 4, 3))
    swapped = replace(swapped, neg_loglik=-loglik_reads(swapped, reads, segmap))
    return reads, segmap, base, swapped


class TestAlignment:
    def test_permutation_preserves_likelihood(self):
        reads, segmap, base, swapped = leaf_swap_states()
        assert swapped.neg_loglik == pytest.approx(base.neg_loglik, rel=1e-9)

    def test_leaf_swap_recovered(self):
        reads, segmap, base, swapped = leaf_swap_states()
        assert swapped.tree == (0, 1, 2, 1)
        aligned = align_samples([base, swapped], segmap)
        assert aligned[1].tree == base.tree
        z0, _ = expand_genotypes(base.tree, base.snv, base.cnv, segmap)
        z1, _ = expand_genotypes(aligned[1].tree, aligned[1].snv,
                                 aligned[1].cnv, segmap)
        assert np.array_equal(z0, z1)

    def test_sibling_swap_keeps_vector_and_skips(self):
        # sibling leaves share a parent, so swapping them leaves the parent
        # vector unchanged and the tree-differs trigger never fires
        reads, segmap, _ = small_dataset(seed=22, n_loci=6, n_samples=2,
                                         tree=(0, 1, 2, 2))
        rng = np.random.default_rng(4)
        base = prior_state(rng, reads, segmap, SMALL_HYPER, 4)
        base = replace(base, tree=(0, 1, 2, 2))
        swapped = apply_permutation(base, (1, 2, 4, 3))
        assert swapped.tree == base.tree
        aligned = align_samples([base, swapped], segmap)
        assert aligned[1] is swapped

    def test_already_aligned_untouched(self):
        reads, segmap, base, _ = leaf_swap_states()
        aligned = align_samples([base, base], segmap)
        assert aligned[1] is base

    def test_noncanonical_permutation_leaves_sample(self):
        # chain tree: relabeling inner nodes breaks the parent-smaller rule,
        # so a sample whose best permutation is non-canonical stays as is
        reads, segmap, _ = small_dataset(seed=4, n_loci=6, n_samples=2,
                                         tree=(0, 1, 2))
        rng = np.random.default_rng(8)
        first = prior_state(rng, reads, segmap, SMALL_HYPER, 3)
        first = replace(first, tree=(0, 1, 1))
        second = replace(first, tree=(0, 1, 2))
        aligned = align_samples([first, second], segmap)
        # whatever the score ranking, the output trees must stay canonical
        from subphy.model import validate_tree

        for state in aligned:
            validate_tree(state.tree)

    def test_alignment_never_changes_likelihood(self):
        reads, segmap, _ = small_dataset(seed=13, n_loci=8, n_samples=2,
                                         tree=(0, 1, 2, 2))
        rng = np.random.default_rng(5)
        states = []
        for _ in range(6):
            s = prior_state(rng, reads, segmap, SMALL_HYPER, 4)
            states.append(s)
        aligned = align_samples(states, segmap)
        for before, after in zip(states, aligned):
            assert loglik_reads(after, reads, segmap) == pytest.approx(
                loglik_reads(before, reads, segmap), rel=1e-9
            )


class TestTruthMatching:
    def test_relabel_tree_roundtrip(self):
        # (0,1,2,1,2) is (0,1,1,2,2) with truth labels (1,2,4,3,5)
        assert relabel_tree((0, 1, 2, 1, 2), (1, 2, 4, 3, 5)) == (0, 1, 1, 2, 2)

    def test_identity_when_already_matched(self):
        z = np.array([[0, 1, 0], [0, 0, 1]])
        assert match_truth_permutation(z, z) == (1, 2, 3)

    def test_column_swap_detected(self):
        truth = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 1]])
        swapped = truth[:, [0, 2, 1]]
        assert match_truth_permutation(swapped, truth) == (1, 3, 2)

    def test_relabeled_estimate_counts_as_recovered(self):
        # a sampler may express the truth under a different canonical
        # labeling; recovery must bind labels through the genotypes
        truth_tree = (0, 1, 1, 2, 2)
        truth_z = np.array([
            [0, 1, 0, 1, 1],
            [0, 0, 1, 0, 0],
            [0, 1, 0, 1, 0],
            [0, 1, 0, 0, 1],
        ])
        order = (1, 2, 4, 3, 5)  # new label i holds old label order[i-1]
        est_tree = (0, 1, 2, 1, 2)
        assert relabel_tree(est_tree, order) == truth_tree
        est = PointEstimate(
            tree=est_tree,
            mutant_copies=truth_z[:, np.asarray(order) - 1],
            total_copies=np.full_like(truth_z, 2),
            fracs=np.full((5, 1), 0.2),
            tree_counts={est_tree: 10},
            multiple_trees=False,
            n_samples_used=10,
        )
        assert estimate_matches_tree(est, truth_z, truth_tree)
        assert not estimate_matches_tree(est, truth_z, (0, 1, 2, 3, 4))

    def test_size_mismatch_is_not_recovered(self):
        est = PointEstimate(
            tree=(0, 1),
            mutant_copies=np.array([[0, 1], [0, 1]]),
            total_copies=np.full((2, 2), 2),
            fracs=np.full((2, 1), 0.5),
            tree_counts={(0, 1): 4},
            multiple_trees=False,
            n_samples_used=4,
        )
        truth_z = np.array([[0, 1, 0], [0, 0, 1]])
        assert not estimate_matches_tree(est, truth_z, (0, 1, 1))


class TestPointEstimate:
    def test_single_sample_identity(self):
        reads, segmap, _ = small_dataset(seed=30)
        state = prior_state(np.random.default_rng(0), reads, segmap, SMALL_HYPER, 3)
        est = point_estimate([state], segmap)
        z, l = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
        assert est.tree == state.tree
        assert np.array_equal(est.mutant_copies, z)
        assert np.array_equal(est.total_copies, l)
        assert np.allclose(est.fracs, fractions(state.weights))
        assert not est.multiple_trees

    def test_majority_rule(self):
        reads, segmap, _ = small_dataset(seed=31)
        rng = np.random.default_rng(1)
        a = replace(prior_state(rng, reads, segmap, SMALL_HYPER, 3), tree=(0, 1, 1))
        b = replace(prior_state(rng, reads, segmap, SMALL_HYPER, 3), tree=(0, 1, 2))
        est = point_estimate([a, a, a, b, b], segmap)
        assert est.tree == (0, 1, 1)
        assert est.multiple_trees
        assert est.n_samples_used == 3
        assert est.tree_counts == {(0, 1, 1): 3, (0, 1, 2): 2}

    def test_median_rounds_halves_down(self):
        from subphy.postprocess import _round_half_down

        assert _round_half_down(np.array([1.5, 1.0, 2.5, 0.4, 0.5])).tolist() == \
            [1, 1, 2, 0, 0]

    def test_median_of_three(self):
        reads, segmap, _ = small_dataset(seed=32)
        rng = np.random.default_rng(2)
        states = []
        for gain in (1, 1, 2):
            s = prior_state(rng, reads, segmap, SMALL_HYPER, 3)
            snv = s.snv
            snv.gain[:] = gain
            states.append(replace(s, tree=(0, 1, 1),
                                  snv=type(snv)(subclone=np.full(reads.n_loci, 2),
                                                gain=snv.gain)))
        est = point_estimate(states, segmap)
        origin_cols = est.mutant_copies[:, 1]
        assert np.all(origin_cols == 1)
