import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subphy.model import (
    CnvOrigin,
    SegmentMap,
    SnvOrigin,
    TreeError,
    descendants,
    enumerate_trees,
    expand_genotypes,
    fractions,
    genotypes_within_bounds,
    validate_tree,
)


def brute_descendants(tree, k):
    """Oracle: walk every node's parent chain."""
    out = set()
    for m in range(1, len(tree) + 1):
        a = m
        while a != 0:
            if a == k:
                out.add(m)
                break
            a = tree[a - 1]
    return out


class TestValidateTree:
    def test_paper_tree_k3(self):
        assert validate_tree((0, 1, 1)) == (0, 1, 1)

    def test_root_only(self):
        assert validate_tree((0,)) == (0,)

    def test_rejects_out_of_range_parent(self):
        with pytest.raises(TreeError):
            validate_tree((0, 1, 3, 2))

    def test_rejects_nonzero_root(self):
        with pytest.raises(TreeError):
            validate_tree((1, 1))

    def test_rejects_empty(self):
        with pytest.raises(TreeError):
            validate_tree(())


class TestDescendants:
    def test_internal_node(self):
        assert descendants((0, 1, 2, 2), 2) == {2, 3, 4}

    def test_root_dominates(self):
        assert descendants((0, 1, 1), 1) == {1, 2, 3}

    def test_leaf(self):
        assert descendants((0, 1, 2, 2), 4) == {4}

    def test_matches_parent_chain_walk(self):
        rng = np.random.default_rng(7)
        for n in range(2, 7):
            trees = enumerate_trees(n)
            for _ in range(10):
                tree = trees[rng.integers(len(trees))]
                k = int(rng.integers(1, n + 1))
                assert descendants(tree, k) == brute_descendants(tree, k)


class TestEnumerateTrees:
    def test_forced_single_tree(self):
        assert enumerate_trees(2) == [(0, 1)]

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_count_and_validity(self, n):
        trees = enumerate_trees(n)
        assert len(trees) == math.factorial(n - 1)
        assert len(set(trees)) == len(trees)
        for tree in trees:
            assert validate_tree(tree) == tree

    def test_matches_brute_force_filter(self):
        # oracle: filter every vector in {0} x {1..K}^(K-1) by the constraints
        import itertools

        for n in (3, 4, 5):
            brute = set()
            for rest in itertools.product(range(1, n + 1), repeat=n - 1):
                vec = (0, *rest)
                if all(1 <= vec[k - 1] <= k - 1 for k in range(2, n + 1)):
                    brute.add(vec)
            assert set(enumerate_trees(n)) == brute

    def test_rejects_above_cap(self):
        with pytest.raises(TreeError):
            enumerate_trees(10)


def figure_one_instance():
    """Three loci A, B, C on tree (0,1,2,2); B's segment loses one normal copy."""
    tree = validate_tree((0, 1, 2, 2))
    snv = SnvOrigin(subclone=np.array([2, 2, 4]), gain=np.array([1, 1, 1]))
    cnv = CnvOrigin(subclone=np.array([0, 3, 0]), change=np.array([0, -1, 0]))
    segmap = SegmentMap(segment_of=np.array([0, 1, 2]))
    return tree, snv, cnv, segmap


class TestExpandGenotypes:
    def test_canonical_example(self):
        tree, snv, cnv, segmap = figure_one_instance()
        z, l = expand_genotypes(tree, snv, cnv, segmap)
        assert z.tolist() == [[0, 1, 1, 1], [0, 1, 1, 1], [0, 0, 0, 1]]
        assert l.tolist() == [[2, 3, 3, 3], [2, 3, 2, 3], [2, 2, 2, 3]]

    def test_normal_column_untouched(self):
        tree, snv, cnv, segmap = figure_one_instance()
        z, l = expand_genotypes(tree, snv, cnv, segmap)
        assert np.all(z[:, 0] == 0)
        assert np.all(l[:, 0] == 2)

    def test_monotone_on_descendant_set(self):
        tree, snv, cnv, segmap = figure_one_instance()
        z, _ = expand_genotypes(tree, snv, cnv, segmap)
        for j in range(3):
            origin = snv.subclone[j]
            desc = descendants(tree, origin)
            for k in range(1, 5):
                expected = snv.gain[j] if k in desc else 0
                assert z[j, k - 1] == expected

    def test_purity(self):
        tree, snv, cnv, segmap = figure_one_instance()
        first = expand_genotypes(tree, snv, cnv, segmap)
        second = expand_genotypes(tree, snv, cnv, segmap)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])

    def test_bounds_flag(self):
        tree, snv, cnv, segmap = figure_one_instance()
        _, l = expand_genotypes(tree, snv, cnv, segmap)
        assert genotypes_within_bounds(l, 4)
        assert not genotypes_within_bounds(l, 2)


class TestFractions:
    def test_uniform_column(self):
        f = fractions(np.ones((4, 1)))
        assert np.allclose(f[:, 0], 0.25)

    def test_analytic_column(self):
        f = fractions(np.array([[2.0], [1.0], [1.0]]))
        assert np.allclose(f[:, 0], [0.5, 0.25, 0.25])

    @given(
        st.lists(st.floats(min_value=0.01, max_value=100.0), min_size=2, max_size=8),
        st.floats(min_value=0.01, max_value=1000.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance_and_normalization(self, column, scale):
        w = np.array(column)[:, None]
        f = fractions(w)
        assert abs(f.sum() - 1.0) < 1e-12
        assert np.all((f > 0) & (f < 1 + 1e-12))
        assert np.allclose(fractions(scale * w), f, rtol=1e-12)
