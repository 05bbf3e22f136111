"""Shared builders for small test instances."""

from __future__ import annotations

import numpy as np

from subphy.model import ChainState, Hyperparams, ReadData
from subphy.likelihood import loglik_reads
from subphy.sampler import sample_prior_state
from subphy.simulate import build_scenario, generate_reads

SMALL_HYPER = Hyperparams(
    dirichlet_shape=1.5,
    neutral_prior_a=5.0,
    neutral_prior_b=2.0,
    gain_decay=0.1,
    max_mutant_copies=2,
    max_total_copies=4,
)


def small_dataset(seed=0, n_loci=5, n_samples=2, depth=30.0, tree=(0, 1, 1),
                  loci_per_segment=3):
    scenario = build_scenario(
        tree, depth, n_loci=n_loci, n_samples=n_samples, seed=seed,
        loci_per_segment=loci_per_segment, cnv_segment_fraction=0.5,
        require_identifiable=False,
    )
    reads = generate_reads(scenario, np.random.default_rng(seed + 1))
    return reads, scenario.segmap, scenario


def prior_state(rng, reads, segmap, hyper, n_subclones) -> ChainState:
    weights, snv, cnv, tree, pi = sample_prior_state(
        rng, n_subclones, reads.n_samples, segmap, hyper, reads.n_loci
    )
    state = ChainState(weights=weights, snv=snv, cnv=cnv, tree=tree,
                       neutral_prob=pi, neg_loglik=0.0)
    from dataclasses import replace

    return replace(state, neg_loglik=-loglik_reads(state, reads, segmap))


def toy_read_data(total, mutant, coverage):
    d = np.atleast_2d(np.asarray(total, dtype=np.int64))
    x = np.atleast_2d(np.asarray(mutant, dtype=np.int64))
    n = d.shape[0]
    return ReadData(
        total=d,
        mutant=x,
        coverage=np.asarray(coverage, dtype=float),
        positions=[("1", 1000 * (j + 1)) for j in range(n)],
        locus_ids=[f"L{j + 1:04d}" for j in range(n)],
    ).validate()
