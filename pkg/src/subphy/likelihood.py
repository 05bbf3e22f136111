"""Observation-model and prior log densities.

Log densities are plain floats on the natural-log scale; -inf encodes
zero probability and NaN never escapes these functions.

The read-count model for locus j in sample t, with fraction column f and
genotype rows z (mutant copies) and l (total copies):

    mutant reads   x ~ Binomial(d, p),   p = (z . f) / (l . f)
    total reads    d ~ Poisson(phi_t * (l . f) / 2)

Multiplying the two mass functions, the (l . f)^d factor of the Poisson
cancels the Binomial denominator, leaving

    x*log(z.f) + (d-x)*log((l-z).f) + d*log(phi_t/2)
      - phi_t*(l.f)/2 - log(x!) - log((d-x)!)

which is what ``loglik_reads`` evaluates; the factorized form must agree
with it to high precision and is used as an independent oracle in tests.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import betaln, gammaln

from .model import (
    ChainState,
    CnvOrigin,
    Hyperparams,
    ReadData,
    SegmentMap,
    SnvOrigin,
    Tree,
    expand_genotypes,
    fractions,
    genotypes_within_bounds,
)

__all__ = [
    "NEG_INF",
    "VafResult",
    "vaf",
    "vaf_matrix",
    "read_count_constant",
    "loglik_reads",
    "loglik_from_genotypes",
    "logprior_theta",
    "logprior_snv",
    "logprior_cnv",
    "logprior_pi",
    "logprior_tree",
    "logprior_state",
    "log_posterior_kernel",
    "n_cnv_states",
]

NEG_INF = float("-inf")


class VafResult(NamedTuple):
    value: float
    defined: bool


def vaf(mutant_row, total_row, frac_col) -> VafResult:
    """Theoretical variant allele frequency of one locus in one sample.

    The mixture-averaged mutant copy number divided by the averaged total
    copy number.  Undefined (flagged, not raised) when the total is zero.
    """
    num = float(np.dot(mutant_row, frac_col))
    den = float(np.dot(total_row, frac_col))
    if den == 0.0:
        return VafResult(0.0, False)
    return VafResult(num / den, True)


def vaf_matrix(mutant_copies, total_copies, fracs):
    """J x T matrix of theoretical VAFs plus a defined-mask for zero totals."""
    num = mutant_copies @ fracs
    den = total_copies @ fracs
    defined = den > 0
    out = np.zeros_like(den, dtype=float)
    np.divide(num, den, out=out, where=defined)
    return out, defined


def read_count_constant(data: ReadData) -> float:
    """State-independent part of the read log-likelihood."""
    d = data.total
    x = data.mutant
    half = 0.5 * np.asarray(data.coverage, dtype=float)
    return float(
        (d * np.log(half)).sum() - gammaln(x + 1).sum() - gammaln(d - x + 1).sum()
    )


def loglik_from_genotypes(mutant_copies, total_copies, fracs, data: ReadData,
                          constant: float | None = None) -> float:
    """Read log-likelihood given already-expanded genotype matrices."""
    x = data.mutant
    dx = data.total - x
    mut_dose = mutant_copies @ fracs
    norm_dose = (total_copies - mutant_copies) @ fracs
    with np.errstate(divide="ignore", invalid="ignore"):
        t_mut = np.where(x > 0, x * np.log(mut_dose), 0.0)
        t_norm = np.where(dx > 0, dx * np.log(norm_dose), 0.0)
    rate = (0.5 * np.asarray(data.coverage, dtype=float)) * (mut_dose + norm_dose)
    if constant is None:
        constant = read_count_constant(data)
    total = t_mut.sum() + t_norm.sum() - rate.sum() + constant
    return float(total)


def loglik_reads(state: ChainState, data: ReadData, segmap: SegmentMap) -> float:
    """Read log-likelihood of a chain state.

    Returns -inf when mutant reads are observed with zero mutant dose, or
    non-mutant reads with zero normal dose.
    """
    z, l = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
    return loglik_from_genotypes(z, l, fractions(state.weights), data)


def logprior_theta(weights, shape: float) -> float:
    """Independent Gamma(shape, 1) prior over all subclone weight entries."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        return NEG_INF
    n = w.size
    return float((shape - 1.0) * np.log(w).sum() - w.sum() - n * math.lgamma(shape))


def logprior_snv(snv: SnvOrigin, n_subclones: int, max_mutant_copies: int,
                 gain_decay: float) -> float:
    """Per-locus origin prior: uniform over cancer subclones, geometric in copies."""
    k = snv.subclone
    c = snv.gain
    if np.any(k < 2) or np.any(k > n_subclones):
        return NEG_INF
    if np.any(c < 1) or np.any(c > max_mutant_copies):
        return NEG_INF
    norm = math.log(n_subclones - 1) + math.log(
        sum(gain_decay**i for i in range(1, max_mutant_copies + 1))
    )
    return float(c.sum() * math.log(gain_decay) - snv.n_loci * norm)


def n_cnv_states(n_subclones: int, max_total_copies: int) -> int:
    """Count of non-neutral copy-number states per segment.

    Changes run over {-2, ..., max_total_copies - 2} excluding zero (the
    lower bound keeps normal copies non-negative), for every cancer
    subclone.  The count is static: cap violations arising jointly with the
    mutation state are excluded from the sampler's support instead of being
    renormalized into this prior.
    """
    return (n_subclones - 1) * max_total_copies


def logprior_cnv(cnv: CnvOrigin, neutral_prob: float, n_subclones: int,
                 max_total_copies: int) -> float:
    """Spike-and-uniform prior over per-segment copy-number origins."""
    if not 0.0 < neutral_prob < 1.0:
        return NEG_INF
    k = cnv.subclone
    c = cnv.change
    neutral = k == 0
    if np.any(c[neutral] != 0):
        return NEG_INF
    ka, ca = k[~neutral], c[~neutral]
    if np.any(ka < 2) or np.any(ka > n_subclones):
        return NEG_INF
    if np.any(ca == 0) or np.any(ca < -2) or np.any(ca > max_total_copies - 2):
        return NEG_INF
    n_neutral = int(neutral.sum())
    n_altered = cnv.n_segments - n_neutral
    out = n_neutral * math.log(neutral_prob)
    if n_altered:
        out += n_altered * (
            math.log1p(-neutral_prob) - math.log(n_cnv_states(n_subclones, max_total_copies))
        )
    return float(out)


def logprior_pi(neutral_prob: float, a: float, b: float) -> float:
    """Beta(a, b) log density of the copy-neutral probability."""
    if not 0.0 < neutral_prob < 1.0:
        return NEG_INF
    return float(
        (a - 1.0) * math.log(neutral_prob)
        + (b - 1.0) * math.log1p(-neutral_prob)
        - betaln(a, b)
    )


def logprior_tree(tree: Tree) -> float:
    """Uniform prior over the (K-1)! canonical trees."""
    return -math.lgamma(len(tree))


def logprior_state(state: ChainState, segmap: SegmentMap, hyper: Hyperparams) -> float:
    """Joint log prior of a chain state, including the genotype-bound indicator.

    States whose expanded total copies leave [0, max_total_copies] carry
    prior mass zero, implemented as an untempered -inf factor here rather
    than by renormalizing the individual priors.
    """
    _, total = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
    if not genotypes_within_bounds(total, hyper.max_total_copies):
        return NEG_INF
    k = state.n_subclones
    out = logprior_theta(state.weights, hyper.dirichlet_shape)
    out += logprior_snv(state.snv, k, hyper.max_mutant_copies, hyper.gain_decay)
    out += logprior_cnv(state.cnv, state.neutral_prob, k, hyper.max_total_copies)
    out += logprior_pi(state.neutral_prob, hyper.neutral_prior_a, hyper.neutral_prior_b)
    out += logprior_tree(state.tree)
    return float(out)


def log_posterior_kernel(state: ChainState, data: ReadData, segmap: SegmentMap,
                         hyper: Hyperparams, beta: float = 1.0) -> float:
    """Tempered posterior kernel: beta * loglik + log prior.

    Only the likelihood is raised to the inverse temperature; all priors
    enter at full strength, so the beta = 0 member of the family is exactly
    the prior.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("inverse temperature must lie in [0, 1]")
    prior = logprior_state(state, segmap, hyper)
    if prior == NEG_INF:
        return NEG_INF
    if beta == 0.0:
        return prior
    ll = loglik_reads(state, data, segmap)
    if ll == NEG_INF:
        return NEG_INF
    return beta * ll + prior
