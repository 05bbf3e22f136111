"""Posterior sampling engine.

One sweep updates, in fixed order: every subclone weight entry by adaptive
Metropolis-Hastings, every mutation origin row and every segment copy-number
origin by exact discrete Gibbs, the copy-neutral probability by its conjugate
Beta draw, and finally the tree by either a likelihood-preserving leaf rewire
or a slice move over the full tree catalog.  ``run_tempered`` runs several
such chains against likelihood-tempered targets and exchanges states between
adjacent temperatures.

All discrete conditionals are computed from the exact joint kernel (the
dose-dependent Poisson terms included), so their weight ratios match
posterior-kernel ratios identically.

Reproducibility contract: every stochastic choice comes from a generator
seeded from (master seed, stream index), chains touch no shared mutable
state between swap barriers, and swaps are scheduled by sweep count, so
multi-threaded execution is bit-identical to serial execution.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .likelihood import NEG_INF, read_count_constant
from .model import (
    ChainState,
    CnvOrigin,
    Hyperparams,
    ReadData,
    SegmentMap,
    SnvOrigin,
    Tree,
    descendant_matrix,
    enumerate_trees,
    fractions,
)

__all__ = [
    "ProposalTuner",
    "SamplerConfig",
    "TraceStore",
    "GewekeResult",
    "step_theta",
    "gibbs_snv",
    "gibbs_cnv",
    "gibbs_pi",
    "rewire_weights",
    "tree_rewire_mh",
    "tree_slice",
    "sweep",
    "run_tempered",
    "geweke_z",
    "swap_log_accept",
    "sample_prior_state",
    "snv_conditional_logweights",
    "cnv_conditional_logweights",
    "tree_conditional_logweights",
]


# ---------------------------------------------------------------------------
# precomputed context


class _Workspace:
    """Read-count constants and candidate tables reused across sweeps."""

    def __init__(self, data: ReadData, segmap: SegmentMap, hyper: Hyperparams,
                 n_subclones: int):
        self.data = data
        self.segmap = segmap
        self.hyper = hyper
        self.n_subclones = n_subclones
        self.x = np.asarray(data.mutant, dtype=float)
        self.d = np.asarray(data.total, dtype=float)
        self.dx = self.d - self.x
        self.half_phi = 0.5 * np.asarray(data.coverage, dtype=float)
        self.const = read_count_constant(data)
        self.seg_of = segmap.segment_of
        self.seg_loci = segmap.segments()
        self.seg_sizes = np.array([len(i) for i in self.seg_loci], dtype=float)
        self.seg_dx = np.vstack([self.dx[i].sum(axis=0) for i in self.seg_loci])

        k = n_subclones
        ms = hyper.max_mutant_copies
        self.snv_k = np.repeat(np.arange(2, k + 1), ms)
        self.snv_c = np.tile(np.arange(1, ms + 1), k - 1)
        decay = math.log(hyper.gain_decay)
        norm = math.log(k - 1) + math.log(
            sum(hyper.gain_decay**i for i in range(1, ms + 1))
        )
        self.snv_logprior = self.snv_c * decay - norm

        changes = [c for c in range(-2, hyper.max_total_copies - 1) if c != 0]
        self.cnv_k = np.repeat(np.arange(2, k + 1), len(changes))
        self.cnv_c = np.tile(np.array(changes), k - 1)
        self.n_cnv_states = len(self.cnv_k)


class _Caches:
    """Per-state expanded genotypes and dose matrices."""

    __slots__ = ("fracs", "desc", "z", "n_seg", "n_loci", "mut_dose", "norm_dose_seg")

    def __init__(self, ws: _Workspace, state: ChainState, desc=None):
        self.fracs = fractions(state.weights)
        self.desc = descendant_matrix(state.tree) if desc is None else desc
        self.z = state.snv.gain[:, None] * self.desc[state.snv.subclone - 1]
        n_seg = np.full((ws.segmap.n_segments, ws.n_subclones), 2, dtype=np.int64)
        hit = state.cnv.subclone > 0
        if np.any(hit):
            n_seg[hit] += state.cnv.change[hit, None] * self.desc[state.cnv.subclone[hit] - 1]
        self.n_seg = n_seg
        self.n_loci = n_seg[ws.seg_of]
        self.mut_dose = self.z @ self.fracs
        self.norm_dose_seg = n_seg @ self.fracs

    def within_bounds(self, cap: int) -> bool:
        total = self.n_loci + self.z
        return bool((total >= 0).all() and (total <= cap).all())

    def loglik(self, ws: _Workspace) -> float:
        norm_dose = self.norm_dose_seg[ws.seg_of]
        val = (
            (ws.x * np.log(self.mut_dose)).sum()
            + (ws.dx * np.log(norm_dose)).sum()
            - (ws.half_phi * (self.mut_dose + norm_dose)).sum()
            + ws.const
        )
        return float(val)


def _workspace(data, segmap, hyper, n_subclones, workspace=None) -> _Workspace:
    if workspace is not None:
        return workspace
    return _Workspace(data, segmap, hyper, n_subclones)


@lru_cache(maxsize=8)
def _tree_catalog(n_subclones: int):
    """All canonical trees of a given size with their descendant matrices."""
    trees = enumerate_trees(n_subclones)
    return trees, [descendant_matrix(t) for t in trees]


# ---------------------------------------------------------------------------
# adaptive proposal scales


@dataclass(eq=False)
class ProposalTuner:
    """Per-entry precisions of the Gamma weight proposals with window adaptation.

    Every ``window`` proposals of an entry, the scale is multiplied by
    ``factor`` when the window acceptance rate falls below the band and
    divided by it when the rate exceeds the band.  Adaptation only runs
    while ``adapting`` is set; the run loop freezes it after the tuning
    phase so the kept samples come from a fixed kernel.
    """

    scale: np.ndarray
    window: int = 50
    factor: float = 1.5
    low: float = 0.4
    high: float = 0.65
    adapting: bool = True

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ValueError("proposal scales must be positive")
        shape = self.scale.shape
        self._proposals = np.zeros(shape, dtype=np.int64)
        self._accepts = np.zeros(shape, dtype=np.int64)
        self.total_proposals = 0
        self.total_accepts = 0

    @classmethod
    def fresh(cls, n_subclones, n_samples, initial_scale=5.0, **kw):
        return cls(scale=np.full((n_subclones, n_samples), float(initial_scale)), **kw)

    def record(self, k: int, t: int, accepted: bool):
        self.total_proposals += 1
        self.total_accepts += accepted
        if not self.adapting:
            return
        self._proposals[k, t] += 1
        self._accepts[k, t] += accepted
        if self._proposals[k, t] >= self.window:
            rate = self._accepts[k, t] / self._proposals[k, t]
            if rate < self.low:
                self.scale[k, t] *= self.factor
            elif rate > self.high:
                self.scale[k, t] /= self.factor
            self._proposals[k, t] = 0
            self._accepts[k, t] = 0

    @property
    def acceptance_rate(self) -> float:
        if self.total_proposals == 0:
            return float("nan")
        return self.total_accepts / self.total_proposals


# ---------------------------------------------------------------------------
# single-parameter updates


def step_theta(state: ChainState, data, segmap, hyper, tuner: ProposalTuner, rng,
               beta: float = 1.0, workspace=None) -> ChainState:
    """Metropolis-Hastings scan over all subclone weight entries.

    Each entry proposes from Gamma(s * w, s), which is centered at the
    current value with variance w / s; the acceptance ratio includes the
    Hastings correction for this asymmetric proposal.  Non-finite or zero
    proposals count as automatic rejections.
    """
    ws = _workspace(data, segmap, hyper, state.n_subclones, workspace)
    caches = _Caches(ws, state)
    weights = state.weights.copy()
    colsum = weights.sum(axis=0)
    z = caches.z
    n_loci = caches.n_loci
    norm_dose = caches.norm_dose_seg[ws.seg_of]
    ll_col = (
        ws.x * np.log(caches.mut_dose)
        + ws.dx * np.log(norm_dose)
        - ws.half_phi * (caches.mut_dose + norm_dose)
    ).sum(axis=0)

    shape = hyper.dirichlet_shape
    n_sub, n_samp = weights.shape
    for k in range(n_sub):
        for t in range(n_samp):
            cur = weights[k, t]
            s = tuner.scale[k, t]
            prop = rng.gamma(s * cur, 1.0 / s)
            u = rng.random()
            accepted = False
            if np.isfinite(prop) and prop > 0.0:
                total = colsum[t] - cur + prop
                col = weights[:, t].copy()
                col[k] = prop
                frac = col / total
                mut = z @ frac
                norm = n_loci @ frac
                ll_new = float(
                    ws.x[:, t] @ np.log(mut)
                    + ws.dx[:, t] @ np.log(norm)
                    - ws.half_phi[t] * (mut.sum() + norm.sum())
                )
                d_prior = (shape - 1.0) * (math.log(prop) - math.log(cur)) - (prop - cur)
                d_hastings = (
                    s * (prop - cur) * math.log(s)
                    + (s * prop - 1.0) * math.log(cur)
                    - (s * cur - 1.0) * math.log(prop)
                    - s * (cur - prop)
                    - math.lgamma(s * prop)
                    + math.lgamma(s * cur)
                )
                log_acc = beta * (ll_new - ll_col[t]) + d_prior + d_hastings
                if math.log(u) < log_acc:
                    accepted = True
                    weights[k, t] = prop
                    colsum[t] = total
                    ll_col[t] = ll_new
            tuner.record(k, t, accepted)

    nll = -(ll_col.sum() + ws.const)
    return replace(state, weights=weights, neg_loglik=float(nll))


def _snv_weight_matrix(ws: _Workspace, caches: _Caches, beta: float):
    """Exact conditional log-weights of every (origin, gain) pair for all loci.

    Rows are loci, columns are candidates.  Terms constant across the
    candidates of a locus are dropped; cap-violating candidates get -inf.
    """
    origin_dose = caches.desc @ caches.fracs
    cand_dose = ws.snv_c[:, None] * origin_dose[ws.snv_k - 1]
    log_dose = np.log(ws.snv_c)[:, None] + np.log(origin_dose[ws.snv_k - 1])
    lik = ws.x @ log_dose.T - (ws.half_phi * cand_dose).sum(axis=1)
    w = beta * lik + ws.snv_logprior

    # a candidate is admissible iff its gain fits under the copy cap on the
    # whole descendant set of its origin
    k_range = np.arange(2, ws.n_subclones + 1)
    max_norm = np.stack(
        [caches.n_loci[:, caches.desc[k - 1]].max(axis=1) for k in k_range], axis=1
    )
    ok = ws.snv_c[None, :] + max_norm[:, ws.snv_k - 2] <= ws.hyper.max_total_copies
    w = np.where(ok, w, NEG_INF)
    return w


def gibbs_snv(state: ChainState, data, segmap, hyper, rng,
              beta: float = 1.0, workspace=None) -> ChainState:
    """Exact Gibbs resampling of every mutation origin row.

    Rows are conditionally independent given the rest of the state, so all
    loci are drawn in one vectorized pass (categorical sampling via the
    Gumbel-max trick).  Loci whose candidates are all inadmissible keep
    their current value.
    """
    ws = _workspace(data, segmap, hyper, state.n_subclones, workspace)
    caches = _Caches(ws, state)
    w = _snv_weight_matrix(ws, caches, beta)
    gumbel = rng.gumbel(size=w.shape)
    pick = np.argmax(w + gumbel, axis=1)
    dead = ~np.isfinite(w.max(axis=1))
    new_k = ws.snv_k[pick]
    new_c = ws.snv_c[pick]
    if np.any(dead):
        new_k[dead] = state.snv.subclone[dead]
        new_c[dead] = state.snv.gain[dead]
    snv = SnvOrigin(subclone=new_k, gain=new_c)

    z = snv.gain[:, None] * caches.desc[snv.subclone - 1]
    mut_dose = z @ caches.fracs
    norm_dose = caches.norm_dose_seg[ws.seg_of]
    ll = (
        (ws.x * np.log(mut_dose)).sum()
        + (ws.dx * np.log(norm_dose)).sum()
        - (ws.half_phi * (mut_dose + norm_dose)).sum()
        + ws.const
    )
    return replace(state, snv=snv, neg_loglik=float(-ll))


def _cnv_candidate_rows(ws: _Workspace, caches: _Caches):
    """Per-subclone normal copy rows of the neutral state plus every candidate."""
    rows = np.full((1 + ws.n_cnv_states, ws.n_subclones), 2, dtype=np.int64)
    rows[1:] += ws.cnv_c[:, None] * caches.desc[ws.cnv_k - 1]
    return rows


def _cnv_segment_logweights(ws: _Workspace, caches: _Caches, state: ChainState,
                            segment: int, cand_rows, beta: float):
    """Exact conditional log-weights of one segment's copy-number state."""
    loci = ws.seg_loci[segment]
    norm_dose = cand_rows @ caches.fracs
    lik = ws.seg_dx[segment] @ np.log(norm_dose).T - ws.seg_sizes[segment] * (
        ws.half_phi @ norm_dose.T
    )
    pi = state.neutral_prob
    prior = np.full(len(cand_rows), math.log1p(-pi) - math.log(ws.n_cnv_states))
    prior[0] = math.log(pi)
    max_gain = caches.z[loci].max(axis=0)
    ok = ((cand_rows + max_gain) <= ws.hyper.max_total_copies).all(axis=1)
    ok &= (cand_rows >= 0).all(axis=1)
    return np.where(ok, beta * lik + prior, NEG_INF)


def gibbs_cnv(state: ChainState, data, segmap, hyper, rng,
              beta: float = 1.0, workspace=None) -> ChainState:
    """Exact Gibbs resampling of every segment's copy-number origin."""
    ws = _workspace(data, segmap, hyper, state.n_subclones, workspace)
    caches = _Caches(ws, state)
    cand_rows = _cnv_candidate_rows(ws, caches)
    new_k = state.cnv.subclone.copy()
    new_c = state.cnv.change.copy()
    for s in range(segmap.n_segments):
        w = _cnv_segment_logweights(ws, caches, state, s, cand_rows, beta)
        if not np.isfinite(w.max()):
            continue
        pick = int(np.argmax(w + rng.gumbel(size=w.shape)))
        if pick == 0:
            new_k[s], new_c[s] = 0, 0
        else:
            new_k[s] = ws.cnv_k[pick - 1]
            new_c[s] = ws.cnv_c[pick - 1]
    cnv = CnvOrigin(subclone=new_k, change=new_c)

    n_seg = np.full((segmap.n_segments, ws.n_subclones), 2, dtype=np.int64)
    hit = cnv.subclone > 0
    if np.any(hit):
        n_seg[hit] += cnv.change[hit, None] * caches.desc[cnv.subclone[hit] - 1]
    norm_dose = (n_seg @ caches.fracs)[ws.seg_of]
    ll = (
        (ws.x * np.log(caches.mut_dose)).sum()
        + (ws.dx * np.log(norm_dose)).sum()
        - (ws.half_phi * (caches.mut_dose + norm_dose)).sum()
        + ws.const
    )
    return replace(state, cnv=cnv, neg_loglik=float(-ll))


def gibbs_pi(cnv: CnvOrigin, n_segments: int, a: float, b: float, rng) -> float:
    """Conjugate Beta draw of the copy-neutral probability."""
    n_neutral = int((cnv.subclone == 0).sum())
    return float(rng.beta(n_neutral + a, n_segments - n_neutral + b))


# ---------------------------------------------------------------------------
# tree moves


def _state_loglik_under(ws: _Workspace, state: ChainState, tree: Tree, desc,
                        weights=None):
    """Log-likelihood of the state with tree (and optionally weights) replaced.

    Returns (loglik, caches); the log-likelihood is -inf when the genotype
    expansion leaves the copy-number bounds.
    """
    trial = replace(state, tree=tree,
                    weights=state.weights if weights is None else weights)
    caches = _Caches(ws, trial, desc=desc)
    if not caches.within_bounds(ws.hyper.max_total_copies):
        return NEG_INF, caches
    return caches.loglik(ws), caches


def rewire_weights(weights: np.ndarray, leaf: int, parent: int, target: int) -> np.ndarray:
    """Compensating weight remap of a leaf rewired from its parent to a target.

    The old parent absorbs the leaf's weight, the target cedes the smaller
    of its own and the leaf's weight, and the leaf takes that minimum, per
    sample.  Column sums are preserved, and every alteration's cellularity
    except possibly the leaf's own is left unchanged; when the target's
    weights dominate the leaf's in every sample the likelihood is exactly
    invariant.
    """
    out = weights.copy()
    leaf_w = weights[leaf - 1]
    target_w = weights[target - 1]
    moved = np.minimum(leaf_w, target_w)
    out[parent - 1] = weights[parent - 1] + leaf_w
    out[target - 1] = target_w - moved
    out[leaf - 1] = moved
    return out


def tree_rewire_mh(state: ChainState, data, segmap, hyper, rng,
                   beta: float = 1.0, workspace=None):
    """Leaf rewire with the compensating weight remap, accepted by kernel ratio.

    A uniformly chosen leaf moves to a uniformly chosen admissible new
    parent with the ``rewire_weights`` remap applied.  Returns the (possibly
    unchanged) state and whether the move was accepted.
    """
    n = state.n_subclones
    tree = state.tree
    leaves = [k for k in range(2, n + 1) if k not in tree]
    if not leaves:
        return state, False
    leaf = leaves[rng.integers(len(leaves))]
    parent = tree[leaf - 1]
    options = [q for q in range(1, leaf) if q != parent]
    if not options:
        return state, False
    target = options[rng.integers(len(options))]

    weights = rewire_weights(state.weights, leaf, parent, target)
    new_tree = tree[: leaf - 1] + (target,) + tree[leaf:]

    ws = _workspace(data, segmap, hyper, n, workspace)
    u = rng.random()
    if np.any(weights <= 0.0):
        return state, False
    ll_new, _ = _state_loglik_under(ws, state, new_tree,
                                    descendant_matrix(new_tree), weights=weights)
    if ll_new == NEG_INF:
        return state, False
    shape = hyper.dirichlet_shape
    rows_old = state.weights[[parent - 1, target - 1, leaf - 1]]
    rows_new = weights[[parent - 1, target - 1, leaf - 1]]
    d_prior = float(
        (shape - 1.0) * (np.log(rows_new).sum() - np.log(rows_old).sum())
        - (rows_new.sum() - rows_old.sum())
    )
    log_acc = beta * (ll_new - (-state.neg_loglik)) + d_prior
    if math.log(u) < log_acc:
        return replace(state, tree=new_tree, weights=weights,
                       neg_loglik=float(-ll_new)), True
    return state, False


def tree_slice(state: ChainState, data, segmap, hyper, rng,
               beta: float = 1.0, workspace=None, max_proposals: int = 1000):
    """Slice move over the complete tree catalog.

    Draws a log-scale slice level under the current tree's conditional
    kernel, then proposes trees uniformly until one clears the level.  The
    current tree always clears it, so the uncapped loop terminates; after
    ``max_proposals`` failures the move falls back to the current tree and
    counts as rejected.
    """
    trees, descs = _tree_catalog(state.n_subclones)
    threshold = beta * (-state.neg_loglik) - rng.exponential(1.0)
    ws = _workspace(data, segmap, hyper, state.n_subclones, workspace)
    for _ in range(max_proposals):
        i = int(rng.integers(len(trees)))
        proposal = trees[i]
        if proposal == state.tree:
            return state, True
        ll, _ = _state_loglik_under(ws, state, proposal, descs[i])
        if ll > NEG_INF and beta * ll >= threshold:
            return replace(state, tree=proposal, neg_loglik=float(-ll)), True
    return state, False


# ---------------------------------------------------------------------------
# conditional log-weights exposed for verification


def snv_conditional_logweights(state, data, segmap, hyper, locus, beta=1.0):
    """Candidates and exact conditional log-weights of one mutation origin row."""
    ws = _Workspace(data, segmap, hyper, state.n_subclones)
    caches = _Caches(ws, state)
    w = _snv_weight_matrix(ws, caches, beta)
    cands = list(zip(ws.snv_k.tolist(), ws.snv_c.tolist()))
    return cands, w[locus]


def cnv_conditional_logweights(state, data, segmap, hyper, segment, beta=1.0):
    """Candidates and exact conditional log-weights of one segment's CNV state."""
    ws = _Workspace(data, segmap, hyper, state.n_subclones)
    caches = _Caches(ws, state)
    cand_rows = _cnv_candidate_rows(ws, caches)
    w = _cnv_segment_logweights(ws, caches, state, segment, cand_rows, beta)
    cands = [(0, 0)] + list(zip(ws.cnv_k.tolist(), ws.cnv_c.tolist()))
    return cands, w


def tree_conditional_logweights(state, data, segmap, hyper, beta=1.0):
    """All trees of the state's size with their conditional log-kernels."""
    trees, descs = _tree_catalog(state.n_subclones)
    ws = _Workspace(data, segmap, hyper, state.n_subclones)
    out = np.empty(len(trees))
    for i, (tree, desc) in enumerate(zip(trees, descs)):
        ll, _ = _state_loglik_under(ws, state, tree, desc)
        out[i] = NEG_INF if ll == NEG_INF else beta * ll
    return trees, out


# ---------------------------------------------------------------------------
# sweeps and tempered runs


def sweep(state: ChainState, data, segmap, hyper, tuner, rng, beta: float = 1.0,
          slice_prob: float = 0.15, slice_max_proposals: int = 1000,
          workspace=None):
    """One full update cycle; returns the new state and the tree-move outcome."""
    ws = _workspace(data, segmap, hyper, state.n_subclones, workspace)
    state = step_theta(state, data, segmap, hyper, tuner, rng, beta, ws)
    state = gibbs_snv(state, data, segmap, hyper, rng, beta, ws)
    state = gibbs_cnv(state, data, segmap, hyper, rng, beta, ws)
    pi = gibbs_pi(state.cnv, segmap.n_segments, hyper.neutral_prior_a,
                  hyper.neutral_prior_b, rng)
    state = replace(state, neutral_prob=pi)
    use_slice = rng.random() < slice_prob
    if use_slice:
        state, accepted = tree_slice(state, data, segmap, hyper, rng, beta, ws,
                                     slice_max_proposals)
    else:
        state, accepted = tree_rewire_mh(state, data, segmap, hyper, rng, beta, ws)
    return state, ("slice" if use_slice else "rewire", accepted)


@dataclass(frozen=True)
class SamplerConfig:
    """Chain count, temperature ladder, schedule and move mix of a run.

    The default ladder is geometric in the inverse temperature from 1 down
    to ``beta_min``; pass ``betas`` to override it entirely.
    """

    n_chains: int = 8
    beta_min: float = 0.3
    betas: tuple = None
    tune: int = 2000
    burnin: int = 4000
    keep: int = 4000
    swap_interval: int = 10
    slice_prob: float = 0.15
    slice_max_proposals: int = 1000
    adapt_window: int = 50
    adapt_factor: float = 1.5
    accept_low: float = 0.4
    accept_high: float = 0.65
    initial_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if not 0 < self.beta_min <= 1:
            raise ValueError("beta_min must lie in (0, 1]")
        if self.keep < 1 or self.tune < 0 or self.burnin < 0:
            raise ValueError("invalid iteration schedule")
        if self.swap_interval < 1:
            raise ValueError("swap_interval must be positive")
        if not 0 <= self.slice_prob <= 1:
            raise ValueError("slice_prob must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.betas is not None:
            b = tuple(float(v) for v in self.betas)
            if len(b) != self.n_chains:
                raise ValueError("explicit ladder must have one beta per chain")
            if b[0] != 1.0 or any(y >= x for x, y in zip(b, b[1:])) or b[-1] <= 0:
                raise ValueError("ladder must strictly decrease from 1 and stay positive")
            object.__setattr__(self, "betas", b)

    def ladder(self) -> np.ndarray:
        if self.betas is not None:
            return np.array(self.betas)
        if self.n_chains == 1:
            return np.array([1.0])
        expo = np.arange(self.n_chains) / (self.n_chains - 1)
        return self.beta_min**expo


def swap_log_accept(beta_a: float, beta_b: float, nll_a: float, nll_b: float) -> float:
    """Log acceptance ratio of exchanging the states at two temperatures.

    With likelihood-only tempering the untempered priors cancel, leaving
    (beta_a - beta_b) * (nll_a - nll_b).
    """
    return (beta_a - beta_b) * (nll_a - nll_b)


def sample_prior_state(rng, n_subclones: int, n_samples: int, segmap: SegmentMap,
                       hyper: Hyperparams, n_loci: int, max_tries: int = 10000):
    """Draw (weights, snv, cnv, tree, pi) from the joint prior.

    The joint prior gives zero mass to genotype expansions breaching the
    copy cap, so draws are rejected until the bounds hold.
    """
    trees, descs = _tree_catalog(n_subclones)
    ms = hyper.max_mutant_copies
    gain_probs = np.array([hyper.gain_decay**c for c in range(1, ms + 1)])
    gain_probs /= gain_probs.sum()
    changes = np.array([c for c in range(-2, hyper.max_total_copies - 1) if c != 0])
    n_segments = segmap.n_segments
    for _ in range(max_tries):
        ti = int(rng.integers(len(trees)))
        tree, desc = trees[ti], descs[ti]
        weights = rng.gamma(hyper.dirichlet_shape, 1.0, size=(n_subclones, n_samples))
        if np.any(weights <= 0):
            continue
        pi = float(rng.beta(hyper.neutral_prior_a, hyper.neutral_prior_b))
        snv = SnvOrigin(
            subclone=rng.integers(2, n_subclones + 1, size=n_loci),
            gain=rng.choice(np.arange(1, ms + 1), p=gain_probs, size=n_loci),
        )
        neutral = rng.random(n_segments) < pi
        ck = rng.integers(2, n_subclones + 1, size=n_segments)
        cc = changes[rng.integers(len(changes), size=n_segments)]
        ck[neutral] = 0
        cc[neutral] = 0
        cnv = CnvOrigin(subclone=ck, change=cc)

        z = snv.gain[:, None] * desc[snv.subclone - 1]
        n_seg = np.full((n_segments, n_subclones), 2, dtype=np.int64)
        hit = cnv.subclone > 0
        if np.any(hit):
            n_seg[hit] += cnv.change[hit, None] * desc[cnv.subclone[hit] - 1]
        total = n_seg[segmap.segment_of] + z
        if (total >= 0).all() and (total <= hyper.max_total_copies).all():
            return weights, snv, cnv, tree, pi
    raise RuntimeError("failed to draw an in-bounds prior state")


class GewekeResult(NamedTuple):
    z: float
    defined: bool


def geweke_z(trace, frac_a: float = 0.1, frac_b: float = 0.5,
             n_batches: int = 20) -> GewekeResult:
    """Convergence z-score comparing the means of an early and a late window.

    The variance of each window mean uses the batch-means approximation to
    the spectral density at zero (contiguous batches, sample variance of
    batch means over the batch count).  A zero-variance trace yields an
    undefined result, flagged rather than raised.
    """
    t = np.asarray(trace, dtype=float)
    if t.ndim != 1 or len(t) < 100:
        raise ValueError("need a 1-d trace of at least 100 values")
    n = len(t)
    early = t[: int(n * frac_a)]
    late = t[n - int(n * frac_b):]

    def mean_variance(window):
        if np.ptp(window) == 0.0:
            return 0.0
        nb = min(n_batches, len(window))
        size = len(window) // nb
        trimmed = window[: size * nb].reshape(nb, size)
        batch_means = trimmed.mean(axis=1)
        return float(batch_means.var(ddof=1) / nb)

    va = mean_variance(early)
    vb = mean_variance(late)
    if va + vb == 0.0:
        return GewekeResult(0.0, False)
    z = (early.mean() - late.mean()) / math.sqrt(va + vb)
    return GewekeResult(float(z), True)


# ---------------------------------------------------------------------------
# trace storage


@dataclass(eq=False)
class TraceStore:
    """Kept posterior samples of the cold chain plus all-chain loss traces."""

    betas: np.ndarray
    nll: np.ndarray
    weights: np.ndarray
    snv_subclone: np.ndarray
    snv_gain: np.ndarray
    cnv_subclone: np.ndarray
    cnv_change: np.ndarray
    trees: np.ndarray
    neutral_prob: np.ndarray
    acceptance: dict
    seed: int

    _ARRAYS = ("betas", "nll", "weights", "snv_subclone", "snv_gain",
               "cnv_subclone", "cnv_change", "trees", "neutral_prob")

    @property
    def n_kept(self) -> int:
        return self.nll.shape[1]

    @property
    def n_chains(self) -> int:
        return self.nll.shape[0]

    def state(self, i: int) -> ChainState:
        return ChainState(
            weights=self.weights[i],
            snv=SnvOrigin(subclone=self.snv_subclone[i], gain=self.snv_gain[i]),
            cnv=CnvOrigin(subclone=self.cnv_subclone[i], change=self.cnv_change[i]),
            tree=tuple(int(v) for v in self.trees[i]),
            neutral_prob=float(self.neutral_prob[i]),
            neg_loglik=float(self.nll[0, i]),
        )

    def states(self) -> list:
        return [self.state(i) for i in range(self.n_kept)]

    def save(self, path):
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        for name in self._ARRAYS:
            np.save(out / f"{name}.npy", getattr(self, name))
        manifest = {"seed": self.seed, "acceptance": self.acceptance,
                    "arrays": list(self._ARRAYS)}
        (out / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )

    @classmethod
    def load(cls, path) -> "TraceStore":
        src = Path(path)
        manifest = json.loads((src / "manifest.json").read_text())
        arrays = {name: np.load(src / f"{name}.npy") for name in cls._ARRAYS}
        return cls(acceptance=manifest["acceptance"], seed=manifest["seed"], **arrays)


@dataclass(eq=False)
class _ChainSlot:
    state: ChainState
    tuner: ProposalTuner
    rng: np.random.Generator
    beta: float
    index: int
    nll_buf: np.ndarray
    tree_proposals: int = 0
    tree_accepts: int = 0


def run_tempered(data: ReadData, segmap: SegmentMap, hyper: Hyperparams,
                 config: SamplerConfig, n_subclones: int, threads: int = 1) -> TraceStore:
    """Run the full tempered schedule and collect traces.

    Chains advance independently between swap barriers; at each barrier one
    uniformly chosen adjacent pair attempts a state exchange.  Given the
    master seed the result is bit-identical regardless of the worker count.
    """
    if n_subclones < 2:
        raise ValueError("need at least two subclones (normal plus one cancer)")
    betas = config.ladder()
    n_chains = len(betas)
    ws = _Workspace(data, segmap, hyper, n_subclones)
    keep = config.keep
    n_loci, n_samples = data.total.shape

    slots = []
    for j, beta in enumerate(betas):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1000 + j]))
        weights, snv, cnv, tree, pi = sample_prior_state(
            rng, n_subclones, n_samples, segmap, hyper, n_loci
        )
        caches = _Caches(ws, ChainState(weights, snv, cnv, tree, pi, 0.0))
        state = ChainState(weights, snv, cnv, tree, pi, -caches.loglik(ws))
        tuner = ProposalTuner.fresh(
            n_subclones, n_samples, config.initial_scale,
            window=config.adapt_window, factor=config.adapt_factor,
            low=config.accept_low, high=config.accept_high,
        )
        slots.append(_ChainSlot(state, tuner, rng, float(beta), j,
                                np.empty(keep)))

    swap_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 999]))
    total = config.tune + config.burnin + config.keep
    first_kept = config.tune + config.burnin

    cold_weights = np.empty((keep, n_subclones, n_samples))
    cold_snv_k = np.empty((keep, n_loci), dtype=np.int64)
    cold_snv_c = np.empty((keep, n_loci), dtype=np.int64)
    cold_cnv_k = np.empty((keep, segmap.n_segments), dtype=np.int64)
    cold_cnv_c = np.empty((keep, segmap.n_segments), dtype=np.int64)
    cold_trees = np.empty((keep, n_subclones), dtype=np.int64)
    cold_pi = np.empty(keep)

    def advance(slot: _ChainSlot, start: int, count: int):
        for i in range(start, start + count):
            slot.tuner.adapting = i < config.tune
            state, (move, accepted) = sweep(
                slot.state, data, segmap, hyper, slot.tuner, slot.rng,
                beta=slot.beta, slice_prob=config.slice_prob,
                slice_max_proposals=config.slice_max_proposals, workspace=ws,
            )
            slot.state = state
            slot.tree_proposals += 1
            slot.tree_accepts += accepted
            if i >= first_kept:
                rec = i - first_kept
                slot.nll_buf[rec] = state.neg_loglik
                if slot.index == 0:
                    cold_weights[rec] = state.weights
                    cold_snv_k[rec] = state.snv.subclone
                    cold_snv_c[rec] = state.snv.gain
                    cold_cnv_k[rec] = state.cnv.subclone
                    cold_cnv_c[rec] = state.cnv.change
                    cold_trees[rec] = state.tree
                    cold_pi[rec] = state.neutral_prob
        return slot

    swap_attempts = 0
    swap_accepts = 0
    done = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while done < total:
            block = min(config.swap_interval, total - done)
            if pool is None:
                for slot in slots:
                    advance(slot, done, block)
            else:
                list(pool.map(lambda s: advance(s, done, block), slots))
            done += block
            if n_chains >= 2 and done < total:
                i = int(swap_rng.integers(n_chains - 1))
                log_acc = swap_log_accept(
                    betas[i], betas[i + 1],
                    slots[i].state.neg_loglik, slots[i + 1].state.neg_loglik,
                )
                swap_attempts += 1
                if math.log(swap_rng.random()) < log_acc:
                    slots[i].state, slots[i + 1].state = (
                        slots[i + 1].state, slots[i].state
                    )
                    swap_accepts += 1
    finally:
        if pool is not None:
            pool.shutdown()

    acceptance = {
        "theta": slots[0].tuner.acceptance_rate,
        "tree": slots[0].tree_accepts / max(1, slots[0].tree_proposals),
        "swap": swap_accepts / max(1, swap_attempts),
    }
    return TraceStore(
        betas=betas,
        nll=np.vstack([slot.nll_buf for slot in slots]),
        weights=cold_weights,
        snv_subclone=cold_snv_k,
        snv_gain=cold_snv_c,
        cnv_subclone=cold_cnv_k,
        cnv_change=cold_cnv_c,
        trees=cold_trees,
        neutral_prob=cold_pi,
        acceptance=acceptance,
        seed=config.seed,
    )
