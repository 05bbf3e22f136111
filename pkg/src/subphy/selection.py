"""Model-size selection by estimated Bayes free energy.

The free energy (negative log marginal likelihood) of a model is estimated
from the tempered chains by the telescoping identity

    F = -sum_j log E_{beta_{j+1}} [ exp(-(beta_j - beta_{j+1}) * loss) ]

where ``loss`` is the negative read log-likelihood, the expectations run
over the retained samples of the next-colder rung, and the ladder is the
sampler's, extended by an exact beta = 0 rung drawn directly from the
prior.  The candidate subclone count minimizing the estimate wins; ties go
to the smaller model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .likelihood import loglik_from_genotypes, read_count_constant
from .model import Hyperparams, ReadData, SegmentMap, descendant_matrix, fractions
from .sampler import sample_prior_state

__all__ = [
    "DegenerateRungError",
    "FreeEnergyReport",
    "free_energy",
    "select_model",
    "sample_prior_nll",
]


class DegenerateRungError(ValueError):
    """A rung's importance weights all vanished; the estimate is meaningless."""


@dataclass(frozen=True)
class FreeEnergyReport:
    """Free-energy estimate of one candidate subclone count."""

    n_subclones: int
    free_energy: float
    rung_terms: tuple
    rung_se: tuple

    @property
    def standard_error(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.rung_se))))


def _log_mean_exp(values: np.ndarray):
    """Stable log of the mean of exp(values); also returns the shifted weights."""
    m = values.max()
    if not np.isfinite(m):
        raise DegenerateRungError("all importance weights vanished on a rung")
    w = np.exp(values - m)
    return float(m + np.log(w.mean())), w


def _batch_se(weights: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of log-mean-exp by batch means on the shifted weights."""
    nb = min(n_batches, len(weights))
    size = len(weights) // nb
    if size == 0:
        return float("nan")
    batch_means = weights[: size * nb].reshape(nb, size).mean(axis=1)
    se_mean = batch_means.std(ddof=1) / np.sqrt(nb)
    mean = weights.mean()
    if mean == 0:
        return float("inf")
    return float(se_mean / mean)


def free_energy(traces, betas) -> tuple:
    """Estimate the free energy from per-rung loss traces.

    ``betas`` must decrease strictly from 1 to 0 and ``traces[i]`` holds the
    retained losses of the rung at ``betas[i]``; the final (beta = 0) trace
    comes from direct prior draws.  Returns (estimate, per-rung terms,
    per-rung standard errors).
    """
    b = np.asarray([float(v) for v in betas])
    if len(b) < 2 or b[0] != 1.0 or b[-1] != 0.0 or np.any(np.diff(b) >= 0):
        raise ValueError("ladder must strictly decrease from 1 to 0")
    if len(traces) != len(b):
        raise ValueError("need one trace per rung")
    terms = []
    ses = []
    for j in range(len(b) - 1):
        trace = np.asarray(traces[j + 1], dtype=float)
        if trace.size == 0:
            raise ValueError(f"empty trace for rung {j + 1}")
        delta = b[j] - b[j + 1]
        term, weights = _log_mean_exp(-delta * trace)
        terms.append(term)
        ses.append(_batch_se(weights))
    value = -float(np.sum(terms))
    return value, tuple(terms), tuple(ses)


def sample_prior_nll(data: ReadData, segmap: SegmentMap, hyper: Hyperparams,
                     n_subclones: int, n_draws: int = 4000, seed: int = 0) -> np.ndarray:
    """Losses of direct prior draws, the exact beta = 0 rung."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7777]))
    const = read_count_constant(data)
    out = np.empty(n_draws)
    for i in range(n_draws):
        weights, snv, cnv, tree, _ = sample_prior_state(
            rng, n_subclones, data.n_samples, segmap, hyper, data.n_loci
        )
        desc = descendant_matrix(tree)
        z = snv.gain[:, None] * desc[snv.subclone - 1]
        n_seg = np.full((segmap.n_segments, n_subclones), 2, dtype=np.int64)
        hit = cnv.subclone > 0
        if np.any(hit):
            n_seg[hit] += cnv.change[hit, None] * desc[cnv.subclone[hit] - 1]
        total = n_seg[segmap.segment_of] + z
        out[i] = -loglik_from_genotypes(z, total, fractions(weights), data, const)
    return out


def select_model(reports) -> int:
    """Subclone count attaining the minimum free energy; ties pick the smaller."""
    if not reports:
        raise ValueError("need at least one candidate report")
    best = None
    for rep in sorted(reports, key=lambda r: r.n_subclones):
        if best is None or rep.free_energy < best.free_energy:
            best = rep
    return best.n_subclones
