"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_fractions",
    "plot_free_energy",
    "plot_cnv_profile",
    "plot_vaf_fit",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_fractions(fracs, sample_names, path):
    """Stacked bars of the subclone composition of each sample."""
    n_sub, n_samp = fracs.shape
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * n_samp, 4))
    colors = plt.get_cmap("tab10")(np.arange(n_sub) % 10)
    bottom = np.zeros(n_samp)
    for k in range(n_sub):
        label = "normal" if k == 0 else f"subclone {k + 1}"
        ax.bar(sample_names, fracs[k], bottom=bottom, color=colors[k], label=label)
        bottom += fracs[k]
    ax.set_ylabel("fraction")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8, loc="center left", bbox_to_anchor=(1.0, 0.5))
    _finish(fig, path)


def plot_free_energy(candidates, values, selected, path):
    """Free energy against candidate subclone count with the winner marked."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(candidates, values, "o-", color="tab:blue")
    i = list(candidates).index(selected)
    ax.plot([selected], [values[i]], "s", color="tab:red", markersize=10,
            fillstyle="none", label=f"selected K = {selected}")
    ax.set_xlabel("number of subclones")
    ax.set_ylabel("estimated free energy")
    ax.set_xticks(list(candidates))
    ax.legend(fontsize=8)
    _finish(fig, path)


def plot_cnv_profile(log_ratios, segment_of, segment_altered, sample_names, path):
    """Per-sample log coverage ratios with inferred CNV segments highlighted."""
    n_loci, n_samp = log_ratios.shape
    fig, axes = plt.subplots(n_samp, 1, figsize=(8, 1.8 * n_samp + 0.8),
                             sharex=True, squeeze=False)
    x = np.arange(n_loci)
    altered = segment_altered[segment_of]
    for t, ax in enumerate(axes.ravel()):
        ax.scatter(x[~altered], log_ratios[~altered, t], s=6, color="tab:orange",
                   label="neutral" if t == 0 else None)
        if altered.any():
            ax.scatter(x[altered], log_ratios[altered, t], s=6, color="tab:blue",
                       label="CNV" if t == 0 else None)
        for s in np.flatnonzero(np.diff(segment_of)) + 1:
            ax.axvline(s - 0.5, color="grey", lw=0.4, alpha=0.5)
        ax.axhline(0.0, color="black", lw=0.5)
        ax.set_ylabel(sample_names[t], fontsize=8)
    axes.ravel()[0].legend(fontsize=8, loc="upper right")
    axes.ravel()[-1].set_xlabel("locus (position order)")
    _finish(fig, path)


def plot_vaf_fit(observed, fitted, mask, sample_names, path):
    """Observed against fitted allele frequencies, one panel per sample."""
    n_samp = observed.shape[1]
    fig, axes = plt.subplots(1, n_samp, figsize=(2.6 * n_samp, 3), squeeze=False)
    for t, ax in enumerate(axes.ravel()):
        keep = mask[:, t]
        ax.plot([0, 1], [0, 1], color="grey", lw=0.8)
        ax.scatter(observed[keep, t], fitted[keep, t], s=8, alpha=0.6)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_title(sample_names[t], fontsize=9)
        ax.set_xlabel("observed VAF", fontsize=8)
        if t == 0:
            ax.set_ylabel("fitted VAF", fontsize=8)
    _finish(fig, path)
