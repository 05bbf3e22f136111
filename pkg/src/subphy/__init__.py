"""Subclone genotype, fraction and phylogeny inference from read counts."""

from .model import (
    ChainState,
    CnvOrigin,
    Hyperparams,
    ReadData,
    SegmentMap,
    SnvOrigin,
    Tree,
    TreeError,
    descendants,
    enumerate_trees,
    expand_genotypes,
    fractions,
    validate_tree,
)
from .likelihood import (
    log_posterior_kernel,
    loglik_reads,
    logprior_cnv,
    logprior_pi,
    logprior_snv,
    logprior_theta,
    logprior_tree,
    vaf,
)
from .sampler import (
    ProposalTuner,
    SamplerConfig,
    TraceStore,
    geweke_z,
    gibbs_cnv,
    gibbs_pi,
    gibbs_snv,
    run_tempered,
    step_theta,
    sweep,
    tree_rewire_mh,
    tree_slice,
)
from .segmentation import SegSignal, multipcf, normalize_reads, select_gamma
from .selection import FreeEnergyReport, free_energy, sample_prior_nll, select_model
from .postprocess import (
    PointEstimate,
    align_samples,
    cellularity,
    cellularity_error,
    partition_labels,
    point_estimate,
    rand_index,
    vaf_fit_error,
)
from .simulate import Scenario, build_scenario, generate_reads
from .qc import quality_control

__version__ = "0.1.0"
