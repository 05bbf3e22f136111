"""Run configuration: flat key=value files, environment overrides, defaults.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment
and arrays are written ``[a, b, c]``.  Any key can be overridden by an
environment variable named SUBPHY_<KEY> (uppercased).  Defaults follow the
published parameter tables; see the README for the key-by-key mapping.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .model import Hyperparams
from .sampler import SamplerConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_file", "load_run_config",
           "parse_k_range", "ENV_PREFIX"]

ENV_PREFIX = "SUBPHY_"


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(v) for v in inner.split(",")]
    return _parse_scalar(text)


def parse_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = _parse_value(value)
    return out


@dataclass
class RunConfig:
    """Every tunable of the pipeline in one flat namespace."""

    # prior hyperparameters
    dirichlet_shape: float = 1.5
    neutral_prior_a: float = 10000.0
    neutral_prior_b: float = 1.0
    gain_decay: float = 0.01
    max_mutant_copies: int = 2
    max_total_copies: int = 4
    # sampler schedule
    n_chains: int = 8
    beta_min: float = 0.3
    betas: list = None
    tune: int = 2000
    burnin: int = 4000
    keep: int = 4000
    swap_interval: int = 10
    slice_prob: float = 0.15
    seed: int = 0
    # model-size search and free energy
    k_min: int = 2
    k_max: int = 5
    prior_draws: int = 4000
    # data
    phi: list = field(default_factory=list)
    # quality control
    qc_min_reads: int = 15
    qc_min_mean_vaf: float = 0.1
    qc_clusters: int = 60
    qc_drop_fraction: float = 0.5
    # segmentation
    seg_gammas: list = None
    # simulation
    sim_tree: list = field(default_factory=lambda: [0, 1, 1])
    sim_depth: float = 60.0
    sim_loci: int = 200
    sim_samples: int = 4
    sim_loci_per_segment: int = 20
    sim_cnv_fraction: float = 0.25
    # execution
    threads: int = 1

    def __post_init__(self):
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError("subclone range must satisfy 2 <= k_min <= k_max")
        if self.threads < 1:
            raise ConfigError("threads must be positive")

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            dirichlet_shape=self.dirichlet_shape,
            neutral_prior_a=self.neutral_prior_a,
            neutral_prior_b=self.neutral_prior_b,
            gain_decay=self.gain_decay,
            max_mutant_copies=self.max_mutant_copies,
            max_total_copies=self.max_total_copies,
        )

    def sampler_config(self, seed=None) -> SamplerConfig:
        return SamplerConfig(
            n_chains=self.n_chains,
            beta_min=self.beta_min,
            betas=tuple(self.betas) if self.betas else None,
            tune=self.tune,
            burnin=self.burnin,
            keep=self.keep,
            swap_interval=self.swap_interval,
            slice_prob=self.slice_prob,
            seed=self.seed if seed is None else seed,
        )


def load_run_config(path=None, overrides=None, environ=None) -> RunConfig:
    """Assemble a RunConfig from defaults, file, environment, then overrides."""
    values = {}
    if path is not None:
        values.update(parse_config_file(path))
    env = os.environ if environ is None else environ
    known = {f.name for f in fields(RunConfig)}
    for name in known:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _parse_value(env[env_key])
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_k_range(text) -> list:
    """Parse ``a..b`` or a single integer into the candidate subclone counts."""
    text = str(text)
    if ".." in text:
        lo_text, _, hi_text = text.partition("..")
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError:
            raise ConfigError(f"bad subclone range {text!r}") from None
    else:
        try:
            lo = hi = int(text)
        except ValueError:
            raise ConfigError(f"bad subclone count {text!r}") from None
    if lo < 2 or hi < lo:
        raise ConfigError("subclone range must satisfy 2 <= first <= last")
    return list(range(lo, hi + 1))
