"""Batch command-line pipeline.

Subcommands compose over one output directory:

    simulate -> reads.tsv, truth/, config.txt
    qc       -> qc/reads_qc.tsv, qc/qc_report.json
    segment  -> segments.tsv, segmentation.json
    fit      -> fit_K<k>/ (trace, point estimate, diagnostics)
    select   -> fit_K<k>/ per candidate plus free_energy.json
    report   -> report/ (metrics.json, tree.dot, tables, figures)

Every failure exits nonzero after printing a machine-readable error record
to stderr.  All outputs are byte-reproducible given identical inputs,
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io as sio
from .config import ConfigError, RunConfig, load_run_config, parse_k_range
from .model import fractions, validate_tree
from .postprocess import (
    align_samples,
    cellularity,
    cellularity_error,
    estimate_matches_tree,
    partition_labels,
    point_estimate,
    rand_index,
    vaf_fit_error,
)
from .qc import quality_control
from .sampler import TraceStore, geweke_z, run_tempered
from .segmentation import default_gamma_candidates, normalize_reads, select_gamma
from .selection import FreeEnergyReport, free_energy, sample_prior_nll, select_model
from .simulate import build_scenario, generate_reads

CONFIG_NAME = "config.txt"


def _write_config_snapshot(cfg: RunConfig, path: Path):
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = "[" + ", ".join(str(v) for v in value) + "]"
        lines.append(f"{f.name} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config(args) -> RunConfig:
    path = getattr(args, "config", None)
    if path is None:
        candidate = Path(args.out) / CONFIG_NAME
        if candidate.exists():
            path = candidate
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    return load_run_config(path, overrides)


def _load_reads(args, cfg: RunConfig):
    out = Path(args.out)
    explicit = getattr(args, "reads", None)
    if explicit:
        path = Path(explicit)
    elif (out / "qc" / "reads_qc.tsv").exists():
        path = out / "qc" / "reads_qc.tsv"
    elif (out / "reads.tsv").exists():
        path = out / "reads.tsv"
    else:
        raise FileNotFoundError(f"no reads table under {out}; run simulate or pass --reads")
    if not cfg.phi:
        raise ConfigError("config key 'phi' (designed coverages) is required")
    return sio.parse_reads_tsv(path, cfg.phi)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tree = validate_tree(cfg.sim_tree)
    scenario = build_scenario(
        tree,
        cfg.sim_depth,
        n_loci=cfg.sim_loci,
        n_samples=cfg.sim_samples,
        seed=cfg.seed,
        loci_per_segment=cfg.sim_loci_per_segment,
        cnv_segment_fraction=cfg.sim_cnv_fraction,
        dirichlet_shape=cfg.dirichlet_shape,
        max_total_copies=cfg.max_total_copies,
    )
    reads = generate_reads(scenario, np.random.default_rng([cfg.seed, 1]))
    sio.write_reads_tsv(reads, out / "reads.tsv")
    cfg.phi = [float(v) for v in scenario.coverage]
    _write_config_snapshot(cfg, out / CONFIG_NAME)

    truth = out / "truth"
    truth.mkdir(exist_ok=True)
    sio.write_json({"parent": list(scenario.tree)}, truth / "tree.json")
    sio.write_json(
        {
            "snv_subclone": scenario.snv.subclone,
            "snv_gain": scenario.snv.gain,
            "cnv_subclone": scenario.cnv.subclone,
            "cnv_change": scenario.cnv.change,
        },
        truth / "origins.json",
    )
    samples = [f"s{t + 1}" for t in range(scenario.n_samples)]
    subclones = [f"subclone_{k + 1}" for k in range(scenario.n_subclones)]
    sio.write_matrix_tsv(scenario.fracs, truth / "fractions.tsv", subclones, samples)
    mutant, total = scenario.genotypes()
    sio.write_matrix_tsv(mutant, truth / "mutant_copies.tsv", reads.locus_ids, subclones)
    sio.write_matrix_tsv(total, truth / "total_copies.tsv", reads.locus_ids, subclones)
    sio.write_matrix_tsv(scenario.cellularity(), truth / "cellularity.tsv",
                         reads.locus_ids, samples)
    sio.write_segments_tsv(reads, scenario.segmap, truth / "segments.tsv")
    print(f"simulated {reads.n_loci} loci x {reads.n_samples} samples into {out}")
    return 0


def cmd_qc(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    reads = sio.parse_reads_tsv(Path(args.reads) if args.reads else out / "reads.tsv",
                                cfg.phi)
    kept, report = quality_control(
        reads,
        min_reads=cfg.qc_min_reads,
        min_mean_vaf=cfg.qc_min_mean_vaf,
        n_clusters=cfg.qc_clusters,
        drop_fraction=cfg.qc_drop_fraction,
        seed=cfg.seed,
    )
    qc_dir = out / "qc"
    qc_dir.mkdir(parents=True, exist_ok=True)
    sio.write_reads_tsv(kept, qc_dir / "reads_qc.tsv")
    sio.write_json(report.as_dict(), qc_dir / "qc_report.json")
    print(f"QC kept {report.n_kept} of {report.n_input} loci")
    return 0


def cmd_segment(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    reads = _load_reads(args, cfg)
    signal = normalize_reads(reads)
    gammas = cfg.seg_gammas or default_gamma_candidates(reads.n_samples)
    gamma, segmap = select_gamma(signal, gammas)
    sio.write_segments_tsv(reads, segmap, out / "segments.tsv")
    sio.write_json(
        {"gamma": gamma, "candidates": list(gammas), "n_segments": segmap.n_segments},
        out / "segmentation.json",
    )
    print(f"segmented {reads.n_loci} loci into {segmap.n_segments} segments "
          f"(gamma = {gamma})")
    return 0


def _fit_one(reads, segmap, cfg: RunConfig, n_subclones: int, seed: int,
             threads: int):
    sampler_cfg = cfg.sampler_config(seed=seed)
    trace = run_tempered(reads, segmap, cfg.hyperparams(), sampler_cfg,
                         n_subclones, threads=threads)
    aligned = align_samples(trace.states(), segmap)
    estimate = point_estimate(aligned, segmap)
    if trace.n_kept >= 100:
        z = geweke_z(trace.nll[0])
    else:
        from .sampler import GewekeResult

        z = GewekeResult(float("nan"), False)
    diagnostics = {
        "geweke_z": z.z if z.defined else None,
        "geweke_defined": z.defined,
        "acceptance": trace.acceptance,
        "betas": trace.betas,
        "n_kept": trace.n_kept,
        "seed": seed,
    }
    return trace, aligned, estimate, diagnostics


def _write_fit(out: Path, n_subclones: int, trace, estimate, diagnostics):
    fit_dir = out / f"fit_K{n_subclones}"
    fit_dir.mkdir(parents=True, exist_ok=True)
    trace.save(fit_dir / "trace")
    sio.write_json(
        {
            "tree": list(estimate.tree),
            "fractions": estimate.fracs,
            "mutant_copies": estimate.mutant_copies,
            "total_copies": estimate.total_copies,
            "tree_counts": {"-".join(map(str, t)): c
                            for t, c in sorted(estimate.tree_counts.items())},
            "multiple_trees": estimate.multiple_trees,
            "n_samples_used": estimate.n_samples_used,
        },
        fit_dir / "point_estimate.json",
    )
    sio.write_json(diagnostics, fit_dir / "diagnostics.json")
    return fit_dir


def _require_segments(args, cfg, reads):
    out = Path(args.out)
    path = out / "segments.tsv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the segment step first")
    return sio.read_segments_tsv(path, reads)


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    reads = _load_reads(args, cfg)
    segmap = _require_segments(args, cfg, reads)
    k = parse_k_range(args.K)
    if len(k) != 1:
        raise ConfigError("fit takes a single subclone count; use select for ranges")
    trace, _, estimate, diagnostics = _fit_one(reads, segmap, cfg, k[0], cfg.seed,
                                               cfg.threads)
    fit_dir = _write_fit(out, k[0], trace, estimate, diagnostics)
    z = diagnostics["geweke_z"]
    z_text = f"{z:.2f}" if z is not None else "undefined (short trace)"
    print(f"fit K={k[0]}: majority tree {estimate.tree}, geweke z = {z_text} "
          f"-> {fit_dir}")
    return 0


def cmd_select(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    reads = _load_reads(args, cfg)
    segmap = _require_segments(args, cfg, reads)
    candidates = parse_k_range(args.K)

    def run_candidate(k):
        seed = cfg.seed + k
        trace, _, estimate, diagnostics = _fit_one(reads, segmap, cfg, k, seed, 1)
        prior_nll = sample_prior_nll(reads, segmap, cfg.hyperparams(), k,
                                     n_draws=cfg.prior_draws, seed=seed)
        betas = list(trace.betas) + [0.0]
        traces = [trace.nll[i] for i in range(trace.n_chains)] + [prior_nll]
        value, terms, ses = free_energy(traces, betas)
        report = FreeEnergyReport(n_subclones=k, free_energy=value,
                                  rung_terms=terms, rung_se=ses)
        return k, trace, estimate, diagnostics, report

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_candidate, candidates))
    else:
        results = [run_candidate(k) for k in candidates]

    reports = []
    for k, trace, estimate, diagnostics, report in results:
        _write_fit(out, k, trace, estimate, diagnostics)
        reports.append(report)
    chosen = select_model(reports)
    sio.write_json(
        {
            "selected": chosen,
            "candidates": {
                str(r.n_subclones): {
                    "free_energy": r.free_energy,
                    "rung_terms": list(r.rung_terms),
                    "rung_se": list(r.rung_se),
                    "standard_error": r.standard_error,
                }
                for r in reports
            },
        },
        out / "free_energy.json",
    )
    table = ", ".join(f"K={r.n_subclones}: {r.free_energy:.1f}" for r in reports)
    print(f"free energy [{table}] -> selected K = {chosen}")
    return 0


def _pick_fit_dir(out: Path, requested) -> Path:
    if requested is not None:
        k = parse_k_range(requested)
        if len(k) != 1:
            raise ConfigError("report takes a single subclone count")
        path = out / f"fit_K{k[0]}"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run fit first")
        return path
    selection_file = out / "free_energy.json"
    if selection_file.exists():
        chosen = json.loads(selection_file.read_text())["selected"]
        return out / f"fit_K{chosen}"
    fits = sorted(out.glob("fit_K*"))
    if len(fits) != 1:
        raise FileNotFoundError(
            f"expected exactly one fit under {out} (found {len(fits)}); pass --K"
        )
    return fits[0]


def cmd_report(args) -> int:
    from . import plots

    cfg = _load_config(args)
    out = Path(args.out)
    reads = _load_reads(args, cfg)
    segmap = _require_segments(args, cfg, reads)
    fit_dir = _pick_fit_dir(out, args.K)
    trace = TraceStore.load(fit_dir / "trace")
    diagnostics = json.loads((fit_dir / "diagnostics.json").read_text())
    aligned = align_samples(trace.states(), segmap)
    estimate = point_estimate(aligned, segmap)

    report_dir = out / "report"
    figures = report_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    samples = [f"s{t + 1}" for t in range(reads.n_samples)]
    subclones = [f"subclone_{k + 1}" for k in range(len(estimate.tree))]

    fitted = (estimate.mutant_copies @ estimate.fracs) / (
        estimate.total_copies @ estimate.fracs
    )
    sio.write_matrix_tsv(fitted, report_dir / "vaf_table.tsv", reads.locus_ids, samples)
    sio.write_matrix_tsv(estimate.fracs, report_dir / "fractions.tsv", subclones,
                         samples)
    (report_dir / "tree.dot").write_text(
        sio.tree_to_dot(estimate.tree, estimate.fracs), encoding="utf-8"
    )

    fit_err = vaf_fit_error(estimate.mutant_copies, estimate.total_copies,
                            estimate.fracs, reads)
    metrics = {
        "selected_tree": list(estimate.tree),
        "multiple_trees": estimate.multiple_trees,
        "tree_counts": {"-".join(map(str, t)): c
                        for t, c in sorted(estimate.tree_counts.items())},
        "vaf_fit_error": fit_err.value if fit_err.defined else None,
        "geweke_z": diagnostics["geweke_z"],
        "acceptance": diagnostics["acceptance"],
    }

    truth_dir = out / "truth"
    if truth_dir.exists():
        truth_tree = tuple(json.loads((truth_dir / "tree.json").read_text())["parent"])
        # QC may have dropped loci, so align the truth rows to the fitted set
        truth_z = _subset_rows(*_read_matrix_tsv(truth_dir / "mutant_copies.tsv"),
                               reads.locus_ids)
        truth_cell = _subset_rows(*_read_matrix_tsv(truth_dir / "cellularity.tsv"),
                                  reads.locus_ids)
        truth_labels = partition_labels(truth_z)
        from .model import expand_genotypes

        rand_values = []
        cerr_values = []
        for state in aligned:
            z, _ = expand_genotypes(state.tree, state.snv, state.cnv, segmap)
            rand_values.append(rand_index(partition_labels(z), truth_labels))
            cerr_values.append(
                cellularity_error(truth_cell, cellularity(z, fractions(state.weights)))
            )
        metrics["truth"] = {
            "tree_recovered": estimate_matches_tree(estimate, truth_z, truth_tree),
            "rand_index_point": rand_index(
                partition_labels(estimate.mutant_copies), truth_labels
            ),
            "cellularity_error_point": cellularity_error(
                truth_cell, cellularity(estimate.mutant_copies, estimate.fracs)
            ),
            "rand_index_posterior": _summary(rand_values),
            "cellularity_error_posterior": _summary(cerr_values),
        }
    sio.write_json(metrics, report_dir / "metrics.json")

    plots.plot_fractions(estimate.fracs, samples, figures / "fractions.png")
    observed = np.zeros_like(fitted)
    mask = reads.total > 0
    np.divide(reads.mutant, reads.total, out=observed, where=mask)
    plots.plot_vaf_fit(observed, fitted, mask, samples, figures / "vaf_fit.png")
    altered_prob = (trace.cnv_subclone > 0).mean(axis=0)
    try:
        signal = normalize_reads(reads)
        plots.plot_cnv_profile(signal.values, segmap.segment_of,
                               altered_prob > 0.5, samples,
                               figures / "cnv_profile.png")
    except Exception:
        pass
    selection_file = out / "free_energy.json"
    if selection_file.exists():
        payload = json.loads(selection_file.read_text())
        ks = sorted(int(k) for k in payload["candidates"])
        values = [payload["candidates"][str(k)]["free_energy"] for k in ks]
        plots.plot_free_energy(ks, values, payload["selected"],
                               figures / "free_energy.png")
    print(f"report written to {report_dir}")
    return 0


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(v)),
        "q25": float(np.quantile(v, 0.25)),
        "q75": float(np.quantile(v, 0.75)),
    }


def _read_matrix_tsv(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    labels = []
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        labels.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    return labels, np.array(rows)


def _subset_rows(labels, matrix, wanted) -> np.ndarray:
    index = {label: i for i, label in enumerate(labels)}
    try:
        rows = [index[w] for w in wanted]
    except KeyError as exc:
        raise ConfigError(f"truth tables lack locus {exc}") from None
    return matrix[rows]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subphy",
        description="Subclone genotype, fraction and phylogeny inference "
                    "from multi-sample read counts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_k=False):
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="worker count")
        p.add_argument("--reads", default=None, help="explicit reads table")
        if needs_k:
            p.add_argument("--K", default=None,
                           help="subclone count or range, e.g. 4 or 3..6")

    common(sub.add_parser("simulate", help="generate a synthetic scenario"))
    common(sub.add_parser("qc", help="quality-control the read table"))
    common(sub.add_parser("segment", help="segment the genome signal"))
    fit = sub.add_parser("fit", help="posterior sampling at one subclone count")
    common(fit, needs_k=True)
    sel = sub.add_parser("select", help="fit a range of counts and pick by free energy")
    common(sel, needs_k=True)
    rep = sub.add_parser("report", help="emit metrics, tables and figures")
    common(rep, needs_k=True)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "qc": cmd_qc,
    "segment": cmd_segment,
    "fit": cmd_fit,
    "select": cmd_select,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("fit", "select") and args.K is None:
        print(json.dumps({"error": {"type": "ConfigError",
                                    "message": "--K is required"}}), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
