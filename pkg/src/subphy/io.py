"""Reading and writing the on-disk formats.

Tables are tab-separated with Unix line endings and no trailing tabs, so a
rerun with identical inputs reproduces every output byte for byte.  Trees
serialize to Graphviz DOT, structured results to sorted-key JSON.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .model import ReadData, SegmentMap, _position_key

__all__ = [
    "ParseError",
    "parse_reads_tsv",
    "write_reads_tsv",
    "write_matrix_tsv",
    "write_segments_tsv",
    "read_segments_tsv",
    "tree_to_dot",
    "write_json",
    "format_float",
]

log = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


def format_float(value: float) -> str:
    """Shortest round-tripping decimal form, stable across runs."""
    return repr(float(value))


def parse_reads_tsv(path, coverage) -> ReadData:
    """Parse a read-count table.

    Expected header: locus_id, chrom, pos, then d_<name> and x_<name> column
    pairs, one pair per sample.  Rows are sorted by (chromosome, position)
    with a warning if the input was unsorted; duplicate positions are
    rejected.  ``coverage`` carries the designed per-sample depths, which
    live in the run configuration rather than the table.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header[:3] != ["locus_id", "chrom", "pos"]:
        raise ParseError(f"{path}: header must start with locus_id, chrom, pos")
    rest = header[3:]
    if not rest or len(rest) % 2 != 0:
        raise ParseError(f"{path}: need d_<sample>/x_<sample> column pairs")
    names = []
    for i in range(0, len(rest), 2):
        d_col, x_col = rest[i], rest[i + 1]
        if not d_col.startswith("d_") or not x_col.startswith("x_") \
                or d_col[2:] != x_col[2:]:
            raise ParseError(f"{path}: malformed sample columns {d_col!r}, {x_col!r}")
        names.append(d_col[2:])
    n_samples = len(names)

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 + 2 * n_samples:
            raise ParseError(f"{path}:{lineno}: expected {3 + 2 * n_samples} columns, "
                             f"got {len(parts)}")
        locus, chrom, pos_text = parts[0], parts[1], parts[2]
        try:
            pos = int(pos_text)
            counts = [int(v) for v in parts[3:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-integer value ({exc})") from None
        d = counts[0::2]
        x = counts[1::2]
        if any(v < 0 for v in counts):
            raise ParseError(f"{path}:{lineno}: negative read count")
        if any(xi > di for di, xi in zip(d, x)):
            raise ParseError(f"{path}:{lineno}: mutant reads exceed total reads")
        rows.append((locus, chrom, pos, d, x))

    if not rows:
        raise ParseError(f"{path}: no data rows")
    keys = [_position_key((r[1], r[2])) for r in rows]
    if len(set(keys)) != len(keys):
        raise ParseError(f"{path}: duplicate (chrom, pos) entries")
    order = sorted(range(len(rows)), key=lambda i: keys[i])
    if order != list(range(len(rows))):
        log.warning("%s: rows were not sorted by position; sorting", path)
        rows = [rows[i] for i in order]

    coverage = np.asarray(coverage, dtype=float)
    if coverage.shape != (n_samples,):
        raise ParseError(
            f"{path}: table has {n_samples} samples but coverage has "
            f"{coverage.size} entries"
        )
    return ReadData(
        total=np.array([r[3] for r in rows], dtype=np.int64),
        mutant=np.array([r[4] for r in rows], dtype=np.int64),
        coverage=coverage,
        positions=[(r[1], r[2]) for r in rows],
        locus_ids=[r[0] for r in rows],
    ).validate()


def write_reads_tsv(data: ReadData, path, sample_names=None):
    names = sample_names or [f"s{i + 1}" for i in range(data.n_samples)]
    cols = ["locus_id", "chrom", "pos"]
    for name in names:
        cols += [f"d_{name}", f"x_{name}"]
    lines = ["\t".join(cols)]
    for j in range(data.n_loci):
        row = [data.locus_ids[j], str(data.positions[j][0]), str(data.positions[j][1])]
        for t in range(data.n_samples):
            row += [str(int(data.total[j, t])), str(int(data.mutant[j, t]))]
        lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_matrix_tsv(matrix, path, row_labels, col_labels, corner="id"):
    """Write a labeled numeric matrix; floats use their shortest exact form."""
    m = np.asarray(matrix)
    lines = ["\t".join([corner] + [str(c) for c in col_labels])]
    for label, row in zip(row_labels, m):
        cells = [str(int(v)) if np.issubdtype(m.dtype, np.integer) else format_float(v)
                 for v in row]
        lines.append("\t".join([str(label)] + cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_segments_tsv(data: ReadData, segmap: SegmentMap, path):
    lines = ["\t".join(["locus_id", "chrom", "pos", "segment"])]
    for j in range(data.n_loci):
        lines.append("\t".join([
            data.locus_ids[j],
            str(data.positions[j][0]),
            str(data.positions[j][1]),
            str(int(segmap.segment_of[j]) + 1),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_segments_tsv(path, data: ReadData) -> SegmentMap:
    """Load a segment table and check it against the read data's loci."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != ["locus_id", "chrom", "pos", "segment"]:
        raise ParseError(f"{path}: bad segment table header")
    by_locus = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 columns")
        try:
            by_locus[parts[0]] = int(parts[3]) - 1
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer segment id") from None
    try:
        ids = np.array([by_locus[locus] for locus in data.locus_ids], dtype=np.int64)
    except KeyError as exc:
        raise ParseError(f"{path}: missing segment for locus {exc}") from None
    return SegmentMap(segment_of=ids)


def tree_to_dot(tree, fracs=None) -> str:
    """Graphviz digraph of a parent vector; optional mean fractions in labels."""
    lines = ["digraph subclones {"]
    for k in range(1, len(tree) + 1):
        label = "normal" if k == 1 else f"subclone {k}"
        if fracs is not None:
            mean = float(np.mean(fracs[k - 1]))
            label += f"\\nmean fraction {mean:.3f}"
        lines.append(f'  n{k} [label="{label}"];')
    for k in range(2, len(tree) + 1):
        lines.append(f"  n{tree[k - 1]} -> n{k};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_json(obj, path):
    Path(path).write_text(
        json.dumps(_jsonify(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
