"""Summary statistics over per-instance scores: mean rank, median and win percentage."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

logger = logging.getLogger(__name__)

HIGHER_IS_BETTER = {
    "coverage": True,
    "silhouette": True,
    "ari": True,
    "modularity": True,
    "human_alignment": True,
    "rgc": True,
    "ref_in_corpus": True,
    "ref_out_corpus_valid": True,
    "ref_invalid": False,
    "ref_unresolved": False,
    "blind_precision_title": True,
    "blind_precision_title_year": True,
    "blind_precision_title_year_author": True,
}
TABLE_METRICS = ("coverage", "silhouette", "ari", "modularity", "human_alignment", "rgc")
TIE_NOTE = "ties: average rank; every tied-best pipeline is credited with the win"


@dataclass(frozen=True)
class AggregateRow:
    pipeline: str
    metric: str
    mean_rank: float
    median: float
    win_pct: float
    n_instances: int


def _valid(value) -> bool:
    return value is not None and not (isinstance(value, float) and math.isnan(value))


def aggregate(
    values: Mapping[str, Mapping[str, Optional[float]]],
    metric: str,
    higher_is_better: bool = True,
) -> list[AggregateRow]:
    """Rank pipelines within each instance, then summarize per pipeline.

    ``values`` maps instance id -> pipeline -> score. A pipeline with no
    score anywhere (e.g. Human for reference metrics) is left out of this
    metric; otherwise instances where any pipeline lacks a score are dropped
    (and logged).
    """
    named = sorted({p for per in values.values() for p in per})
    pipelines = [p for p in named if any(_valid(per.get(p)) for per in values.values())]
    for p in sorted(set(named) - set(pipelines)):
        logger.info("metric %s: pipeline %s has no scores; excluded", metric, p)
    kept = []
    for inst in sorted(values):
        per = values[inst]
        if all(_valid(per.get(p)) for p in pipelines):
            kept.append(inst)
        else:
            logger.info("metric %s: dropping instance %s (missing pipeline scores)", metric, inst)
    if not kept:
        raise ValueError(f"metric {metric}: no instance scored by every pipeline")

    matrix = np.array([[float(values[i][p]) for p in pipelines] for i in kept])
    signed = -matrix if higher_is_better else matrix
    ranks = np.vstack([rankdata(row, method="average") for row in signed])
    best = signed.min(axis=1, keepdims=True)
    wins = (signed == best).sum(axis=0)
    rows = []
    for j, p in enumerate(pipelines):
        rows.append(
            AggregateRow(
                pipeline=p,
                metric=metric,
                mean_rank=float(ranks[:, j].mean()),
                median=float(np.median(matrix[:, j])),
                win_pct=float(100.0 * wins[j] / len(kept)),
                n_instances=len(kept),
            )
        )
    return rows


def values_from_rows(rows: Iterable[Mapping], metric: str) -> dict[str, dict[str, Optional[float]]]:
    """Pivot long-format score rows (instance_id, pipeline, metric, value) for one metric."""
    out: dict[str, dict[str, Optional[float]]] = defaultdict(dict)
    for row in rows:
        if row["metric"] == metric:
            out[row["instance_id"]][row["pipeline"]] = row["value"]
    return dict(out)


def aggregate_rows(rows: Sequence[Mapping], metrics: Sequence[str] = TABLE_METRICS) -> list[AggregateRow]:
    result = []
    for metric in metrics:
        vals = values_from_rows(rows, metric)
        if not vals or not any(_valid(v) for per in vals.values() for v in per.values()):
            continue
        try:
            result.extend(aggregate(vals, metric, HIGHER_IS_BETTER.get(metric, True)))
        except ValueError as exc:
            logger.warning("%s", exc)
    return result


AGG_COLUMNS = ("metric", "pipeline", "mean_rank", "median", "win_pct", "n_instances")


def _ordered(rows: Sequence[AggregateRow]) -> list[AggregateRow]:
    metric_order = list(dict.fromkeys(r.metric for r in rows))
    return sorted(rows, key=lambda r: (metric_order.index(r.metric), r.pipeline))


def emit_report(
    rows: Sequence[AggregateRow],
    fmt: str,
    path,
    long_rows: Optional[Sequence[Mapping]] = None,
) -> Path:
    """Write the metric-major table as CSV or markdown.

    With ``long_rows`` a plot-ready long-format CSV is written next to it
    (``<stem>_long.csv``).
    """
    if not rows:
        raise ValueError("no rows to report")
    path = Path(path)
    rows = _ordered(rows)
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(AGG_COLUMNS)
            for r in rows:
                writer.writerow([r.metric, r.pipeline, repr(r.mean_rank), repr(r.median), repr(r.win_pct), r.n_instances])
    elif fmt == "markdown":
        lines = [f"<!-- {TIE_NOTE} -->", ""]
        for metric in dict.fromkeys(r.metric for r in rows):
            block = [r for r in rows if r.metric == metric]
            lines.append(f"### {metric} (n={block[0].n_instances})")
            lines.append("")
            lines.append("| Pipeline | Rank | Med. | %Win |")
            lines.append("|---|---:|---:|---:|")
            for r in block:
                lines.append(f"| {r.pipeline} | {r.mean_rank:.3f} | {r.median:.4f} | {r.win_pct:.2f} |")
            lines.append("")
        path.write_text("\n".join(lines), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")

    if long_rows is not None:
        long_path = path.with_name(f"{path.stem}_long.csv")
        with long_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["instance_id", "pipeline", "metric", "value"])
            for row in sorted(long_rows, key=lambda r: (r["metric"], r["pipeline"], r["instance_id"])):
                value = row["value"]
                writer.writerow([row["instance_id"], row["pipeline"], row["metric"], "" if value is None else repr(value)])
    return path


def read_report_csv(path) -> list[AggregateRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            AggregateRow(
                pipeline=r["pipeline"], metric=r["metric"], mean_rank=float(r["mean_rank"]),
                median=float(r["median"]), win_pct=float(r["win_pct"]), n_instances=int(r["n_instances"]),
            )
            for r in csv.DictReader(fh)
        ]
