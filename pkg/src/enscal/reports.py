"""CSV emission for scores, per-case outputs and histograms."""
from __future__ import annotations

import csv
import datetime as dt
import math
import os

import numpy as np

from .errors import DataError

SCORE_COLUMNS = (
    "method", "length", "n_cases", "mean_crps", "mae_median", "mae_mean",
    "rmse_median", "rmse_mean", "avg_width", "coverage_pct", "ks_stat", "ks_p",
)
CASE_COLUMNS = (
    "method", "date", "station", "obs", "crps", "pit", "lower", "upper",
    "median", "mean", "rank", "n_members",
)
HIST_COLUMNS = ("bin", "lower", "upper", "count")
ARGMIN_COLUMNS = ("score", "opt_length", "opt_value")


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (np.floating,)):
        return _fmt(float(v))
    if isinstance(v, dt.date):
        return v.isoformat()
    return str(v)


def write_rows(fh, columns, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_rows(fh, columns, rows)


def read_csv(path) -> tuple[list, list]:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [dict(zip(header, r)) for r in reader if r]
    return header, rows


def score_row(name, result, length=None) -> dict:
    r = result.report
    return {
        "method": name,
        "length": length if length is not None else (result.training_length if result.spec.method != "raw" else ""),
        "n_cases": r.n_cases,
        "mean_crps": r.mean_crps,
        "mae_median": r.mae_median,
        "mae_mean": r.mae_mean,
        "rmse_median": r.rmse_median,
        "rmse_mean": r.rmse_mean,
        "avg_width": r.avg_width,
        "coverage_pct": 100.0 * r.coverage,
        "ks_stat": result.ks_stat,
        "ks_p": result.ks_p,
    }


def case_rows(name, result) -> list:
    return [
        {"method": name, "date": c.date, "station": c.station, "obs": c.obs, "crps": c.crps,
         "pit": c.pit, "lower": c.lower, "upper": c.upper, "median": c.median, "mean": c.mean,
         "rank": c.rank, "n_members": c.n_members}
        for c in result.cases
    ]


def histogram_rows(kind: str, counts, edges=None) -> list:
    counts = np.asarray(counts, dtype=int)
    if kind == "rank":
        return [{"bin": k + 1, "lower": k + 0.5, "upper": k + 1.5, "count": int(c)} for k, c in enumerate(counts)]
    return [{"bin": k + 1, "lower": float(edges[k]), "upper": float(edges[k + 1]), "count": int(c)}
            for k, c in enumerate(counts)]


def histogram_from_cases(rows: list, kind: str, bins: int | None = None) -> list:
    """Histogram rows from ``cases.csv`` records (``rank`` or ``pit`` column)."""
    from .verification import pit_histogram, rank_histogram

    if not rows:
        raise DataError("no cases to histogram")
    if kind not in ("rank", "pit"):
        raise DataError(f"unknown histogram kind {kind!r}")
    if kind not in rows[0]:
        raise DataError(f"input lacks a {kind!r} column")
    try:
        if kind == "rank":
            ranks = [int(r["rank"]) for r in rows]
            if bins is None:
                if "n_members" in rows[0] and rows[0]["n_members"]:
                    bins = int(rows[0]["n_members"]) + 1
                else:
                    bins = max(ranks)
            counts = rank_histogram(ranks, bins - 1)
            return histogram_rows("rank", counts)
        edges, counts = pit_histogram([float(r["pit"]) for r in rows], bins or 11)
        return histogram_rows("pit", counts, edges)
    except ValueError as exc:
        raise DataError(str(exc)) from None
