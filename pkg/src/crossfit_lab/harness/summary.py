"""Operating characteristics per (scheme, n) from a results file."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from ..dgp import true_psi
from .runner import read_results

SUMMARY_COLUMNS = ("experiment", "dgp", "scheme", "n", "n_ok", "n_failed", "psi_true",
                   "mean_estimate", "bias", "sd", "rmse", "mean_se", "coverage", "ep_mean",
                   "ep_var")


def _num(v):
    return float(v) if v not in ("", None) else math.nan


def summarize_rows(rows, psi_true: float) -> list[dict]:
    """Aggregate result rows; error rows are counted in ``n_failed`` and otherwise ignored."""
    groups = {}
    for r in rows:
        groups.setdefault((r["scheme"], int(r["n"])), []).append(r)
    scheme_order = list(dict.fromkeys(r["scheme"] for r in rows))
    keys = sorted(groups, key=lambda k: (scheme_order.index(k[0]), k[1]))
    out = []
    for key in keys:
        g = groups[key]
        ok = [r for r in g if not r["error"]]
        est = np.array([_num(r["estimate"]) for r in ok])
        se = np.array([_num(r["se"]) for r in ok])
        cov = np.array([_num(r["covered"]) for r in ok])
        ep = np.array([_num(r["ep"]) for r in ok])
        ep = ep[np.isfinite(ep)]
        k = est.size
        row = {"experiment": g[0]["experiment"], "dgp": g[0]["dgp"], "scheme": key[0],
               "n": key[1], "n_ok": k, "n_failed": len(g) - k, "psi_true": psi_true}
        if k:
            err = est - psi_true
            row.update(mean_estimate=float(est.mean()), bias=float(err.mean()),
                       sd=float(est.std(ddof=1)) if k > 1 else math.nan,
                       rmse=float(np.sqrt(np.mean(err**2))), mean_se=float(se.mean()),
                       coverage=float(cov.mean()))
        else:
            row.update(mean_estimate=math.nan, bias=math.nan, sd=math.nan, rmse=math.nan,
                       mean_se=math.nan, coverage=math.nan)
        row["ep_mean"] = float(ep.mean()) if ep.size else math.nan
        row["ep_var"] = float(ep.var(ddof=1)) if ep.size > 1 else math.nan
        out.append(row)
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for c in SUMMARY_COLUMNS[3:]:
            r[c] = _num(r[c]) if c not in ("n", "n_ok", "n_failed") else int(r[c])
    return rows


def resolve_truth(rows, truth=None, config_path=None, estimand="ate"):
    """Truth from an explicit value, else from the run's config.json, else from the dgp tag."""
    if truth is not None:
        return float(truth)
    params = {}
    if config_path and os.path.exists(config_path):
        with open(config_path) as fh:
            cfg = json.load(fh)
        estimand = cfg.get("estimand", estimand)
        params = cfg.get("dgp_params", {})
    dgps = {r["dgp"] for r in rows}
    if len(dgps) != 1:
        raise ValueError(f"results mix designs {sorted(dgps)}; pass an explicit truth")
    try:
        return true_psi(dgps.pop(), estimand, **params)
    except ValueError as exc:
        raise ValueError(f"no oracle value available: {exc}") from None


def summarize(results_path, out_path=None, truth=None, estimand="ate", config_path=None) -> str:
    rows = read_results(results_path)
    if not rows:
        raise ValueError(f"{results_path}: no result rows")
    if config_path is None:
        config_path = os.path.join(os.path.dirname(os.path.abspath(results_path)), "config.json")
    psi = resolve_truth(rows, truth, config_path, estimand)
    summary = summarize_rows(rows, psi)
    out_path = out_path or os.path.join(os.path.dirname(os.path.abspath(results_path)),
                                        "summary.csv")
    write_summary(summary, out_path)
    return out_path
