"""Monte Carlo runs: one results row per (scheme, size, replicate)."""

from __future__ import annotations

import csv
import os
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .._parallel import ordered_map
from ..diagnostics import default_n_oracle
from ..dgp import generate, oracle_sample, true_psi
from ..estimators import (ORACLE, VarianceWarning, aipw_scores, crossfit_estimate,
                          nocrossfit_estimate)
from ..learners import CLIP_EPS
from ..splitters import as_independent_split, network_lno_split, nlo_split, two_way_split
from .config import ExperimentConfig

RESULT_COLUMNS = ("experiment", "dgp", "scheme", "n", "replicate", "estimate", "se", "ci_low",
                  "ci_high", "covered", "ep", "runtime_ms", "error")


@dataclass(frozen=True)
class Task:
    scheme_index: int
    size_index: int
    replicate: int


def task_seeds(master: int, task: Task):
    """Counter-mode child seeds.

    The data and oracle-sample streams are keyed by (size, replicate), so every
    scheme sees the same draws; the split stream is keyed by
    (scheme, size, replicate).
    """
    data_ss, oracle_ss = np.random.SeedSequence(
        master, spawn_key=(task.size_index, task.replicate)).spawn(2)
    split_ss = np.random.SeedSequence(
        master, spawn_key=(task.scheme_index, task.size_index, task.replicate))
    return data_ss, int(split_ss.generate_state(1)[0]), oracle_ss


def make_plan(scheme, ds, seed, default_gap):
    n = ds.n
    if scheme.name == "as_independent":
        return as_independent_split(n, scheme.folds(), seed)
    if scheme.name == "two_way":
        s = ds.structure
        return two_way_split(s.row_codes, s.col_codes, scheme.folds(), seed)
    if scheme.name == "network_lno":
        return network_lno_split(ds.structure, n, scheme.folds(), seed)
    if scheme.name == "nlo":
        gap = default_gap if scheme.gap is None else scheme.gap
        return nlo_split(n, scheme.folds(), gap, seed)
    raise ValueError(f"scheme {scheme.name!r} has no split plan")


def _ep_value(cfg, ds, result, scores, plan, oracle_ss):
    """EP of the pooled fitted scores, with each fold's population mean from an oracle sample."""
    params = dict(cfg.dgp_params)
    if cfg.dgp == "timeseries":
        params.setdefault("window", ds.params["window"])
    n_orc = cfg.n_oracle or default_n_oracle(ds.n)
    big = oracle_sample(cfg.dgp, n_orc, oracle_ss, **params)
    bt, bo = big.table, big.oracle
    o, t = ds.oracle, ds.table
    f0 = aipw_scores(o.m0, o.m1, np.clip(o.g1, CLIP_EPS, 1 - CLIP_EPS), t.treatment, t.outcome,
                     cfg.estimand)
    f0_big = aipw_scores(bo.m0, bo.m1, np.clip(bo.g1, CLIP_EPS, 1 - CLIP_EPS), bt.treatment,
                         bt.outcome, cfg.estimand)
    o_spec, p_spec = cfg.learner_spec("outcome"), cfg.learner_spec("propensity")
    evals = [f.eval for f in plan.folds] if plan is not None else [np.arange(ds.n)]
    mu = 0.0
    for ev, pair in zip(evals, result.nuisances):
        if pair is None:
            continue  # both sides injected: the fold contributes nothing
        m0, m1, g1 = pair.predict(bt.covariates)
        if o_spec == ORACLE:
            m0, m1 = bo.m0, bo.m1
        if p_spec == ORACLE:
            g1 = np.clip(bo.g1, CLIP_EPS, 1 - CLIP_EPS)
        f_big = aipw_scores(m0, m1, g1, bt.treatment, bt.outcome, cfg.estimand)
        mu += ev.size / ds.n * float(np.mean(f_big - f0_big))
    return float(np.mean(scores - f0)) - mu


def _estimate_row(cfg, task, scheme, size):
    data_ss, split_seed, oracle_ss = task_seeds(cfg.seed, task)
    ds = generate(cfg.dgp, size, data_ss, **cfg.dgp_params)
    o_spec, p_spec = cfg.learner_spec("outcome"), cfg.learner_spec("propensity")
    common = dict(estimand=cfg.estimand, variance_method=cfg.variance_method,
                  outcome_mode=cfg.outcome_mode, oracle=ds.oracle, keep_models=cfg.compute_ep)
    if scheme.name == "nocrossfit":
        plan = None
        res, scores = nocrossfit_estimate(ds.table, o_spec, p_spec, structure=ds.structure,
                                          **common)
    else:
        plan = make_plan(scheme, ds, split_seed, ds.params.get("m", 4))
        res, scores = crossfit_estimate(ds.table, ds.structure, plan, o_spec, p_spec, **common)
    truth = true_psi(cfg.dgp, cfg.estimand, **cfg.dgp_params)
    out = {"estimate": res.estimate, "se": res.se, "ci_low": res.ci_low, "ci_high": res.ci_high,
           "covered": int(res.covers(truth))}
    if cfg.compute_ep:
        out["ep"] = _ep_value(cfg, ds, res, scores.values, plan, oracle_ss)
    return out


def run_task(cfg: ExperimentConfig, task: Task) -> dict:
    scheme = cfg.schemes[task.scheme_index]
    size = cfg.sizes[task.size_index]
    row = {"experiment": cfg.name, "dgp": cfg.dgp, "scheme": scheme.tag,
           "n": cfg.size_label(size), "replicate": task.replicate}
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # clamped variances are expected at small sizes; the row still completes
            warnings.simplefilter("ignore", VarianceWarning)
            row.update(_estimate_row(cfg, task, scheme, size))
    except Exception as exc:  # recorded as an error row; the run continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    if cfg.record_runtime:
        row["runtime_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    return row


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _task_runner(args):
    cfg, task = args
    return run_task(cfg, task)


def tasks_for(cfg: ExperimentConfig):
    return [Task(si, zi, r) for si in range(len(cfg.schemes))
            for zi in range(len(cfg.sizes)) for r in range(cfg.replicates)]


def run(cfg: ExperimentConfig, workers: int | None = None, output_dir=None) -> str:
    """Execute every task and write ``results.csv`` plus the resolved ``config.json``.

    Rows come out in (scheme, size, replicate) order whatever the worker count.
    """
    workers = cfg.workers if workers is None else workers
    out = output_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    tasks = tasks_for(cfg)
    rows = ordered_map(_task_runner, [(cfg, t) for t in tasks], workers,
                       chunksize=max(1, len(tasks) // (8 * max(1, workers))))
    path = os.path.join(out, "results.csv")
    write_results(rows, path)
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    return path


def write_results(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in RESULT_COLUMNS])


def read_results(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(RESULT_COLUMNS)}")
        return list(rd)
