"""Empirical-process term of the one-step estimator, measured by simulation.

For nuisances fitted on ``S1`` and scores taken on ``S2``,

    EP = mean_{S2}(f_hat - f_0) - P(f_hat - f_0)

where ``P(f_hat - f_0)`` is estimated on a fresh oracle sample from the same
design.  ``ep_suite`` repeats this over sizes and replicates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import ordered_map
from .dependence import DependenceStructure
from .dgp import generate, oracle_sample, oracle_scores
from .estimators import ORACLE, _estimand, _fit_side, _nuisance_values, aipw_scores
from .learners import LearnerSpec
from .splitters import as_independent_split, network_lno_split, nlo_split, sample_split

RN_CONVENTION = "sqrt_n"


def default_n_oracle(n: int) -> int:
    return max(100_000, 20 * int(n))


def ep_term(fitted, oracle, mu_delta: float, n_oracle: int | None = None) -> float:
    """``mean(fitted - oracle) - mu_delta`` over the evaluation set.

    ``n_oracle`` is the size of the sample behind ``mu_delta``; it must be at
    least ten times the evaluation set.  Swap the two score vectors (and negate
    ``mu_delta``) for the opposite sign convention.
    """
    fitted = np.asarray(fitted, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    if fitted.shape != oracle.shape or fitted.ndim != 1 or fitted.size == 0:
        raise ValueError("fitted and oracle scores must be aligned non-empty vectors")
    if n_oracle is not None and n_oracle < 10 * fitted.size:
        raise ValueError(f"oracle sample of {n_oracle} is smaller than 10 x |S2| = "
                         f"{10 * fitted.size}")
    return float(np.mean(fitted - oracle) - mu_delta)


def variance_bound(structure: DependenceStructure, n: int, v: float) -> float:
    """Bound on Var(mean of n scores) when each score has variance at most ``v``."""
    if v < 0:
        raise ValueError("v must be non-negative")
    if structure.n != n:
        raise ValueError(f"structure describes {structure.n} units, not {n}")
    return (2 * structure.correlated_pairs() + n) / n**2 * v


def _bound_from_pairs(pairs, n, v):
    return (2 * pairs + n) / n**2 * v


def _fit_on(ds, rows, outcome_spec, propensity_spec, outcome_mode):
    t = ds.table
    return _fit_side(t.covariates[rows], t.treatment[rows], t.outcome[rows],
                     outcome_spec, propensity_spec, outcome_mode)


def _fitted_scores(pair, ds, rows, outcome_spec, propensity_spec, estimand):
    t = ds.table
    m0, m1, g1 = _nuisance_values(pair, t.covariates[rows], ds.oracle, rows,
                                  outcome_spec, propensity_spec)
    return aipw_scores(m0, m1, g1, t.treatment[rows], t.outcome[rows], estimand)


def _oracle_scores_clipped(ds, rows, estimand):
    # an injected oracle is clipped like every learner; use the same values for f_0
    return _fitted_scores(None, ds, rows, ORACLE, ORACLE, estimand)


def _first_fold(scheme, ds, k, seed, gap):
    n = ds.n
    if scheme == "as_independent":
        return sample_split(n, k, seed)
    if scheme == "network_lno":
        f = network_lno_split(ds.structure, n, k, seed).folds[0]
    elif scheme == "nlo":
        f = nlo_split(n, k, gap, seed).folds[0]
    elif scheme == "as_independent_kfold":
        f = as_independent_split(n, k, seed).folds[0]
    else:
        raise ValueError(f"scheme {scheme!r} is not supported by ep_suite")
    return np.asarray(f.train), np.asarray(f.eval)


@dataclass(frozen=True)
class _EPTask:
    dgp: str
    dgp_params: tuple
    size: object
    size_index: int
    replicate: int
    seed: int
    scheme: str
    k: int
    gap: int
    outcome_spec: object
    propensity_spec: object
    outcome_mode: str
    estimand: str
    n_oracle: int | None


def _child_seeds(seed, size_index, replicate):
    ss = np.random.SeedSequence(seed, spawn_key=(size_index, replicate))
    data, split, orc = ss.spawn(3)
    return data, int(split.generate_state(1)[0]), orc


def _ep_replicate(task: _EPTask):
    params = dict(task.dgp_params)
    data_seed, split_seed, oracle_seed = _child_seeds(task.seed, task.size_index, task.replicate)
    try:
        ds = generate(task.dgp, task.size, data_seed, **params)
        s1, s2 = _first_fold(task.scheme, ds, task.k, split_seed, task.gap)
        n_orc = task.n_oracle or default_n_oracle(ds.n)
        if task.dgp == "timeseries":
            params.setdefault("window", ds.params["window"])
        pair = _fit_on(ds, s1, task.outcome_spec, task.propensity_spec, task.outcome_mode)
        f_hat = _fitted_scores(pair, ds, s2, task.outcome_spec, task.propensity_spec, task.estimand)
        f_0 = _oracle_scores_clipped(ds, s2, task.estimand)
        big = oracle_sample(task.dgp, n_orc, oracle_seed, **params)
        all_rows = np.arange(big.n)
        d_big = (_fitted_scores(pair, big, all_rows, task.outcome_spec, task.propensity_spec,
                                task.estimand)
                 - _oracle_scores_clipped(big, all_rows, task.estimand))
        ep = ep_term(f_hat, f_0, float(d_big.mean()), big.n)
    except Exception as exc:
        raise RuntimeError(f"size {task.size} replicate {task.replicate}: "
                           f"{type(exc).__name__}: {exc}") from exc
    delta = f_hat - f_0
    return {
        "size": ds.n, "replicate": task.replicate, "ep": ep, "ep_scaled": math.sqrt(ds.n) * ep,
        "n_oracle": big.n, "n_eval": int(s2.size),
        "pairs_eval": int(ds.structure.pairs_within(s2)),
        "pairs_total": int(ds.structure.correlated_pairs()),
        "delta_var": float(np.var(delta, ddof=1)) if delta.size > 1 else 0.0,
    }


@dataclass
class EPReport:
    dgp: str
    scheme: str
    sizes: list
    replicates: int
    records: list
    summaries: list = field(default_factory=list)
    slope: float | None = None
    slope_defined: bool = False
    rn: str = RN_CONVENTION

    @classmethod
    def from_records(cls, dgp, scheme, sizes, replicates, records):
        rep = cls(dgp, scheme, list(sizes), replicates, list(records))
        rep._summarise()
        return rep

    def _summarise(self):
        by = {}
        for r in self.records:
            by.setdefault(r["size"], []).append(r)
        self.summaries = []
        for n in sorted(by):
            rows = by[n]
            ep = np.array([r["ep"] for r in rows])
            sc = np.array([r["ep_scaled"] for r in rows])
            R = ep.size
            var = float(np.var(ep, ddof=1)) if R > 1 else math.nan
            n_eval = float(np.mean([r["n_eval"] for r in rows]))
            pairs = float(np.mean([r["pairs_eval"] for r in rows]))
            v = max(r["delta_var"] for r in rows)
            self.summaries.append({
                "size": n, "replicates": R, "mean": float(ep.mean()),
                "se_mean": math.sqrt(var / R) if R > 1 else math.nan,
                "var": var, "var_scaled": float(np.var(sc, ddof=1)) if R > 1 else math.nan,
                "mean_negated": -float(ep.mean()),
                "pairs_eval": pairs, "pairs_total": float(np.mean([r["pairs_total"] for r in rows])),
                "n_eval": n_eval, "max_delta_var": v,
                "variance_bound": _bound_from_pairs(pairs, n_eval, v),
            })
        var = np.array([s["var"] for s in self.summaries])
        ns = np.array([s["size"] for s in self.summaries], dtype=float)
        if len(self.summaries) >= 3 and np.all(np.isfinite(var)) and np.all(var > 0):
            self.slope = float(np.polyfit(np.log(ns), np.log(var), 1)[0])
            self.slope_defined = True
        else:
            self.slope, self.slope_defined = None, False

    def to_dict(self):
        return {"dgp": self.dgp, "scheme": self.scheme, "sizes": self.sizes,
                "replicates": self.replicates, "rn": self.rn, "slope": self.slope,
                "slope_defined": self.slope_defined, "summaries": self.summaries}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "replicate", "ep", "ep_scaled", "n_oracle"])
            for r in sorted(self.records, key=lambda r: (r["size"], r["replicate"])):
                w.writerow([r["size"], r["replicate"], repr(r["ep"]), repr(r["ep_scaled"]),
                            r["n_oracle"]])


def _as_spec(s):
    if s == ORACLE or isinstance(s, LearnerSpec):
        return s
    if isinstance(s, str):
        return LearnerSpec(s)
    return LearnerSpec.from_dict(dict(s))


def ep_suite(dgp: str, sizes, replicates: int, outcome_spec, propensity_spec,
             scheme="as_independent", n_oracle=None, seed=0, estimand="ate", k=2, gap=None,
             outcome_mode="joint", dgp_params=None, workers=1) -> EPReport:
    """Monte Carlo distribution of EP over ``sizes`` x ``replicates``.

    Learner specs may be ``"oracle"`` to inject the true nuisances.
    """
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be non-empty")
    if any(np.prod(b) <= np.prod(a) for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    estimand = _estimand(estimand)
    params = dict(dgp_params or {})
    if gap is None:
        gap = params.get("m", 4)
    tasks = [
        _EPTask(dgp, tuple(sorted(params.items())), size, si, r, int(seed), scheme, k, int(gap),
                _as_spec(outcome_spec), _as_spec(propensity_spec), outcome_mode, estimand,
                n_oracle)
        for si, size in enumerate(sizes) for r in range(replicates)
    ]
    records = ordered_map(_ep_replicate, tasks, workers)
    return EPReport.from_records(dgp, scheme, sizes, replicates, records)


__all__ = ["EPReport", "default_n_oracle", "ep_suite", "ep_term", "variance_bound",
           "oracle_scores"]
