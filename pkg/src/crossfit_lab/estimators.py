"""Doubly-robust one-step estimation with cross-fitting, and variance estimators.

The per-unit score for the counterfactual mean at arm ``a`` is

    m(a, L) + 1{A = a} / g(a | L) * (Y - m(A, L))

and the ATE score is the arm-1 score minus the arm-0 score.  The estimate is
the mean of the scores.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dependence import (DependenceStructure, Independent, NetworkAdjacency, ObservationTable,
                         OneWayClustered, TimeSeriesMDependent, TwoWayClustered)
from .learners import CLIP_EPS, FittedModel, LearnerSpec, fit, predict
from .splitters import SplitPlan

ESTIMANDS = ("ate", "cm0", "cm1")
VARIANCE_METHODS = ("iid", "cluster_robust", "network_hac", "ts_lag_window")
OUTCOME_MODES = ("joint", "per_arm")
Z95 = 1.96
ORACLE = "oracle"


class FoldError(RuntimeError):
    """A nuisance fit or prediction failed inside one fold."""

    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.cause = cause


class VarianceWarning(UserWarning):
    pass


def _estimand(target):
    if target in (0, 1) and not isinstance(target, bool):
        return f"cm{int(target)}"
    if target not in ESTIMANDS:
        raise ValueError(f"estimand must be one of {ESTIMANDS} or an arm 0/1, got {target!r}")
    return target


def aipw_scores(m0, m1, g1, A, Y, estimand="ate"):
    """Vectorised scores; ``g1`` must lie strictly inside (0, 1)."""
    estimand = _estimand(estimand)
    m0, m1, g1 = (np.asarray(v, dtype=float) for v in (m0, m1, g1))
    A, Y = np.asarray(A), np.asarray(Y, dtype=float)
    if np.any(~(g1 > 0) | ~(g1 < 1)):
        raise ValueError("propensity values must lie strictly inside (0, 1)")
    resid = Y - np.where(A == 1, m1, m0)
    s1 = m1 + (A == 1) / g1 * resid
    s0 = m0 + (A == 0) / (1 - g1) * resid
    if estimand == "cm1":
        return s1
    if estimand == "cm0":
        return s0
    return s1 - s0


def aipw_score(target, m0, m1, g1, a, y) -> float:
    """Score of one unit for arm ``target`` (0 or 1) or ``"ate"``."""
    return float(aipw_scores([m0], [m1], [g1], [a], [y], target)[0])


# --------------------------------------------------------------------- nuisances

@dataclass(frozen=True, eq=False)
class NuisancePair:
    """Fitted outcome regression(s) and propensity model.

    ``outcome`` is one model on ``[L, A]`` in joint mode, or a pair
    ``(model_arm0, model_arm1)`` in per-arm mode.
    """

    outcome: object
    propensity: FittedModel
    outcome_mode: str = "joint"

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.outcome_mode == "joint":
            n = X.shape[0]
            m0 = predict(self.outcome, np.column_stack([X, np.zeros(n)]))
            m1 = predict(self.outcome, np.column_stack([X, np.ones(n)]))
        else:
            m0 = predict(self.outcome[0], X)
            m1 = predict(self.outcome[1], X)
        g1 = predict(self.propensity, X)
        return m0, m1, g1

    def summary(self) -> dict:
        out = self.outcome if self.outcome_mode == "joint" else self.outcome[0]
        return {"outcome": out.kind, "propensity": self.propensity.kind,
                "outcome_mode": self.outcome_mode}


def fit_nuisances(X, A, Y, outcome_spec: LearnerSpec, propensity_spec: LearnerSpec,
                  outcome_mode="joint") -> NuisancePair:
    if outcome_mode not in OUTCOME_MODES:
        raise ValueError(f"outcome_mode must be one of {OUTCOME_MODES}")
    g = fit(propensity_spec, X, A, "binary")
    if outcome_mode == "joint":
        m = fit(outcome_spec, np.column_stack([X, A]), Y, "regression")
    else:
        arms = []
        for a in (0, 1):
            rows = A == a
            if rows.sum() < 2:
                raise ValueError(f"fewer than 2 training units in arm {a}")
            arms.append(fit(outcome_spec, X[rows], Y[rows], "regression"))
        m = tuple(arms)
    return NuisancePair(m, g, outcome_mode)


def _nuisance_values(pair, X, oracle, idx, outcome_spec, propensity_spec):
    """(m0, m1, g1) on rows ``idx``; either side may come from the oracle."""
    if pair is not None:
        m0, m1, g1 = pair.predict(X)
    else:
        m0 = m1 = g1 = None
    if outcome_spec == ORACLE:
        m0, m1 = oracle.m0[idx], oracle.m1[idx]
    if propensity_spec == ORACLE:
        g1 = np.clip(oracle.g1[idx], CLIP_EPS, 1 - CLIP_EPS)
    return m0, m1, g1


def _fit_side(X, A, Y, outcome_spec, propensity_spec, outcome_mode):
    if outcome_spec == ORACLE and propensity_spec == ORACLE:
        return None
    # an oracle side still needs a placeholder model; use the other side's spec
    o_spec = propensity_spec if outcome_spec == ORACLE else outcome_spec
    p_spec = LearnerSpec("logistic_glm") if propensity_spec == ORACLE else propensity_spec
    if o_spec.kind == "logistic_glm":
        o_spec = LearnerSpec("linear_glm")
    return fit_nuisances(X, A, Y, o_spec, p_spec, outcome_mode)


def _check_specs(outcome_spec, propensity_spec, oracle):
    for s in (outcome_spec, propensity_spec):
        if s != ORACLE and not isinstance(s, LearnerSpec):
            raise TypeError(f"nuisance spec must be a LearnerSpec or {ORACLE!r}, got {s!r}")
    if ORACLE in (outcome_spec, propensity_spec) and oracle is None:
        raise ValueError("oracle nuisances requested but no oracle supplied")


# --------------------------------------------------------------------- variance

def _centered(scores):
    s = np.asarray(scores, dtype=float)
    return s - s.mean()


def _pair_sum(s, structure: DependenceStructure, method: str) -> float:
    """Sum of s_i s_j over ordered pairs that are correlated or equal."""
    if method == "iid":
        return float(s @ s)
    if method == "cluster_robust":
        if isinstance(structure, OneWayClustered):
            return float(np.sum(np.bincount(structure.codes, weights=s) ** 2))
        rows = np.bincount(structure.row_codes, weights=s)
        cols = np.bincount(structure.col_codes, weights=s)
        cells = np.bincount(structure.cell_codes, weights=s)
        return float(rows @ rows + cols @ cols - cells @ cells)
    if method == "network_hac":
        return float(s @ s + s @ (structure.adjacency() @ s))
    if method == "ts_lag_window":
        total = float(s @ s)
        for lag in range(1, min(structure.m, s.size - 1) + 1):
            total += 2.0 * float(s[:-lag] @ s[lag:])
        return total
    raise ValueError(f"unknown variance method {method!r}")


_COMPATIBLE = {
    "iid": (DependenceStructure,),
    "cluster_robust": (OneWayClustered, TwoWayClustered),
    "network_hac": (NetworkAdjacency,),
    "ts_lag_window": (TimeSeriesMDependent,),
}


def check_variance_method(method, structure):
    if method not in VARIANCE_METHODS:
        raise ValueError(f"variance method must be one of {VARIANCE_METHODS}")
    if not isinstance(structure, _COMPATIBLE[method]):
        raise ValueError(f"variance method {method!r} does not apply to "
                         f"{type(structure).__name__}")


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2: float
    se: float
    method: str
    clamped: bool = False


def variance(scores, structure: DependenceStructure | None = None, method="iid") -> VarianceEstimate:
    """Long-run variance of the scores and SE of their mean.

    sigma2 = sum over correlated-or-equal ordered pairs of centred products,
    divided by ``n - 1``; SE = sqrt(sigma2 / n).  ``iid`` is the sample
    variance.  Non-positive dependence-aware values fall back to ``iid`` and
    set ``clamped``; a degenerate sample is floored at the smallest positive
    float so that SE stays positive.
    """
    s = _centered(scores)
    n = s.size
    if n < 2:
        raise ValueError("variance needs at least 2 scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite scores")
    structure = Independent(n) if structure is None else structure
    if structure.n != n:
        raise ValueError(f"structure describes {structure.n} units, scores have {n}")
    check_variance_method(method, structure)
    sigma2 = _pair_sum(s, structure, method) / (n - 1)
    clamped = False
    if not sigma2 > 0:
        clamped = True
        warnings.warn(f"{method} variance {sigma2:.3g} is not positive; using iid", VarianceWarning,
                      stacklevel=2)
        sigma2 = float(s @ s) / (n - 1)
        if not sigma2 > 0:
            sigma2 = np.finfo(float).tiny
    return VarianceEstimate(sigma2, math.sqrt(sigma2 / n), method, clamped)


# --------------------------------------------------------------------- results

@dataclass(frozen=True, eq=False)
class ScoreVector:
    values: np.ndarray
    index: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.index.shape:
            raise ValueError("scores and index must align")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite scores")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class EstimateResult:
    estimand: str
    estimate: float
    sigma2: float
    se: float
    ci_low: float
    ci_high: float
    variance_method: str
    n: int
    clamped: bool = False
    folds: tuple = ()
    nuisances: tuple = field(default=(), repr=False)

    def covers(self, truth: float) -> bool:
        return self.ci_low <= truth <= self.ci_high

    def to_dict(self) -> dict:
        return {"estimand": self.estimand, "estimate": self.estimate, "sigma2": self.sigma2,
                "se": self.se, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "variance_method": self.variance_method, "n": self.n, "clamped": self.clamped,
                "folds": list(self.folds)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, EstimateResult) and self.to_dict() == other.to_dict()

    __hash__ = None


def _result(estimand, scores, structure, method, folds, nuisances=()):
    v = variance(scores, structure, method)
    psi = float(np.mean(scores))
    return EstimateResult(estimand, psi, v.sigma2, v.se, psi - Z95 * v.se, psi + Z95 * v.se,
                          method, int(np.size(scores)), v.clamped, tuple(folds), tuple(nuisances))


def crossfit_estimate(table: ObservationTable, structure: DependenceStructure, plan: SplitPlan,
                      outcome_spec, propensity_spec, estimand="ate", variance_method="iid",
                      outcome_mode="joint", oracle=None, keep_models=False):
    """Cross-fitted one-step estimate; returns ``(EstimateResult, ScoreVector)``.

    Either nuisance spec may be ``"oracle"`` to inject the true function from
    ``oracle`` (an object with per-unit ``m0``, ``m1``, ``g1`` arrays).
    """
    estimand = _estimand(estimand)
    _check_specs(outcome_spec, propensity_spec, oracle)
    n = table.n
    if plan.n != n:
        raise ValueError(f"split plan covers {plan.n} units but the table has {n}")
    if structure.n != n:
        raise ValueError(f"structure describes {structure.n} units but the table has {n}")
    check_variance_method(variance_method, structure)
    X, A, Y = table.covariates, table.treatment, table.outcome
    scores = np.full(n, np.nan)
    folds, pairs = [], []
    for f, fold in enumerate(plan.folds):
        if fold.train.size == 0:
            raise FoldError(f, ValueError("empty training set"))
        tr, ev = fold.train, fold.eval
        try:
            pair = _fit_side(X[tr], A[tr], Y[tr], outcome_spec, propensity_spec, outcome_mode)
            m0, m1, g1 = _nuisance_values(pair, X[ev], oracle, ev, outcome_spec, propensity_spec)
            scores[ev] = aipw_scores(m0, m1, g1, A[ev], Y[ev], estimand)
        except Exception as exc:
            raise FoldError(f, exc) from exc
        folds.append({"fold": f, "n_train": int(tr.size), "n_eval": int(ev.size),
                      **(pair.summary() if pair is not None else {"outcome": ORACLE,
                                                                  "propensity": ORACLE})})
        if keep_models:
            pairs.append(pair)
    if np.isnan(scores).any():
        raise ValueError("split plan left some units unscored")
    sv = ScoreVector(scores, np.arange(n))
    return _result(estimand, scores, structure, variance_method, folds, pairs), sv


def nocrossfit_estimate(table: ObservationTable, outcome_spec, propensity_spec, estimand="ate",
                        variance_method="iid", structure=None, outcome_mode="joint",
                        oracle=None, keep_models=False):
    """Nuisances fitted on all rows and scored on the same rows."""
    estimand = _estimand(estimand)
    _check_specs(outcome_spec, propensity_spec, oracle)
    n = table.n
    if n < 2:
        raise ValueError("need at least 2 units")
    structure = Independent(n) if structure is None else structure
    if structure.n != n:
        raise ValueError(f"structure describes {structure.n} units but the table has {n}")
    check_variance_method(variance_method, structure)
    X, A, Y = table.covariates, table.treatment, table.outcome
    idx = np.arange(n)
    pair = _fit_side(X, A, Y, outcome_spec, propensity_spec, outcome_mode)
    m0, m1, g1 = _nuisance_values(pair, X, oracle, idx, outcome_spec, propensity_spec)
    scores = aipw_scores(m0, m1, g1, A, Y, estimand)
    info = {"fold": 0, "n_train": n, "n_eval": n,
            **(pair.summary() if pair is not None else {"outcome": ORACLE, "propensity": ORACLE})}
    res = _result(estimand, scores, structure, variance_method, [info],
                  [pair] if keep_models else [])
    return res, ScoreVector(scores, idx)
