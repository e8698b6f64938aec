"""Nuisance learners behind one ``fit`` / ``predict`` interface.

Kinds:

``linear_glm``
    ridge least squares (binary targets give a clipped linear probability model)
``logistic_glm``
    ridge logistic regression fitted by IRLS; binary targets only
``boosted_trees``
    gradient boosting with depth-limited trees, squared or logistic loss
``mars_lite``
    hinge-basis regression splines with GCV pruning; for binary targets the
    selected basis is refitted by ridge logistic IRLS (unit penalty by default)
``interpolator_1nn``
    memorises the training set and returns the nearest training label
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import expit

from . import boosting, glm, mars
from .glm import ConvergenceError
from .nn import NearestNeighbour

CLIP_EPS = 0.01
KINDS = ("linear_glm", "logistic_glm", "boosted_trees", "mars_lite", "interpolator_1nn")
TASKS = ("regression", "binary")
# the logistic refit on a selected hinge basis separates easily on small
# training folds; unit shrinkage keeps its probabilities off the clip bounds
DEFAULT_RIDGE = {"mars_lite": 1.0}

__all__ = [
    "CLIP_EPS", "KINDS", "ConvergenceError", "FittedModel", "LearnerSpec",
    "build_lagged_features", "fit", "lag_window", "predict",
]


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    max_terms: int = 20
    max_degree: int = 1
    ridge: float | None = None  # None picks the per-kind default
    max_iter: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.ridge is None:
            object.__setattr__(self, "ridge", DEFAULT_RIDGE.get(self.kind, 1e-6))
        for name in ("rounds", "max_depth", "max_terms", "max_degree", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.ridge < 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("penalties must be non-negative")

    @classmethod
    def from_dict(cls, doc) -> "LearnerSpec":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown learner parameters: {sorted(extra)}")
        return cls(**doc)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: str
    task: str
    n_features: int
    params: dict = field(default_factory=dict)
    trace: tuple = ()

    def raw_predict(self, X):
        p = self.params
        if self.kind == "linear_glm":
            return p["intercept"] + X @ p["coef"]
        if self.kind == "logistic_glm":
            return expit(p["coef"][0] + X @ p["coef"][1:])
        if self.kind == "boosted_trees":
            F = boosting.ensemble_margin(p["base"], p["trees"], X, p.get("packed"))
            return expit(F) if self.task == "binary" else F
        if self.kind == "mars_lite":
            B = mars.basis_matrix(X, p["terms"])
            if self.task == "binary":
                return expit(p["coef"][0] + B[:, 1:] @ p["coef"][1:])
            return B @ p["coef"]
        if self.kind == "interpolator_1nn":
            return p["memory"].predict(X)
        raise AssertionError(self.kind)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, boosting.Tree):
                return v.to_dict()
            if isinstance(v, NearestNeighbour):
                return {"X": v.X.tolist(), "y": v.y.tolist()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            if isinstance(v, np.generic):
                return v.item()
            return v
        return {"kind": self.kind, "task": self.task, "n_features": self.n_features,
                "params": {k: enc(v) for k, v in self.params.items() if k != "packed"}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_xy(X, y, task):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be n x p and y length n")
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise ValueError("need at least 2 rows and 1 column to fit")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    if task == "binary" and not np.all((y == 0) | (y == 1)):
        raise ValueError("binary task needs 0/1 targets")
    return X, y


def fit(spec: LearnerSpec, X, y, task: str = "regression") -> FittedModel:
    """Fit ``spec`` on ``(X, y)``.  Deterministic in its inputs."""
    X, y = _check_xy(X, y, task)
    p = X.shape[1]
    binary = task == "binary"
    if spec.kind == "logistic_glm" and not binary:
        raise ValueError("logistic_glm only fits binary targets")

    if spec.kind == "linear_glm":
        b0, b = glm.ridge_coefficients(X, y, spec.ridge)
        return FittedModel(spec.kind, task, p, {"intercept": float(b0), "coef": b})

    if spec.kind == "logistic_glm":
        coef, hist = glm.irls_logistic(X, y, spec.ridge, spec.max_iter)
        return FittedModel(spec.kind, task, p, {"coef": coef}, tuple(hist))

    if spec.kind == "boosted_trees":
        base, trees, hist = boosting.boost(
            X, y, binary, rounds=spec.rounds, max_depth=spec.max_depth,
            learning_rate=spec.learning_rate, reg_lambda=spec.reg_lambda,
            min_child_weight=spec.min_child_weight)
        return FittedModel(spec.kind, task, p,
                           {"base": base, "trees": trees, "packed": boosting.pack(trees)},
                           tuple(hist))

    if spec.kind == "mars_lite":
        terms = mars.fit_mars(X, y, max_terms=spec.max_terms, max_degree=spec.max_degree)
        B = mars.basis_matrix(X, terms)
        if binary:
            if B.shape[1] > 1:
                coef, _ = glm.irls_logistic(B[:, 1:], y, spec.ridge, spec.max_iter)
            else:
                ybar = np.clip(y.mean(), CLIP_EPS, 1 - CLIP_EPS)
                coef = np.array([np.log(ybar / (1 - ybar))])
        else:
            coef, *_ = np.linalg.lstsq(B, y, rcond=None)
        return FittedModel(spec.kind, task, p, {"terms": terms, "coef": coef})

    if spec.kind == "interpolator_1nn":
        return FittedModel(spec.kind, task, p, {"memory": NearestNeighbour(X, y)})

    raise AssertionError(spec.kind)


def predict(model: FittedModel, X) -> np.ndarray:
    """Predictions on ``X``; binary-task outputs are clipped to ``[0.01, 0.99]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"model was fitted on {model.n_features} columns, got {X.shape[1]}")
    out = np.asarray(model.raw_predict(X), dtype=float)
    if model.task == "binary":
        out = np.clip(out, CLIP_EPS, 1 - CLIP_EPS)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{model.kind} produced non-finite predictions")
    return out


def lag_window(T: int) -> int:
    """``ceil(T ** (1/3))``, computed exactly for perfect cubes."""
    w = max(1, math.ceil(round(T ** (1.0 / 3.0), 12)))
    while (w - 1) ** 3 >= T:
        w -= 1
    while w ** 3 < T:
        w += 1
    return w


def build_lagged_features(series, window: int | None = None) -> np.ndarray:
    """Stack lags ``1..w`` of each column; row ``r`` describes time ``w + r``.

    Column order is lag-major: all covariates at lag 1, then at lag 2, ...
    """
    Z = np.asarray(series, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    T = Z.shape[0]
    w = lag_window(T) if window is None else int(window)
    if w < 1 or T <= w:
        raise ValueError(f"need T > w >= 1, got T={T}, w={w}")
    return np.hstack([Z[w - lag:T - lag] for lag in range(1, w + 1)])
