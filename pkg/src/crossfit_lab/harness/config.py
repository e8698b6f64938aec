"""Experiment configuration: a JSON document validated with pydantic."""

from __future__ import annotations

import json
from typing import Literal, Optional, Union

from pydantic import (BaseModel, ConfigDict, Field, ValidationError, field_validator,
                      model_validator)

from ..estimators import ORACLE
from ..learners import LearnerSpec

DGP_TAGS = ("two_way", "two_way_independent", "network", "network_independent", "timeseries")
SCHEMES = ("as_independent", "two_way", "network_lno", "nlo", "nocrossfit")

# scheme -> DGP tags it can split
_SCHEME_DGPS = {
    "as_independent": DGP_TAGS,
    "nocrossfit": DGP_TAGS,
    "two_way": ("two_way",),
    "network_lno": ("network",),
    "nlo": ("timeseries",),
}
_VARIANCE_DGPS = {
    "iid": DGP_TAGS,
    "cluster_robust": ("two_way",),
    "network_hac": ("network",),
    "ts_lag_window": ("timeseries",),
}


class ConfigError(ValueError):
    """Configuration problems, one ``path: message`` line each."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SchemeConfig(_Strict):
    name: Literal["as_independent", "two_way", "network_lno", "nlo", "nocrossfit"]
    k: Optional[int] = Field(None, ge=2)
    K: Optional[int] = Field(None, ge=2)
    gap: Optional[int] = Field(None, ge=0)
    label: Optional[str] = None

    @property
    def tag(self) -> str:
        return self.label or self.name

    def folds(self) -> int:
        if self.name == "two_way":
            return self.K or 2
        return self.k or 2


class LearnerConfig(_Strict):
    kind: Literal["linear_glm", "logistic_glm", "boosted_trees", "mars_lite", "interpolator_1nn"]
    rounds: int = Field(100, ge=1)
    max_depth: int = Field(3, ge=1)
    learning_rate: float = Field(0.1, gt=0, le=1)
    reg_lambda: float = Field(1.0, ge=0)
    min_child_weight: float = Field(1.0, ge=0)
    max_terms: int = Field(20, ge=1)
    max_degree: int = Field(1, ge=1)
    ridge: float | None = Field(None, ge=0)
    max_iter: int = Field(100, ge=1)

    def spec(self) -> LearnerSpec:
        return LearnerSpec(**self.model_dump())


Learner = Union[Literal["oracle"], LearnerConfig]


class ExperimentConfig(_Strict):
    name: str = Field(min_length=1)
    dgp: Literal["two_way", "two_way_independent", "network", "network_independent", "timeseries"]
    dgp_params: dict = Field(default_factory=dict)
    sizes: list[Union[int, tuple[int, int]]] = Field(min_length=1)
    replicates: int = Field(500, ge=1)
    schemes: list[SchemeConfig] = Field(min_length=1)
    outcome_learner: Learner
    propensity_learner: Learner
    outcome_mode: Literal["joint", "per_arm"] = "joint"
    estimand: Literal["ate", "cm0", "cm1"] = "ate"
    variance_method: Literal["iid", "cluster_robust", "network_hac", "ts_lag_window"] = "iid"
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    output_dir: str = "results"
    compute_ep: bool = False
    n_oracle: Optional[int] = Field(None, ge=1)
    record_runtime: bool = False

    @field_validator("sizes")
    @classmethod
    def _sizes_positive(cls, v):
        for s in v:
            dims = s if isinstance(s, tuple) else (s,)
            if any(d < 2 for d in dims):
                raise ValueError("every size must be >= 2")
        return v

    @field_validator("dgp_params")
    @classmethod
    def _params_known(cls, v):
        allowed = {"latent_sd", "outcome_sd", "edge_prob", "m", "window"}
        extra = set(v) - allowed
        if extra:
            raise ValueError(f"unknown dgp parameters {sorted(extra)}")
        return v

    @model_validator(mode="after")
    def _compatible(self):
        for i, s in enumerate(self.schemes):
            if self.dgp not in _SCHEME_DGPS[s.name]:
                raise ValueError(f"schemes.{i}: scheme {s.name!r} does not match the "
                                 f"dependence structure of dgp {self.dgp!r}")
        if self.dgp not in _VARIANCE_DGPS[self.variance_method]:
            raise ValueError(f"variance_method {self.variance_method!r} does not apply to "
                             f"dgp {self.dgp!r}")
        tags = [s.tag for s in self.schemes]
        if len(set(tags)) != len(tags):
            raise ValueError("scheme labels must be unique (set 'label' to tell them apart)")
        for i, s in enumerate(self.sizes):
            if isinstance(s, tuple) and not self.dgp.startswith("two_way"):
                raise ValueError(f"sizes.{i}: (N, M) pairs only apply to two_way designs")
        if self.outcome_learner != ORACLE and self.outcome_learner.kind == "logistic_glm":
            raise ValueError("outcome_learner: logistic_glm needs a binary target")
        return self

    def learner_spec(self, which: str):
        v = getattr(self, f"{which}_learner")
        return ORACLE if v == ORACLE else v.spec()

    def size_label(self, size) -> int:
        """Nominal number of units for a configured size."""
        if self.dgp.startswith("two_way"):
            N, M = (size, size) if isinstance(size, int) else size
            return N * M
        return int(size)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)


_BRANCH_TAGS = ("literal[", "LearnerConfig")


def _format_errors(exc: ValidationError) -> str:
    errors = exc.errors()
    # a learner given as an object should not also be told it is not "oracle"
    objects = {e["loc"][0] for e in errors if "LearnerConfig" in e["loc"]}
    lines = []
    for e in errors:
        loc = e["loc"]
        if len(loc) == 2 and str(loc[1]).startswith("literal[") and loc[0] in objects:
            continue
        path = ".".join(str(p) for p in loc if not str(p).startswith(_BRANCH_TAGS)) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "\n".join(dict.fromkeys(lines))


def parse_config(doc: dict, **overrides) -> ExperimentConfig:
    doc = dict(doc)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>: expected a JSON object")
    return parse_config(doc, **overrides)


__all__ = ["ConfigError", "DGP_TAGS", "ExperimentConfig", "LearnerConfig", "SCHEMES",
           "SchemeConfig", "load_config", "parse_config"]
