"""Cross-fitting for dependent data: splitters, nuisance learners, one-step
estimators, simulation designs and empirical-process diagnostics."""

from .dependence import (Independent, NetworkAdjacency, ObservationTable, OneWayClustered,
                         TimeSeriesMDependent, TwoWayClustered, correlated_pairs, max_degree,
                         neighbors)
from .estimators import (EstimateResult, aipw_score, aipw_scores, crossfit_estimate,
                         nocrossfit_estimate, variance)
from .learners import LearnerSpec, fit, predict
from .splitters import (SplitPlan, as_independent_split, network_lno_split, nlo_split,
                        sample_split, two_way_split)

__version__ = "0.1.0"

__all__ = [
    "EstimateResult", "Independent", "LearnerSpec", "NetworkAdjacency", "ObservationTable",
    "OneWayClustered", "SplitPlan", "TimeSeriesMDependent", "TwoWayClustered", "aipw_score",
    "aipw_scores", "as_independent_split", "correlated_pairs", "crossfit_estimate", "fit",
    "max_degree", "neighbors", "network_lno_split", "nlo_split", "nocrossfit_estimate",
    "predict", "sample_split", "two_way_split", "variance",
]
