import json

import numpy as np
import pytest

from crossfit_lab.dependence import Independent, NetworkAdjacency, TimeSeriesMDependent
from crossfit_lab.diagnostics import EPReport, default_n_oracle, ep_suite, ep_term, variance_bound
from crossfit_lab.learners import LearnerSpec


def test_ep_identity_is_zero():
    f = np.array([0.3, 1.1, -2.0])
    assert ep_term(f, f, 0.0) == 0.0


def test_ep_constant_shift_cancels():
    f0 = np.random.default_rng(0).normal(size=50)
    assert ep_term(f0 + 0.7, f0, 0.7) == pytest.approx(0.0, abs=1e-12)


def test_ep_arithmetic():
    assert ep_term([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], 1.5) == 0.5


def test_ep_antisymmetry():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=20), rng.normal(size=20)
    assert ep_term(a, b, 0.2) == -ep_term(b, a, -0.2)


def test_ep_rejects_misaligned_and_small_oracle():
    with pytest.raises(ValueError):
        ep_term([1.0, 2.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        ep_term(np.zeros(100), np.zeros(100), 0.0, n_oracle=999)
    assert ep_term(np.zeros(100), np.zeros(100), 0.0, n_oracle=1000) == 0.0


def test_default_oracle_size():
    assert default_n_oracle(500) == 100_000
    assert default_n_oracle(10_000) == 200_000


def test_variance_bound_examples():
    assert variance_bound(Independent(100), 100, 1.0) == pytest.approx(0.01)
    full = NetworkAdjacency.from_edges(10, [(i, j) for i in range(10) for j in range(i + 1, 10)])
    assert variance_bound(full, 10, 1.0) == pytest.approx(1.0)
    assert variance_bound(TimeSeriesMDependent(100, 4), 100, 2.0) == pytest.approx(0.176)


def test_variance_bound_rejects_negative_v():
    with pytest.raises(ValueError):
        variance_bound(Independent(3), 3, -1.0)


def test_oracle_learners_give_zero_ep():
    rep = ep_suite("network", [100, 200], 5, "oracle", "oracle", n_oracle=5000, seed=3)
    assert all(r["ep"] == 0.0 for r in rep.records)
    assert not rep.slope_defined and rep.slope is None


def test_suite_shapes_and_outputs(tmp_path):
    rep = ep_suite("network", [100, 150, 200], 4, LearnerSpec("linear_glm"),
                   LearnerSpec("logistic_glm"), n_oracle=3000, seed=1)
    assert [s["replicates"] for s in rep.summaries] == [4, 4, 4]
    assert len(rep.records) == 12
    assert rep.slope_defined and np.isfinite(rep.slope)
    for s in rep.summaries:
        assert s["mean_negated"] == -s["mean"]
        assert s["n_eval"] == s["size"] // 2
    rep.write_csv(tmp_path / "ep.csv")
    header = (tmp_path / "ep.csv").read_text().splitlines()[0]
    assert header == "size,replicate,ep,ep_scaled,n_oracle"
    doc = json.loads(rep.to_json(tmp_path / "ep.json"))
    assert doc["rn"] == "sqrt_n" and len(doc["summaries"]) == 3


def test_suite_is_deterministic_and_worker_independent():
    kw = dict(n_oracle=2000, seed=9)
    a = ep_suite("timeseries", [60, 80], 3, "linear_glm", "logistic_glm", scheme="nlo", **kw)
    b = ep_suite("timeseries", [60, 80], 3, "linear_glm", "logistic_glm", scheme="nlo",
                 workers=2, **kw)
    assert a.records == b.records


def test_suite_errors_carry_size_and_replicate():
    with pytest.raises(RuntimeError, match="size 20 replicate 0"):
        ep_suite("network", [20], 1, "linear_glm", "logistic_glm", n_oracle=50)


def test_suite_rejects_unordered_sizes():
    with pytest.raises(ValueError):
        ep_suite("network", [200, 100], 2, "oracle", "oracle")


def test_slope_needs_three_sizes():
    recs = [{"size": n, "replicate": r, "ep": float(r) / n, "ep_scaled": float(r), "n_oracle": 1,
             "n_eval": n // 2, "pairs_eval": 0, "pairs_total": 0, "delta_var": 1.0}
            for n in (10, 20) for r in range(3)]
    assert not EPReport.from_records("network", "as_independent", [10, 20], 3, recs).slope_defined
