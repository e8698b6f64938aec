"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

These are Monte Carlo runs at full replicate counts; the whole module takes
roughly half an hour on one core.
"""

import time
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from crossfit_lab.dependence import NetworkAdjacency
from crossfit_lab.dgp import NETWORK_ATE, TWO_WAY_ATE, generate, mc_truth, true_psi
from crossfit_lab.diagnostics import ep_suite
from crossfit_lab.estimators import VarianceWarning
from crossfit_lab.harness import demo_bias, demo_config, parse_config, run
from crossfit_lab.harness.summary import read_summary, summarize
from crossfit_lab.learners import LearnerSpec
from crossfit_lab.splitters import (EmptyTrainingFold, as_independent_split, network_lno_split,
                                    nlo_split, two_way_split)

pytestmark = pytest.mark.acceptance

BOOST = {"kind": "boosted_trees"}
MARS = {"kind": "mars_lite"}


def by_scheme(rows):
    out = {}
    for r in rows:
        out.setdefault(r["scheme"], {})[r["n"]] = r
    return out


def run_summary(doc, tmp_path):
    cfg = parse_config(doc)
    return by_scheme(read_summary(summarize(run(cfg, output_dir=tmp_path))))


# -- 1 -----------------------------------------------------------------------

def _partition_ok(plan, n):
    ev = np.sort(np.concatenate([f.eval for f in plan.folds]))
    return np.array_equal(ev, np.arange(n)) and all(
        np.intersect1d(f.train, f.eval).size == 0 and f.train.size > 0 for f in plan.folds)


def test_1_splitter_invariants(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    checked = {"as_independent": 0, "two_way": 0, "network_lno": 0, "nlo": 0}
    bad = []
    while min(checked.values()) < 100:
        seed = int(rng.integers(2**32))
        # as-independent
        n = int(rng.integers(2, 501))
        k = int(rng.integers(2, min(10, n) + 1))
        p = as_independent_split(n, k, seed)
        sizes = [f.eval.size for f in p.folds]
        if not (_partition_ok(p, n) and max(sizes) - min(sizes) <= 1):
            bad.append(("as_independent", n, k, seed))
        checked["as_independent"] += 1
        # two-way on a (possibly incomplete) grid
        R, C = int(rng.integers(2, 23)), int(rng.integers(2, 23))
        K = int(rng.integers(2, min(4, R, C) + 1))
        r, c = np.divmod(np.arange(R * C), C)
        keep = rng.random(R * C) < rng.uniform(0.6, 1.0)
        r, c = r[keep], c[keep]
        try:
            p = two_way_split(r, c, K, seed)
        except (EmptyTrainingFold, ValueError):
            pass
        else:
            ok = _partition_ok(p, r.size) and all(
                not (set(r[f.train]) & set(r[f.eval])) and not (set(c[f.train]) & set(c[f.eval]))
                for f in p.folds)
            if not ok:
                bad.append(("two_way", R, C, K, seed))
            checked["two_way"] += 1
        # network leave-neighbours-out on a sparse random graph
        n = int(rng.integers(10, 501))
        A = sp.random(n, n, density=rng.uniform(0, 4) / n, random_state=seed, format="csr")
        g = NetworkAdjacency(A)
        try:
            p = network_lno_split(g, n, int(rng.integers(2, 6)), seed)
        except EmptyTrainingFold:
            pass
        else:
            G = g.adjacency()
            if not (_partition_ok(p, n) and all(G[f.train][:, f.eval].nnz == 0 for f in p.folds)):
                bad.append(("network_lno", n, seed))
            checked["network_lno"] += 1
        # neighbours-left-out blocks in time
        T, k, m = int(rng.integers(20, 501)), int(rng.integers(2, 8)), int(rng.integers(0, 6))
        try:
            p = nlo_split(T, k, m)
        except EmptyTrainingFold:
            pass
        else:
            ok = _partition_ok(p, T) and all(
                np.abs(f.train[:, None] - f.eval[None, :]).min() > m for f in p.folds)
            if not ok:
                bad.append(("nlo", T, k, m))
            checked["nlo"] += 1
    elapsed = time.perf_counter() - t0
    verdict(1, not bad and elapsed < 10,
            f"{checked} configurations, {len(bad)} violations, {elapsed:.1f}s")


# -- 2 -----------------------------------------------------------------------

def test_2_oracle_truths(verdict):
    t0 = time.perf_counter()
    tw, tw_se = mc_truth("two_way", "ate", n_draws=10**7, seed=1)
    # the network contrast 2 mu(W) has SD near 20, so 10^7 draws leave an MC error
    # of about 0.006; 2.5e8 draws bring it to about 0.0013
    net, net_se = mc_truth("network", "ate", n_draws=250_000_000, seed=2, chunk=5 * 10**6)
    ds = generate("timeseries", 500, seed=3)
    # m1 - m0 is a float difference of larger terms, so compare at machine precision
    ts_dev = float(np.max(np.abs(ds.oracle.m1 - ds.oracle.m0 - 1.0)))
    elapsed = time.perf_counter() - t0
    ok = (abs(tw - TWO_WAY_ATE) <= 0.005 and abs(net - NETWORK_ATE) <= 0.005
          and ts_dev < 1e-12 and true_psi("timeseries") == 1.0 and elapsed < 120)
    verdict(2, ok, f"clustered MC {tw:.4f} (SE {tw_se:.4f}) vs 1.045; network MC {net:.4f} "
                   f"(SE {net_se:.4f}) vs {NETWORK_ATE:.3f}; series effect max deviation from 1 "
                   f"{ts_dev:.1e}; {elapsed:.0f}s")


# -- 3, 4 --------------------------------------------------------------------

def test_3_ep_mean_zero(verdict):
    t0 = time.perf_counter()
    b = LearnerSpec("boosted_trees")
    rep = ep_suite("network", [500], 300, b, b, scheme="as_independent", seed=3)
    s = rep.summaries[0]
    elapsed = time.perf_counter() - t0
    verdict(3, abs(s["mean"]) < 3 * s["se_mean"] and elapsed < 300,
            f"mean EP {s['mean']:.4g}, SE {s['se_mean']:.4g}, "
            f"ratio {abs(s['mean']) / s['se_mean']:.2f}; {elapsed:.0f}s")


def test_4_ep_variance_shrinks(verdict):
    t0 = time.perf_counter()
    b = LearnerSpec("boosted_trees")
    rep = ep_suite("network", [200, 400, 800, 1600], 200, b, b, scheme="as_independent", seed=4)
    vs = [s["var_scaled"] for s in rep.summaries]
    inversions = sum(b >= a for a, b in zip(vs, vs[1:]))
    elapsed = time.perf_counter() - t0
    verdict(4, inversions <= 1 and rep.slope < -1 and elapsed < 900,
            "Var(sqrt(n) EP) " + ", ".join(f"{v:.4g}" for v in vs)
            + f"; {inversions} inversions; slope {rep.slope:.3f}; {elapsed:.0f}s")


# -- 5 -----------------------------------------------------------------------

def test_5_demo_bias(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = demo_config()
    _, summary, _ = demo_bias(cfg, output_dir=tmp_path)
    rows = by_scheme(read_summary(summary))
    sizes = sorted(rows["crossfit"])
    scaled = {s: [np.sqrt(n) * abs(rows[s][n]["bias"]) for n in sizes] for s in rows}
    elapsed = time.perf_counter() - t0
    ok = sizes == [250, 500, 1000, 2000] and all(
        a > b for a, b in zip(scaled["nocrossfit"], scaled["crossfit"])) and elapsed < 600
    verdict(5, ok, f"n {sizes}; sqrt(n)|bias| no-cross-fit "
                   + ", ".join(f"{v:.3g}" for v in scaled["nocrossfit"])
                   + "; cross-fit " + ", ".join(f"{v:.3g}" for v in scaled["crossfit"])
                   + f"; {elapsed:.0f}s")


# -- 6, 7, 8 -----------------------------------------------------------------

def test_6_clustered(verdict, tmp_path):
    t0 = time.perf_counter()
    rows = run_summary({
        "name": "clustered", "dgp": "two_way", "sizes": [7, 10, 15, 22], "replicates": 300,
        "schemes": [{"name": "as_independent", "k": 2}, {"name": "two_way", "K": 4}],
        "outcome_learner": MARS, "propensity_learner": MARS,
        "variance_method": "cluster_robust", "seed": 6}, tmp_path)
    ai, tw = rows["as_independent"], rows["two_way"]
    small, large = min(ai), max(ai)
    gap = abs(tw[large]["rmse"] - ai[large]["rmse"]) / ai[large]["rmse"]
    checks = {
        "rmse_small": ai[small]["rmse"] <= tw[small]["rmse"],
        "bias_ai": abs(ai[large]["bias"]) < abs(ai[small]["bias"]),
        "bias_tw": abs(tw[large]["bias"]) < abs(tw[small]["bias"]),
        "gap": gap < 0.25,
    }
    elapsed = time.perf_counter() - t0
    detail = "; ".join(
        f"n={n}: RMSE {ai[n]['rmse']:.3f}/{tw[n]['rmse']:.3f} bias {ai[n]['bias']:+.3f}/"
        f"{tw[n]['bias']:+.3f}" for n in sorted(ai))
    verdict(6, all(checks.values()) and elapsed < 1800,
            f"(as-independent/two-way) {detail}; gap at n={large} {gap:.1%}; "
            f"failed checks {[k for k, v in checks.items() if not v]}; {elapsed:.0f}s")


def test_7_network(verdict, tmp_path):
    t0 = time.perf_counter()
    rows = run_summary({
        "name": "network", "dgp": "network", "sizes": [300, 600, 1200], "replicates": 300,
        "schemes": [{"name": "as_independent", "k": 2}, {"name": "network_lno", "k": 2}],
        "outcome_learner": BOOST, "propensity_learner": BOOST,
        "variance_method": "network_hac", "seed": 7}, tmp_path)
    ai, lno = rows["as_independent"], rows["network_lno"]
    elapsed = time.perf_counter() - t0
    verdict(7, all(ai[n]["sd"] < lno[n]["sd"] for n in ai) and elapsed < 1800,
            "SD as-independent/LNO " + "; ".join(
                f"n={n}: {ai[n]['sd']:.3f}/{lno[n]['sd']:.3f}" for n in sorted(ai))
            + f"; {elapsed:.0f}s")


def test_8_timeseries(verdict, tmp_path):
    t0 = time.perf_counter()
    rows = run_summary({
        "name": "timeseries", "dgp": "timeseries", "sizes": [500, 1000, 2000], "replicates": 300,
        "schemes": [{"name": "as_independent", "k": 2}, {"name": "nlo", "k": 2}],
        "outcome_learner": {"kind": "linear_glm"}, "propensity_learner": {"kind": "logistic_glm"},
        "variance_method": "ts_lag_window", "seed": 8}, tmp_path)
    ai, nlo = rows["as_independent"], rows["nlo"]
    rel = abs(ai[1000]["rmse"] - nlo[1000]["rmse"]) / nlo[1000]["rmse"]
    elapsed = time.perf_counter() - t0
    verdict(8, rel < 0.15 and elapsed < 1200,
            "RMSE as-independent/NLO " + "; ".join(
                f"T={n}: {ai[n]['rmse']:.3f}/{nlo[n]['rmse']:.3f}" for n in sorted(ai))
            + f"; relative gap at T=1000 {rel:.1%}; {elapsed:.0f}s")


# -- 9 -----------------------------------------------------------------------

def test_9_oracle_sanity(verdict, tmp_path):
    t0 = time.perf_counter()
    parts, ok = [], True
    designs = [("two_way", (15, 15), "cluster_robust"), ("network", 500, "network_hac"),
               ("timeseries", 500, "ts_lag_window"),
               ("two_way_independent", (15, 15), "iid"), ("network_independent", 500, "iid")]
    for i, (dgp, size, method) in enumerate(designs):
        scheme = {"name": "nlo", "k": 2} if dgp == "timeseries" else {"name": "as_independent",
                                                                        "k": 2}
        doc = {"name": f"oracle-{dgp}", "dgp": dgp, "sizes": [size], "replicates": 500,
               "schemes": [scheme], "outcome_learner": "oracle", "propensity_learner": "oracle",
               "variance_method": method, "seed": 90 + i}
        (row,) = read_summary(summarize(run(parse_config(doc), output_dir=tmp_path / dgp)))
        z = abs(row["bias"]) / (row["sd"] / np.sqrt(row["n_ok"]))
        good = z < 3 and row["n_failed"] == 0
        if method == "iid":
            good = good and 0.92 <= row["coverage"] <= 0.98
        ok = ok and good
        parts.append(f"{dgp}: bias {row['bias']:+.4f} ({z:.2f} MC SE), coverage "
                     f"{row['coverage']:.3f}")
    elapsed = time.perf_counter() - t0
    verdict(9, ok and elapsed < 600, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 10 ----------------------------------------------------------------------

def test_10_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = parse_config({
        "name": "determinism", "dgp": "network", "sizes": [200, 400], "replicates": 6,
        "schemes": [{"name": "as_independent", "k": 2}, {"name": "network_lno", "k": 2}],
        "outcome_learner": BOOST, "propensity_learner": {"kind": "logistic_glm"},
        "variance_method": "network_hac", "compute_ep": True, "n_oracle": 5000, "seed": 10})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VarianceWarning)
        a = run(cfg, workers=1, output_dir=tmp_path / "one")
        b = run(cfg, workers=8, output_dir=tmp_path / "eight")
    same = open(a, "rb").read() == open(b, "rb").read()
    elapsed = time.perf_counter() - t0
    verdict(10, same and elapsed < 120,
            f"1 vs 8 workers byte-identical: {same}; {elapsed:.0f}s")
