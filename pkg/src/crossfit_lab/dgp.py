"""Simulation designs with known truths.

Three dependent-data generators:

* :func:`gen_two_way` -- an ``N x M`` grid of cells with row and column random
  effects (two-way clustering);
* :func:`gen_network` -- units on an Erdos-Renyi graph whose outcome errors
  are summed over neighbours;
* :func:`gen_timeseries` -- a single series where treatment and outcome depend
  on the last ``m`` time points.

Each returns a :class:`SimulatedDataset` holding the observed table, the
dependence structure and an :class:`Oracle` with the true estimand and the
true nuisance values ``m(0, L_i)``, ``m(1, L_i)``, ``g(1 | L_i)`` for every unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import expit

from .dependence import (DependenceStructure, Independent, NetworkAdjacency, ObservationTable,
                         TimeSeriesMDependent, TwoWayClustered)
from .learners import build_lagged_features, lag_window

# E[mu(W)] for the network design: Beta(2,2) has CDF 3x^2 - 2x^3, E[W2] = 10, P(W3=1) = 0.3
_BETA22_CDF = lambda x: 3 * x**2 - 2 * x**3  # noqa: E731
NETWORK_MEAN_MU = (5 * (1 - _BETA22_CDF(0.4)) - 2 * (1 - _BETA22_CDF(0.6))
                   + 3 * (1 - _BETA22_CDF(0.7)) + (2 * 0.3 - 1) * 10 + 1)
NETWORK_ATE = 2 * NETWORK_MEAN_MU
# 1 + 0.3 E[L3 L4], with E[L3 L4] = 0.3 E[L2^2] P(L1 > 0) = 0.15; sine and latent terms are mean zero
TWO_WAY_ATE = 1 + 0.3 * 0.15
TIMESERIES_ATE = 1.0
NETWORK_NOISE_VAR = 4 * 36 / (144 * 13)  # Var(2 (Beta(6,6) - 0.5))

DGP_KINDS = ("two_way", "network", "timeseries")


@dataclass(frozen=True, eq=False)
class Oracle:
    """True estimand and per-unit true nuisances."""

    psi: float
    m0: np.ndarray
    m1: np.ndarray
    g1: np.ndarray
    cm0: float = math.nan
    latent: dict = field(default_factory=dict)

    def subset(self, idx) -> "Oracle":
        return replace(self, m0=self.m0[idx], m1=self.m1[idx], g1=self.g1[idx])

    def true_value(self, estimand: str) -> float:
        if estimand == "ate":
            return self.psi
        if estimand == "cm0":
            return self.cm0
        if estimand == "cm1":
            return self.cm0 + self.psi
        raise ValueError(f"unknown estimand {estimand!r}")


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    table: ObservationTable
    structure: DependenceStructure
    oracle: Oracle
    dgp: str
    params: dict
    seed: object = None

    @property
    def n(self):
        return self.table.n


def _gh_nodes(n_nodes=20):
    x, w = hermgauss(n_nodes)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def _two_way_propensity(lin, latent_sd, n_nodes=20):
    """P(A=1 | L) = E over row/column effects of sigmoid((lin + 0.6 g - 0.6 v) / 5).

    Tensor Gauss-Hermite rule, ``n_nodes`` per latent dimension.
    """
    z, w = _gh_nodes(n_nodes)
    shift = 0.6 * latent_sd * (z[:, None] - z[None, :]).ravel()
    weight = (w[:, None] * w[None, :]).ravel()
    out = np.empty(lin.size)
    step = max(1, 200_000 // shift.size)
    for s in range(0, lin.size, step):
        blk = lin[s:s + step, None]
        out[s:s + step] = expit((blk + shift[None, :]) / 5.0) @ weight
    return out


def two_way_cm0(latent_sd=1.0):
    """E[m(0, L)] = 0.3 E[L3^2]; E[sin^2 L1] for L1 ~ N(0, s2) is (1 - exp(-2 s2)) / 2."""
    s2 = 1.0 + 2 * latent_sd**2
    return 0.3 * ((1 - math.exp(-2 * s2)) / 2 + 0.09 + 0.5)


def two_way_outcome_parts(L):
    """Latent-free pieces of the cell outcome: baseline mean and treatment effect."""
    L1, L2, L3, L4 = L[:, 0], L[:, 1], L[:, 2], L[:, 3]
    base = 0.5 * L1 - 0.4 * L2 + 0.3 * L3**2 - 0.5 * np.sin(L4) + 0.4 * L1 * L2
    effect = 1 + 0.5 * np.sin(L1) - 0.5 * np.sin(L2) + 0.3 * L3 * L4
    return base, effect


def two_way_treatment_index(L):
    L1, L2, L3, L4, L5 = L.T
    return (-0.4 + 0.8 * L1 - 0.7 * L2**2 + 0.5 * np.sin(L3) + 0.4 * L1 * L2
            - 0.5 * L4 * L5)


def gen_two_way(N: int, M: int, seed=None, latent_sd: float = 1.0,
                outcome_sd: float = 1.0) -> SimulatedDataset:
    """Two-way clustered cells ``(i, j)``, ``i < N``, ``j < M``.

    ``latent_sd = 0`` switches every row/column effect off, giving iid cells
    with the same covariate, treatment and outcome mechanisms.
    """
    if N < 2 or M < 2:
        raise ValueError("gen_two_way needs N >= 2 and M >= 2")
    rng = np.random.default_rng(seed)
    eff = {name: latent_sd * rng.standard_normal(size)
           for name, size in (("gL", N), ("nL", M), ("gA", N), ("nA", M),
                              ("gY", N), ("nY", M), ("gT", N), ("nT", M))}
    i = np.repeat(np.arange(N), M)
    j = np.tile(np.arange(M), N)
    n = N * M
    L1 = rng.normal(eff["gL"][i] + eff["nL"][j], 1.0)
    L2 = rng.standard_normal(n)
    L3 = rng.normal(np.sin(L1) + 0.3 * L2, np.sqrt(0.5))
    L4 = rng.normal((L1 > 0) * L2, np.sqrt(0.5))
    L5 = rng.normal(1.0, np.sqrt(2.0), n)
    L = np.column_stack([L1, L2, L3, L4, L5])
    lin = two_way_treatment_index(L)
    A = (rng.random(n) < expit((lin + 0.6 * eff["gA"][i] - 0.6 * eff["nA"][j]) / 5.0)).astype(int)
    base, effect = two_way_outcome_parts(L)
    mean = (base + 0.6 * eff["gY"][i] + 0.6 * eff["nY"][j]
            + A * (effect + 0.4 * eff["gT"][i] * eff["nT"][j]))
    Y = rng.normal(mean, outcome_sd)
    table = ObservationTable(L, A, Y, ("L1", "L2", "L3", "L4", "L5"),
                             tuple(f"r{a}c{b}" for a, b in zip(i, j)))
    oracle = Oracle(TWO_WAY_ATE, base, base + effect, _two_way_propensity(lin, latent_sd),
                    cm0=two_way_cm0(latent_sd), latent=eff)
    structure = TwoWayClustered(i, j) if latent_sd > 0 else Independent(n)
    tag = "two_way" if latent_sd > 0 else "two_way_independent"
    return SimulatedDataset(table, structure, oracle, tag,
                            {"N": N, "M": M, "latent_sd": latent_sd}, seed)


def erdos_renyi_edges(n: int, p: float, rng) -> np.ndarray:
    """Edges ``(i, j)``, ``i < j``, of G(n, p), drawn as Binomial count + uniform pair subset."""
    total = n * (n - 1) // 2
    if p <= 0 or total == 0:
        return np.empty((0, 2), dtype=np.int64)
    k = int(rng.binomial(total, min(p, 1.0)))
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    if k > total // 4:
        codes = np.sort(rng.choice(total, size=k, replace=False))
    else:
        # rejection sampling; the first k distinct draws are a uniform k-subset
        seen, order = np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        drawn = np.empty(0, dtype=np.int64)
        while seen.size < k:
            drawn = np.concatenate([drawn, rng.integers(0, total, size=2 * (k - seen.size) + 16)])
            seen, first = np.unique(drawn, return_index=True)
            order = np.argsort(first, kind="stable")
        codes = np.sort(seen[order[:k]])
    # unrank pair codes in row-major order of the strict upper triangle
    i = (n - 2 - np.floor(np.sqrt(-8.0 * codes + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    j = codes + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2
    return np.column_stack([i, j]).astype(np.int64)


def network_mu(W1, W2, W3):
    return (5.0 * (W1 > 0.4) - 2.0 * (W1 > 0.6) + 3.0 * (W1 > 0.7)
            + (2 * W3 - 1) * W2 + 1.0)


def gen_network(n: int, seed=None, edge_prob: float | None = None) -> SimulatedDataset:
    """Units on G ~ ER(p), ``p = 3/n`` by default; ``edge_prob=0`` gives independent units."""
    if n < 10:
        raise ValueError("gen_network needs n >= 10")
    p = 3.0 / n if edge_prob is None else float(edge_prob)
    rng = np.random.default_rng(seed)
    edges = erdos_renyi_edges(n, p, rng)
    G = NetworkAdjacency.from_edges(n, edges)
    W1 = rng.beta(2, 2, n)
    W2 = rng.poisson(10, n).astype(float)
    W3 = (rng.random(n) < 0.3).astype(float)
    mu = network_mu(W1, W2, W3)
    g = expit(mu / 20.0 - 1.0)
    A = (rng.random(n) < g).astype(int)
    delta = 2 * (rng.beta(6, 6, n) - 0.5)
    eps = 2 * (rng.beta(6, 6, n) - 0.5)
    Y = (2 * A + 1) * mu + delta + G.adjacency() @ eps
    table = ObservationTable(np.column_stack([W1, W2, W3]), A, Y, ("W1", "W2", "W3"))
    oracle = Oracle(NETWORK_ATE, mu, 3 * mu, g, cm0=NETWORK_MEAN_MU,
                    latent={"delta": delta, "eps": eps})
    structure = G if p > 0 else Independent(n)
    tag = "network" if p > 0 else "network_independent"
    return SimulatedDataset(table, structure, oracle, tag, {"n": n, "edge_prob": p}, seed)


def timeseries_lag_weights(m: int) -> np.ndarray:
    """Weights on lags ``d = 1..m``: 0.25 / (k + m - t + 1) with ``k = t - d``."""
    d = np.arange(1, m + 1)
    return 0.25 / (m - d + 1)


def gen_timeseries(T: int, m: int = 4, seed=None) -> SimulatedDataset:
    """``m``-dependent series; the first ``m`` points are a burn-in with no confounding."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if T <= 4 * m:
        raise ValueError(f"gen_timeseries needs T > 4m = {4 * m}")
    rng = np.random.default_rng(seed)
    L1 = (rng.random(T) < 0.5).astype(float)
    L2 = rng.integers(1, 4, T).astype(float)
    L3 = (rng.random(T) < 0.5).astype(float)
    u_treat = rng.random(T)
    noise = rng.beta(2, 2, T) - 0.5
    drive = 2 * L1 + L2 - L3
    wts = timeseries_lag_weights(m)
    X = np.zeros(T)
    for d in range(1, m + 1):
        X[m:] += wts[d - 1] * drive[m - d:T - d]
    A = np.zeros(T, dtype=int)
    g = np.full(T, 0.5)
    A[:m] = u_treat[:m] < 0.5
    for t in range(m, T):
        g[t] = expit((X[t] + A[t - m:t].sum() - 0.5) / m)
        A[t] = u_treat[t] < g[t]
    Y = np.where(np.arange(T) < m, 4 * noise, A + X + 0.3 + 20 * noise)
    m0 = np.where(np.arange(T) < m, 0.0, X + 0.3)
    m1 = np.where(np.arange(T) < m, 0.0, X + 1.3)
    table = ObservationTable(np.column_stack([L1, L2, L3]), A, Y, ("L1", "L2", "L3"),
                             tuple(f"t{t}" for t in range(T)))
    cm0 = 0.25 * float(np.sum(1.0 / np.arange(1, m + 1))) * 2.5 + 0.3
    oracle = Oracle(TIMESERIES_ATE, m0, m1, g, cm0=cm0, latent={"X": X})
    return SimulatedDataset(table, TimeSeriesMDependent(T, m), oracle, "timeseries",
                            {"T": T, "m": m}, seed)


def lagged_dataset(ds: SimulatedDataset, window: int | None = None) -> SimulatedDataset:
    """Replace covariates by lags ``1..w`` of ``(L1, L2, L3, A)``, dropping the first rows.

    ``w`` defaults to ``ceil(T^(1/3))``.  At least ``m`` leading rows are
    dropped so that no burn-in point is scored.
    """
    if ds.dgp != "timeseries":
        raise ValueError("lagged_dataset expects a time-series dataset")
    t = ds.table
    T, m = t.n, ds.params["m"]
    w = lag_window(T) if window is None else int(window)
    raw = np.column_stack([t.covariates, t.treatment])
    names = [*t.covariate_names, "A"]
    Z = build_lagged_features(raw, w)
    drop = max(w, m)
    Z = Z[drop - w:]
    keep = np.arange(drop, T)
    cols = [f"{c}_lag{lag}" for lag in range(1, w + 1) for c in names]
    table = ObservationTable(Z, t.treatment[keep], t.outcome[keep], tuple(cols),
                             tuple(t.unit_ids[k] for k in keep))
    params = dict(ds.params, window=w, dropped=drop)
    return SimulatedDataset(table, TimeSeriesMDependent(keep.size, m), ds.oracle.subset(keep),
                            ds.dgp, params, ds.seed)


def generate(dgp: str, size, seed=None, **params) -> SimulatedDataset:
    """Dispatch on the design tag.

    ``size`` is ``(N, M)`` (or ``N`` for a square grid) for two-way data, ``n``
    for network data and ``T`` for a series (lagged features already built).
    """
    if dgp in ("two_way", "two_way_independent"):
        N, M = (size, size) if np.isscalar(size) else tuple(size)
        if dgp == "two_way_independent":
            params = dict(params, latent_sd=0.0)
        return gen_two_way(int(N), int(M), seed, **params)
    if dgp in ("network", "network_independent"):
        if dgp == "network_independent":
            params = dict(params, edge_prob=0.0)
        return gen_network(int(size), seed, **params)
    if dgp == "timeseries":
        window = params.pop("window", None)
        return lagged_dataset(gen_timeseries(int(size), seed=seed, **params), window)
    raise ValueError(f"unknown dgp {dgp!r}")


def oracle_sample(dgp: str, n_units: int, seed=None, **params) -> SimulatedDataset:
    """Fresh draw of roughly ``n_units`` units from the same design, for population means."""
    if dgp in ("two_way", "two_way_independent"):
        side = max(2, math.ceil(math.sqrt(n_units)))
        return generate(dgp, (side, side), seed, **params)
    if dgp == "timeseries":
        m = params.get("m", 4)
        window = params.get("window")
        extra = max(window or 0, m) + 1
        ts = gen_timeseries(n_units + extra, m=m, seed=seed)
        return lagged_dataset(ts, window)
    return generate(dgp, n_units, seed, **params)


def true_psi(dgp: str, estimand: str = "ate", **params) -> float:
    """Population value of the estimand for a design tag."""
    if dgp in ("two_way", "two_way_independent"):
        cm0 = two_way_cm0(0.0 if dgp == "two_way_independent" else params.get("latent_sd", 1.0))
        ate = TWO_WAY_ATE
    elif dgp in ("network", "network_independent"):
        cm0, ate = NETWORK_MEAN_MU, NETWORK_ATE
    elif dgp == "timeseries":
        m = params.get("m", 4)
        cm0 = 0.25 * float(np.sum(1.0 / np.arange(1, m + 1))) * 2.5 + 0.3
        ate = TIMESERIES_ATE
    else:
        raise ValueError(f"no oracle value for dgp {dgp!r}")
    return {"ate": ate, "cm0": cm0, "cm1": cm0 + ate}[estimand]


def oracle_scores(ds: SimulatedDataset, estimand: str = "ate") -> np.ndarray:
    """Efficient-influence-function scores at the true nuisances, one per unit."""
    from .estimators import aipw_scores  # local import: estimators imports learners only

    t, o = ds.table, ds.oracle
    return aipw_scores(o.m0, o.m1, o.g1, t.treatment, t.outcome, estimand)


def oracle_score(ds: SimulatedDataset, i: int, estimand: str = "ate") -> float:
    if not 0 <= i < ds.n:
        raise IndexError(f"unit index {i} out of range")
    t, o = ds.table, ds.oracle
    from .estimators import aipw_score

    return aipw_score(estimand, o.m0[i], o.m1[i], o.g1[i], t.treatment[i], t.outcome[i])


def _two_way_cell_contrasts(rng, size, latent_sd, estimand):
    # every cell gets its own row and column effects: the marginal law of one cell
    gL, nL, gY, nY, gT, nT = latent_sd * rng.standard_normal((6, size))
    L1 = rng.normal(gL + nL, 1.0)
    L2 = rng.standard_normal(size)
    L3 = rng.normal(np.sin(L1) + 0.3 * L2, np.sqrt(0.5))
    L4 = rng.normal((L1 > 0) * L2, np.sqrt(0.5))
    base, effect = two_way_outcome_parts(np.column_stack([L1, L2, L3, L4]))
    m0 = base + 0.6 * gY + 0.6 * nY
    tau = effect + 0.4 * gT * nT
    return {"ate": tau, "cm0": m0, "cm1": m0 + tau}[estimand]


def _network_contrasts(rng, size, estimand):
    mu = network_mu(rng.beta(2, 2, size), rng.poisson(10, size).astype(float),
                    (rng.random(size) < 0.3).astype(float))
    return {"ate": 2 * mu, "cm0": mu, "cm1": 3 * mu}[estimand]


def mc_truth(dgp: str, estimand: str = "ate", n_draws: int = 10**7, seed=0,
             chunk: int = 10**6, **params):
    """Brute-force Monte Carlo value of the estimand: ``(estimate, standard error)``.

    Averages the true conditional contrast over ``n_draws`` independent units
    drawn from the marginal law of one unit, in chunks of ``chunk``.  Serves
    as a check on the analytic values returned by :func:`true_psi`.
    """
    if estimand not in ("ate", "cm0", "cm1"):
        raise ValueError(f"unknown estimand {estimand!r}")
    if dgp == "timeseries":
        m = params.get("m", 4)
        ds = gen_timeseries(max(n_draws, 4 * m + 1), m=m, seed=seed)
        o = ds.oracle
        keep = slice(m, None)
        v = {"ate": o.m1 - o.m0, "cm0": o.m0, "cm1": o.m1}[estimand][keep]
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
    rng = np.random.default_rng(seed)
    count, s1, s2, shift = 0, 0.0, 0.0, None
    left = int(n_draws)
    while left > 0:
        size = min(chunk, left)
        if dgp in ("two_way", "two_way_independent"):
            sd = 0.0 if dgp == "two_way_independent" else params.get("latent_sd", 1.0)
            v = _two_way_cell_contrasts(rng, size, sd, estimand)
        elif dgp in ("network", "network_independent"):
            v = _network_contrasts(rng, size, estimand)
        else:
            raise ValueError(f"unknown dgp {dgp!r}")
        if shift is None:
            shift = float(v.mean())  # shifted sums keep the variance well conditioned
        v = v - shift
        count += size
        s1 += float(v.sum())
        s2 += float(v @ v)
        left -= size
    mean = s1 / count
    var = (s2 - count * mean**2) / max(count - 1, 1)
    return shift + mean, math.sqrt(max(var, 0.0) / count)
