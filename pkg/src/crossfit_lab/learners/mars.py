"""A small MARS: forward hinge-pair selection, backward GCV pruning.

Basis terms are products of hinges ``max(0, +-(x_j - t))`` with at most
``max_degree`` factors, each factor on a distinct feature.  The forward pass
adds the reflected pair that most reduces the residual sum of squares; the
search is done on columns orthogonalised against the current basis, so every
candidate is scored exactly without refitting.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-10


def span_rules(n, p, alpha=0.05):
    """End-span and min-span counts (Friedman's rules at level ``alpha``).

    Knots closer than ``endspan`` observations to either end are not
    considered, and consecutive knots sit ``minspan`` observations apart, so
    no hinge can isolate a handful of extreme points.
    """
    p = max(p, 1)
    endspan = int(np.ceil(3 - np.log2(alpha / p)))
    minspan = int(np.floor(-np.log2(-np.log1p(-alpha) / (p * n)) / 2.5))
    return endspan, max(minspan, 1)


def _knots(x, max_knots, endspan=0, minspan=1):
    xs = np.sort(x)
    # a knot at the maximum gives an all-zero right hinge
    cand = xs[endspan:xs.size - max(endspan, 1)][::minspan]
    u = np.unique(cand)
    if u.size > max_knots:
        u = np.unique(np.quantile(u, np.linspace(0, 1, max_knots)))
    return u[u < xs[-1]] if u.size else u


def _hinge(x, knot, sign):
    return np.maximum(0.0, sign * (x - knot))


def basis_matrix(X, terms):
    """Evaluate ``terms`` (each a tuple of ``(feature, knot, sign)``) on ``X``."""
    B = np.ones((X.shape[0], len(terms)))
    for c, term in enumerate(terms):
        for j, t, s in term:
            B[:, c] *= _hinge(X[:, j], t, s)
    return B


def _candidates(X, parent_col, parent_term, knots, max_degree):
    """All hinge pairs extending one parent.  Returns (columns_plus, columns_minus, specs)."""
    if len(parent_term) >= max_degree:
        return None
    used = {j for j, _, _ in parent_term}
    plus, minus, specs = [], [], []
    for j, ks in enumerate(knots):
        if j in used or ks.size == 0:
            continue
        xj = X[:, j][:, None]
        plus.append(parent_col[:, None] * np.maximum(0.0, xj - ks[None, :]))
        minus.append(parent_col[:, None] * np.maximum(0.0, ks[None, :] - xj))
        specs.extend((j, float(t)) for t in ks)
    if not specs:
        return None
    return np.hstack(plus), np.hstack(minus), specs


def _orthogonalise(C, Q):
    if Q.shape[1]:
        C = C - Q @ (Q.T @ C)
        C = C - Q @ (Q.T @ C)
    return C


def _append_orthonormal(Q, v):
    v = _orthogonalise(v[:, None], Q)[:, 0]
    nv = np.linalg.norm(v)
    if nv <= _EPS * max(1.0, np.sqrt(v.size)):
        return Q, False
    return np.column_stack([Q, v / nv]), True


def forward_pass(X, y, max_terms, max_degree=1, max_knots=20, thresh=1e-3):
    n, p = X.shape
    endspan, minspan = span_rules(n, p)
    knots = [_knots(X[:, j], max_knots, endspan, minspan) for j in range(p)]
    terms = [()]
    cols = [np.ones(n)]
    Q = np.ones((n, 1)) / np.sqrt(n)
    r = y - y.mean()
    tss = float(r @ r)
    rss = tss
    # pool of (plus, minus, specs, parent_term) orthogonalised against Q
    pool = []

    def add_parent(col, term):
        cand = _candidates(X, col, term, knots, max_degree)
        if cand is not None:
            cp, cm, specs = cand
            pool.append([_orthogonalise(cp, Q), _orthogonalise(cm, Q), specs, term])

    add_parent(cols[0], terms[0])
    while len(terms) < max_terms and pool and rss > _EPS * max(tss, 1.0):
        best = None
        for pi, (U, V, specs, _) in enumerate(pool):
            uu, vv, uv = (U * U).sum(0), (V * V).sum(0), (U * V).sum(0)
            ur, vr = U.T @ r, V.T @ r
            tol = _EPS * n
            u_ok, v_ok = uu > tol, vv > tol
            det = uu * vv - uv**2
            pair_ok = u_ok & v_ok & (det > tol * np.maximum(uu, vv))
            with np.errstate(divide="ignore", invalid="ignore"):
                red_pair = (vv * ur**2 - 2 * uv * ur * vr + uu * vr**2) / det
                red_u = ur**2 / uu
                red_v = vr**2 / vv
            red = np.where(pair_ok, red_pair,
                           np.maximum(np.where(u_ok, red_u, 0.0), np.where(v_ok, red_v, 0.0)))
            red = np.where(np.isfinite(red), red, 0.0)
            i = int(np.argmax(red))
            if best is None or red[i] > best[0]:
                best = (float(red[i]), pi, i)
        gain, pi, i = best
        if gain < thresh * tss or gain <= 0:
            break
        U, V, specs, parent = pool[pi]
        j, t = specs[i]
        parent_col = basis_matrix(X, [parent])[:, 0]
        new_terms = []
        for sign in (1.0, -1.0):
            if len(terms) + len(new_terms) >= max_terms:
                break
            term = parent + ((j, t, sign),)
            col = parent_col * _hinge(X[:, j], t, sign)
            Q2, added = _append_orthonormal(Q, col)
            if added:
                Q = Q2
                new_terms.append((term, col))
        if not new_terms:
            break
        for term, col in new_terms:
            terms.append(term)
            cols.append(col)
        r = y - Q @ (Q.T @ y)
        rss = float(r @ r)
        q_new = Q[:, -len(new_terms):]
        for entry in pool:
            entry[0] = entry[0] - q_new @ (q_new.T @ entry[0])
            entry[1] = entry[1] - q_new @ (q_new.T @ entry[1])
        for term, col in new_terms:
            add_parent(col, term)
    return terms


def gcv(rss, n, n_terms, penalty):
    c = n_terms + penalty * (n_terms - 1) / 2.0
    if c >= n:
        return np.inf
    return (rss / n) / (1.0 - c / n) ** 2


def _rss(B, y):
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    res = y - B @ coef
    return float(res @ res)


def backward_prune(X, y, terms, penalty):
    """Greedy backward deletion; keep the subset with the smallest GCV."""
    n = X.shape[0]
    B = basis_matrix(X, terms)
    active = list(range(len(terms)))
    best_set = list(active)
    best_gcv = gcv(_rss(B, y), n, len(active), penalty)
    while len(active) > 1:
        trial = None
        for c in active[1:]:  # never drop the intercept
            keep = [a for a in active if a != c]
            rss = _rss(B[:, keep], y)
            if trial is None or rss < trial[0]:
                trial = (rss, c)
        active = [a for a in active if a != trial[1]]
        score = gcv(trial[0], n, len(active), penalty)
        if score <= best_gcv:
            best_gcv, best_set = score, list(active)
    return [terms[a] for a in best_set]


def fit_mars(X, y, max_terms=20, max_degree=1, max_knots=20, penalty=None):
    """Select basis terms for ``y`` on ``X``; returns the pruned term list."""
    n = X.shape[0]
    cap = max(1, min(max_terms, n // 5))
    if penalty is None:
        penalty = 3.0 if max_degree > 1 else 2.0
    terms = forward_pass(X, y, cap, max_degree=max_degree, max_knots=max_knots)
    return backward_prune(X, y, terms, penalty)
