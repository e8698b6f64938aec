"""Ridge least squares and ridge-penalised logistic regression (IRLS)."""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class ConvergenceError(RuntimeError):
    def __init__(self, iterations, message="IRLS did not converge"):
        super().__init__(f"{message} after {iterations} iterations")
        self.iterations = iterations


def ridge_coefficients(X, y, penalty):
    """Intercept (unpenalised) and slopes minimising ``|y - b0 - Xb|^2 + penalty |b|^2``."""
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += penalty
    beta = np.linalg.solve(gram, Xc.T @ (y - ym))
    return ym - xm @ beta, beta


def _penalised_loglik(eta, y, beta, penalty):
    # log-likelihood written to stay finite for large |eta|
    ll = np.sum(y * eta - np.logaddexp(0.0, eta))
    return ll - 0.5 * penalty * np.dot(beta[1:], beta[1:])


def irls_logistic(X, y, penalty=1e-4, max_iter=100, tol=1e-10):
    """Newton/IRLS for ridge logistic regression with step halving.

    Returns ``(coef, history)`` where ``coef[0]`` is the intercept and
    ``history`` the penalised log-likelihood after each accepted step.
    Raises :class:`ConvergenceError` when ``max_iter`` is hit.
    """
    n, p = X.shape
    Z = np.column_stack([np.ones(n), X])
    pen = np.full(p + 1, penalty)
    pen[0] = 0.0
    ybar = np.clip(y.mean(), 1e-3, 1 - 1e-3)
    beta = np.zeros(p + 1)
    beta[0] = np.log(ybar / (1 - ybar))
    obj = _penalised_loglik(Z @ beta, y, beta, penalty)
    history = [obj]
    for it in range(1, max_iter + 1):
        eta = Z @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-12)
        grad = Z.T @ (y - mu) - pen * beta
        H = (Z * w[:, None]).T @ Z
        H[np.diag_indices_from(H)] += pen
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            new = _penalised_loglik(Z @ cand, y, cand, penalty)
            if new >= obj - 1e-12 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        if new < obj:
            # line search could not improve: we are at the optimum to machine precision
            history.append(obj)
            return beta, history
        beta, gain = cand, new - obj
        obj = new
        history.append(obj)
        if gain <= tol * (abs(obj) + tol) or np.max(np.abs(t * step)) < 1e-10:
            return beta, history
    raise ConvergenceError(max_iter)
