"""L2-regularised logistic regression, one binary problem per label, Newton solver."""

import numpy as np
from scipy.special import expit

from ._base import OvRClassifier


def objective(coef, intercept, X, y, sample_weight, C):
    """``sum_i w_i log(1 + exp(-y_i z_i)) + ||coef||^2 / (2C)`` with ``y`` in {0, 1}."""
    z = X @ coef + intercept
    sign = 2.0 * y - 1.0
    return float(sample_weight @ np.logaddexp(0.0, -sign * z) + coef @ coef / (2.0 * C))


def fit_binary_logistic(X, y, sample_weight, C=0.01, tol=1e-6, max_iter=10_000):
    """Newton's method with Armijo backtracking; the intercept is not penalised.

    Stops once the gradient's infinity-norm is at most ``tol``.
    Returns ``(coef, intercept, n_iter)``.
    """
    n, F = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    y = np.asarray(y, dtype=float)
    w = np.asarray(sample_weight, dtype=float)
    reg = np.full(F + 1, 1.0 / C)
    reg[-1] = 0.0
    beta = np.zeros(F + 1)

    def value(b):
        return objective(b[:-1], b[-1], X, y, w, C)

    f = value(beta)
    for it in range(1, max_iter + 1):
        p = expit(Xa @ beta)
        grad = Xa.T @ (w * (p - y)) + reg * beta
        if np.max(np.abs(grad)) <= tol:
            return beta[:-1], float(beta[-1]), it - 1
        H = (Xa * (w * p * (1.0 - p))[:, None]).T @ Xa
        H[np.diag_indices_from(H)] += reg + 1e-12
        step = np.linalg.solve(H, grad)
        t, slope = 1.0, grad @ step
        while True:
            cand = beta - t * step
            f_new = value(cand)
            if f_new <= f - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        beta, f = cand, f_new
    return beta[:-1], float(beta[-1]), max_iter


class OvRLogisticRegression(OvRClassifier):
    """One-vs-rest logistic regression.

    Parameters
    ----------
    C : inverse regularisation strength of the L2 penalty on the slopes
    class_weight : 'balanced' (per-column balanced weights) or None
    """

    def __init__(self, C=0.01, class_weight="balanced", tol=1e-6, max_iter=10_000, class_names=None):
        self.C = C
        self.class_weight = class_weight
        self.tol = tol
        self.max_iter = max_iter
        self.class_names = class_names

    def fit(self, X, Y, sample_weight=None):
        X, Y = self._validate_fit(X, Y)
        coefs, intercepts, iters = [], [], []
        for c in range(Y.shape[1]):
            y = Y[:, c]
            w = self._column_weights(y, sample_weight)
            coef, b, it = fit_binary_logistic(X, y, w, self.C, self.tol, self.max_iter)
            coefs.append(coef)
            intercepts.append(b)
            iters.append(it)
        self.coef_ = np.array(coefs)
        self.intercept_ = np.array(intercepts)
        self.n_iter_ = np.array(iters)
        return self

    def decision_function(self, X):
        X = self._check_predict(X)
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))
