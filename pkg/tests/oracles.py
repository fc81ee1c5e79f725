"""Independent reference solvers used by the test-suite.

They share no code with the package: dense Newton for smooth problems and
active-set enumeration for the nonnegative lasso.
"""
import itertools

import numpy as np


def standardize(X):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    return (X - center) / scale, center, scale


def _nll_parts(A, y, theta):
    """Mean logistic loss, gradient and Hessian; A carries an intercept column."""
    eta = A @ theta
    mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
    loss = np.mean(np.logaddexp(0.0, eta) - y * eta)
    grad = A.T @ (mu - y) / len(y)
    hess = (A * (mu * (1 - mu))[:, None]).T @ A / len(y)
    return loss, grad, hess


def newton(A, y, pen_grad, pen_hess, pen_value, theta0=None, tol=1e-13, max_iter=200):
    """Damped Newton on loss + pen; returns (theta, converged)."""
    theta = np.zeros(A.shape[1]) if theta0 is None else theta0.copy()
    for _ in range(max_iter):
        loss, g, H = _nll_parts(A, y, theta)
        g = g + pen_grad(theta)
        H = H + pen_hess(theta)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return theta, False
        f0 = loss + pen_value(theta)
        t = 1.0
        while t > 1e-12:
            cand = theta - t * step
            f1 = _nll_parts(A, y, cand)[0] + pen_value(cand)
            if f1 <= f0 + 1e-16 * abs(f0):
                break
            t *= 0.5
        theta = cand
        if np.max(np.abs(g)) < tol:
            return theta, True
        if np.max(np.abs(theta)) > 1e6:
            return theta, False
    return theta, np.max(np.abs(_nll_parts(A, y, theta)[1] + pen_grad(theta))) < 1e-9


def ridge_oracle(X, y, lam):
    """Ridge logistic on standardized features, intercept unpenalized."""
    Xs, center, scale = standardize(X)
    n, p = Xs.shape
    A = np.column_stack([np.ones(n), Xs])
    D = np.diag(np.r_[0.0, np.ones(p)])
    theta, ok = newton(A, y, lambda t: lam * D @ t, lambda t: lam * D,
                       lambda t: 0.5 * lam * t[1:] @ t[1:])
    assert ok
    coef = theta[1:] / scale
    return theta[0] - coef @ center, coef


def nonneg_lasso_oracle(X, y, lam):
    """Nonnegative lasso by enumerating the support.

    For every support S the penalty is linear on the open orthant, so the
    restricted problem is smooth; the unique candidate with positive
    coefficients on S and a nonnegative reduced gradient off S is optimal.
    """
    Xs, center, scale = standardize(X)
    n, p = Xs.shape
    found = []
    for k in range(p + 1):
        for S in itertools.combinations(range(p), k):
            S = list(S)
            A = np.column_stack([np.ones(n), Xs[:, S]])
            lin = np.r_[0.0, np.full(len(S), lam)]
            theta, ok = newton(A, y, lambda t: lin, lambda t: np.zeros((len(lin), len(lin))),
                               lambda t: lin @ t)
            if not ok or (theta[1:] <= 0).any():
                continue
            beta = np.zeros(p)
            beta[S] = theta[1:]
            eta = theta[0] + Xs @ beta
            mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
            g = Xs.T @ (mu - y) / n
            off = np.setdiff1d(np.arange(p), S)
            if (g[off] + lam >= -1e-10).all():
                found.append((theta[0], beta))
    assert found, "no KKT point found"
    b0, beta = found[0]
    coef = beta / scale
    return b0 - coef @ center, coef


def kkt_ridge(X, y, lam, intercept, coef):
    Xs, center, scale = standardize(X)
    beta = coef * scale
    eta = intercept + X @ coef
    mu = 1.0 / (1.0 + np.exp(-eta))
    g = Xs.T @ (mu - y) / len(y) + lam * beta
    return max(abs(np.mean(mu - y)), np.max(np.abs(g)))


def kkt_nonneg_lasso(X, y, lam, intercept, coef):
    Xs, center, scale = standardize(X)
    beta = coef * scale
    eta = intercept + X @ coef
    mu = 1.0 / (1.0 + np.exp(-eta))
    g = Xs.T @ (mu - y) / len(y)
    viol = np.where(beta > 0, np.abs(g + lam), np.maximum(0.0, -(g + lam)))
    return max(abs(np.mean(mu - y)), np.max(viol))


def split_search(X, y, rows, features):
    """Best (feature, threshold) by exhaustive search; sums of squares criterion."""
    best = (-np.inf, None, None)
    ys = y[rows]
    for f in features:
        xs = X[rows, f]
        for t in np.unique(xs)[:-1]:
            left = xs <= t
            sse = ((ys[left] - ys[left].mean()) ** 2).sum() + \
                ((ys[~left] - ys[~left].mean()) ** 2).sum()
            if -sse > best[0] + 1e-12:
                best = (-sse, f, t)
    return best


def nearest_donors(yhat_obs, target, d):
    """Indices of the d observed rows closest to target (ties: lowest index)."""
    dist = [(abs(v - target), i) for i, v in enumerate(yhat_obs)]
    dist.sort()
    return [i for _, i in dist[:d]]
