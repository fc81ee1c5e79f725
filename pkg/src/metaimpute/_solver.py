"""Compiled IRLS / coordinate-descent kernel for penalized logistic paths.

The kernel works on a (possibly rotated) standardized design passed in
transposed, C-contiguous form ``Ft`` (shape p x n) so that each coordinate
is a contiguous row.  Observation weights ``w`` must sum to one, which makes
the loss the weighted mean negative log-likelihood.
"""
import numpy as np
from numba import njit

WEIGHT_FLOOR = 1e-5
MAX_HALVINGS = 50
# objective comparisons tolerate this relative rounding slack
ROUNDING = 1e-13


@njit(cache=True, fastmath=True)
def _log1pexp(t):
    if t > 0.0:
        return t + np.log1p(np.exp(-t))
    return np.log1p(np.exp(t))


@njit(cache=True, fastmath=True)
def _sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + np.exp(-t))
    e = np.exp(t)
    return e / (1.0 + e)


@njit(cache=True, fastmath=True)
def _linear_predictor(Ft, beta, b, eta):
    p, n = Ft.shape
    for i in range(n):
        eta[i] = b
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            row = Ft[j]
            for i in range(n):
                eta[i] += bj * row[i]


@njit(cache=True, fastmath=True)
def _objective(eta, y, w, beta, lam, lasso):
    loss = 0.0
    for i in range(eta.shape[0]):
        loss += w[i] * (_log1pexp(eta[i]) - y[i] * eta[i])
    pen = 0.0
    if lasso:
        for j in range(beta.shape[0]):
            pen += abs(beta[j])
        return loss + lam * pen
    for j in range(beta.shape[0]):
        pen += beta[j] * beta[j]
    return loss + 0.5 * lam * pen


@njit(cache=True, fastmath=True)
def _kkt(Ft, eta, y, w, beta, lam, lasso, skip, resid):
    """Stationarity residual; 2-norm for ridge, sup-norm for the NN lasso."""
    p, n = Ft.shape
    g0 = 0.0
    for i in range(n):
        resid[i] = w[i] * (_sigmoid(eta[i]) - y[i])
        g0 += resid[i]
    worst = abs(g0)
    sq = g0 * g0
    for j in range(p):
        if skip[j]:
            continue
        row = Ft[j]
        g = 0.0
        for i in range(n):
            g += row[i] * resid[i]
        if lasso:
            if beta[j] > 0.0:
                d = abs(g + lam)
            else:
                d = -lam - g
                if d < 0.0:
                    d = 0.0
            if d > worst:
                worst = d
        else:
            d = g + lam * beta[j]
            sq += d * d
    if lasso:
        return worst
    return np.sqrt(sq)


@njit(cache=True, fastmath=True)
def irls_cd_path(Ft, y, w, lambdas, lasso, skip, beta0, b0,
                 max_outer, tol_outer, tol_inner, kkt_tol, max_sweeps):
    """Fit the whole lambda sequence with warm starts.

    Returns (betas, intercepts, kkt, n_outer, ok).  ``ok[l]`` is False when
    ``max_outer`` iterations passed without meeting both the objective and the
    KKT tolerance at ``lambdas[l]``.
    """
    p, n = Ft.shape
    L = lambdas.shape[0]
    betas = np.zeros((L, p))
    intercepts = np.zeros(L)
    kkts = np.zeros(L)
    n_outer = np.zeros(L, dtype=np.int64)
    ok = np.zeros(L, dtype=np.bool_)

    beta = beta0.copy()
    b = b0
    beta_old = np.empty(p)
    eta = np.empty(n)
    eta_new = np.empty(n)
    v = np.empty(n)
    r = np.empty(n)
    xv2 = np.empty(p)
    scratch = np.empty(n)
    _linear_predictor(Ft, beta, b, eta)

    for l in range(L):
        lam = lambdas[l]
        obj = _objective(eta, y, w, beta, lam, lasso)
        kkt = _kkt(Ft, eta, y, w, beta, lam, lasso, skip, scratch)
        it = 0
        done = kkt <= kkt_tol
        while not done and it < max_outer:
            it += 1
            sv = 0.0
            for i in range(n):
                m = _sigmoid(eta[i])
                q = m * (1.0 - m)
                if q < WEIGHT_FLOOR:
                    q = WEIGHT_FLOOR
                v[i] = w[i] * q
                r[i] = (y[i] - m) / q
                sv += v[i]
            for j in range(p):
                row = Ft[j]
                s = 0.0
                for i in range(n):
                    s += v[i] * row[i] * row[i]
                xv2[j] = s
            for j in range(p):
                beta_old[j] = beta[j]
            b_old = b

            for _ in range(max_sweeps):
                s = 0.0
                for i in range(n):
                    s += v[i] * r[i]
                d = s / sv
                b += d
                for i in range(n):
                    r[i] -= d
                maxd = abs(d)
                for j in range(p):
                    if skip[j] or xv2[j] == 0.0:
                        continue
                    row = Ft[j]
                    g = 0.0
                    for i in range(n):
                        g += v[i] * row[i] * r[i]
                    g += xv2[j] * beta[j]
                    if lasso:
                        new = (g - lam) / xv2[j]
                        if new < 0.0:
                            new = 0.0
                    else:
                        new = g / (xv2[j] + lam)
                    d = new - beta[j]
                    if d != 0.0:
                        for i in range(n):
                            r[i] -= d * row[i]
                        beta[j] = new
                        # change measured in gradient units of the subproblem
                        dg = abs(d) * max(1.0, xv2[j] + lam)
                        if dg > maxd:
                            maxd = dg
                if maxd < tol_inner:
                    break

            _linear_predictor(Ft, beta, b, eta_new)
            obj_new = _objective(eta_new, y, w, beta, lam, lasso)
            slack = ROUNDING * (1.0 + abs(obj))
            h = 0
            while obj_new > obj + slack and h < MAX_HALVINGS:
                h += 1
                for j in range(p):
                    beta[j] = 0.5 * (beta[j] + beta_old[j])
                b = 0.5 * (b + b_old)
                _linear_predictor(Ft, beta, b, eta_new)
                obj_new = _objective(eta_new, y, w, beta, lam, lasso)
            if obj_new > obj + slack:
                # no descent possible along this direction; keep the old iterate
                for j in range(p):
                    beta[j] = beta_old[j]
                b = b_old
                obj_new = obj
            else:
                for i in range(n):
                    eta[i] = eta_new[i]
            change = obj - obj_new
            obj = obj_new
            kkt = _kkt(Ft, eta, y, w, beta, lam, lasso, skip, scratch)
            if change <= tol_outer * (1.0 + abs(obj)) and kkt <= kkt_tol:
                done = True
        betas[l] = beta
        intercepts[l] = b
        kkts[l] = kkt
        n_outer[l] = it
        ok[l] = done
    return betas, intercepts, kkts, n_outer, ok
