"""Independent slow reference implementations used by the tests."""

import numpy as np

from clmdl.covmodels import BivariatePair, cov_value, marg_logdensity, pair_logdensity
from clmdl.stgrid import edge_multiset, enumerate_pairs


def brute_composite_loglik(y, order, theta, cfg, kernel="squared", covariates=None):
    """Sum of bivariate and edge marginal log-densities by explicit enumeration."""
    y = np.asarray(y, dtype=float)
    T, S = y.shape
    theta = np.asarray(theta, dtype=float)
    beta, famp = theta[:order.n_mean], theta[order.n_mean:]
    if order.mean == 1:
        mean = np.zeros((T, S))
    elif order.mean == 2:
        mean = np.full((T, S), beta[0])
    else:
        mean = covariates[:, :, np.asarray(order.mean_columns) - 2] @ beta
    g = cfg.graph
    dist = {}
    for s in range(S):
        for n, h in zip(g.neighbors(s), g.neighbor_dist(s)):
            dist[(s, int(n))] = float(h)
    var = cov_value(order.family, famp, 0.0, 0, kernel)
    total = 0.0
    for t, i, s1, s2 in enumerate_pairs(T, cfg):
        h = 0.0 if s1 == s2 else dist[(s1, s2)]
        c = cov_value(order.family, famp, h, i, kernel)
        p = BivariatePair(mean[t, s1], mean[t + i, s2], var, var, c)
        total += pair_logdensity(p, y[t, s1], y[t + i, s2])
    for i, s, mult in edge_multiset(cfg).entries:
        total += mult * (marg_logdensity(mean[i - 1, s], var, y[i - 1, s])
                         + marg_logdensity(mean[T - i, s], var, y[T - i, s]))
    return total


def brute_pair_terms(y, order, theta, cfg, pairs, kernel="squared"):
    """Log-density sum over an explicit list of (t, i, s1, s2) pairs of panel rows."""
    theta = np.asarray(theta, dtype=float)
    famp = theta[order.n_mean:]
    mu = theta[0] if order.mean == 2 else 0.0
    g = cfg.graph
    var = cov_value(order.family, famp, 0.0, 0, kernel)
    total = 0.0
    for t, i, s1, s2 in pairs:
        if s1 == s2:
            h = 0.0
        else:
            nb = g.neighbors(s1).tolist()
            h = float(g.neighbor_dist(s1)[nb.index(s2)])
        c = cov_value(order.family, famp, h, i, kernel)
        total += pair_logdensity(BivariatePair(mu, mu, var, var, c), y[t, s1], y[t + i, s2])
    return total
