"""Compiled numerical kernels.

Everything here works on plain arrays so that numba can compile it; the
public wrappers live in ``covmodels`` and ``clike``.

Parameter layout for a model is ``[beta..., family params...]`` where the
family block is

    SEPEXP   (phi, rho, sigma2)
    MATERN   (phi, nu, rho, sigma2)
    CRESSIE  (a, b, c, nu, sigma2)

and the optimizer works on the transformed vector: atanh for phi, log for
the positive parameters, identity for beta.
"""

import math

import numpy as np
from numba import njit

SEPEXP = 1
MATERN = 2
CRESSIE = 3

LOG2PI = math.log(2.0 * math.pi)
_EPS = 1e-16
_MAXIT = 10000

# Taylor coefficients of 1/Gamma(1 + x) about 0
_RGAM = np.array([
    1.0,
    0.5772156649015328606,
    -0.6558780715202538811,
    -0.04200263503409523553,
    0.1665386113822914895,
    -0.04219773455554433675,
    -0.009621971527876973562,
    0.007218943246663099542,
    -0.001165167591859065112,
    -0.0002152416741149509728,
    0.0001280502823881161862,
    -0.00002013485478078823866,
    -1.250493482142670657e-6,
    1.133027231981695882e-6,
    -2.056338416977607103e-7,
    6.116095104481415818e-9,
    5.00200764446922293e-9,
    -1.181274570487020145e-9,
    1.04342671169110051e-10,
    7.782263439905071254e-12,
    -3.696805618642205708e-12,
    5.100370287454475979e-13,
    -2.058326053566506783e-14,
    -5.348122539423017982e-15,
    1.22677862823826079e-15,
    -1.18125930169745877e-16,
    1.186692254751600333e-18,
    1.412380655318031782e-18,
])


@njit(cache=True)
def _temme_gammas(mu):
    # gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2
    gam1 = 0.0
    gam2 = 0.0
    p = 1.0
    for n in range(_RGAM.shape[0]):
        if n % 2 == 0:
            gam2 += _RGAM[n] * p
        else:
            gam1 -= _RGAM[n] * p
            p *= mu * mu
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


@njit(cache=True)
def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x), nu >= 0, x > 0."""
    if not (x > 0.0) or nu < 0.0 or not math.isfinite(nu):
        return math.nan
    if not math.isfinite(x):
        return 0.0
    nl = int(nu + 0.5)
    xmu = nu - nl
    xmu2 = xmu * xmu
    xi = 1.0 / x
    xi2 = 2.0 * xi
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * xmu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = xmu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _temme_gammas(xmu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - xmu2)
            c *= d / i
            p /= i - xmu
            q /= i + xmu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        rkmu = total
        rk1 = total1 * xi2
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - xmu2
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT):
            a -= 2.0 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi
    for i in range(1, nl + 1):
        rktemp = (xmu + i) * xi2 * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    return rkmu


@njit(cache=True)
def bessel_k_array(nu, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = bessel_k(nu, x[i])
    return out


@njit(cache=True)
def n_family_params(family):
    if family == SEPEXP:
        return 3
    if family == MATERN:
        return 4
    return 5


@njit(cache=True)
def matern_corr(nu, scaled):
    """Matern correlation at argument sqrt(2 nu) * dist / rho, already formed."""
    if scaled <= 0.0:
        return 1.0
    if scaled > 700.0:
        return 0.0
    return math.exp((1.0 - nu) * math.log(2.0) - math.lgamma(nu) + nu * math.log(scaled)) \
        * bessel_k(nu, scaled)


@njit(cache=True)
def marginal_variance(family, famp):
    if family == CRESSIE:
        return famp[4]
    phi = famp[0]
    return famp[famp.shape[0] - 1] / (1.0 - phi * phi)


@njit(cache=True)
def spatial_corr(family, squared, famp, h):
    g = h * h if squared else h
    if family == SEPEXP:
        return math.exp(-g / famp[1])
    nu = famp[1]
    return matern_corr(nu, math.sqrt(2.0 * nu) * g / famp[2])


@njit(cache=True)
def cov_value(family, squared, famp, h, u):
    u = abs(u)
    if family == CRESSIE:
        a, b, c, nu, s2 = famp[0], famp[1], famp[2], famp[3], famp[4]
        au2 = a * a * u * u
        big_a = au2 + 1.0
        big_b = au2 + c
        head = s2 * c / (math.exp(nu * math.log(big_a)) * big_b)
        if h <= 0.0:
            return head
        z = b * math.sqrt(big_a / big_b) * h
        if z > 700.0:
            return 0.0
        return head * 2.0 / math.gamma(nu) * math.exp(nu * math.log(0.5 * z)) * bessel_k(nu, z)
    phi = famp[0]
    v = marginal_variance(family, famp)
    pu = 1.0
    for _ in range(u):
        pu *= phi
    return pu * v * spatial_corr(family, squared, famp, h)


@njit(cache=True)
def decode(family, n_mean, z, theta):
    """Transformed vector z -> natural parameters theta (same layout)."""
    for j in range(n_mean):
        theta[j] = z[j]
    nf = n_family_params(family)
    for j in range(nf):
        zj = z[n_mean + j]
        if family != CRESSIE and j == 0:
            theta[n_mean] = math.tanh(zj)
        else:
            theta[n_mean + j] = math.exp(zj)


@njit(cache=True)
def encode(family, n_mean, theta, z):
    for j in range(n_mean):
        z[j] = theta[j]
    nf = n_family_params(family)
    for j in range(nf):
        tj = theta[n_mean + j]
        if family != CRESSIE and j == 0:
            z[n_mean] = math.atanh(tj)
        else:
            z[n_mean + j] = math.log(tj)


@njit(cache=True)
def _quad(A, idx, g):
    q = 0.0
    m = idx.shape[0]
    for a in range(m):
        ra = idx[a]
        for b in range(m):
            q += g[a] * g[b] * A[ra, idx[b]]
    return q


@njit(cache=True)
def _quad_beta(A, theta, mean_cols):
    # g'Ag with g = e_0 - sum_j beta_j e_{mean_cols[j]}
    q = A[0, 0]
    for j in range(mean_cols.shape[0]):
        cj = mean_cols[j]
        q -= 2.0 * theta[j] * A[0, cj]
        for l in range(mean_cols.shape[0]):
            q += theta[j] * theta[l] * A[cj, mean_cols[l]]
    return q


@njit(cache=True)
def loglik_stats(family, squared, theta, mean_cols, cls_h, cls_u, cls_n, P, Q, edge_w, edge_M):
    """Composite log-likelihood of one segment from its sufficient statistics.

    P[c] = sum over pairs of (w1 w1' + w2 w2'), Q[c] = sum of (w1 w2' + w2 w1') / 2,
    with w = (x, 1, covariates...) the augmented observation; edge_M is the
    weighted sum of w w' over compensating marginal sites.
    """
    n_mean = mean_cols.shape[0]
    famp = theta[n_mean:]
    v = marginal_variance(family, famp)
    if not (v > 0.0) or not math.isfinite(v):
        return -math.inf
    ll = 0.0
    for c in range(cls_h.shape[0]):
        n = cls_n[c]
        if n == 0.0:
            continue
        cv = cov_value(family, squared, famp, cls_h[c], cls_u[c])
        det = v * v - cv * cv
        if not (det > 0.0):
            return -math.inf
        qa = _quad_beta(P[c], theta, mean_cols)
        qb = _quad_beta(Q[c], theta, mean_cols)
        ll += n * (-LOG2PI - 0.5 * math.log(det)) - (v * qa - 2.0 * cv * qb) / (2.0 * det)
    if edge_w > 0.0:
        ll += edge_w * (-0.5 * (LOG2PI + math.log(v))) - _quad_beta(edge_M, theta, mean_cols) / (2.0 * v)
    if not math.isfinite(ll):
        return -math.inf
    return ll


@njit(cache=True)
def segment_stats(t1, t2, k, cls_u, cls_np, RP, RQ, Mt, wsum, P, Q, n):
    """Fill P, Q, n for rows [t1, t2) from prefix sums; return (edge_w, edge_M)."""
    C = cls_u.shape[0]
    D = RP.shape[2]
    for c in range(C):
        hi = t2 - cls_u[c]
        if hi > t1:
            n[c] = cls_np[c] * (hi - t1)
            for a in range(D):
                for b in range(D):
                    P[c, a, b] = RP[hi, c, a, b] - RP[t1, c, a, b]
                    Q[c, a, b] = RQ[hi, c, a, b] - RQ[t1, c, a, b]
        else:
            n[c] = 0.0
            for a in range(D):
                for b in range(D):
                    P[c, a, b] = 0.0
                    Q[c, a, b] = 0.0
    M = np.zeros((D, D))
    ew = 0.0
    for i in range(1, k + 1):
        wt = k - i + 1.0
        ew += 2.0 * wt * wsum
        for a in range(D):
            for b in range(D):
                M[a, b] += wt * (Mt[t1 + i - 1, a, b] + Mt[t2 - i, a, b])
    return ew, M


@njit(cache=True)
def _objective(z, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale):
    decode(family, mean_cols.shape[0], z, theta)
    ll = loglik_stats(family, squared, theta, mean_cols, cls_h, cls_u, n, P, Q, ew, M)
    if not math.isfinite(ll):
        return math.inf
    return -ll / scale


@njit(cache=True)
def _nelder_mead(z0, step, maxiter, xatol, fatol, theta, family, squared, mean_cols,
                 cls_h, cls_u, n, P, Q, ew, M, scale):
    dim = z0.shape[0]
    sim = np.empty((dim + 1, dim))
    fs = np.empty(dim + 1)
    sim[0] = z0
    for i in range(dim):
        sim[i + 1] = z0
        sim[i + 1, i] += step[i]
    for i in range(dim + 1):
        fs[i] = _objective(sim[i], theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
    order = np.argsort(fs)
    sim = sim[order]
    fs = fs[order]
    converged = False
    nit = 0
    while nit < maxiter:
        nit += 1
        if math.isfinite(fs[0]) and math.isfinite(fs[dim]):
            xd = 0.0
            for i in range(1, dim + 1):
                for j in range(dim):
                    xd = max(xd, abs(sim[i, j] - sim[0, j]))
            if xd <= xatol and fs[dim] - fs[0] <= fatol:
                converged = True
                break
        xbar = np.zeros(dim)
        for i in range(dim):
            xbar += sim[i]
        xbar /= dim
        xr = 2.0 * xbar - sim[dim]
        fr = _objective(xr, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
        shrink = False
        if fr < fs[0]:
            xe = 3.0 * xbar - 2.0 * sim[dim]
            fe = _objective(xe, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            if fe < fr:
                sim[dim] = xe
                fs[dim] = fe
            else:
                sim[dim] = xr
                fs[dim] = fr
        elif fr < fs[dim - 1]:
            sim[dim] = xr
            fs[dim] = fr
        elif fr < fs[dim]:
            xc = 1.5 * xbar - 0.5 * sim[dim]
            fc = _objective(xc, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            if fc <= fr:
                sim[dim] = xc
                fs[dim] = fc
            else:
                shrink = True
        else:
            xcc = 0.5 * xbar + 0.5 * sim[dim]
            fcc = _objective(xcc, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            if fcc < fs[dim]:
                sim[dim] = xcc
                fs[dim] = fcc
            else:
                shrink = True
        if shrink:
            for i in range(1, dim + 1):
                sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                fs[i] = _objective(sim[i], theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
    return sim[0].copy(), fs[0], converged


@njit(cache=True)
def _fd_grad_hess(z, f0, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale, h):
    dim = z.shape[0]
    g = np.empty(dim)
    H = np.empty((dim, dim))
    zz = z.copy()
    fp = np.empty(dim)
    fm = np.empty(dim)
    for i in range(dim):
        zz[i] = z[i] + h
        fp[i] = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
        zz[i] = z[i] - h
        fm[i] = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
        zz[i] = z[i]
        g[i] = (fp[i] - fm[i]) / (2.0 * h)
        H[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / (h * h)
    for i in range(dim):
        for j in range(i + 1, dim):
            zz[i] = z[i] + h
            zz[j] = z[j] + h
            fpp = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            zz[j] = z[j] - h
            fpm = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            zz[i] = z[i] - h
            fmm = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            zz[j] = z[j] + h
            fmp = _objective(zz, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            zz[i] = z[i]
            zz[j] = z[j]
            H[i, j] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
            H[j, i] = H[i, j]
    return g, H


@njit(cache=True)
def _newton_polish(z, f, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale):
    """Finite-difference Newton steps from the simplex optimum; each step is
    accepted only if it does not increase the objective."""
    dim = z.shape[0]
    for _ in range(6):
        g, H = _fd_grad_hess(z, f, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M,
                             scale, 1e-4)
        ok = True
        for i in range(dim):
            if not (math.isfinite(g[i]) and H[i, i] > 0.0):
                ok = False
        if not ok:
            break
        for i in range(dim):
            for j in range(dim):
                if not math.isfinite(H[i, j]):
                    ok = False
        if not ok:
            break
        ev = np.linalg.eigvalsh(H)
        if ev[0] <= 1e-12 * ev[dim - 1]:
            break
        step = np.linalg.solve(H, -g)
        moved = False
        t = 1.0
        for _half in range(5):
            zn = z + t * step
            fn = _objective(zn, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
            if fn <= f:
                z = zn
                f = fn
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        gmax = 0.0
        for i in range(dim):
            gmax = max(gmax, abs(step[i]))
        if gmax < 1e-10:
            break
    return z, f


@njit(cache=True)
def _clip(x, lo, hi):
    return min(max(x, lo), hi)


@njit(cache=True)
def moment_start(family, squared, mean_cols, cls_h, n, P, Q, i_self, i_nn, z):
    """Method-of-moments starting point in transformed coordinates."""
    n_mean = mean_cols.shape[0]
    idx = np.empty(n_mean + 1, dtype=np.int64)
    g = np.empty(n_mean + 1)
    idx[0] = 0
    g[0] = 1.0
    for j in range(n_mean):
        idx[j + 1] = mean_cols[j]
    if n_mean > 0:
        A = np.empty((n_mean, n_mean))
        rhs = np.empty(n_mean)
        for a in range(n_mean):
            rhs[a] = P[i_self, mean_cols[a], 0]
            for b in range(n_mean):
                A[a, b] = P[i_self, mean_cols[a], mean_cols[b]]
        for a in range(n_mean):
            A[a, a] += 1e-12 * (1.0 + abs(A[a, a]))
        beta = np.linalg.solve(A, rhs)
        for j in range(n_mean):
            g[j + 1] = -beta[j]
            z[j] = beta[j]
    pa = _quad(P[i_self], idx, g)
    v0 = max(pa / (2.0 * max(n[i_self], 1.0)), 1e-8)
    r1 = _quad(Q[i_self], idx, g) / max(pa / 2.0, 1e-300)
    phi0 = _clip(r1, -0.9, 0.9)
    rn = 0.5
    hn = 1.0
    if i_nn >= 0 and n[i_nn] > 0:
        pn = _quad(P[i_nn], idx, g)
        rn = _clip(_quad(Q[i_nn], idx, g) / max(pn / 2.0, 1e-300), 0.05, 0.95)
        hn = cls_h[i_nn]
    if family == CRESSIE:
        z[n_mean + 0] = 0.0
        z[n_mean + 1] = math.log(-math.log(rn) / hn)
        z[n_mean + 2] = math.log(2.0)
        z[n_mean + 3] = math.log(0.5)
        z[n_mean + 4] = math.log(v0)
        return
    # the lag-0 neighbor correlation is the spatial correlation itself
    gn = hn * hn if squared else hn
    rho0 = gn / (-math.log(rn))
    z[n_mean] = math.atanh(phi0)
    if family == SEPEXP:
        z[n_mean + 1] = math.log(rho0)
        z[n_mean + 2] = math.log(v0 * (1.0 - phi0 * phi0))
    else:
        z[n_mean + 1] = math.log(0.5)
        z[n_mean + 2] = math.log(rho0)
        z[n_mean + 3] = math.log(v0 * (1.0 - phi0 * phi0))


@njit(cache=True)
def fit_stats(family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, i_self, i_nn,
              jitter, maxiter, xatol, fatol, z_start):
    """Maximize the composite likelihood of one segment.

    Returns (theta, loglik, converged, restarts_used). ``z_start`` overrides the
    moment start when it has finite entries.
    """
    n_mean = mean_cols.shape[0]
    dim = n_mean + n_family_params(family)
    theta = np.empty(dim)
    z0 = np.empty(dim)
    if math.isfinite(z_start[0]):
        z0[:] = z_start
    else:
        moment_start(family, squared, mean_cols, cls_h, n, P, Q, i_self, i_nn, z0)
    scale = ew
    for c in range(n.shape[0]):
        scale += n[c]
    scale = max(scale, 1.0)
    step = np.full(dim, 0.1)
    if n_mean > 0:
        v0 = math.exp(z0[dim - 1])
        for j in range(n_mean):
            step[j] = 0.1 * math.sqrt(v0)
    best_z = z0.copy()
    best_f = _objective(z0, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
    best_conv = False
    used = 0
    n_restarts = jitter.shape[0] + 1
    for r in range(n_restarts):
        if r == 0:
            start = z0.copy()
        else:
            start = best_z + jitter[r - 1]
        zr, fr, conv = _nelder_mead(start, step, maxiter, xatol, fatol, theta, family, squared,
                                    mean_cols, cls_h, cls_u, n, P, Q, ew, M, scale)
        used += 1
        if math.isfinite(fr):
            zr, fr = _newton_polish(zr, fr, theta, family, squared, mean_cols, cls_h, cls_u, n, P, Q,
                                    ew, M, scale)
        improved = fr < best_f - fatol
        if fr <= best_f or not math.isfinite(best_f):
            if r == 0 or fr < best_f:
                best_conv = conv
            elif conv:
                best_conv = True
            best_z = zr
            best_f = min(fr, best_f) if math.isfinite(best_f) else fr
        if r > 0 and not improved:
            break
    decode(family, n_mean, best_z, theta)
    if not math.isfinite(best_f):
        return theta, -math.inf, False, used
    return theta, -best_f * scale, best_conv, used


@njit(cache=True)
def fit_segments(t1s, t2s, family, squared, mean_cols, k, cls_h, cls_u, cls_np, RP, RQ, Mt, wsum,
                 i_self, i_nn, jitter, maxiter, xatol, fatol):
    nseg = t1s.shape[0]
    C = cls_u.shape[0]
    D = RP.shape[2]
    dim = mean_cols.shape[0] + n_family_params(family)
    thetas = np.empty((nseg, dim))
    ll = np.empty(nseg)
    conv = np.zeros(nseg, dtype=np.bool_)
    used = np.zeros(nseg, dtype=np.int64)
    P = np.empty((C, D, D))
    Q = np.empty((C, D, D))
    n = np.empty(C)
    nostart = np.full(dim, math.nan)
    for s in range(nseg):
        ew, M = segment_stats(t1s[s], t2s[s], k, cls_u, cls_np, RP, RQ, Mt, wsum, P, Q, n)
        th, l, cv, u = fit_stats(family, squared, mean_cols, cls_h, cls_u, n, P, Q, ew, M, i_self,
                                 i_nn, jitter, maxiter, xatol, fatol, nostart)
        thetas[s] = th
        ll[s] = l
        conv[s] = cv
        used[s] = u
    return thetas, ll, conv, used


@njit(cache=True)
def loglik_segment(t1, t2, family, squared, mean_cols, k, cls_h, cls_u, cls_np, RP, RQ, Mt, wsum,
                   theta):
    C = cls_u.shape[0]
    D = RP.shape[2]
    P = np.empty((C, D, D))
    Q = np.empty((C, D, D))
    n = np.empty(C)
    ew, M = segment_stats(t1, t2, k, cls_u, cls_np, RP, RQ, Mt, wsum, P, Q, n)
    return loglik_stats(family, squared, theta, mean_cols, cls_h, cls_u, n, P, Q, ew, M)
