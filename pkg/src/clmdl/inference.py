"""Uncertainty quantification: change-point intervals from the double-sided
random walk of criterion increments, and sandwich variances for segment
parameters.

The random walk is defined for time lag k = 1. For q > 0 it is the gain in
composite log-likelihood from moving the change-point q steps into the next
segment; for q < 0, |q| steps back into the previous one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .clike import OptimizerConfig, SufficientStats
from .covmodels import ModelOrder, check_params, cov_value
from .errors import ConditioningError, InputError
from .segsearch import Segmentation
from .simulate import gen_segment, SegmentSpec
from .stgrid import PairConfig, SpatialDomain

LOG2PI = math.log(2.0 * math.pi)


class _PairModel:
    """Vectorized pair and marginal log-densities for one fitted model on a graph."""

    def __init__(self, order: ModelOrder, theta, cfg: PairConfig, spatial_kernel="squared"):
        if order.mean == 3:
            raise InputError("random-walk intervals are not available for covariate means")
        theta = check_params(order, theta)
        self.mean = theta[0] if order.mean == 2 else 0.0
        famp = theta[order.n_mean:]
        kern = spatial_kernel
        self.v = cov_value(order.family, famp, 0.0, 0, kern)
        src, dst, dist = cfg.graph.directed_edges()
        self.src, self.dst = src, dst
        S = cfg.S
        self.self_idx = np.arange(S)
        uniq, inv = np.unique(dist, return_inverse=True)
        c0 = np.array([cov_value(order.family, famp, float(h), 0, kern) for h in uniq])
        c1 = np.array([cov_value(order.family, famp, float(h), 1, kern) for h in uniq])
        self.c0_edges = c0[inv] if len(dist) else np.zeros(0)
        self.c1_edges = c1[inv] if len(dist) else np.zeros(0)
        self.c1_self = cov_value(order.family, famp, 0.0, 1, kern)
        self.mult = 1.0 + cfg.graph.degrees.astype(float)

    def _pair(self, a, b, c):
        det = self.v * self.v - c * c
        ea, eb = a - self.mean, b - self.mean
        quad = (self.v * (ea * ea + eb * eb) - 2.0 * c * ea * eb) / det
        return -LOG2PI - 0.5 * np.log(det) - 0.5 * quad

    def within(self, row):
        """Contemporaneous pairs (both orderings) of one time row."""
        return float(np.sum(self._pair(row[self.src], row[self.dst], self.c0_edges)))

    def lag1(self, row_a, row_b):
        """Lag-1 pairs from row_a to row_b: self pairs plus neighbors."""
        s = np.sum(self._pair(row_a, row_b, self.c1_self))
        s += np.sum(self._pair(row_a[self.src], row_b[self.dst], self.c1_edges))
        return float(s)

    def marg(self, row):
        """Edge marginals of one row, station s repeated 1 + |N(s)| times."""
        e = row - self.mean
        return float(np.sum(self.mult * (-0.5 * (LOG2PI + math.log(self.v)) - 0.5 * e * e / self.v)))


@dataclass(frozen=True)
class RandomWalkSample:
    q_grid: np.ndarray
    W: np.ndarray
    argmax: int


def _argmax_toward_zero(q, W):
    best = W.max()
    cand = q[W == best]
    return int(cand[np.lexsort((cand, np.abs(cand)))][0])


def walk_from_windows(left, right, model_j: _PairModel, model_next: _PairModel, Q: int) -> RandomWalkSample:
    """W(q) for q in [-Q, Q] from a window ``left`` ending at the last row of
    segment j and a window ``right`` starting at the first row of segment j+1.

    Both windows need at least Q + 1 rows.
    """
    if left.shape[0] < Q + 1 or right.shape[0] < Q + 1:
        raise InputError("windows must hold at least Q + 1 rows")
    mj, mn = model_j, model_next
    xT = left[-1]
    x1 = right[0]
    # boundary terms shared by both sides
    seam_old = mj.marg(xT) + mn.marg(x1)
    A2 = mj.lag1(xT, x1) - seam_old
    B2 = mn.lag1(xT, x1) - seam_old
    q_grid = np.arange(-Q, Q + 1)
    W = np.zeros(2 * Q + 1)
    # q > 0: rows x_1 .. x_q (right[0 .. q-1]) switch to model j
    a3 = 0.0
    for q in range(1, Q + 1):
        r = right[q - 1]
        a3 += mj.within(r) - mn.within(r)
        if q >= 2:
            a3 += mj.lag1(right[q - 2], r) - mn.lag1(right[q - 2], r)
        a1 = mj.marg(r) + mn.marg(right[q]) - mn.lag1(r, right[q])
        W[Q + q] = a1 + A2 + a3
    # q < 0: rows x_{T_j+q+1} .. x_{T_j} switch to model j+1
    b3 = 0.0
    n = left.shape[0]
    for p in range(1, Q + 1):
        r = left[n - p]
        b3 += mn.within(r) - mj.within(r)
        if p >= 2:
            b3 += mn.lag1(r, left[n - p + 1]) - mj.lag1(r, left[n - p + 1])
        a, b = left[n - p - 1], left[n - p]
        b1 = mj.marg(a) + mn.marg(b) - mj.lag1(a, b)
        W[Q - p] = b1 + B2 + b3
    return RandomWalkSample(q_grid, W, _argmax_toward_zero(q_grid, W))


def random_walk_path(domain: SpatialDomain, cfg: PairConfig, seg_j, seg_next, Q: int, rng,
                     spatial_kernel="squared", dense_budget=None) -> RandomWalkSample:
    """One realization of W on [-Q, Q] with windows simulated from the fitted
    models ``seg_j`` and ``seg_next`` (each an (order, theta) pair)."""
    if cfg.k != 1:
        raise InputError("the random walk is defined for k = 1")
    kw = {} if dense_budget is None else {"dense_budget": dense_budget}
    left = gen_segment(domain, SegmentSpec(Q + 2, *seg_j), rng, spatial_kernel, **kw)
    right = gen_segment(domain, SegmentSpec(Q + 2, *seg_next), rng, spatial_kernel, **kw)
    mj = _PairModel(seg_j[0], seg_j[1], cfg, spatial_kernel)
    mn = _PairModel(seg_next[0], seg_next[1], cfg, spatial_kernel)
    return walk_from_windows(left, right, mj, mn, Q)


@dataclass(frozen=True)
class ChangePointCI:
    j: int
    tau: int
    lower: int
    upper: int
    level: float
    T: int
    Q: int
    n_rep: int
    informative: bool
    argmax: tuple

    @property
    def lam_interval(self):
        return (self.lower / self.T, self.upper / self.T)

    def as_dict(self) -> dict:
        return {
            "j": self.j, "tau": self.tau, "lower": self.lower, "upper": self.upper,
            "lambda_lower": self.lower / self.T, "lambda_upper": self.upper / self.T,
            "level": self.level, "Q": self.Q, "n_rep": self.n_rep, "informative": self.informative,
        }


def default_Q(seg: Segmentation, j: int, eps_lambda: float) -> int:
    Q = 2 * int(math.ceil(seg.T * eps_lambda - 1e-9))
    pts = (0,) + tuple(seg.tau) + (seg.T,)
    spacing = min(pts[j + 1] - pts[j], pts[j + 2] - pts[j + 1])
    return max(1, min(Q, spacing - 1))


def _models_identical(a, b):
    return a[0] == b[0] and np.allclose(a[1], b[1], rtol=0, atol=1e-12)


def refit_k1(y, seg: Segmentation, domain, graph, opt: OptimizerConfig, spatial_kernel="squared",
             covariates=None):
    """Refit every segment of ``seg`` with k = 1 keeping the selected orders."""
    stats = SufficientStats(y, PairConfig(1, graph), covariates)
    return [(sc.order, stats.fit(sc.t1, sc.t2, sc.order, opt, spatial_kernel).theta) for sc in seg.segments]


def changepoint_ci(seg: Segmentation, j: int, domain: SpatialDomain, cfg: PairConfig, level: float = 0.9,
                   n_rep: int = 100, seed: int = 0, Q: int | None = None, eps_lambda: float = 0.1,
                   spatial_kernel: str = "squared", models=None, dense_budget=None) -> ChangePointCI:
    """Interval for the j-th change-point (0-based) from quantiles of the
    simulated random-walk argmax.

    ``models`` optionally supplies (order, theta) per segment, e.g. a k = 1
    refit; by default the fits stored in ``seg`` are used, which requires
    ``cfg.k == 1``.
    """
    if not 0 < level < 1:
        raise InputError(f"level must lie in (0, 1), got {level}")
    if not 0 <= j < seg.m:
        raise InputError(f"change-point index {j} out of range for m = {seg.m}")
    if cfg.k != 1:
        raise InputError("change-point intervals need k = 1 fits; pass models from refit_k1")
    if models is None:
        models = [(sc.order, sc.fit.theta) for sc in seg.segments]
    a, b = models[j], models[j + 1]
    informative = not _models_identical(a, b)
    Q = default_Q(seg, j, eps_lambda) if Q is None else int(Q)
    rng = np.random.default_rng([seed, j])

    def run(Qr):
        return np.array([random_walk_path(domain, cfg, a, b, Qr, rng, spatial_kernel, dense_budget).argmax
                         for _ in range(n_rep)])

    am = run(Q)
    if np.any(np.abs(am) >= Q):
        Q = 2 * Q
        am = run(Q)
    alpha = 1.0 - level
    lo = int(np.quantile(am, alpha / 2, method="lower"))
    hi = int(np.quantile(am, 1 - alpha / 2, method="higher"))
    # the estimate sits at tau + argmax, so the interval for tau reflects the quantiles
    tau = seg.tau[j]
    return ChangePointCI(j, tau, tau - hi, tau - lo, level, seg.T, Q, n_rep, informative, tuple(am.tolist()))


@dataclass(frozen=True)
class SandwichVariance:
    sigma1: np.ndarray
    sigma2: np.ndarray
    avar: np.ndarray
    names: tuple = ()

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.avar), 0.0, None))


def _fd_score(f, theta, steps):
    g = np.empty(len(theta))
    for i, h in enumerate(steps):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (f(tp) - f(tm)) / (2 * h)
    return g


def _fd_hessian(f, theta, steps):
    d = len(theta)
    H = np.empty((d, d))
    f0 = f(theta)
    for i in range(d):
        for k in range(i, d):
            if i == k:
                tp, tm = theta.copy(), theta.copy()
                tp[i] += steps[i]
                tm[i] -= steps[i]
                H[i, i] = (f(tp) - 2 * f0 + f(tm)) / steps[i] ** 2
            else:
                vals = []
                for si, sk in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    t = theta.copy()
                    t[i] += si * steps[i]
                    t[k] += sk * steps[k]
                    vals.append(f(t))
                H[i, k] = H[k, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * steps[i] * steps[k])
    return 0.5 * (H + H.T)


def param_variance(stats: SufficientStats, t1: int, t2: int, order: ModelOrder, theta, domain: SpatialDomain,
                   n_rep: int = 100, seed: int = 0, spatial_kernel: str = "squared",
                   rel_step: float = 1e-4) -> SandwichVariance:
    """Sandwich variance of the composite-likelihood estimate on rows [t1, t2).

    Curvature from a finite-difference Hessian at ``theta``; score variance
    from parametric replicates simulated under ``theta``.
    """
    theta = check_params(order, theta).copy()
    n = stats.S * (t2 - t1)
    steps = rel_step * np.maximum(1.0, np.abs(theta))
    H = _fd_hessian(lambda th: stats.loglik(t1, t2, order, th, spatial_kernel), theta, steps)
    sigma2 = -H / n
    ev = np.linalg.eigvalsh(sigma2)
    if ev[0] <= 1e-10 * max(abs(ev[-1]), 1e-300):
        raise ConditioningError(f"curvature matrix is singular or indefinite (eigenvalues {ev})", ev)
    rng = np.random.default_rng(seed)
    spec = SegmentSpec(t2 - t1, order, theta)
    scores = []
    for _ in range(n_rep):
        ysim = gen_segment(domain, spec, rng, spatial_kernel)
        st = SufficientStats(ysim, stats.cfg)
        scores.append(_fd_score(lambda th: st.loglik(0, t2 - t1, order, th, spatial_kernel), theta, steps))
    scores = np.array(scores)
    sigma1 = np.atleast_2d(np.cov(scores, rowvar=False)) / n
    inv = np.linalg.inv(sigma2)
    avar = inv @ sigma1 @ inv / n
    avar = 0.5 * (avar + avar.T)
    return SandwichVariance(sigma1, sigma2, avar, order.param_names)


def warn_if_wide(S: int, T: int):
    if S >= T:
        warnings.warn(f"S = {S} >= T = {T}: the random-walk approximation may be inaccurate", stacklevel=2)
