"""Edge-corrected pairwise composite likelihood of a segment and its
maximization.

Every pair factor depends on the data only through outer products of the
augmented vectors w = (x, 1, z_1, ..., z_p), so pairs are grouped into classes
sharing (time lag, distance) and their outer products are accumulated as
prefix sums over time. A segment's likelihood then costs O(classes) no matter
how many stations there are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .covmodels import ModelOrder, check_params
from .errors import FitError, InputError
from .stgrid import PairConfig



@dataclass(frozen=True)
class OptimizerConfig:
    """Simplex search settings. Restarts after the first start from the best
    point so far plus a seeded Gaussian jitter of ``jitter_scale`` in
    transformed coordinates."""

    n_restarts: int = 3
    maxiter: int = 2000
    ftol: float = 1e-8
    xtol: float = 1e-6
    jitter_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_restarts < 1 or self.maxiter < 1:
            raise InputError("n_restarts and maxiter must be >= 1")
        if not (self.ftol > 0 and self.xtol > 0):
            raise InputError("ftol and xtol must be positive")

    def jitter(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, dim])
        return self.jitter_scale * rng.standard_normal((self.n_restarts - 1, dim))


@dataclass(frozen=True)
class FitResult:
    order: ModelOrder
    theta: np.ndarray
    loglik: float
    converged: bool
    n_restarts_used: int

    def as_dict(self) -> dict:
        return {
            "model": self.order.name,
            "theta": dict(zip(self.order.param_names, map(float, self.theta))),
            "loglik": float(self.loglik),
            "converged": bool(self.converged),
        }


def _check_data(y, covariates):
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise InputError(f"data must be a (T, S) matrix, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("data contain non-finite values")
    if covariates is not None:
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 2:
            covariates = covariates[:, :, None]
        if covariates.shape[:2] != y.shape:
            raise InputError("covariates must have shape (T, S, p) matching the data")
        if not np.all(np.isfinite(covariates)):
            raise InputError("covariates contain non-finite values")
    return y, covariates


class SufficientStats:
    """Prefix-summed pair statistics of a (T, S) panel under a pair configuration.

    Parameters
    ----------
    y : ndarray (T, S)
    cfg : PairConfig
    covariates : ndarray (T, S, p), optional
    """

    def __init__(self, y, cfg: PairConfig, covariates=None):
        y, covariates = _check_data(y, covariates)
        T, S = y.shape
        if S != cfg.S:
            raise InputError(f"data have {S} stations but the graph has {cfg.S}")
        self.T, self.S, self.cfg = T, S, cfg
        self.n_cov = 0 if covariates is None else covariates.shape[2]
        parts = [y[:, :, None], np.ones((T, S, 1))]
        if covariates is not None:
            parts.append(covariates)
        w = np.concatenate(parts, axis=2)
        D = w.shape[2]
        self.D = D

        g = cfg.graph
        src, dst, dist = g.directed_edges()
        # classes share one exact distance; equal lattice offsets give
        # bit-identical norms, so grids still collapse to a few classes
        hkey = dist
        classes = []
        for u in range(cfg.k + 1):
            s1 = [src]
            s2 = [dst]
            hh = [hkey]
            if u > 0:
                s1.insert(0, np.arange(S))
                s2.insert(0, np.arange(S))
                hh.insert(0, np.zeros(S))
            s1, s2, hh = np.concatenate(s1), np.concatenate(s2), np.concatenate(hh)
            for h in np.unique(hh):
                sel = hh == h
                classes.append((u, float(h), s1[sel], s2[sel]))
        C = len(classes)
        self.cls_u = np.array([c[0] for c in classes], dtype=np.int64)
        self.cls_h = np.array([c[1] for c in classes], dtype=float)
        self.cls_np = np.array([len(c[2]) for c in classes], dtype=float)
        RP = np.zeros((T + 1, C, D, D))
        RQ = np.zeros((T + 1, C, D, D))
        for c, (u, _, a, b) in enumerate(classes):
            if T - u <= 0:
                continue
            X1 = w[: T - u][:, a, :]
            X2 = w[u:][:, b, :]
            P = np.einsum("tna,tnb->tab", X1, X1) + np.einsum("tna,tnb->tab", X2, X2)
            Q = np.einsum("tna,tnb->tab", X1, X2)
            Q = 0.5 * (Q + Q.transpose(0, 2, 1))
            RP[1 : T - u + 1, c] = np.cumsum(P, axis=0)
            RQ[1 : T - u + 1, c] = np.cumsum(Q, axis=0)
            RP[T - u + 1 :, c] = RP[T - u, c]
            RQ[T - u + 1 :, c] = RQ[T - u, c]
        self.RP, self.RQ = RP, RQ
        mult = 1.0 + g.degrees.astype(float)
        self.Mt = np.einsum("s,tsa,tsb->tab", mult, w, w)
        self.wsum = float(mult.sum())
        self.i_self = self._find(1, 0.0)
        lag0 = [c for c in range(C) if self.cls_u[c] == 0]
        self.i_nn = min(lag0, key=lambda c: self.cls_h[c]) if lag0 else -1

    def _find(self, u, h):
        for c in range(len(self.cls_u)):
            if self.cls_u[c] == u and self.cls_h[c] == h:
                return c
        return -1

    def check_bounds(self, t1: int, t2: int):
        if not (0 <= t1 < t2 <= self.T):
            raise InputError(f"segment ({t1}, {t2}] outside 0..{self.T}")
        if t2 - t1 < self.cfg.k + 1:
            raise InputError(f"segment length {t2 - t1} shorter than k + 1 = {self.cfg.k + 1}")

    def _check_order(self, order: ModelOrder):
        if order.mean == 3 and len(order.covariates) != self.n_cov:
            raise InputError(f"{order.name} expects {len(order.covariates)} covariates, data have {self.n_cov}")

    def loglik(self, t1: int, t2: int, order: ModelOrder, theta, spatial_kernel="squared") -> float:
        """Composite log-likelihood of rows [t1, t2) under (order, theta)."""
        self.check_bounds(t1, t2)
        self._check_order(order)
        theta = check_params(order, theta)
        return K.loglik_segment(t1, t2, order.family, spatial_kernel == "squared", order.mean_columns,
                                self.cfg.k, self.cls_h, self.cls_u, self.cls_np, self.RP, self.RQ,
                                self.Mt, self.wsum, theta)

    def fit_many(self, order: ModelOrder, t1s, t2s, opt: OptimizerConfig, spatial_kernel="squared"):
        """Fit ``order`` on every segment [t1s[i], t2s[i]). Returns
        (thetas, logliks, converged, restarts_used)."""
        self._check_order(order)
        t1s = np.asarray(t1s, dtype=np.int64)
        t2s = np.asarray(t2s, dtype=np.int64)
        for a, b in zip(t1s, t2s):
            self.check_bounds(int(a), int(b))
        if self.i_self < 0:
            raise InputError("fitting needs k >= 1")
        return K.fit_segments(t1s, t2s, order.family, spatial_kernel == "squared", order.mean_columns,
                              self.cfg.k, self.cls_h, self.cls_u, self.cls_np, self.RP, self.RQ, self.Mt,
                              self.wsum, self.i_self, self.i_nn, opt.jitter(order.d), opt.maxiter,
                              opt.xtol, opt.ftol)

    def fit(self, t1: int, t2: int, order: ModelOrder, opt: OptimizerConfig,
            spatial_kernel="squared") -> FitResult:
        th, ll, conv, used = self.fit_many(order, [t1], [t2], opt, spatial_kernel)
        if not math.isfinite(ll[0]):
            raise FitError(f"{order.name} on ({t1}, {t2}]: no restart reached a finite objective",
                           {"t1": t1, "t2": t2, "model": order.name, "restarts": int(used[0])})
        return FitResult(order, th[0].copy(), float(ll[0]), bool(conv[0]), int(used[0]))

    def factor_total(self, t1: int, t2: int) -> float:
        """Number of likelihood factors (pairs + marginals) of rows [t1, t2)."""
        n = sum(self.cls_np[c] * max(t2 - self.cls_u[c] - t1, 0) for c in range(len(self.cls_u)))
        edges = 2.0 * self.wsum * sum(self.cfg.k - i + 1 for i in range(1, self.cfg.k + 1))
        return float(n + edges)


@dataclass(frozen=True)
class SegmentView:
    """Rows ``t1 .. t2 - 1`` of a panel (the half-open form of (t1, t2] in
    1-based time)."""

    y: np.ndarray
    t1: int = 0
    t2: int | None = None
    covariates: np.ndarray | None = None

    def __post_init__(self):
        y, cov = _check_data(self.y, self.covariates)
        t2 = y.shape[0] if self.t2 is None else self.t2
        if not 0 <= self.t1 < t2 <= y.shape[0]:
            raise InputError(f"bounds ({self.t1}, {t2}) outside the panel")
        object.__setattr__(self, "t2", t2)
        object.__setattr__(self, "y", y[self.t1:t2])
        object.__setattr__(self, "covariates", None if cov is None else cov[self.t1:t2])

    @property
    def T_seg(self) -> int:
        return self.y.shape[0]


def composite_loglik(seg: SegmentView, order: ModelOrder, theta, cfg: PairConfig,
                     spatial_kernel: str = "squared") -> float:
    stats = SufficientStats(seg.y, cfg, seg.covariates)
    return stats.loglik(0, seg.T_seg, order, theta, spatial_kernel)


def fit_segment(seg: SegmentView, order: ModelOrder, opt: OptimizerConfig, cfg: PairConfig,
                spatial_kernel: str = "squared") -> FitResult:
    stats = SufficientStats(seg.y, cfg, seg.covariates)
    return stats.fit(0, seg.T_seg, order, opt, spatial_kernel)


def fd_gradient(stats: SufficientStats, t1: int, t2: int, order: ModelOrder, theta,
                spatial_kernel: str = "squared", h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the composite log-likelihood in
    transformed coordinates."""
    z = np.empty(order.d)
    K.encode(order.family, order.n_mean, check_params(order, theta), z)
    grad = np.empty(order.d)
    th = np.empty(order.d)
    for i in range(order.d):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        K.decode(order.family, order.n_mean, zp, th)
        fp = stats.loglik(t1, t2, order, th, spatial_kernel)
        K.decode(order.family, order.n_mean, zm, th)
        fm = stats.loglik(t1, t2, order, th, spatial_kernel)
        grad[i] = (fp - fm) / (2 * h)
    return grad


def stationarity_tolerance(loglik: float, S: int, T: int) -> float:
    return 1e-3 * (1.0 + abs(loglik)) / (S * T)
