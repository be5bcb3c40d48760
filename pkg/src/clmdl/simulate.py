"""Synthetic piecewise-stationary space-time data."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .covmodels import CRESSIE, MATERN, SEPEXP, ModelOrder, check_params, cov_matrix
from .errors import BudgetExceeded, DefinitenessError, InputError
from .geodesy import geodesic_matrix_km
from .stgrid import SpatialDomain

JITTER = 1e-10
DENSE_BUDGET = 5000
_CHOL_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_CHOL_CACHE_SIZE = 8


@dataclass(frozen=True)
class SegmentSpec:
    """One stationary segment; ``spatial_kernel`` overrides the panel-wide
    kernel for this segment when given. With ``clip_negative`` an indefinite
    innovation covariance is replaced by its projection onto the positive
    semidefinite cone (negative eigenvalues set to zero) instead of raising."""

    length: int
    order: ModelOrder
    theta: tuple
    spatial_kernel: str | None = None
    clip_negative: bool = False

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 1:
            raise InputError(f"segment length must be a positive integer, got {self.length}")
        object.__setattr__(self, "theta", tuple(float(v) for v in check_params(self.order, self.theta)))


@dataclass(frozen=True)
class PiecewiseSpec:
    domain: SpatialDomain
    segments: tuple
    seed: int = 0
    spatial_kernel: str = "squared"
    dense_budget: int = DENSE_BUDGET
    covariates: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise InputError("at least one segment is required")

    @property
    def T(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def change_points(self) -> tuple:
        return tuple(np.cumsum([s.length for s in self.segments])[:-1].tolist())


def distance_matrix(domain: SpatialDomain) -> np.ndarray:
    if domain.metric == "planar":
        return cdist(domain.coords, domain.coords)
    return geodesic_matrix_km(domain.coords)


def psd_factor(A) -> np.ndarray:
    """Square root V diag(sqrt(max(ev, 0))) of a symmetric matrix."""
    ev, V = np.linalg.eigh(0.5 * (A + A.T))
    return V * np.sqrt(np.clip(ev, 0.0, None))


def _cached_chol(key, build, clip_negative=False):
    key = key + (clip_negative,)
    L = _CHOL_CACHE.get(key)
    if L is not None:
        _CHOL_CACHE.move_to_end(key)
        return L
    A = build()
    if clip_negative:
        L = psd_factor(A)
    else:
        A[np.diag_indices_from(A)] += JITTER
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise DefinitenessError(f"covariance not positive definite for {key[0]} parameters {key[1]}") from None
    _CHOL_CACHE[key] = L
    if len(_CHOL_CACHE) > _CHOL_CACHE_SIZE:
        _CHOL_CACHE.popitem(last=False)
    return L


def _mean_surface(order: ModelOrder, theta, T, S, covariates):
    beta = np.asarray(theta[: order.n_mean])
    if order.mean == 1:
        return np.zeros((T, S))
    if order.mean == 2:
        return np.full((T, S), beta[0])
    if covariates is None:
        raise InputError(f"{order.name} needs covariates to simulate")
    cols = order.mean_columns - 2
    return covariates[:, :, cols] @ beta


def innovation_cov(domain: SpatialDomain, order: ModelOrder, theta, spatial_kernel="squared"):
    """Spatial covariance of the AR(1) innovations, sigma2 * r(h)."""
    famp = np.asarray(theta[order.n_mean:], dtype=float)
    dist = distance_matrix(domain)
    s2 = famp[-1]
    if order.family == SEPEXP:
        g = dist * dist if spatial_kernel == "squared" else dist
        return s2 * np.exp(-g / famp[1])
    full = cov_matrix(MATERN, famp, dist, np.zeros(dist.shape, dtype=np.int64), spatial_kernel)
    return full * (1.0 - famp[0] ** 2)


def gen_ar_spatial(domain: SpatialDomain, order: ModelOrder, theta, T: int, rng,
                   spatial_kernel: str = "squared", covariates=None, clip_negative=False) -> np.ndarray:
    """Stationary AR(1) in time with spatially correlated innovations.

    Returns a (T, S) array; y_0 is drawn from the stationary law."""
    if order.family not in (SEPEXP, MATERN):
        raise InputError("gen_ar_spatial handles the AR families only")
    theta = check_params(order, theta)
    famp = theta[order.n_mean:]
    key = (order.name, tuple(famp), spatial_kernel, domain.metric, domain.coords.tobytes())
    L = _cached_chol(key, lambda: innovation_cov(domain, order, theta, spatial_kernel), clip_negative)
    phi = famp[0]
    S = domain.S
    eps = rng.standard_normal((T, S)) @ L.T
    x = np.empty((T, S))
    x[0] = eps[0] / np.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + eps[t]
    return x + _mean_surface(order, theta, T, S, covariates)


def gen_cressie_huang(domain: SpatialDomain, order: ModelOrder, theta, T: int, rng,
                      dense_budget: int = DENSE_BUDGET, covariates=None) -> np.ndarray:
    """Exact draw from the non-separable family via the full ST x ST Cholesky."""
    if order.family != CRESSIE:
        raise InputError("gen_cressie_huang needs the Cressie-Huang family")
    theta = check_params(order, theta)
    S = domain.S
    if S * T > dense_budget:
        raise BudgetExceeded(f"S*T = {S * T} exceeds the dense budget {dense_budget}")
    famp = theta[order.n_mean:]
    key = ("cressie", tuple(famp), T, domain.metric, domain.coords.tobytes())

    def build():
        dist = distance_matrix(domain)
        lag_cov = np.empty((T, S, S))
        for u in range(T):
            lag_cov[u] = cov_matrix(CRESSIE, famp, dist, np.full(dist.shape, u), "plain")
        tt = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
        return lag_cov[tt].transpose(0, 2, 1, 3).reshape(T * S, T * S)

    L = _cached_chol(key, build)
    x = (L @ rng.standard_normal(T * S)).reshape(T, S)
    return x + _mean_surface(order, theta, T, S, covariates)


def gen_segment(domain, seg: SegmentSpec, rng, spatial_kernel="squared", dense_budget=DENSE_BUDGET,
                covariates=None):
    if seg.order.family == CRESSIE:
        return gen_cressie_huang(domain, seg.order, seg.theta, seg.length, rng, dense_budget, covariates)
    kernel = seg.spatial_kernel or spatial_kernel
    return gen_ar_spatial(domain, seg.order, seg.theta, seg.length, rng, kernel, covariates, seg.clip_negative)


def gen_piecewise(spec: PiecewiseSpec, rng=None):
    """Concatenate independent segment draws. Returns (y, change_points)."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    parts = []
    t0 = 0
    for seg in spec.segments:
        cov = None if spec.covariates is None else spec.covariates[t0:t0 + seg.length]
        parts.append(gen_segment(spec.domain, seg, rng, spec.spatial_kernel, spec.dense_budget, cov))
        t0 += seg.length
    return np.vstack(parts), spec.change_points


def clear_cache():
    _CHOL_CACHE.clear()
