"""Candidate model class: mean structures, space-time covariance families and
Gaussian log-densities.

A model is a ``ModelOrder`` (integer codes, which fix the dimension ``d`` and
the code length) plus a real parameter vector laid out as
``[mean coefficients..., family parameters...]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DefinitenessError, DomainError, InputError, NumericError

SEPEXP = K.SEPEXP
MATERN = K.MATERN
CRESSIE = K.CRESSIE

FAMILY_NAMES = {SEPEXP: "sepexp", MATERN: "matern", CRESSIE: "cressie"}
FAMILY_PARAMS = {
    SEPEXP: ("phi", "rho", "sigma2"),
    MATERN: ("phi", "nu", "rho", "sigma2"),
    CRESSIE: ("a", "b", "c", "nu", "sigma2"),
}
MEAN_ZERO, MEAN_CONST, MEAN_COVARIATES = 1, 2, 3
MEAN_NAMES = {MEAN_ZERO: "zero", MEAN_CONST: "const", MEAN_COVARIATES: "covariates"}
SPATIAL_KERNELS = ("squared", "plain")


@dataclass(frozen=True)
class ModelOrder:
    """Integer description of a candidate model.

    Parameters
    ----------
    mean : int
        1 = mean fixed at zero, 2 = free constant, 3 = linear in covariates.
    family : int
        1 = separable exponential AR(1), 2 = Matern AR(1), 3 = Cressie-Huang.
    covariates : tuple of int
        Inclusion code per available covariate (1 = excluded, 2 = included);
        only used when ``mean == 3``.
    """

    mean: int = MEAN_ZERO
    family: int = SEPEXP
    covariates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(int(c) for c in self.covariates))
        if self.mean not in MEAN_NAMES:
            raise InputError(f"unknown mean selector {self.mean}")
        if self.family not in FAMILY_NAMES:
            raise InputError(f"unknown covariance family {self.family}")
        if any(c not in (1, 2) for c in self.covariates):
            raise InputError("covariate inclusion codes must be 1 or 2")
        if self.mean != MEAN_COVARIATES and self.covariates:
            raise InputError("covariate codes given for a mean without covariates")
        if self.mean == MEAN_COVARIATES and 2 not in self.covariates:
            raise InputError("covariate mean with no included covariate")

    @property
    def codes(self) -> tuple:
        return (self.mean, self.family) + self.covariates

    @property
    def c(self) -> int:
        return len(self.codes)

    @property
    def code_length(self) -> float:
        """Sum of log codes: the bits (in nats) needed to encode the order."""
        return float(sum(math.log(v) for v in self.codes))

    @property
    def mean_columns(self) -> np.ndarray:
        """Columns of the augmented vector (x, 1, z_1, ...) entering the mean."""
        if self.mean == MEAN_ZERO:
            return np.zeros(0, dtype=np.int64)
        if self.mean == MEAN_CONST:
            return np.array([1], dtype=np.int64)
        return np.array([2 + i for i, c in enumerate(self.covariates) if c == 2], dtype=np.int64)

    @property
    def n_mean(self) -> int:
        return len(self.mean_columns)

    @property
    def d(self) -> int:
        return self.n_mean + len(FAMILY_PARAMS[self.family])

    @property
    def param_names(self) -> tuple:
        if self.mean == MEAN_CONST:
            head = ("mu",)
        else:
            head = tuple(f"beta{i + 1}" for i, c in enumerate(self.covariates) if c == 2)
        return head + FAMILY_PARAMS[self.family]

    @property
    def name(self) -> str:
        s = f"{FAMILY_NAMES[self.family]}-{MEAN_NAMES[self.mean]}"
        if self.mean == MEAN_COVARIATES:
            s += ":" + "".join(str(c) for c in self.covariates)
        return s


M1 = ModelOrder(MEAN_ZERO, SEPEXP)
M2 = ModelOrder(MEAN_CONST, SEPEXP)


def parse_model(token: str) -> ModelOrder:
    """Parse ``M1``, ``M2`` or ``<family>-<mean>[:codes]`` (e.g. ``matern-const``)."""
    tok = token.strip()
    if tok.upper() == "M1":
        return M1
    if tok.upper() == "M2":
        return M2
    fam_names = {v: k for k, v in FAMILY_NAMES.items()}
    mean_names = {v: k for k, v in MEAN_NAMES.items()}
    body, _, codes = tok.partition(":")
    fam, _, mean = body.partition("-")
    if fam not in fam_names or mean not in mean_names:
        raise InputError(f"cannot parse model {token!r}")
    covs = tuple(int(ch) for ch in codes) if codes else ()
    return ModelOrder(mean_names[mean], fam_names[fam], covs)


def check_params(order: ModelOrder, theta) -> np.ndarray:
    """Validate a parameter vector against the open domains of ``order``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (order.d,):
        raise DomainError(f"{order.name} expects {order.d} parameters, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DomainError(f"non-finite parameters {theta}")
    names = order.param_names
    for j in range(order.n_mean, order.d):
        v = theta[j]
        if names[j] == "phi":
            if not -1.0 < v < 1.0:
                raise DomainError(f"phi={v} outside (-1, 1)")
        elif not v > 0.0:
            raise DomainError(f"{names[j]}={v} must be positive")
    return theta


def transform(order: ModelOrder, theta) -> np.ndarray:
    """Natural -> unconstrained coordinates."""
    theta = check_params(order, theta)
    z = np.empty_like(theta)
    K.encode(order.family, order.n_mean, theta, z)
    return z


def untransform(order: ModelOrder, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    theta = np.empty_like(z)
    K.decode(order.family, order.n_mean, z, theta)
    return theta


def family_params(order: ModelOrder, theta) -> np.ndarray:
    return np.asarray(theta, dtype=float)[order.n_mean:]


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind, K_nu(x)."""
    if not (x > 0):
        raise DomainError(f"bessel_k needs x > 0, got {x}")
    if not (nu >= 0) or not math.isfinite(nu):
        raise DomainError(f"bessel_k needs finite nu >= 0, got {nu}")
    val = K.bessel_k(float(nu), float(x))
    if not math.isfinite(val):
        raise NumericError(f"bessel_k overflow at nu={nu}, x={x}")
    return val


def matern_corr(h, nu: float, rho: float, spatial_kernel: str = "squared"):
    """Matern correlation at distance(s) ``h``; argument sqrt(2 nu) g / rho with
    g = h**2 (``squared``) or h (``plain``)."""
    _check_kernel(spatial_kernel)
    h = np.asarray(h, dtype=float)
    g = h * h if spatial_kernel == "squared" else h
    out = np.array([K.matern_corr(nu, math.sqrt(2.0 * nu) * gi / rho) for gi in g.ravel()])
    return out.reshape(h.shape) if h.ndim else float(out[0])


def _check_kernel(spatial_kernel):
    if spatial_kernel not in SPATIAL_KERNELS:
        raise InputError(f"spatial_kernel must be one of {SPATIAL_KERNELS}")


def cov_value(family: int, theta_family, h: float, u: int, spatial_kernel: str = "squared") -> float:
    """Space-time covariance at spatial distance ``h`` and time lag ``u``.

    ``theta_family`` holds only the family block, e.g. (phi, rho, sigma2).
    """
    _check_kernel(spatial_kernel)
    order = ModelOrder(MEAN_ZERO, family)
    famp = check_params(order, theta_family)
    if h < 0:
        raise DomainError(f"negative distance {h}")
    val = K.cov_value(family, spatial_kernel == "squared", famp, float(h), int(u))
    if not math.isfinite(val):
        raise NumericError(f"covariance evaluation failed for {FAMILY_NAMES[family]} {famp} at h={h}, u={u}")
    return val


def marginal_variance(family: int, theta_family) -> float:
    return cov_value(family, theta_family, 0.0, 0)


def cov_matrix(family: int, theta_family, dist: np.ndarray, lags: np.ndarray,
               spatial_kernel: str = "squared") -> np.ndarray:
    """Covariance between points with pairwise distances ``dist`` and integer
    time lags ``lags`` (same shape)."""
    order = ModelOrder(MEAN_ZERO, family)
    famp = check_params(order, theta_family)
    sq = spatial_kernel == "squared"
    _check_kernel(spatial_kernel)
    dist = np.asarray(dist, dtype=float)
    lags = np.asarray(lags, dtype=np.int64)
    out = np.empty(dist.shape)
    cache = {}
    for idx in np.ndindex(dist.shape):
        key = (dist[idx], abs(int(lags[idx])))
        v = cache.get(key)
        if v is None:
            v = K.cov_value(family, sq, famp, key[0], key[1])
            cache[key] = v
        out[idx] = v
    return out


def separability_defect(theta_family, h: float, u: int) -> float:
    """C(h,u) C(0,0) - C(h,0) C(0,u) for the Cressie-Huang family."""
    c = lambda hh, uu: cov_value(CRESSIE, theta_family, hh, uu, "plain")
    return c(h, u) * c(0.0, 0) - c(h, 0) * c(0.0, u)


@dataclass(frozen=True)
class BivariatePair:
    m1: float
    m2: float
    v1: float
    v2: float
    c12: float

    def __post_init__(self):
        if not (self.v1 > 0 and self.v2 > 0 and self.v1 * self.v2 - self.c12 ** 2 > 0):
            raise DefinitenessError(
                f"2x2 covariance not positive definite: v=({self.v1}, {self.v2}), c={self.c12}"
            )


def pair_logdensity(p: BivariatePair, x1: float, x2: float) -> float:
    det = p.v1 * p.v2 - p.c12 * p.c12
    e1, e2 = x1 - p.m1, x2 - p.m2
    quad = (p.v2 * e1 * e1 - 2.0 * p.c12 * e1 * e2 + p.v1 * e2 * e2) / det
    return -math.log(2.0 * math.pi) - 0.5 * math.log(det) - 0.5 * quad


def marg_logdensity(mean: float, var: float, x: float) -> float:
    if not var > 0:
        raise DomainError(f"variance must be positive, got {var}")
    e = x - mean
    return -0.5 * math.log(2.0 * math.pi * var) - 0.5 * e * e / var
