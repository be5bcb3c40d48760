"""Search over segmentations: pruned dynamic program with an adaptive
per-change penalty, and an exact optimal-partitioning oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .criterion import SegmentCoster, clmdl_total, order_summary
from .errors import BudgetExceeded, ConfigError

EXACT_BUDGET = 200_000


@dataclass(frozen=True)
class SearchConfig:
    """Search settings.

    ``eps_lambda`` is the minimum segment fraction; segments must hold at
    least ``ceil(T * eps_lambda)`` time points.
    """

    eps_lambda: float = 0.1
    pruning: bool = True
    K_override: float | None = None
    max_penalty_iterations: int = 10
    exact_budget: int = EXACT_BUDGET

    def __post_init__(self):
        if not 0 < self.eps_lambda <= 0.5:
            raise ConfigError(f"eps_lambda must lie in (0, 0.5], got {self.eps_lambda}")
        if self.max_penalty_iterations < 1:
            raise ConfigError("max_penalty_iterations must be >= 1")

    @property
    def M_lambda(self) -> int:
        return int(math.floor(1.0 / self.eps_lambda + 1e-12)) + 1

    def min_length(self, T: int) -> int:
        return int(math.ceil(T * self.eps_lambda - 1e-9))


@dataclass
class Segmentation:
    T: int
    tau: tuple
    segments: list
    clmdl: float
    C: float
    K: float | None = None
    penalty_converged: bool = True
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.tau)

    @property
    def lam(self) -> tuple:
        return tuple(t / self.T for t in self.tau)

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "tau": list(self.tau),
            "lambda": list(self.lam),
            "segments": [sc.as_dict() for sc in self.segments],
            "clmdl": float(self.clmdl),
            "C": float(self.C),
            "K": None if self.K is None else float(self.K),
            "penalty_converged": self.penalty_converged,
        }


def compute_pruning_K(models, S: int, T: int, C: float) -> float:
    """Pruning constant below which true change-points survive asymptotically."""
    o = order_summary(models)
    return C * ((o["d_min"] / 2 - o["d_max"]) * math.log(S * T) + (2 + o["d_max"]) * math.log(2.0)
                + o["xi_min"] - 2 * o["xi_max"] - math.log(T))


def _check_feasible(T, L, k):
    if L < k + 1:
        raise ConfigError(f"minimum segment length {L} is shorter than k + 1 = {k + 1}; raise eps_lambda")
    if T < 2 * L:
        raise ConfigError(f"T = {T} is shorter than two minimum-length segments ({L} each)")


def _ends(T, L):
    """Admissible segment right ends in increasing order."""
    return list(range(L, T - L + 1)) + [T]


def _check_spacing(tau, T, L):
    pts = (0,) + tuple(tau) + (T,)
    return all(b - a >= L for a, b in zip(pts, pts[1:]))


def _pelt_once(coster: SegmentCoster, T, L, beta, K, prune):
    F = {0: -beta}
    last = {0: None}
    R = [0]
    for s in _ends(T, L):
        cand = [t for t in R if s - t >= L]
        costs = coster.batch(cand, s)
        vals = [F[t] + sc.cost + beta for t, sc in zip(cand, costs)]
        best = min(range(len(cand)), key=lambda i: (vals[i], cand[i]))
        F[s] = vals[best]
        last[s] = cand[best]
        if prune:
            keep = {t for t, sc in zip(cand, costs) if F[t] + sc.cost + K < F[s]}
            R = [t for t in R if s - t < L or t in keep]
        if s <= T - L:
            R.append(s)
    tau = []
    s = T
    while last[s] != 0 and last[s] is not None:
        s = last[s]
        tau.append(s)
    return tuple(sorted(tau))


def _assemble(coster, T, tau, K, converged=True, info=None):
    pts = (0,) + tuple(tau) + (T,)
    segs = [coster.cost(a, b) for a, b in zip(pts, pts[1:])]
    total = clmdl_total(segs, coster.C, coster.penalty)
    return Segmentation(T, tuple(tau), segs, total, coster.C, K, converged, info or {})


def _better(a: Segmentation, b: Segmentation) -> bool:
    """Strict preference of a over b: lower criterion, then earlier change-points,
    then fewer change-points."""
    if a.clmdl != b.clmdl:
        return a.clmdl < b.clmdl
    if a.tau != b.tau and min(a.m, b.m) > 0:
        for x, y in zip(a.tau, b.tau):
            if x != y:
                return x < y
    return a.m < b.m


def pelt_detect(coster: SegmentCoster, cfg: SearchConfig) -> Segmentation:
    """Pruned dynamic program.

    The concave change-count penalty C log m is handled by re-running the
    search with the constant per-change penalty that matches log m locally
    around the last estimate, until the estimated count repeats. The returned
    segmentation is the visited one with the smallest exact criterion.
    """
    stats = coster.stats
    T, S = stats.T, stats.S
    stats.cfg.require_detection()
    L = cfg.min_length(T)
    _check_feasible(T, L, stats.cfg.k)
    C = coster.C
    if cfg.K_override is not None:
        K = float(cfg.K_override)
    elif coster.penalty == "clmdl":
        K = compute_pruning_K(coster.models, S, T, C)
    else:
        K = None
    prune = cfg.pruning and K is not None

    if coster.penalty == "none":
        tau = _pelt_once(coster, T, L, 0.0, K, prune)
        seg = _assemble(coster, T, tau, K, True, {"betas": [0.0], "ms": [len(tau)]})
        return seg

    beta = C * math.log(2.0)
    visited = {}
    betas, ms = [], []
    converged = False
    for _ in range(cfg.max_penalty_iterations):
        tau = _pelt_once(coster, T, L, beta, K, prune)
        m = len(tau)
        betas.append(beta)
        ms.append(m)
        if tau not in visited:
            visited[tau] = _assemble(coster, T, tau, K)
        if m in ms[:-1]:
            converged = True
            break
        beta = C * (math.log(m + 1) - math.log(max(m, 1)))
    best = None
    for seg in visited.values():
        if best is None or _better(seg, best):
            best = seg
    best.penalty_converged = converged
    best.info = {"betas": betas, "ms": ms, "min_length": L}
    return best


def exact_detect(coster: SegmentCoster, cfg: SearchConfig) -> Segmentation:
    """Optimal partitioning over (segment count, right end) with the exact
    change-count penalty."""
    stats = coster.stats
    T = stats.T
    stats.cfg.require_detection()
    L = cfg.min_length(T)
    _check_feasible(T, L, stats.cfg.k)
    ends = _ends(T, L)
    starts = [0] + [e for e in ends if e <= T - L]
    n_pairs = sum(1 for s in ends for t in starts if s - t >= L)
    if n_pairs > cfg.exact_budget:
        raise BudgetExceeded(f"exact search needs {n_pairs} segment costs, budget is {cfg.exact_budget}")
    max_m = min(cfg.M_lambda, T // L - 1)
    cost = {}
    for s in ends:
        cand = [t for t in starts if s - t >= L]
        for t, sc in zip(cand, coster.batch(cand, s)):
            cost[(t, s)] = sc.cost
    # G[j][s]: best cost of rows [0, s) split into j + 1 segments
    G = [{s: cost[(0, s)] for s in ends}]
    back = [{s: None for s in ends}]
    for j in range(1, max_m + 1):
        Gj, Bj = {}, {}
        prev = G[j - 1]
        for s in ends:
            best_v, best_t = math.inf, None
            for t in starts:
                if t == 0 or s - t < L or t not in prev or s == t:
                    continue
                if t == T:
                    continue
                v = prev[t] + cost[(t, s)]
                if v < best_v:
                    best_v, best_t = v, t
            if best_t is not None:
                Gj[s] = best_v
                Bj[s] = best_t
        G.append(Gj)
        back.append(Bj)
    best = None
    for j in range(max_m + 1):
        if T not in G[j]:
            continue
        tau = []
        s = T
        for jj in range(j, 0, -1):
            s = back[jj][s]
            tau.append(s)
        seg = _assemble(coster, T, tuple(sorted(tau)), None, True, {"min_length": L})
        if best is None or _better(seg, best):
            best = seg
    return best


def detect(coster: SegmentCoster, cfg: SearchConfig, method: str = "pelt") -> Segmentation:
    if method == "pelt":
        return pelt_detect(coster, cfg)
    if method == "exact":
        return exact_detect(coster, cfg)
    raise ConfigError(f"unknown search method {method!r}")


def satisfies_spacing(seg: Segmentation, cfg: SearchConfig) -> bool:
    return _check_spacing(seg.tau, seg.T, cfg.min_length(seg.T)) and seg.m <= cfg.M_lambda

