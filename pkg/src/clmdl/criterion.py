"""Per-segment description-length costs and the total criterion."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .clike import FitResult, OptimizerConfig, SufficientStats
from .covmodels import ModelOrder
from .errors import CostError, InputError

PENALTIES = ("clmdl", "none")


@dataclass(frozen=True)
class SegmentCost:
    """Best model for rows [t1, t2) and its cost.

    ``candidates`` holds (model name, loglik, cost) for every model tried.
    """

    t1: int
    t2: int
    fit: FitResult
    cost: float
    candidates: tuple = ()

    @property
    def order(self) -> ModelOrder:
        return self.fit.order

    def as_dict(self) -> dict:
        d = {"t1": self.t1, "t2": self.t2}
        d.update(self.fit.as_dict())
        d["cost"] = float(self.cost)
        return d


def model_penalty(order: ModelOrder, T_seg: int, S: int, C: float) -> float:
    """C * [code length + (d/2 + 1) log T_seg + (d/2) log S]."""
    d = order.d
    return C * (order.code_length + (d / 2 + 1) * math.log(T_seg) + (d / 2) * math.log(S))


def change_count_penalty(m: int, C: float) -> float:
    """C log m, taken as 0 for m = 0."""
    return C * math.log(m) if m > 0 else 0.0


class SegmentCoster:
    """Memoized segment costs over one panel.

    Costs are deterministic functions of (t1, t2): every fit starts from the
    same moment-based seed with the same jitter, so a cache hit equals a
    recomputation bit for bit.

    Parameters
    ----------
    stats : SufficientStats
    models : sequence of ModelOrder
    C : float
        Normalizing constant multiplying the penalty.
    opt : OptimizerConfig
    penalty : {"clmdl", "none"}
        ``none`` drops the model penalty, leaving the negative composite
        log-likelihood.
    """

    def __init__(self, stats: SufficientStats, models, C: float, opt: OptimizerConfig | None = None,
                 penalty: str = "clmdl", spatial_kernel: str = "squared"):
        if not models:
            raise InputError("at least one candidate model is required")
        if penalty not in PENALTIES:
            raise InputError(f"penalty must be one of {PENALTIES}")
        self.stats = stats
        self.models = tuple(models)
        self.C = float(C)
        self.opt = opt or OptimizerConfig()
        self.penalty = penalty
        self.spatial_kernel = spatial_kernel
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.n_fits = 0

    @property
    def S(self) -> int:
        return self.stats.S

    def _penalty(self, order, T_seg):
        if self.penalty == "none":
            return 0.0
        return model_penalty(order, T_seg, self.S, self.C)

    def cost(self, t1: int, t2: int) -> SegmentCost:
        return self.batch([t1], t2)[0]

    def batch(self, t1s, t2: int) -> list:
        """Costs of segments [t, t2) for every t in ``t1s``."""
        t1s = [int(t) for t in t1s]
        with self._lock:
            missing = [t for t in t1s if (t, t2) not in self._cache]
        if missing:
            computed = self._compute(missing, t2)
            with self._lock:
                for t, sc in zip(missing, computed):
                    self._cache.setdefault((t, t2), sc)
        with self._lock:
            return [self._cache[(t, t2)] for t in t1s]

    def _compute(self, t1s, t2):
        n = len(t1s)
        t2s = [t2] * n
        per_model = []
        for order in self.models:
            th, ll, conv, used = self.stats.fit_many(order, t1s, t2s, self.opt, self.spatial_kernel)
            per_model.append((order, th, ll, conv, used))
        self.n_fits += n * len(self.models)
        out = []
        for i, t1 in enumerate(t1s):
            best = None
            cands = []
            for order, th, ll, conv, used in per_model:
                if not math.isfinite(ll[i]):
                    cands.append((order.name, -math.inf, math.inf))
                    continue
                cost = self._penalty(order, t2 - t1) - ll[i]
                cands.append((order.name, float(ll[i]), float(cost)))
                if best is None or cost < best[0]:
                    best = (cost, FitResult(order, th[i].copy(), float(ll[i]), bool(conv[i]), int(used[i])))
            if best is None:
                raise CostError(f"no candidate model could be fitted to segment ({t1}, {t2}]")
            out.append(SegmentCost(t1, t2, best[1], float(best[0]), tuple(cands)))
        return out

    def __len__(self):
        return len(self._cache)


def clmdl_total(costs, C: float, penalty: str = "clmdl") -> float:
    """Total criterion of a segmentation given its segment costs in order."""
    m = len(costs) - 1
    base = change_count_penalty(m, C) if penalty == "clmdl" else 0.0
    return base + float(sum(sc.cost for sc in costs))


def penalty_increment(d_min: int, d_max: int, T: int, S: int, eps: float, C: float) -> float:
    """Closed-form lower bound on the penalty added by one extra change-point."""
    return C * ((d_min / 2 + 1) * math.log(T * eps) + (d_min / 2) * math.log(S)) \
        - C * (d_max / 2 + 1) * math.log(T)


def order_summary(models) -> dict:
    d = np.array([m.d for m in models])
    xi = np.array([m.code_length for m in models])
    return {"d_min": int(d.min()), "d_max": int(d.max()), "xi_min": float(xi.min()), "xi_max": float(xi.max())}
