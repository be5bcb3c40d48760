"""End-to-end detection on an in-memory panel."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .clike import SufficientStats
from .config import RunConfig
from .criterion import SegmentCoster
from .segsearch import Segmentation, compute_pruning_K, detect
from .stgrid import PairConfig, SpatialDomain, build_neighbors, normalizing_constant


@dataclass
class Detection:
    segmentation: Segmentation
    stats: SufficientStats
    coster: SegmentCoster
    C: float
    K: float | None
    seconds: float


def detect_panel(y, domain: SpatialDomain, cfg: RunConfig, covariates=None, graph=None) -> Detection:
    """Run the configured search on a (T, S) panel."""
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=float)
    graph = build_neighbors(domain, cfg.d) if graph is None else graph
    pc = PairConfig(cfg.k, graph)
    pc.require_detection()
    stats = SufficientStats(y, pc, covariates)
    C = normalizing_constant(stats.T, pc)
    models = cfg.model_list()
    coster = SegmentCoster(stats, models, C, cfg.optimizer(), cfg.penalty, cfg.spatial_kernel)
    seg = detect(coster, cfg.search_config(), cfg.search)
    K = seg.K
    if K is None and cfg.penalty == "clmdl":
        K = compute_pruning_K(models, stats.S, stats.T, C)
    return Detection(seg, stats, coster, C, K, time.perf_counter() - t0)
