import numpy as np

from clmdl.clike import OptimizerConfig, SufficientStats
from clmdl.covmodels import M1
from clmdl.criterion import SegmentCoster
from clmdl.simulate import PiecewiseSpec, SegmentSpec, gen_piecewise
from clmdl.stgrid import PairConfig, SpatialDomain, build_neighbors, normalizing_constant


def make_coster(y, dom, d=1.0, models=(M1,), penalty="clmdl", k=1):
    cfg = PairConfig(k, build_neighbors(dom, d))
    stats = SufficientStats(y, cfg)
    C = normalizing_constant(stats.T, cfg)
    return SegmentCoster(stats, list(models), C, OptimizerConfig(), penalty)


def two_piece(side, T, a, b, seed, tau=None):
    """Grid panel with an M1 segment a then b, change at ``tau`` (default T // 2)."""
    dom = SpatialDomain.grid(side)
    tau = T // 2 if tau is None else tau
    segs = [SegmentSpec(tau, M1, a), SegmentSpec(T - tau, M1, b)] if a != b else [SegmentSpec(T, M1, a)]
    y, _ = gen_piecewise(PiecewiseSpec(dom, segs), np.random.default_rng(seed))
    return dom, y
