import warnings

import numpy as np
import pytest

from clmdl.clike import OptimizerConfig, SegmentView, SufficientStats, composite_loglik
from clmdl.covmodels import M1, M2
from clmdl.errors import InputError
from clmdl.inference import (
    _PairModel, changepoint_ci, param_variance, random_walk_path, walk_from_windows, warn_if_wide,
)
from clmdl.segsearch import SearchConfig, exact_detect
from clmdl.simulate import gen_ar_spatial
from clmdl.stgrid import PairConfig, SpatialDomain, build_neighbors

from helpers import make_coster, two_piece


def _window_oracle(left, right, a, b, cfg, Q):
    """W(q) as the change in the two-segment composite log-likelihood when the
    boundary moves from len(left) to len(left) + q."""
    y = np.vstack([left, right])
    tau = left.shape[0]

    def total(t):
        return (composite_loglik(SegmentView(y, 0, t), a[0], a[1], cfg)
                + composite_loglik(SegmentView(y, t, y.shape[0]), b[0], b[1], cfg))

    base = total(tau)
    return np.array([total(tau + q) - base for q in range(-Q, Q + 1)])


@pytest.mark.parametrize("d", [1.0, 1.5])
def test_walk_matches_likelihood_difference(d):
    dom = SpatialDomain.grid(3)
    cfg = PairConfig(1, build_neighbors(dom, d))
    a = (M2, np.array([0.2, -0.5, 0.6, 1.0]))
    b = (M1, np.array([-0.3, 0.9, 1.3]))
    rng = np.random.default_rng(0)
    Q = 4
    left = gen_ar_spatial(dom, *a, Q + 2, rng)
    right = gen_ar_spatial(dom, *b, Q + 2, rng)
    w = walk_from_windows(left, right, _PairModel(*a, cfg), _PairModel(*b, cfg), Q)
    ref = _window_oracle(left, right, a, b, cfg, Q)
    assert np.max(np.abs(w.W - ref)) < 1e-9
    assert w.W[Q] == 0.0
    assert w.W[w.q_grid == w.argmax][0] == w.W.max()


def test_identical_models_cancel_model_difference_terms():
    dom = SpatialDomain.grid(3)
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    a = (M1, np.array([-0.5, 0.6, 1.0]))
    rng = np.random.default_rng(1)
    Q = 3
    left = gen_ar_spatial(dom, *a, Q + 2, rng)
    right = gen_ar_spatial(dom, *a, Q + 2, rng)
    pm = _PairModel(*a, cfg)
    w = walk_from_windows(left, right, pm, pm, Q)
    # only the edge bookkeeping terms remain; they match the oracle too
    assert np.max(np.abs(w.W - _window_oracle(left, right, a, a, cfg, Q))) < 1e-9


def test_telescoping_increments():
    dom = SpatialDomain.grid(3)
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    a = (M1, np.array([-0.5, 0.6, 1.0]))
    b = (M1, np.array([-0.3, 0.6, 1.0]))
    rng = np.random.default_rng(2)
    Q = 5
    left = gen_ar_spatial(dom, *a, Q + 2, rng)
    right = gen_ar_spatial(dom, *b, Q + 2, rng)
    ma, mb = _PairModel(*a, cfg), _PairModel(*b, cfg)
    w = walk_from_windows(left, right, ma, mb, Q)
    for q in range(2, Q + 1):
        r, prev, nxt = right[q - 1], right[q - 2], right[q]
        step = (ma.within(r) - mb.within(r) + ma.lag1(prev, r) - mb.lag1(prev, r)
                + ma.marg(r) + mb.marg(nxt) - mb.lag1(r, nxt)
                - (ma.marg(prev) + mb.marg(r) - mb.lag1(prev, r)))
        assert w.W[Q + q] - w.W[Q + q - 1] == pytest.approx(step, rel=1e-10, abs=1e-9)


def test_seeded_determinism_and_k_requirement():
    dom = SpatialDomain.grid(3)
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    a = (M1, np.array([-0.5, 0.6, 1.0]))
    b = (M1, np.array([-0.3, 0.6, 1.0]))
    w1 = random_walk_path(dom, cfg, a, b, 6, np.random.default_rng(5))
    w2 = random_walk_path(dom, cfg, a, b, 6, np.random.default_rng(5))
    assert np.array_equal(w1.W, w2.W)
    with pytest.raises(InputError):
        random_walk_path(dom, PairConfig(2, cfg.graph), a, b, 6, np.random.default_rng(5))


@pytest.fixture(scope="module")
def detected():
    dom, y = two_piece(4, 60, (-0.6, 0.3, 1.0), (0.6, 2.0, 1.0), seed=0, tau=30)
    co = make_coster(y, dom)
    return dom, y, co, exact_detect(co, SearchConfig())


def test_ci_nesting_and_determinism(detected):
    dom, _, co, seg = detected
    assert seg.m == 1
    cfg = co.stats.cfg
    c90 = changepoint_ci(seg, 0, dom, cfg, level=0.9, n_rep=60, seed=3)
    c50 = changepoint_ci(seg, 0, dom, cfg, level=0.5, n_rep=60, seed=3)
    again = changepoint_ci(seg, 0, dom, cfg, level=0.9, n_rep=60, seed=3)
    assert c90 == again
    assert c90.lower <= c50.lower and c50.upper <= c90.upper
    assert c90.informative
    lo, hi = c90.lam_interval
    assert lo <= hi
    with pytest.raises(InputError):
        changepoint_ci(seg, 1, dom, cfg)
    with pytest.raises(InputError):
        changepoint_ci(seg, 0, dom, cfg, level=1.0)


def test_identical_models_flagged(detected):
    dom, _, co, seg = detected
    cfg = co.stats.cfg
    same = [(M1, seg.segments[0].fit.theta)] * 2
    ci = changepoint_ci(seg, 0, dom, cfg, n_rep=40, seed=1, Q=4, models=same)
    assert not ci.informative
    assert ci.lower <= seg.tau[0] <= ci.upper


def test_warning_when_space_exceeds_time():
    with pytest.warns(UserWarning):
        warn_if_wide(100, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        warn_if_wide(10, 50)


def test_sandwich_variance_properties():
    dom = SpatialDomain.grid(4)
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    theta = np.array([0.5, -0.3, 0.6, 1.0])
    y = gen_ar_spatial(dom, M2, theta, 40, np.random.default_rng(11))
    stats = SufficientStats(y, cfg)
    sv = param_variance(stats, 0, 40, M2, theta, dom, n_rep=50, seed=4)
    assert np.allclose(sv.sigma2, sv.sigma2.T)
    assert np.linalg.eigvalsh(sv.sigma1).min() >= -1e-10
    assert np.linalg.eigvalsh(sv.avar).min() >= -1e-10
    again = param_variance(stats, 0, 40, M2, theta, dom, n_rep=50, seed=4)
    assert np.array_equal(sv.avar, again.avar)


def test_sandwich_se_tracks_empirical_spread():
    dom = SpatialDomain.grid(10)
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    theta = np.array([-0.5, 0.6, 1.0])
    rng = np.random.default_rng(12)
    fits = [SufficientStats(gen_ar_spatial(dom, M1, theta, 200, rng), cfg).fit(0, 200, M1, OptimizerConfig()).theta
            for _ in range(50)]
    y = gen_ar_spatial(dom, M1, theta, 200, rng)
    stats = SufficientStats(y, cfg)
    th = stats.fit(0, 200, M1, OptimizerConfig()).theta
    sv = param_variance(stats, 0, 200, M1, th, dom, n_rep=60, seed=5)
    esd = np.std(np.array(fits)[:, 0], ddof=1)
    assert 1 / 1.5 <= sv.se[0] / esd <= 1.5


def test_interval_inverts_argmax_quantiles(detected):
    dom, _, co, seg = detected
    ci = changepoint_ci(seg, 0, dom, co.stats.cfg, level=0.8, n_rep=50, seed=9)
    am = np.array(ci.argmax)
    assert ci.lower == seg.tau[0] - int(np.quantile(am, 0.9, method="higher"))
    assert ci.upper == seg.tau[0] - int(np.quantile(am, 0.1, method="lower"))
