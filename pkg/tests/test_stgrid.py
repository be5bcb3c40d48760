from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clmdl.errors import DomainError, InputError
from clmdl.stgrid import (
    PairConfig, SpatialDomain, build_neighbors, edge_multiset, enumerate_pairs, factor_counts,
    normalizing_constant, pair_count,
)

from conftest import random_domain


def test_rook_neighbors_on_3x3_grid():
    g = build_neighbors(SpatialDomain.grid(3), 1.0)
    assert int(g.degrees.sum()) == 24
    assert g.B_N == 4
    # center station (row-major index 4) sees its four rook neighbors
    assert sorted(g.neighbors(4).tolist()) == [1, 3, 5, 7]


def test_neighbors_are_brute_force_distance_threshold(rng):
    dom = random_domain(rng, 25)
    g = build_neighbors(dom, 0.9)
    D = np.linalg.norm(dom.coords[:, None] - dom.coords[None], axis=-1)
    for s in range(dom.S):
        expect = [j for j in range(dom.S) if j != s and D[s, j] <= 0.9]
        assert g.neighbors(s).tolist() == expect


def test_single_station_and_far_stations_have_no_neighbors():
    g = build_neighbors(SpatialDomain(("a",), [[0.0, 0.0]]), 10.0)
    assert g.B_N == 0
    geo = SpatialDomain(("a", "b"), [[0.0, 0.0], [0.0, 5.0 / 111.3195]], "geodesic")
    g2 = build_neighbors(geo, 4.0)
    assert g2.degrees.tolist() == [0, 0]


def test_duplicate_coordinates_and_bad_cutoff_rejected():
    dom = SpatialDomain(("a", "b"), [[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DomainError):
        build_neighbors(dom, 1.0)
    with pytest.raises(InputError):
        build_neighbors(SpatialDomain.grid(2), 0.0)
    with pytest.raises(InputError):
        PairConfig(-1, build_neighbors(SpatialDomain.grid(2), 1.0))


def test_pair_and_edge_counts_on_3x3_grid():
    cfg = PairConfig(1, build_neighbors(SpatialDomain.grid(3), 1.0))
    # brute force: T*sum|N| contemporaneous + (T-1)*(S + sum|N|) lag-one pairs
    pairs = list(enumerate_pairs(5, cfg))
    assert len(pairs) == 5 * 24 + 4 * (9 + 24) == 252
    assert pair_count(5, cfg) == 252
    assert edge_multiset(cfg).total == 9 + 24 == 33
    assert Fraction(2 * 252 + 2 * 33, 45) == Fraction(38, 3)
    assert normalizing_constant(5, cfg) == pytest.approx(38 / 3, rel=1e-15)


def test_empty_neighborhood_counts():
    S = 4
    dom = SpatialDomain(tuple("abcd"), [[0, 0], [10, 0], [0, 10], [10, 10]])
    cfg = PairConfig(1, build_neighbors(dom, 1.0))
    assert pair_count(3, cfg) == 2 * S
    assert edge_multiset(cfg).total == S
    single = PairConfig(1, build_neighbors(SpatialDomain(("a",), [[0, 0]]), 1.0))
    assert normalizing_constant(10, single) == pytest.approx(2.0)


def test_pair_set_has_no_self_contemporaneous_pairs_and_both_orders():
    cfg = PairConfig(2, build_neighbors(SpatialDomain.grid(3), 1.0))
    pairs = set(enumerate_pairs(4, cfg))
    assert all(not (i == 0 and s1 == s2) for _, i, s1, s2 in pairs)
    for t, i, s1, s2 in pairs:
        if i == 0:
            assert (t, 0, s2, s1) in pairs
        assert t + i < 4


@given(seed=st.integers(0, 10_000), S=st.integers(1, 14), T=st.integers(3, 12), k=st.integers(1, 2),
       d=st.floats(0.3, 2.5))
def test_edge_balance_every_observation(seed, S, T, k, d):
    rng = np.random.default_rng(seed)
    dom = random_domain(rng, S)
    cfg = PairConfig(k, build_neighbors(dom, d))
    counts = factor_counts(T, cfg)
    expect = 2 * k * (1 + cfg.graph.degrees) + 2 * cfg.graph.degrees
    assert np.array_equal(counts, np.broadcast_to(expect, counts.shape))
    assert normalizing_constant(T, cfg) == pytest.approx(counts.mean(), rel=1e-13)


@given(seed=st.integers(0, 10_000), T=st.integers(2, 8))
def test_relabeling_permutes_pair_set(seed, T):
    rng = np.random.default_rng(seed)
    dom = random_domain(rng, 9)
    g = build_neighbors(dom, 1.2)
    perm = rng.permutation(dom.S)
    gp = build_neighbors(dom.permuted(perm), 1.2)
    assert np.array_equal(gp.indptr, g.permuted(perm).indptr)
    assert np.array_equal(gp.indices, g.permuted(perm).indices)
    a = {(t, i, int(perm[s1]), int(perm[s2])) for t, i, s1, s2 in enumerate_pairs(T, PairConfig(1, gp))}
    b = set(enumerate_pairs(T, PairConfig(1, g)))
    assert a == b


def test_normalizing_constant_does_not_depend_on_T():
    cfg = PairConfig(2, build_neighbors(SpatialDomain.grid(4), 1.5))
    vals = [normalizing_constant(T, cfg) for T in (3, 10, 57)]
    assert max(vals) - min(vals) < 1e-12
