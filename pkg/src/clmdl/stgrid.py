"""Spatio-temporal index domain: stations, distance neighborhoods and the
pair / edge-marginal sets that make up the composite likelihood.

Times are 0-based throughout: a segment of length ``T_seg`` holds rows
``0 .. T_seg - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, InputError
from .geodesy import geodesic_matrix_km

METRICS = ("planar", "geodesic")


@dataclass(frozen=True)
class SpatialDomain:
    """Station layout. ``coords`` are (x, y) for planar or (lat, lon) in
    degrees for geodesic; geodesic distances are in km."""

    station_ids: tuple
    coords: np.ndarray
    metric: str = "planar"

    def __post_init__(self):
        ids = tuple(str(s) for s in self.station_ids)
        object.__setattr__(self, "station_ids", ids)
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.metric not in METRICS:
            raise InputError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if len(ids) != len(coords):
            raise InputError("station_ids and coords differ in length")
        if len(set(ids)) != len(ids):
            raise InputError("station ids are not unique")
        if not np.all(np.isfinite(coords)):
            raise InputError("non-finite station coordinates")

    @property
    def S(self) -> int:
        return len(self.station_ids)

    @classmethod
    def grid(cls, side: int, spacing: float = 1.0) -> "SpatialDomain":
        """Regular ``side x side`` planar lattice with unit spacing, row-major."""
        ii, jj = np.meshgrid(np.arange(1, side + 1), np.arange(1, side + 1), indexing="ij")
        coords = np.column_stack([ii.ravel(), jj.ravel()]) * spacing
        ids = [f"g{a}_{b}" for a, b in coords.astype(int)] if spacing == 1.0 else range(len(coords))
        return cls(tuple(ids), coords, "planar")

    def permuted(self, perm) -> "SpatialDomain":
        perm = np.asarray(perm)
        return SpatialDomain(tuple(self.station_ids[p] for p in perm), self.coords[perm], self.metric)

    def close_pairs(self, d: float):
        """All station pairs i < j with distance <= d, as (i, j, dist)."""
        if self.S < 2:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        if self.metric == "planar":
            tree = cKDTree(self.coords)
            pairs = tree.query_pairs(d * (1 + 1e-12), output_type="ndarray")
            if len(pairs) == 0:
                empty = np.zeros(0, dtype=np.int64)
                return empty, empty, np.zeros(0)
            i, j = pairs[:, 0], pairs[:, 1]
            dist = np.linalg.norm(self.coords[i] - self.coords[j], axis=1)
        else:
            full = geodesic_matrix_km(self.coords)
            i, j = np.triu_indices(self.S, 1)
            dist = full[i, j]
        keep = dist <= d
        order = np.lexsort((j[keep], i[keep]))
        return i[keep][order].astype(np.int64), j[keep][order].astype(np.int64), dist[keep][order]


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric distance-``d`` neighborhoods in CSR layout."""

    n_stations: int
    cutoff: float
    indptr: np.ndarray
    indices: np.ndarray
    dist: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def B_N(self) -> int:
        return int(self.degrees.max()) if self.n_stations else 0

    def neighbors(self, s: int) -> np.ndarray:
        return self.indices[self.indptr[s]:self.indptr[s + 1]]

    def neighbor_dist(self, s: int) -> np.ndarray:
        return self.dist[self.indptr[s]:self.indptr[s + 1]]

    def directed_edges(self):
        """Every ordered neighbor pair (s1, s2, dist) with s1 != s2."""
        src = np.repeat(np.arange(self.n_stations), self.degrees)
        return src, self.indices.copy(), self.dist.copy()

    def permuted(self, perm) -> "NeighborGraph":
        """Graph for stations relabeled so that new station ``a`` is old ``perm[a]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        src, dst, dist = self.directed_edges()
        return _from_edges(self.n_stations, self.cutoff, inv[src], inv[dst], dist)


def _from_edges(n, cutoff, src, dst, dist) -> NeighborGraph:
    order = np.lexsort((dst, src))
    src, dst, dist = src[order], dst[order], dist[order]
    counts = np.bincount(src, minlength=n) if len(src) else np.zeros(n, dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    for arr in (indptr, dst, dist):
        arr.setflags(write=False)
    return NeighborGraph(n, float(cutoff), indptr, dst.astype(np.int64), dist.astype(float))


def build_neighbors(domain: SpatialDomain, d: float) -> NeighborGraph:
    """Neighborhoods N(s) = {s' != s : dist(s, s') <= d}."""
    if not np.isfinite(d) or d <= 0:
        raise InputError(f"neighbor cutoff must be a positive finite number, got {d}")
    i, j, dist = domain.close_pairs(d)
    dup = dist <= 0.0
    if np.any(dup):
        a, b = int(i[dup][0]), int(j[dup][0])
        raise DomainError(
            f"stations {domain.station_ids[a]!r} and {domain.station_ids[b]!r} share coordinates"
        )
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    dd = np.concatenate([dist, dist])
    return _from_edges(domain.S, d, src, dst, dd)


@dataclass(frozen=True)
class PairConfig:
    k: int
    graph: NeighborGraph

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise InputError(f"time lag k must be a non-negative integer, got {self.k}")

    @property
    def S(self) -> int:
        return self.graph.n_stations

    def require_detection(self):
        if self.k < 1:
            raise InputError("change-point detection needs k >= 1")


@dataclass(frozen=True)
class EdgeMultiset:
    """Compensating marginal sites: (offset i in 1..k, station, multiplicity)."""

    entries: tuple = field(default_factory=tuple)

    @property
    def total(self) -> int:
        return int(sum(m for _, _, m in self.entries))

    def weights(self, k: int, S: int) -> np.ndarray:
        """Multiplicities as a (k, S) array indexed by offset i - 1."""
        w = np.zeros((k, S), dtype=np.int64)
        for i, s, m in self.entries:
            w[i - 1, s] = m
        return w


def enumerate_pairs(T_seg: int, cfg: PairConfig) -> Iterator[tuple]:
    """Yield every (t, i, s1, s2) of the pair set for a segment of length T_seg.

    Contemporaneous pairs (i = 0) appear in both orderings.
    """
    if T_seg < 1:
        raise InputError("segment length must be >= 1")
    g = cfg.graph
    for t in range(T_seg):
        for i in range(cfg.k + 1):
            if t + i >= T_seg:
                break
            for s1 in range(g.n_stations):
                if i > 0:
                    yield (t, i, s1, s1)
                for s2 in g.neighbors(s1):
                    yield (t, i, s1, int(s2))


def edge_multiset(cfg: PairConfig) -> EdgeMultiset:
    if cfg.k < 1:
        raise InputError("edge multiset needs k >= 1")
    deg = cfg.graph.degrees
    entries = tuple(
        (i, s, (cfg.k - i + 1) * (1 + int(deg[s])))
        for i in range(1, cfg.k + 1)
        for s in range(cfg.S)
    )
    return EdgeMultiset(entries)


def pair_count(T_seg: int, cfg: PairConfig) -> int:
    """Card of the pair set, without enumerating it."""
    deg_sum = int(cfg.graph.degrees.sum())
    total = T_seg * deg_sum
    for i in range(1, cfg.k + 1):
        total += max(T_seg - i, 0) * (cfg.S + deg_sum)
    return total


def normalizing_constant(T: int, cfg: PairConfig) -> float:
    """Average number of likelihood factors each observation enters."""
    if T < cfg.k + 1:
        raise InputError(f"T={T} too short for lag k={cfg.k}")
    card_e = edge_multiset(cfg).total
    return (2 * pair_count(T, cfg) + 2 * card_e) / (cfg.S * T)


def factor_counts(T_seg: int, cfg: PairConfig) -> np.ndarray:
    """Number of likelihood factors (pairs + edge marginals) holding each
    observation, as a (T_seg, S) integer array, counted by enumeration."""
    counts = np.zeros((T_seg, cfg.S), dtype=np.int64)
    for t, i, s1, s2 in enumerate_pairs(T_seg, cfg):
        counts[t, s1] += 1
        counts[t + i, s2] += 1
    for i, s, mult in edge_multiset(cfg).entries:
        counts[i - 1, s] += mult
        counts[T_seg - i, s] += mult
    return counts
