"""Replication harness for the simulation designs.

Each table id maps to a list of design rows; every row is replicated
``n_rep`` times with seeds derived from (seed, table, row, replicate) and
summarized as percentages of estimated change-point counts plus location
statistics.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .covmodels import CRESSIE, MATERN, MEAN_CONST, MEAN_ZERO, SEPEXP, ModelOrder
from .errors import ConfigError
from .inference import changepoint_ci
from .pipeline import detect_panel
from .simulate import PiecewiseSpec, SegmentSpec, gen_piecewise
from .stgrid import PairConfig, SpatialDomain, build_neighbors

M1 = ModelOrder(MEAN_ZERO, SEPEXP)
M2 = ModelOrder(MEAN_CONST, SEPEXP)
MATERN_CONST = ModelOrder(MEAN_CONST, MATERN)
CH_ZERO = ModelOrder(MEAN_ZERO, CRESSIE)

AR_BASE = (-0.5, 0.6, 1.0)
CH_BASE = (1.0, 1.0, 3.0, 0.2, 1.0)


@dataclass(frozen=True)
class Design:
    """One row of a replication table."""

    label: str
    side: int
    segments: tuple
    models: str = "M1"
    penalty: str = "clmdl"
    dense_budget: int = 5000
    ci: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def true_tau(self) -> tuple:
        return tuple(np.cumsum([s.length for s in self.segments])[:-1].tolist())

    def config(self, seed: int, **kw) -> RunConfig:
        return RunConfig(k=1, d=2.0, models=self.models, penalty=self.penalty, seed=seed,
                         dense_budget=self.dense_budget, **kw)


def ar_two_segment(side, T, dphi=0.0, drho=0.0, base=AR_BASE, **kw) -> Design:
    """Two halves with (phi, rho) shifted by (dphi, drho); one segment when both are 0."""
    a = SegmentSpec(T // 2, M1, base)
    if dphi == 0 and drho == 0:
        segs = (SegmentSpec(T, M1, base),)
    else:
        b = SegmentSpec(T - T // 2, M1, (base[0] + dphi, base[1] + drho, base[2]))
        segs = (a, b)
    label = f"S={side**2} T={T} dphi={dphi:g} drho={drho:g}"
    return Design(label, side, segs, **kw)


def four_segment(side) -> Design:
    segs = (
        SegmentSpec(50, M2, (0.0, -0.2, 0.6, 1.0)),
        SegmentSpec(50, M2, (0.0, -0.5, 0.6, 1.0)),
        # the Matern kernel of squared distance is not positive definite on a
        # grid, so its negative eigenvalues are clipped
        SegmentSpec(50, MATERN_CONST, (0.3, -0.5, 2.0, 0.9, 0.9), clip_negative=True),
        SegmentSpec(50, M2, (0.3, -0.2, 0.9, 1.0)),
    )
    return Design(f"S={side**2} four-segment", side, segs, models="M1,M2",
                  extra={"pseudo_true": ("sepexp-zero", "sepexp-zero", "sepexp-const", "sepexp-const")})


def cressie_two_segment(side, delta, models) -> Design:
    base = CH_BASE
    if delta == 0:
        segs = (SegmentSpec(100, CH_ZERO, base),)
    else:
        segs = (SegmentSpec(50, CH_ZERO, base),
                SegmentSpec(50, CH_ZERO, (base[0] + delta, base[1] + delta) + base[2:]))
    return Design(f"S={side**2} delta={delta:g} models={models}", side, segs, models=models,
                  dense_budget=side * side * 100)


def table_designs(table: int) -> list:
    if table == 1:
        rows = []
        for side in (6, 8, 10):
            for T in (100, 200):
                for dphi, drho in ((0, 0), (0.1, 0), (0.2, 0), (0.3, 0), (0, 0.6), (0, 0.8), (0, 1.0),
                                   (0.2, 0.2), (0.3, 0.3)):
                    rows.append(ar_two_segment(side, T, dphi, drho))
        return rows
    if table == 2:
        return [ar_two_segment(side, 200, 0.2, 0.0, ci=True) for side in (8, 10)]
    if table == 3:
        return [ar_two_segment(side, 100, dphi, 0.0, penalty=pen)
                for side in (30, 60) for dphi in (0, 0.1, 0.2) for pen in ("none", "clmdl")]
    if table == 4:
        return [cressie_two_segment(side, delta, models)
                for side in (6, 7, 8) for delta in (0, 0.5, 1.0, 1.5, 2.0)
                for models in ("sepexp-zero", "cressie-zero")]
    if table in (5, 6):
        return [four_segment(side) for side in (6, 8, 10)]
    raise ConfigError(f"unknown table id {table}; expected 1-6")


def run_replicate(design: Design, seed, ci_level=0.9, ci_n_rep=100) -> dict:
    """Simulate once from ``design`` and run the search; returns a record."""
    domain = SpatialDomain.grid(design.side)
    spec = PiecewiseSpec(domain, design.segments, seed=0, dense_budget=design.dense_budget)
    rng = np.random.default_rng(seed)
    y, tau_true = gen_piecewise(spec, rng)
    cfg = design.config(int(np.random.default_rng(seed).integers(2**31)))
    graph = build_neighbors(domain, cfg.d)
    det = detect_panel(y, domain, cfg, graph=graph)
    seg = det.segmentation
    rec = {
        "m": seg.m, "tau": seg.tau, "lam": seg.lam, "clmdl": seg.clmdl,
        "models": tuple(sc.order.name for sc in seg.segments), "seconds": det.seconds,
        "true_tau": tau_true,
    }
    if design.ci and seg.m == len(tau_true) and seg.m > 0:
        cis = []
        for j in range(seg.m):
            ci = changepoint_ci(seg, j, domain, PairConfig(1, graph), level=ci_level, n_rep=ci_n_rep,
                                seed=cfg.seed, eps_lambda=cfg.eps_lambda)
            cis.append((ci.lower, ci.upper))
        rec["ci"] = tuple(cis)
    return rec


def summarize(design: Design, records: list, max_count: int = 2) -> dict:
    n = len(records)
    ms = np.array([r["m"] for r in records])
    out = {"design": design.label, "n_rep": n}
    for c in range(max_count):
        out[f"pct_m{c}"] = 100.0 * np.mean(ms == c) if n else float("nan")
    out[f"pct_m{max_count}plus"] = 100.0 * np.mean(ms >= max_count) if n else float("nan")
    m_true = len(design.true_tau)
    hits = [r for r in records if r["m"] == m_true]
    out["n_correct"] = len(hits)
    for j in range(m_true):
        lam = np.array([r["lam"][j] for r in hits])
        out[f"lam{j + 1}_mean"] = float(lam.mean()) if len(lam) else float("nan")
        out[f"lam{j + 1}_esd"] = float(lam.std(ddof=1)) if len(lam) > 1 else float("nan")
    with_ci = [r for r in hits if "ci" in r]
    if with_ci:
        T = design.T
        cover = [all(lo <= t <= hi for (lo, hi), t in zip(r["ci"], design.true_tau)) for r in with_ci]
        out["ci_coverage_pct"] = 100.0 * float(np.mean(cover))
        out["ci_mean_lower"] = float(np.mean([r["ci"][0][0] for r in with_ci])) / T
        out["ci_mean_upper"] = float(np.mean([r["ci"][0][1] for r in with_ci])) / T
    pseudo = design.extra.get("pseudo_true")
    if pseudo:
        for j, name in enumerate(pseudo):
            out[f"seg{j + 1}_pct_{name}"] = 100.0 * float(np.mean([r["models"][j] == name for r in hits])) \
                if hits else float("nan")
        out["pct_pattern"] = 100.0 * float(np.mean([r["models"] == pseudo for r in hits])) if hits else float("nan")
    out["mean_seconds"] = float(np.mean([r["seconds"] for r in records])) if n else float("nan")
    return out


def _run_one(args):
    design, seed, ci_n_rep = args
    return run_replicate(design, seed, ci_n_rep=ci_n_rep)


def replicate_design(design: Design, n_rep: int, seed: int = 0, row: int = 0, table: int = 0,
                     budget_seconds: float | None = None, ci_n_rep: int = 100, threads: int = 1) -> tuple:
    """Returns (summary, records). Stops early when the time budget runs out;
    the summary then notes the replicates actually completed.

    Replicate r always uses the seed (seed, table, row, r), so the records do
    not depend on ``threads``; with a budget, replicates are submitted in
    batches of ``threads`` and the budget is checked between batches.
    """
    t0 = time.perf_counter()
    records = []
    jobs = [(design, [seed, table, row, r], ci_n_rep) for r in range(n_rep)]
    if threads <= 1:
        for job in jobs:
            if budget_seconds is not None and time.perf_counter() - t0 > budget_seconds:
                break
            records.append(_run_one(job))
    else:
        with ProcessPoolExecutor(threads) as pool:
            for i in range(0, n_rep, threads):
                if budget_seconds is not None and time.perf_counter() - t0 > budget_seconds:
                    break
                records.extend(pool.map(_run_one, jobs[i:i + threads]))
    max_count = 4 if len(design.true_tau) == 3 else 2
    summary = summarize(design, records, max_count)
    if len(records) < n_rep:
        summary["note"] = f"time budget reached after {len(records)} of {n_rep} replicates"
    return summary, records


def run_table(table: int, n_rep: int = 100, seed: int = 0, rows=None, budget_seconds=None,
              ci_n_rep: int = 100, threads: int = 1) -> tuple:
    """Returns (summaries, records per row)."""
    designs = table_designs(table)
    idx = range(len(designs)) if rows is None else rows
    out, recs = [], []
    t0 = time.perf_counter()
    for i in idx:
        if not 0 <= i < len(designs):
            raise ConfigError(f"table {table} has rows 0-{len(designs) - 1}, got {i}")
        left = None if budget_seconds is None else max(0.0, budget_seconds - (time.perf_counter() - t0))
        summary, records = replicate_design(designs[i], n_rep, seed, i, table, left, ci_n_rep, threads)
        summary["row"] = i
        out.append(summary)
        recs.append(records)
    return out, recs


def write_summary_csv(path, rows: list):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
