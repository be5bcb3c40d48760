"""Acceptance suite: one PASS/FAIL line per criterion.

Replicate counts default to 100 and can be lowered for a quick look with
CLMDL_ACCEPT_REPS; tolerances stay fixed. Lines are printed as each
criterion finishes and again in the terminal summary.
"""

import math
import os
import time

import mpmath
import numpy as np
import pytest

from clmdl.clike import OptimizerConfig, SufficientStats, fd_gradient, stationarity_tolerance
from clmdl.covmodels import CRESSIE, M1, M2, MATERN, bessel_k, cov_value, matern_corr, separability_defect
from clmdl.criterion import SegmentCoster
from clmdl.inference import random_walk_path
from clmdl.replicate import four_segment, replicate_design, table_designs
from clmdl.segsearch import SearchConfig, exact_detect, pelt_detect
from clmdl.simulate import PiecewiseSpec, SegmentSpec, gen_piecewise
from clmdl.stgrid import PairConfig, SpatialDomain, build_neighbors, factor_counts, normalizing_constant

from conftest import random_domain

N_REP = int(os.environ.get("CLMDL_ACCEPT_REPS", "100"))
RESULTS = {}

pytestmark = pytest.mark.acceptance


def report(n, ok, detail, capsys):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    with capsys.disabled():
        print("\n" + line, flush=True)
    return ok


def _fits_stationary(stats, seg):
    worst = 0.0
    for sc in seg.segments:
        g = fd_gradient(stats, sc.t1, sc.t2, sc.order, sc.fit.theta)
        tol = stationarity_tolerance(sc.fit.loglik, stats.S, sc.t2 - sc.t1) * stats.S * (sc.t2 - sc.t1)
        worst = max(worst, float(np.max(np.abs(g))) / tol)
    return worst


_STATIONARITY = []


def test_criterion_1_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    signals = {"none": None, "phi": (0.4, 0.0), "rho": (0.0, 1.0)}
    bad = []
    for inst in range(50):
        side = int(rng.choice([3, 4]))
        T = int(rng.choice([30, 60]))
        kind = list(signals)[inst % 3]
        base = (-0.4, 0.6, 1.0)
        if signals[kind] is None:
            segs = [SegmentSpec(T, M1, base)]
        else:
            dphi, drho = signals[kind]
            tau = int(rng.integers(T // 4, 3 * T // 4 + 1))
            segs = [SegmentSpec(tau, M1, base), SegmentSpec(T - tau, M1, (base[0] + dphi, base[1] + drho, 1.0))]
        dom = SpatialDomain.grid(side)
        y, _ = gen_piecewise(PiecewiseSpec(dom, segs), rng)
        cfg = PairConfig(1, build_neighbors(dom, 1.0))
        stats = SufficientStats(y, cfg)
        C = normalizing_constant(T, cfg)
        coster = SegmentCoster(stats, [M1, M2], C, OptimizerConfig(seed=inst))
        sc = SearchConfig(0.1)
        a, b = pelt_detect(coster, sc), exact_detect(coster, sc)
        if a.tau != b.tau or a.m != b.m or abs(a.clmdl - b.clmdl) > 1e-9 * max(1.0, abs(b.clmdl)):
            bad.append((inst, a.tau, b.tau, a.clmdl, b.clmdl))
        _STATIONARITY.append(_fits_stationary(stats, a))
    secs = time.perf_counter() - t0
    ok = not bad and secs < 600
    report(1, ok, f"50 instances, {len(bad)} mismatches, {secs:.0f} s (limit 600 s)", capsys)
    assert ok, bad


def test_criterion_2_edge_balance(capsys):
    rng = np.random.default_rng(7)
    checked, bad = 0, []
    for g in range(20):
        S = int(rng.integers(2, 30))
        dom = random_domain(rng, S, spread=float(rng.uniform(1.5, 5.0)))
        graph = build_neighbors(dom, float(rng.uniform(0.4, 2.0)))
        for k in (1, 2):
            cfg = PairConfig(k, graph)
            expect = 2 * k * (1 + graph.degrees) + 2 * graph.degrees
            for T in range(3, 13):
                counts = factor_counts(T, cfg)
                checked += 1
                if not np.array_equal(counts, np.broadcast_to(expect, counts.shape)):
                    bad.append((g, k, T, "counts"))
                if not math.isclose(normalizing_constant(T, cfg), counts.mean(), rel_tol=1e-13):
                    bad.append((g, k, T, "C"))
    ok = not bad
    report(2, ok, f"{checked} (graph, k, T) cases, {len(bad)} violations", capsys)
    assert ok, bad


def _row(table, label_prefix):
    for i, d in enumerate(table_designs(table)):
        if d.label.startswith(label_prefix):
            return i, d
    raise KeyError(label_prefix)


def test_criterion_3_table1(capsys):
    t0 = time.perf_counter()
    checks = []
    for prefix, key, lo, hi in (
        ("S=100 T=200 dphi=0 drho=0", "pct_m0", 95 - 5, 100),
        ("S=100 T=200 dphi=0.3 drho=0", "pct_m1", 95 - 5, 100),
        ("S=36 T=100 dphi=0.2 drho=0", "pct_m1", 37 - 15, 37 + 15),
    ):
        i, d = _row(1, prefix)
        s, _ = replicate_design(d, N_REP, seed=0, row=i, table=1)
        checks.append((prefix, key, s[key], lo <= s[key] <= hi, lo, hi))
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{p}: {k}={v:.0f}% in [{lo}, {hi}]" for p, k, v, _, lo, hi in checks)
    report(3, ok, f"{N_REP} reps; {detail}; {time.perf_counter() - t0:.0f} s", capsys)
    assert ok, checks


def test_criterion_4_table2(capsys):
    i, d = _row(2, "S=100 T=200")
    s, _ = replicate_design(d, N_REP, seed=0, row=i, table=2)
    mean, esd, cov = s["lam1_mean"], s["lam1_esd"], s.get("ci_coverage_pct", float("nan"))
    ok = abs(mean - 0.5) <= 0.01 and esd <= 0.03 and 84 <= cov <= 97
    report(4, ok, f"{N_REP} reps; m=1 in {s['pct_m1']:.0f}%, mean lambda {mean:.4f}, esd {esd:.4f}, "
                  f"90% CI [{s.get('ci_mean_lower', float('nan')):.4f}, {s.get('ci_mean_upper', float('nan')):.4f}], "
                  f"coverage {cov:.1f}% (need |mean-0.5|<=0.01, esd<=0.03, coverage in [84, 97])", capsys)
    assert ok, s


def test_criterion_5_table3(capsys):
    res = {}
    for side in (30, 60):
        for pen in ("none", "clmdl"):
            i, d = next((i, d) for i, d in enumerate(table_designs(3))
                        if d.side == side and d.penalty == pen and d.label.endswith("dphi=0.2 drho=0"))
            s, _ = replicate_design(d, N_REP, seed=0, row=i, table=3)
            res[(side, pen)] = s["pct_m2plus"]
    ok = (res[(30, "none")] >= 5 and res[(30, "clmdl")] <= 2
          and res[(60, "none")] <= 2 and res[(60, "clmdl")] <= 2)
    detail = ", ".join(f"S={s * s} {p}: m>=2 in {v:.0f}%" for (s, p), v in res.items())
    report(5, ok, f"{N_REP} reps; {detail} (need CL >= 5% and CLMDL <= 2% at S=900, both <= 2% at S=3600)",
           capsys)
    assert ok, res


def test_criterion_6_four_segment(capsys):
    d = four_segment(8)
    s, recs = replicate_design(d, N_REP, seed=0, row=1, table=5)
    lam = [s.get(f"lam{j}_mean", float("nan")) for j in (1, 2, 3)]
    lam_ok = all(abs(a - b) <= 0.01 for a, b in zip(lam, (0.25, 0.5, 0.75)))
    pat = s.get("pct_pattern", float("nan"))
    ok = s["pct_m3"] >= 90 and lam_ok and pat >= 95
    counts = np.bincount([min(r["m"], 4) for r in recs], minlength=5)
    report(6, ok, f"{N_REP} reps, S=64; m=3 in {s['pct_m3']:.0f}% (need >= 90), m counts 0..4+ {counts.tolist()}, "
                  f"mean lambda {[round(v, 4) for v in lam]}, model pattern {pat:.0f}% (need >= 95)", capsys)
    assert ok, s


def test_criterion_7_mode_at_zero(capsys):
    dom = SpatialDomain.grid(10)
    cfg = PairConfig(1, build_neighbors(dom, 2.0))
    a, b = (M1, np.array([-0.5, 0.6, 1.0])), (M1, np.array([-0.3, 0.6, 1.0]))
    rng = np.random.default_rng(77)
    am = np.array([random_walk_path(dom, cfg, a, b, 20, rng).argmax for _ in range(N_REP)])
    vals, cnt = np.unique(am, return_counts=True)
    mode = int(vals[np.argmax(cnt)])
    ok = mode == 0
    report(7, ok, f"{N_REP} walks, S=100; mode of argmax = {mode}, P(argmax=0) = {np.mean(am == 0):.2f}", capsys)
    assert ok


def test_criterion_8_numeric_kernels(capsys):
    mpmath.mp.dps = 40
    worst_k = 0.0
    for nu in np.linspace(0.1, 10, 12):
        for x in np.geomspace(1e-6, 50, 15):
            ref = float(mpmath.besselk(mpmath.mpf(float(nu)), mpmath.mpf(float(x))))
            worst_k = max(worst_k, abs(bessel_k(nu, x) - ref) / ref)
    r = np.linspace(0, 8, 81)
    worst_m = max(float(np.max(np.abs(matern_corr(r, 0.5, rho, "plain") - np.exp(-r / rho)))) for rho in (0.3, 1, 4))
    worst_m = max(worst_m, max(abs(cov_value(MATERN, (0.0, 0.5, 0.8, 1.7), h, 0, "plain") - 1.7 * math.exp(-h / 0.8))
                               for h in r))
    worst_s = max(abs(separability_defect((a, 1.0, 1.0, 0.2, s2), h, u))
                  for a in (0.3, 1.0, 2.5) for s2 in (0.5, 1.0) for h in (0.0, 0.7, 2.0) for u in (1, 2, 5))
    if not _STATIONARITY:
        pytest.skip("stationarity checks ride on criterion 1; run it first")
    worst_g = max(_STATIONARITY)
    ok = worst_k <= 1e-10 and worst_m <= 1e-10 and worst_s <= 1e-10 and worst_g <= 1.0
    report(8, ok, f"Bessel rel err {worst_k:.1e}, Matern(1/2) vs exp {worst_m:.1e}, separability defect "
                  f"{worst_s:.1e}, max |grad|/tol over {len(_STATIONARITY)} segmentations {worst_g:.1e}", capsys)
    assert ok


def test_criterion_9_station_data(capsys):
    RESULTS[9] = ("CRITERION 9: WAIVED  the 76-station monthly panel is not available offline; "
                  "see the README for the download recipe")
    with capsys.disabled():
        print("\n" + RESULTS[9], flush=True)
    pytest.skip("station panel not available offline; criterion waived")
