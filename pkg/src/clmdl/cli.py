"""Command-line interface: ``clmdl detect | simulate | ci | replicate``.

Exit codes: 0 success, 1 input error, 2 numeric failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .clike import FitResult
from .config import RunConfig
from .covmodels import parse_model
from .criterion import SegmentCost
from .errors import CLMDLError, ConfigError, InputError
from .inference import changepoint_ci, refit_k1, warn_if_wide
from .ingest import Panel, load_csv, remove_month_effects, transform_log1, write_csv
from .pipeline import detect_panel
from .replicate import run_table, write_summary_csv
from .segsearch import Segmentation
from .simulate import PiecewiseSpec, SegmentSpec, gen_piecewise
from .stgrid import PairConfig, SpatialDomain, build_neighbors

SCHEMA_VERSION = 1
log = logging.getLogger("clmdl")

_SEG_RE = re.compile(r"^\s*([A-Za-z0-9:_+\-]+)\[([^\]]*)\]x(\d+)(?:@(plain|squared|clip))?\s*$")


def parse_sim_segments(text: str) -> tuple:
    """Parse ``MODEL[p1,p2,...]xLENGTH`` items separated by ``;``.

    An optional ``@plain`` / ``@squared`` suffix sets the segment's spatial
    kernel; ``@clip`` keeps the kernel and clips negative eigenvalues of the
    innovation covariance.
    """
    segs = []
    for item in (s for s in text.split(";") if s.strip()):
        m = _SEG_RE.match(item)
        if not m:
            raise ConfigError(f"cannot parse segment {item.strip()!r}; expected MODEL[p1,...]xLENGTH")
        order = parse_model(m.group(1))
        try:
            theta = tuple(float(v) for v in m.group(2).split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"bad parameter list in {item.strip()!r}") from None
        suffix = m.group(4)
        kernel = suffix if suffix in ("plain", "squared") else None
        try:
            segs.append(SegmentSpec(int(m.group(3)), order, theta, kernel, suffix == "clip"))
        except InputError as exc:
            raise ConfigError(f"segment {item.strip()!r}: {exc}") from None
    if not segs:
        raise ConfigError("sim_segments lists no segments")
    return tuple(segs)


def _overrides(args) -> dict:
    d = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        d[k.strip()] = v.strip()
    for key in ("seed", "threads"):
        if getattr(args, key, None) is not None:
            d[key] = str(getattr(args, key))
    return d


def _resolve_config(args, base: dict | None = None) -> RunConfig:
    d = dict(base or {})
    if args.config:
        d.update(RunConfig.from_file(args.config).to_dict())
    extra = _overrides(args)
    for flag, key, value in (("log1p", "log1p", "true"), ("global_month_effects", "month_effects", "global")):
        if getattr(args, flag, False):
            extra[key] = value
    for flag, key in (("month_effects", "month_effects"), ("search", "search"), ("penalty", "penalty")):
        v = getattr(args, flag, None)
        if v is not None:
            extra[key] = v
    return RunConfig.from_dict({**d, **extra})


def _prepare(panel: Panel, cfg: RunConfig):
    """Apply the configured transforms; returns (y, tags)."""
    if cfg.metric != "auto" and cfg.metric != panel.domain.metric:
        raise ConfigError(f"config metric {cfg.metric!r} does not match the data header ({panel.domain.metric})")
    y = panel.y
    tags = []
    if cfg.log1p:
        y = transform_log1(y)
        tags.append("log1p")
    if cfg.month_effects != "none":
        y = remove_month_effects(y, panel.times, cfg.period, cfg.month_effects).residuals
        tags.append(f"month_effects:{cfg.month_effects}")
    return y, tags


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_detect(args) -> int:
    cfg = _resolve_config(args)
    panel = load_csv(args.data, cfg.drop_incomplete)
    y, tags = _prepare(panel, cfg)
    det = detect_panel(y, panel.domain, cfg)
    seg = det.segmentation
    doc = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": "detect"}
    doc.update(seg.as_dict())
    doc["K"] = None if det.K is None else float(det.K)
    doc["tau_time_index"] = [int(panel.times[t]) for t in seg.tau]
    doc["time_index_start"] = int(panel.times[0])
    doc["T"] = int(panel.T)
    doc["S"] = int(panel.S)
    doc["preprocessing"] = tags
    doc["n_fits"] = det.coster.n_fits
    doc["timing_seconds"] = round(det.seconds, 3)
    doc["seed"] = cfg.seed
    doc["data_path"] = str(args.data)
    doc["config"] = cfg.to_dict()
    _write_json(args.out, doc)
    log.info("m = %d, tau = %s, %.1f s", seg.m, list(seg.tau), det.seconds)
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    segments = parse_sim_segments(cfg.sim_segments)
    domain = SpatialDomain.grid(cfg.sim_side)
    spec = PiecewiseSpec(domain, segments, seed=cfg.seed, spatial_kernel=cfg.spatial_kernel,
                         dense_budget=cfg.dense_budget)
    y, tau = gen_piecewise(spec)
    if args.out is None:
        raise ConfigError("simulate needs --out <csv path>")
    out = Path(args.out)
    write_csv(out, Panel(domain, np.arange(spec.T), y))
    truth = {
        "schema_version": SCHEMA_VERSION, "version": __version__, "command": "simulate",
        "T": spec.T, "S": domain.S, "change_points": list(tau),
        "lambda": [t / spec.T for t in tau],
        "segments": [{"length": s.length, "model": s.order.name,
                      "theta": dict(zip(s.order.param_names, s.theta)),
                      "spatial_kernel": s.spatial_kernel or cfg.spatial_kernel,
                      "clip_negative": s.clip_negative} for s in segments],
        "seed": cfg.seed, "config": cfg.to_dict(),
    }
    _write_json(str(out) + ".truth.json", truth)
    log.info("wrote %s (T = %d, S = %d, change-points %s)", out, spec.T, domain.S, list(tau))
    return 0


def _segmentation_from_doc(doc: dict) -> Segmentation:
    segs = []
    for s in doc["segments"]:
        order = parse_model(s["model"])
        theta = np.array([s["theta"][n] for n in order.param_names])
        fit = FitResult(order, theta, s["loglik"], s["converged"], 0)
        segs.append(SegmentCost(s["t1"], s["t2"], fit, s["cost"], ()))
    return Segmentation(doc["T"], tuple(doc["tau"]), tuple(segs), doc["clmdl"], doc["C"], doc["K"],
                        doc["penalty_converged"], {})


def cmd_ci(args) -> int:
    try:
        doc = json.loads(Path(args.result).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read result {args.result}: {exc}") from None
    if doc.get("schema_version") != SCHEMA_VERSION or doc.get("command") != "detect":
        raise InputError(f"{args.result} is not a detect result of schema version {SCHEMA_VERSION}")
    cfg = _resolve_config(args, doc["config"])
    if args.level is not None:
        cfg = cfg.with_overrides(ci_level=args.level)
    if args.n_rep is not None:
        cfg = cfg.with_overrides(ci_n_rep=args.n_rep)
    data = args.data or doc["data_path"]
    panel = load_csv(data, cfg.drop_incomplete)
    y, _ = _prepare(panel, cfg)
    seg = _segmentation_from_doc(doc)
    if seg.T != panel.T:
        raise InputError(f"data have T = {panel.T} but the result was computed with T = {seg.T}")
    graph = build_neighbors(panel.domain, cfg.d)
    models = None
    if cfg.k != 1:
        log.warning("intervals use k = 1; refitting the %d segments with k = 1 (detection used k = %d)",
                    seg.m + 1, cfg.k)
        models = refit_k1(y, seg, panel.domain, graph, cfg.optimizer(), cfg.spatial_kernel)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        warn_if_wide(panel.S, panel.T)
    for w in caught:
        log.warning("%s", w.message)
    t0 = time.perf_counter()
    intervals = []
    for j in range(seg.m):
        ci = changepoint_ci(seg, j, panel.domain, PairConfig(1, graph), cfg.ci_level, cfg.ci_n_rep, cfg.seed,
                            cfg.ci_Q, cfg.eps_lambda, cfg.spatial_kernel, models, cfg.dense_budget)
        d = ci.as_dict()
        d["lower_time_index"] = int(panel.times[ci.lower]) if 0 <= ci.lower < panel.T else None
        d["upper_time_index"] = int(panel.times[ci.upper]) if 0 <= ci.upper < panel.T else None
        if not ci.informative:
            log.warning("segments %d and %d share the same fitted model; interval %d is not informative",
                        j + 1, j + 2, j + 1)
        intervals.append(d)
    out = {
        "schema_version": SCHEMA_VERSION, "version": __version__, "command": "ci",
        "result_path": str(args.result), "data_path": str(data), "m": seg.m, "tau": list(seg.tau),
        "level": cfg.ci_level, "n_rep": cfg.ci_n_rep, "refit_k1": cfg.k != 1, "intervals": intervals,
        "timing_seconds": round(time.perf_counter() - t0, 3), "seed": cfg.seed, "config": cfg.to_dict(),
    }
    _write_json(args.out, out)
    return 0


def cmd_replicate(args) -> int:
    cfg = _resolve_config(args)
    rows = None if args.rows is None else [int(r) for r in args.rows.split(",") if r.strip()]
    summaries, records = run_table(args.table, args.n_rep, cfg.seed, rows, args.budget, cfg.ci_n_rep,
                                   cfg.threads)
    for s in summaries:
        if "note" in s:
            log.warning("row %d: %s", s["row"], s["note"])
    if args.out is None:
        for s in summaries:
            sys.stdout.write(json.dumps(s, default=float) + "\n")
        return 0
    out = Path(args.out)
    write_summary_csv(out, summaries)
    flat = []
    for s, recs in zip(summaries, records):
        for r_i, r in enumerate(recs):
            flat.append({"row": s["row"], "replicate": r_i, "m": r["m"],
                         "tau": " ".join(map(str, r["tau"])),
                         "lambda": " ".join(f"{v:.6g}" for v in r["lam"]),
                         "models": " ".join(r["models"]), "clmdl": r["clmdl"], "seconds": r["seconds"]})
    write_summary_csv(out.with_name(out.stem + ".records.csv"), flat)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clmdl", description="Change-point detection for space-time lattice data "
                                "with a penalized pairwise composite likelihood.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker processes for replicate runs")
    common.add_argument("--out", help="output path (default: stdout where applicable)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", parents=[common], help="estimate change-points in a panel CSV")
    d.add_argument("data", help="long-format CSV")
    d.add_argument("--search", choices=("pelt", "exact"))
    d.add_argument("--penalty", choices=("clmdl", "none"))
    d.add_argument("--log1p", action="store_true", help="apply log(1 + y) first")
    d.add_argument("--month-effects", choices=("none", "station", "global"))
    d.add_argument("--global-month-effects", action="store_true",
                   help="remove additive station + month effects instead of per-station month means")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", parents=[common], help="simulate a piecewise-stationary grid panel")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("ci", parents=[common], help="confidence intervals for detected change-points")
    c.add_argument("result", help="JSON written by detect")
    c.add_argument("--data", help="data CSV (default: the path recorded in the result)")
    c.add_argument("--level", type=float)
    c.add_argument("--n-rep", type=int)
    c.set_defaults(func=cmd_ci)

    r = sub.add_parser("replicate", parents=[common], help="rerun a simulation table")
    r.add_argument("table", type=int, choices=range(1, 7), metavar="TABLE", help="table id 1-6")
    r.add_argument("--n-rep", type=int, default=100)
    r.add_argument("--rows", help="comma-separated row indices (default: all)")
    r.add_argument("--budget", type=float, help="wall-clock budget in seconds")
    r.set_defaults(func=cmd_replicate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="clmdl: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CLMDLError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
