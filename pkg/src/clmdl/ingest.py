"""Panel input/output and preprocessing of station records.

The input is a long-format CSV with header ``station_id,lat,lon,time_index,value``
(geodesic coordinates in degrees) or ``station_id,x,y,time_index,value``
(planar coordinates). Missing observations are absent rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CompletenessError, DomainError, InputError
from .stgrid import SpatialDomain

GEO_HEADER = ("station_id", "lat", "lon", "time_index", "value")
PLANAR_HEADER = ("station_id", "x", "y", "time_index", "value")
MONTH_MODES = ("none", "station", "global")


@dataclass(frozen=True)
class Panel:
    """Complete station x time panel; ``y[t, s]`` is station s at ``times[t]``."""

    domain: SpatialDomain
    times: np.ndarray
    y: np.ndarray

    @property
    def T(self) -> int:
        return len(self.times)

    @property
    def S(self) -> int:
        return self.domain.S


def _parse_float(text, what, lineno):
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse {what} {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"line {lineno}: non-finite {what} {text!r}")
    return v


def load_csv(path, drop_incomplete: bool = False) -> Panel:
    """Read a long-format CSV into a complete panel.

    Stations are ordered by first appearance, times ascending over the full
    integer range spanned by the file. With ``drop_incomplete`` stations with
    gaps are removed instead of raising.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if header == GEO_HEADER:
            metric = "geodesic"
        elif header == PLANAR_HEADER:
            metric = "planar"
        else:
            raise InputError(f"{path}: header must be {','.join(GEO_HEADER)} or {','.join(PLANAR_HEADER)}")
        coords: dict = {}
        cells: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise InputError(f"line {lineno}: expected 5 fields, got {len(row)}")
            sid = row[0].strip()
            if not sid:
                raise InputError(f"line {lineno}: empty station_id")
            c = (_parse_float(row[1], header[1], lineno), _parse_float(row[2], header[2], lineno))
            if metric == "geodesic" and abs(c[0]) > 90:
                raise DomainError(f"line {lineno}: latitude {c[0]} outside [-90, 90]")
            try:
                t = int(row[3])
            except ValueError:
                raise InputError(f"line {lineno}: time_index {row[3]!r} is not an integer") from None
            v = _parse_float(row[4], "value", lineno)
            if sid in coords and coords[sid] != c:
                raise InputError(f"line {lineno}: station {sid!r} changes coordinates")
            coords.setdefault(sid, c)
            if (sid, t) in cells:
                raise InputError(f"line {lineno}: duplicate row for station {sid!r} at time {t}")
            cells[(sid, t)] = v
    if not cells:
        raise InputError(f"{path}: no data rows")
    stations = list(coords)
    tmin = min(t for _, t in cells)
    tmax = max(t for _, t in cells)
    times = np.arange(tmin, tmax + 1)
    gaps = [(s, int(t)) for s in stations for t in times if (s, int(t)) not in cells]
    if gaps and drop_incomplete:
        bad = {s for s, _ in gaps}
        stations = [s for s in stations if s not in bad]
        if not stations:
            raise CompletenessError("every station has gaps", gaps)
        present = sorted({t for s, t in cells if s in stations})
        times = np.arange(present[0], present[-1] + 1)
        gaps = [(s, int(t)) for s in stations for t in times if (s, int(t)) not in cells]
    if gaps:
        shown = ", ".join(f"{s}@{t}" for s, t in gaps[:20])
        more = "" if len(gaps) <= 20 else f" (+{len(gaps) - 20} more)"
        raise CompletenessError(f"{len(gaps)} missing cells: {shown}{more}", gaps)
    y = np.array([[cells[(s, int(t))] for s in stations] for t in times])
    domain = SpatialDomain(tuple(stations), np.array([coords[s] for s in stations]), metric)
    return Panel(domain, times, y)


def write_csv(path, panel: Panel):
    header = GEO_HEADER if panel.domain.metric == "geodesic" else PLANAR_HEADER
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for j, sid in enumerate(panel.domain.station_ids):
            a, b = panel.domain.coords[j]
            for i, t in enumerate(panel.times):
                w.writerow([sid, repr(float(a)), repr(float(b)), int(t), repr(float(panel.y[i, j]))])


def transform_log1(values) -> np.ndarray:
    """log(1 + y) for non-negative values."""
    v = np.asarray(values, dtype=float)
    if np.any(v < 0):
        raise DomainError("log1p transform needs non-negative values")
    return np.log1p(v)


def inverse_log1(values) -> np.ndarray:
    return np.expm1(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Preprocessed:
    residuals: np.ndarray
    effects: np.ndarray
    tag: str


def remove_month_effects(y, times, period: int = 12, mode: str = "station") -> Preprocessed:
    """Subtract month-of-year effects, month = time_index mod ``period``.

    ``station`` subtracts per-(station, month) means; ``global`` fits the
    additive station + month analysis-of-variance model. ``effects`` is the
    fitted (T, S) surface that was removed.
    """
    y = np.asarray(y, dtype=float)
    times = np.asarray(times)
    if mode not in MONTH_MODES:
        raise InputError(f"month effect mode must be one of {MONTH_MODES}")
    if mode == "none":
        return Preprocessed(y.copy(), np.zeros_like(y), "none")
    if period < 1 or len(times) < period:
        raise InputError(f"need at least one full period ({period}) of data")
    month = np.mod(times, period)
    fitted = np.empty_like(y)
    if mode == "station":
        for mth in np.unique(month):
            sel = month == mth
            fitted[sel] = y[sel].mean(axis=0)
    else:
        # every station has the same month counts, so the additive fit is
        # station mean + month mean - grand mean
        grand = y.mean()
        station = y.mean(axis=0)
        for mth in np.unique(month):
            sel = month == mth
            fitted[sel] = station + y[sel].mean() - grand
    return Preprocessed(y - fitted, fitted, mode)
