"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .clike import OptimizerConfig
from .covmodels import SPATIAL_KERNELS, parse_model
from .errors import CLMDLError, ConfigError
from .ingest import MONTH_MODES
from .segsearch import SearchConfig

_BOOL = {"true": True, "on": True, "yes": True, "1": True, "false": False, "off": False, "no": False, "0": False}


@dataclass(frozen=True)
class RunConfig:
    k: int = 1
    d: float = 1.0
    metric: str = "auto"
    eps_lambda: float = 0.1
    models: str = "M1,M2"
    spatial_kernel: str = "squared"
    search: str = "pelt"
    penalty: str = "clmdl"
    pruning: bool = True
    K_override: float | None = None
    max_penalty_iterations: int = 10
    exact_budget: int = 200_000
    n_restarts: int = 3
    maxiter: int = 2000
    ftol: float = 1e-8
    xtol: float = 1e-6
    seed: int = 0
    dense_budget: int = 5000
    log1p: bool = False
    month_effects: str = "none"
    period: int = 12
    drop_incomplete: bool = False
    ci_level: float = 0.9
    ci_n_rep: int = 100
    ci_Q: int | None = None
    sim_side: int = 10
    sim_segments: str = "M1[-0.5,0.6,1]x100; M1[-0.3,0.6,1]x100"
    threads: int = 1

    def __post_init__(self):
        try:
            self.validate()
        except CLMDLError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self):
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ConfigError("d must be a positive number")
        if self.metric not in ("auto", "planar", "geodesic"):
            raise ConfigError("metric must be auto, planar or geodesic")
        if self.spatial_kernel not in SPATIAL_KERNELS:
            raise ConfigError(f"spatial_kernel must be one of {SPATIAL_KERNELS}")
        if self.search not in ("pelt", "exact"):
            raise ConfigError("search must be pelt or exact")
        if self.penalty not in ("clmdl", "none"):
            raise ConfigError("penalty must be clmdl or none")
        if self.month_effects not in MONTH_MODES:
            raise ConfigError(f"month_effects must be one of {MONTH_MODES}")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.ci_n_rep < 1 or self.threads < 1 or self.period < 1:
            raise ConfigError("ci_n_rep, threads and period must be >= 1")
        self.model_list()
        self.search_config()
        self.optimizer()

    def model_list(self):
        toks = [t for t in self.models.split(",") if t.strip()]
        if not toks:
            raise ConfigError("models must list at least one model")
        return [parse_model(t) for t in toks]

    def search_config(self) -> SearchConfig:
        return SearchConfig(self.eps_lambda, self.pruning, self.K_override, self.max_penalty_iterations,
                            self.exact_budget)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(self.n_restarts, self.maxiter, self.ftol, self.xtol, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in d.items()})

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        d = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            key = key.strip()
            if key in d:
                raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
            d[key] = val.strip()
        return cls.from_dict(d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(f, v):
    if not isinstance(v, str):
        return v
    name, typ = f.name, str(f.type)
    s = v.strip()
    try:
        if "None" in typ and s.lower() in ("", "none", "auto"):
            return None
        if typ.startswith("bool"):
            if s.lower() not in _BOOL:
                raise ValueError
            return _BOOL[s.lower()]
        if typ.startswith("int"):
            return int(s)
        if typ.startswith("float"):
            return float(s)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {v!r} as {typ}") from None
    return s
