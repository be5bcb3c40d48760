"""Change-point detection for space-time lattice data with a penalized
pairwise composite likelihood."""

__version__ = "0.1.0"

from .clike import OptimizerConfig, SufficientStats, composite_loglik, fit_segment  # noqa: E402
from .config import RunConfig  # noqa: E402
from .covmodels import M1, M2, ModelOrder, parse_model  # noqa: E402
from .criterion import SegmentCoster  # noqa: E402
from .errors import CLMDLError, ConfigError, InputError, NumericError  # noqa: E402
from .inference import changepoint_ci, param_variance  # noqa: E402
from .pipeline import detect_panel  # noqa: E402
from .segsearch import SearchConfig, Segmentation, detect, exact_detect, pelt_detect  # noqa: E402
from .simulate import PiecewiseSpec, SegmentSpec, gen_piecewise  # noqa: E402
from .stgrid import PairConfig, SpatialDomain, build_neighbors  # noqa: E402

__all__ = [
    "__version__", "OptimizerConfig", "SufficientStats", "composite_loglik", "fit_segment", "RunConfig",
    "M1", "M2", "ModelOrder", "parse_model", "SegmentCoster", "CLMDLError", "ConfigError", "InputError",
    "NumericError", "changepoint_ci", "param_variance", "detect_panel", "SearchConfig", "Segmentation",
    "detect", "exact_detect", "pelt_detect", "PiecewiseSpec", "SegmentSpec", "gen_piecewise", "PairConfig",
    "SpatialDomain", "build_neighbors",
]
