"""Back-transformed quantile treatment effects (BQTE) for two-group trials."""

from .data import TrialDataset, impute_censored, load_csv, pool_trials
from .errors import BQTEError, ConfigError, DataError, ValidityRangeError
from .estimator import (
    CurvePoint,
    EffectCurve,
    EstimatorConfig,
    cutpoint_levels,
    estimate_bqte,
    paired_quantile_grid,
    piecewise_bqte,
    relative_curve,
    valid_range,
)
from .quantiles import Sample, ecdf, generalized_inverse, quantile, sorted_values
from .serialize import curve_from_json, serialize_curve
from .summary import SummaryEffects, summarize
from .tails import estimate_tail_curves, ltbqte_point, utbqte_point

__version__ = "0.1.0"

__all__ = [
    "BQTEError", "ConfigError", "CurvePoint", "DataError", "EffectCurve",
    "EstimatorConfig", "Sample", "SummaryEffects", "TrialDataset",
    "ValidityRangeError", "curve_from_json", "cutpoint_levels", "ecdf",
    "estimate_bqte", "estimate_tail_curves", "generalized_inverse",
    "impute_censored", "load_csv", "ltbqte_point", "paired_quantile_grid",
    "piecewise_bqte", "pool_trials", "quantile", "relative_curve",
    "serialize_curve", "sorted_values", "summarize", "utbqte_point",
    "valid_range",
]
