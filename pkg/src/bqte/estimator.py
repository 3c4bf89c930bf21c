"""Back-transformed quantile treatment effect, ``BQTE(x) = G^-1(F(x)) - x``.

Values are stored as treatment minus control, so a treatment that shortens
an illness gives negative numbers.

Three estimators share one bootstrap engine:

* ``bagging``: mean over bootstrap replicates of the piecewise-linear curve
  through the paired cut-point quantiles (the default);
* ``direct``: the same piecewise-linear curve on the observed data;
* ``doksum``: plug-in ``G_n^-1(F_n(x)) - x`` without interpolation.

All three report percentile intervals from the bootstrap distribution of
their own statistic.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from . import bootstrap
from .data import TrialDataset
from .errors import ConfigError, ValidityRangeError
from .quantiles import (
    inverse_index,
    sorted_quantiles,
    sorted_values,
)

ESTIMATORS = ("bagging", "direct", "doksum")
MIN_CUTPOINTS = 11


@dataclass
class EstimatorConfig:
    bootstrap_count: int = 2000
    cutpoint_count: int | None = None  # None: control sample size
    alpha: float = 0.05
    estimator_kind: str = "bagging"
    seed: int = 20231022
    grid_policy: str = "observed"

    def __post_init__(self):
        if int(self.bootstrap_count) != self.bootstrap_count or self.bootstrap_count < 1:
            raise ConfigError("bootstrap_count must be a positive integer")
        self.bootstrap_count = int(self.bootstrap_count)
        if self.cutpoint_count is not None:
            if self.cutpoint_count < MIN_CUTPOINTS:
                raise ConfigError(
                    f"cutpoint_count must be at least {MIN_CUTPOINTS}, got {self.cutpoint_count}")
            self.cutpoint_count = int(self.cutpoint_count)
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.estimator_kind not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator_kind!r}")
        if self.bootstrap_count < 2:
            raise ConfigError("bootstrap intervals need bootstrap_count >= 2")
        parse_grid_policy(self.grid_policy)

    def cutpoints_for(self, dataset: TrialDataset) -> int:
        return self.cutpoint_count or len(dataset.control)

    def small_b_warning(self) -> str | None:
        if self.bootstrap_count * self.alpha / 2 < 5:
            return (f"only {self.bootstrap_count * self.alpha / 2:g} bootstrap values "
                    f"expected beyond each interval end; increase bootstrap_count")
        return None


@dataclass
class CurvePoint:
    x: float
    estimate: float
    ci_low: float
    ci_high: float


@dataclass
class EffectCurve:
    curve_kind: str  # bqte, utbqte, ltbqte
    scale: str  # absolute, relative
    points: list
    alpha: float
    valid_range: tuple
    provenance: dict = field(default_factory=dict)

    @property
    def x(self):
        return np.array([p.x for p in self.points])

    @property
    def estimate(self):
        return np.array([p.estimate for p in self.points])

    @property
    def ci_low(self):
        return np.array([p.ci_low for p in self.points])

    @property
    def ci_high(self):
        return np.array([p.ci_high for p in self.points])


def cutpoint_levels(K: int) -> np.ndarray:
    """Quantile levels ``i/(K+1)`` for ``i = 1..K``."""
    if K < 1:
        raise ConfigError("need at least one cut point")
    return np.arange(1, K + 1) / (K + 1)


def paired_quantile_grid(control, treatment, K):
    """Control and treatment quantiles at the K cut-point levels."""
    levels = cutpoint_levels(K)
    return (sorted_quantiles(sorted_values(control), levels),
            sorted_quantiles(sorted_values(treatment), levels))


def collapse_ties(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Replace each y by the mean y of its run of equal x values.

    Works row-wise on (rows, K) matrices whose rows are nondecreasing in x.
    """
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    new_run = np.ones(xs.shape, dtype=bool)
    new_run[:, 1:] = xs[:, 1:] != xs[:, :-1]
    if new_run.all():
        return ys
    run_id = np.cumsum(new_run.ravel()) - 1
    sums = np.bincount(run_id, weights=ys.ravel())
    counts = np.bincount(run_id)
    return (sums / counts)[run_id].reshape(ys.shape)


def piecewise_matrix(xs, ys, grid):
    """Piecewise-linear BQTE of each row's knots at every grid point.

    ``xs``/``ys`` are (rows, K) knot matrices. Between knots
    ``y_i + (x - x_i) / (x_{i+1} - x_i) * (y_{i+1} - y_i) - x``; at a knot
    ``y_i - x_i`` exactly. Points outside a row's knot span are NaN.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = collapse_ties(xs, np.asarray(ys, dtype=float))
    grid = np.asarray(grid, dtype=float)
    K = xs.shape[1]
    # index of the last knot <= x; the next knot is then strictly greater
    i = (xs[:, :, None] <= grid[None, None, :]).sum(axis=1) - 1
    inside = (i >= 0) & ((i < K - 1) | (grid[None, :] == xs[:, -1:]))
    ii = np.clip(i, 0, K - 1)
    jj = np.minimum(ii + 1, K - 1)
    xi = np.take_along_axis(xs, ii, axis=1)
    xj = np.take_along_axis(xs, jj, axis=1)
    yi = np.take_along_axis(ys, ii, axis=1)
    yj = np.take_along_axis(ys, jj, axis=1)
    at_knot = grid[None, :] == xi
    with np.errstate(invalid="ignore", divide="ignore"):
        slope_part = (grid[None, :] - xi) / (xj - xi) * (yj - yi)
    y = np.where(at_knot, yi, yi + slope_part)
    return np.where(inside, y - grid[None, :], np.nan)


def piecewise_bqte(grid_pairs, x):
    """Interpolated ``BQTE(x)`` through knots ``(x_i, y_i)``.

    ``grid_pairs`` is either a sequence of pairs or an ``(xs, ys)`` tuple of
    arrays. Raises if ``x`` lies outside ``[x_1, x_K]``.
    """
    xs, ys = _split_pairs(grid_pairs)
    if np.any(np.diff(xs) < 0):
        raise ValidityRangeError("cut-point x values must be nondecreasing")
    xq = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xq < xs[0]) or np.any(xq > xs[-1]):
        raise ValidityRangeError("outside interpolation support")
    out = piecewise_matrix(xs[None, :], ys[None, :], xq)[0]
    return float(out[0]) if np.ndim(x) == 0 else out


def _split_pairs(grid_pairs):
    if isinstance(grid_pairs, tuple) and len(grid_pairs) == 2 and np.ndim(grid_pairs[0]) == 1:
        xs, ys = grid_pairs
    else:
        arr = np.asarray(grid_pairs, dtype=float).reshape(-1, 2)
        xs, ys = arr[:, 0], arr[:, 1]
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)


def valid_range(control, K: int) -> tuple[float, float]:
    """Control quantiles at levels ``5/K`` and ``1 - 5/K``."""
    if K < MIN_CUTPOINTS:
        raise ValidityRangeError(f"validity range degenerate for K = {K}")
    v = sorted_values(control)
    lo, hi = sorted_quantiles(v, np.array([5 / K, 1 - 5 / K]))
    return float(lo), float(hi)


def parse_grid_policy(policy):
    """Return ``("observed", None)``, ``("uniform", n)`` or ``("explicit", xs)``."""
    if isinstance(policy, (list, tuple, np.ndarray)):
        return "explicit", np.asarray(policy, dtype=float)
    text = str(policy).strip()
    if text == "observed":
        return "observed", None
    kind, _, arg = text.partition(":")
    try:
        if kind == "uniform":
            n = int(arg)
            if n < 1:
                raise ValueError
            return "uniform", n
        if kind in ("list", "explicit"):
            return "explicit", np.array([float(a) for a in arg.split(",") if a.strip()])
    except ValueError:
        pass
    raise ConfigError(f"bad grid policy {policy!r}")


def evaluation_grid(control, K, policy="observed") -> np.ndarray:
    """Grid of control outcome values for the chosen policy, inside the
    validity range. Explicit grids are checked rather than trimmed."""
    lo, hi = valid_range(control, K)
    kind, arg = parse_grid_policy(policy)
    if kind == "observed":
        v = np.unique(sorted_values(control))
        return v[(v >= lo) & (v <= hi)]
    if kind == "uniform":
        return np.unique(np.linspace(lo, hi, arg))
    check_grid(arg, (lo, hi))
    return arg


def check_grid(grid, vrange):
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValidityRangeError("grid must be strictly increasing")
    lo, hi = vrange
    for x in grid:
        if not lo <= x <= hi:
            raise ValidityRangeError(
                f"grid point {x:g} outside validity range [{lo:g}, {hi:g}]")


# -- bootstrap statistics; module level so worker processes can pickle them

def _bqte_stat(levels, grid, c, t):
    xs = sorted_quantiles(c, levels)
    ys = sorted_quantiles(t, levels)
    return piecewise_matrix(xs, ys, grid)


def doksum_matrix(c, t, grid):
    """Plug-in ``G^-1(F(x)) - x`` for each row pair of sorted samples."""
    n, m = c.shape[1], t.shape[1]
    counts = (c[:, :, None] <= grid[None, None, :]).sum(axis=1)
    idx = inverse_index(m, counts / n)
    y = np.take_along_axis(t, idx, axis=1)
    return np.where(counts > 0, y - grid[None, :], np.nan)


def _doksum_stat(grid, c, t):
    return doksum_matrix(c, t, grid)


def percentile_interval(values: np.ndarray, alpha: float):
    """Column-wise percentile interval of a (B, G) matrix, ignoring NaN."""
    lo = np.empty(values.shape[1])
    hi = np.empty(values.shape[1])
    for g in range(values.shape[1]):
        col = values[:, g]
        col = np.sort(col[~np.isnan(col)])
        if col.size == 0:
            raise ValidityRangeError("no usable bootstrap replicates at a grid point")
        lo[g], hi[g] = sorted_quantiles(col, np.array([alpha / 2, 1 - alpha / 2]))
    return lo, hi


def bagged_mean(values: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = np.nanmean(values, axis=0)
        # rounding in the sum can push the mean of identical values past them
        return np.clip(m, np.nanmin(values, axis=0), np.nanmax(values, axis=0))


def config_echo(config: EstimatorConfig, K: int) -> dict:
    d = asdict(config)
    d["cutpoint_count"] = K
    d["grid_policy"] = (config.grid_policy if isinstance(config.grid_policy, str)
                        else list(map(float, config.grid_policy)))
    return d


def base_provenance(dataset, config, K, replicates):
    prov = {
        "config": config_echo(config, K),
        "dataset": dataset.trial_id,
        "n_control": len(dataset.control),
        "n_treatment": len(dataset.treatment),
        "rng": bootstrap.STREAM_RULE,
        "warnings": [],
    }
    msg = config.small_b_warning()
    if msg:
        warnings.warn(msg, stacklevel=3)
        prov["warnings"].append(msg)
    if replicates is not None:
        used = (~np.isnan(replicates)).sum(axis=0)
        prov["replicates_used"] = [int(u) for u in used]
    return prov


def make_points(grid, estimate, lo, hi):
    return [CurvePoint(float(x), float(e), float(a), float(b))
            for x, e, a, b in zip(grid, estimate, lo, hi)]


def bqte_replicates(dataset: TrialDataset, config: EstimatorConfig, grid, workers=1):
    """(B, len(grid)) bootstrap distribution of the configured statistic."""
    K = config.cutpoints_for(dataset)
    grid = np.asarray(grid, dtype=float)
    if config.estimator_kind == "doksum":
        stat = partial(_doksum_stat, grid)
    else:
        stat = partial(_bqte_stat, cutpoint_levels(K), grid)
    return bootstrap.replicate_map(stat, dataset.control.values, dataset.treatment.values,
                                   config.seed, config.bootstrap_count, workers)


def point_estimates(dataset, config, grid, replicates=None):
    """Point estimate of the configured kind at each grid point."""
    K = config.cutpoints_for(dataset)
    if len(grid) == 0:
        return np.empty(0)
    c = sorted_values(dataset.control)[None, :]
    t = sorted_values(dataset.treatment)[None, :]
    if config.estimator_kind == "bagging":
        return bagged_mean(replicates)
    if config.estimator_kind == "direct":
        return _bqte_stat(cutpoint_levels(K), grid, c, t)[0]
    return doksum_matrix(c, t, grid)[0]


def estimate_bqte(dataset: TrialDataset, config: EstimatorConfig | None = None,
                  grid=None, workers=1) -> EffectCurve:
    """BQTE curve on the absolute scale with percentile intervals.

    ``grid`` defaults to the grid policy in ``config``; any grid point outside
    the validity range raises :class:`ValidityRangeError`.
    """
    config = config or EstimatorConfig()
    K = config.cutpoints_for(dataset)
    if K < MIN_CUTPOINTS:
        raise ValidityRangeError(f"validity range degenerate for K = {K}")
    vrange = valid_range(dataset.control, K)
    if grid is None:
        grid = evaluation_grid(dataset.control, K, config.grid_policy)
    else:
        grid = np.asarray(grid, dtype=float)
        check_grid(grid, vrange)

    reps = bqte_replicates(dataset, config, grid, workers)
    est = point_estimates(dataset, config, grid, reps)
    lo, hi = percentile_interval(reps, config.alpha) if grid.size else ([], [])
    return EffectCurve(
        curve_kind="bqte",
        scale="absolute",
        points=make_points(grid, est, lo, hi),
        alpha=config.alpha,
        valid_range=vrange,
        provenance=base_provenance(dataset, config, K, reps),
    )


def relative_curve(curve: EffectCurve) -> EffectCurve:
    """Divide estimate and interval ends by the control outcome value."""
    if curve.scale != "absolute":
        raise ConfigError("relative_curve expects an absolute-scale curve")
    points = []
    for p in curve.points:
        if not p.x > 0:
            raise ValidityRangeError("relative scale undefined at nonpositive outcome")
        points.append(CurvePoint(p.x, p.estimate / p.x, p.ci_low / p.x, p.ci_high / p.x))
    return EffectCurve(curve.curve_kind, "relative", points, curve.alpha,
                       tuple(curve.valid_range), dict(curve.provenance))
