"""Upper and lower tail back-transformed effects.

    UTBQTE(x) = E(Y | Y >= G^-1(F(x))) - E(X | X >= x)
    LTBQTE(x) = E(Y | Y <= G^-1(F(x))) - E(X | X <= x)

They bound the average individual effect in the corresponding tail of the
control population without assuming the treatment preserves order. Tail
membership uses weak inequalities, so ties at the threshold are included.
"""

from __future__ import annotations

from functools import partial

import numpy as np

from . import bootstrap
from .data import TrialDataset
from .errors import ValidityRangeError
from .estimator import (
    MIN_CUTPOINTS,
    EffectCurve,
    EstimatorConfig,
    bagged_mean,
    base_provenance,
    check_grid,
    evaluation_grid,
    make_points,
    percentile_interval,
    relative_curve,
    valid_range,
)
from .quantiles import ecdf, generalized_inverse, inverse_index, sorted_values


def _threshold(control, treatment, x):
    p = ecdf(control, x)
    if p == 0:
        raise ValidityRangeError("empty tail at threshold")
    return generalized_inverse(treatment, p)


def utbqte_point(control, treatment, x: float) -> float:
    xv = sorted_values(control)
    yv = sorted_values(treatment)
    t = _threshold(xv, yv, x)
    upper_x = xv[xv >= x]
    if upper_x.size == 0:
        raise ValidityRangeError("empty tail at threshold")
    return float(yv[yv >= t].mean() - upper_x.mean())


def ltbqte_point(control, treatment, x: float) -> float:
    xv = sorted_values(control)
    yv = sorted_values(treatment)
    t = _threshold(xv, yv, x)
    return float(yv[yv <= t].mean() - xv[xv <= x].mean())


def tail_matrices(c, t, grid):
    """UTBQTE and LTBQTE for every row pair of sorted resamples.

    Uses prefix sums, so it agrees with the point functions up to rounding.
    Empty tails come back as NaN.
    """
    n, m = c.shape[1], t.shape[1]
    grid = np.asarray(grid, dtype=float)
    g = grid[None, None, :]
    n_le = (c[:, :, None] <= g).sum(axis=1)
    n_lt = (c[:, :, None] < g).sum(axis=1)
    cs_c = np.concatenate([np.zeros((c.shape[0], 1)), np.cumsum(c, axis=1)], axis=1)
    cs_t = np.concatenate([np.zeros((t.shape[0], 1)), np.cumsum(t, axis=1)], axis=1)
    tot_c, tot_t = cs_c[:, -1:], cs_t[:, -1:]

    j = inverse_index(m, n_le / n)
    thr = np.take_along_axis(t, j, axis=1)
    t_lt = (t[:, :, None] < thr[:, None, :]).sum(axis=1)
    t_le = (t[:, :, None] <= thr[:, None, :]).sum(axis=1)

    with np.errstate(invalid="ignore", divide="ignore"):
        up_x = (tot_c - np.take_along_axis(cs_c, n_lt, axis=1)) / (n - n_lt)
        lo_x = np.take_along_axis(cs_c, n_le, axis=1) / n_le
        up_y = (tot_t - np.take_along_axis(cs_t, t_lt, axis=1)) / (m - t_lt)
        lo_y = np.take_along_axis(cs_t, t_le, axis=1) / t_le
    undefined = n_le == 0
    ut = np.where(undefined | (n_lt == n), np.nan, up_y - up_x)
    lt = np.where(undefined, np.nan, lo_y - lo_x)
    return ut, lt


def _tail_stat(grid, c, t):
    ut, lt = tail_matrices(c, t, grid)
    return np.concatenate([ut, lt], axis=1)


def estimate_tail_curves(dataset: TrialDataset, config: EstimatorConfig | None = None,
                         grid=None, workers=1, relative=True):
    """Return ``{"utbqte": ..., "ltbqte": ...}`` absolute curves, plus
    ``"utbqte_relative"``/``"ltbqte_relative"`` when ``relative`` is set.

    ``bagging`` averages the bootstrap replicates; ``direct`` and ``doksum``
    both use the plug-in value on the observed samples, since tail means
    involve no interpolation.
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
    G = grid.size

    reps = bootstrap.replicate_map(partial(_tail_stat, grid), dataset.control.values,
                                   dataset.treatment.values, config.seed,
                                   config.bootstrap_count, workers)
    out = {}
    for k, kind in enumerate(("utbqte", "ltbqte")):
        r = reps[:, k * G:(k + 1) * G]
        if G == 0:
            est, lo, hi = [], [], []
        else:
            if config.estimator_kind == "bagging":
                est = bagged_mean(r)
            else:
                point = utbqte_point if kind == "utbqte" else ltbqte_point
                est = [point(dataset.control, dataset.treatment, x) for x in grid]
            lo, hi = percentile_interval(r, config.alpha)
        curve = EffectCurve(kind, "absolute", make_points(grid, est, lo, hi),
                            config.alpha, vrange, base_provenance(dataset, config, K, r))
        out[kind] = curve
        if relative:
            out[kind + "_relative"] = relative_curve(curve)
    return out
