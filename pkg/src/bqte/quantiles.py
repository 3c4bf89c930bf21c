"""Empirical distribution primitives shared by every estimator.

Quantiles use linear interpolation between adjacent order statistics at
position ``h = p*(n-1) + 1`` (R's type 7, numpy's ``linear``). The ECDF is
the right-continuous step function and its inverse is left-continuous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, ValidityRangeError


@dataclass
class Sample:
    """Outcome values of one group.

    ``censor_flags[i]`` is True when ``values[i]`` is a right-censoring time
    rather than an observed outcome.
    """

    values: np.ndarray
    censor_flags: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.censor_flags is None:
            self.censor_flags = np.zeros(self.values.shape, dtype=bool)
        else:
            self.censor_flags = np.asarray(self.censor_flags, dtype=bool).ravel()
        if self.censor_flags.shape != self.values.shape:
            raise DataError("censor_flags must match values in length")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"sample {self.label!r} contains non-finite values")

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.censor_flags, other.censor_flags)
        )

    @property
    def n_censored(self) -> int:
        return int(self.censor_flags.sum())


def _as_values(s) -> np.ndarray:
    v = s.values if isinstance(s, Sample) else np.asarray(s, dtype=float).ravel()
    if v.size == 0:
        raise DataError("empty sample")
    return v


def sorted_values(s) -> np.ndarray:
    """Return the values of ``s`` in nondecreasing order (stable sort)."""
    return np.sort(_as_values(s), kind="stable")


def _check_levels(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise ValidityRangeError("quantile level out of range")
    return p


def interpolation_positions(n: int, p):
    """Zero-based bracketing order-statistic indices and interpolation weight.

    Every sample of size ``n`` shares these, which is what lets bootstrap
    replicates be evaluated as one matrix operation.
    """
    h = np.asarray(p, dtype=float) * (n - 1)
    lo = np.floor(h).astype(np.intp)
    frac = h - lo
    # p < 1 keeps lo <= n - 1; clip only guards n == 1
    hi = np.minimum(lo + 1, n - 1)
    return lo, hi, frac


def sorted_quantiles(v_sorted: np.ndarray, p) -> np.ndarray:
    """Quantiles of already-sorted data along the last axis.

    ``v_sorted`` may be 1-D or a 2-D stack of samples of equal size.
    """
    n = v_sorted.shape[-1]
    lo, hi, frac = interpolation_positions(n, p)
    a = v_sorted[..., lo]
    return a + frac * (v_sorted[..., hi] - a)


def quantile(s, p):
    """Interpolated empirical quantile of ``s`` at level(s) ``p`` in (0, 1)."""
    levels = _check_levels(p)
    out = sorted_quantiles(sorted_values(s), levels)
    return float(out) if out.ndim == 0 else out


def ecdf(s, x):
    """Fraction of values <= x."""
    v = sorted_values(s)
    counts = np.searchsorted(v, x, side="right")
    out = counts / v.size
    return float(out) if np.ndim(out) == 0 else out


def inverse_index(n: int, p) -> np.ndarray:
    """Zero-based index of the smallest order statistic whose ECDF reaches p."""
    steps = np.arange(1, n + 1) / n
    return np.minimum(np.searchsorted(steps, p, side="left"), n - 1)


def generalized_inverse(s, p):
    """``inf{v : ecdf(s, v) >= p}`` over the observed values, for p in (0, 1]."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)) or np.any(p > 1):
        raise ValidityRangeError("generalized inverse needs p in (0, 1]")
    v = sorted_values(s)
    out = v[inverse_index(v.size, p)]
    return float(out) if out.ndim == 0 else out


def as_sample(values: Sequence[float] | Sample, label: str = "") -> Sample:
    if isinstance(values, Sample):
        return values
    return Sample(np.asarray(values, dtype=float), label=label)
