"""Whole-population comparators: mean difference and ratio of means."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bootstrap
from .data import TrialDataset
from .errors import ValidityRangeError
from .estimator import EstimatorConfig, percentile_interval


@dataclass
class SummaryEffects:
    ate: float
    rom: float
    relative_reduction: float
    ate_ci: tuple
    rom_ci: tuple
    relative_reduction_ci: tuple
    alpha: float

    def as_dict(self):
        return {
            "ate": self.ate,
            "ate_ci": list(self.ate_ci),
            "rom": self.rom,
            "rom_ci": list(self.rom_ci),
            "relative_reduction": self.relative_reduction,
            "relative_reduction_ci": list(self.relative_reduction_ci),
            "alpha": self.alpha,
        }


def _mean_stat(c, t):
    return np.stack([c.mean(axis=1), t.mean(axis=1)], axis=1)


def summarize(dataset: TrialDataset, config: EstimatorConfig | None = None,
              workers=1) -> SummaryEffects:
    """ATE (treatment minus control mean) and RoM (treatment over control
    mean) with percentile intervals from the shared replicate stream."""
    config = config or EstimatorConfig()
    mc = dataset.control.values.mean()
    mt = dataset.treatment.values.mean()
    if mc == 0:
        raise ValidityRangeError("ratio of means undefined: control mean is 0")
    means = bootstrap.replicate_map(_mean_stat, dataset.control.values,
                                    dataset.treatment.values, config.seed,
                                    config.bootstrap_count, workers)
    with np.errstate(divide="ignore", invalid="ignore"):
        rom_b = means[:, 1] / means[:, 0]
    rom_b = np.where(np.isfinite(rom_b), rom_b, np.nan)
    reps = np.stack([means[:, 1] - means[:, 0], rom_b], axis=1)
    lo, hi = percentile_interval(reps, config.alpha)
    rom = float(mt / mc)
    return SummaryEffects(
        ate=float(mt - mc),
        rom=rom,
        relative_reduction=1.0 - rom,
        ate_ci=(float(lo[0]), float(hi[0])),
        rom_ci=(float(lo[1]), float(hi[1])),
        # 1 - RoM is decreasing in RoM, so the interval ends swap
        relative_reduction_ci=(1.0 - float(hi[1]), 1.0 - float(lo[1])),
        alpha=config.alpha,
    )
