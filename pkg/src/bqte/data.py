"""Trial datasets: CSV ingestion, censoring imputation and IPD pooling."""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .quantiles import Sample

log = logging.getLogger(__name__)

CONTROL_LABELS = {"control": 0, "0": 0, "treatment": 1, "1": 1}
TRUE_STRINGS = {"1", "true", "t", "yes", "y"}
FALSE_STRINGS = {"0", "false", "f", "no", "n", ""}


@dataclass
class ImputationRecord:
    group: str
    original: float
    imputed: float
    rule: str


@dataclass
class TrialDataset:
    control: Sample
    treatment: Sample
    trial_id: str = ""
    imputation_log: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.control) == 0 or len(self.treatment) == 0:
            raise DataError("both groups must be non-empty")

    @classmethod
    def from_arrays(cls, control, treatment, trial_id="synthetic"):
        return cls(
            Sample(control, label="control"),
            Sample(treatment, label="treatment"),
            trial_id=trial_id,
        )

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.control), len(self.treatment)


def _parse_bool(text: str, lineno: int) -> bool:
    t = text.strip().lower()
    if t in TRUE_STRINGS:
        return True
    if t in FALSE_STRINGS:
        return False
    raise DataError(f"line {lineno}: cannot parse censored flag {text!r}")


def load_csv(path, *, group_col="group", duration_col="duration",
             censored_col="censored", strict_positive=False, trial_id=None):
    """Read one trial from a CSV file with a header row.

    Required columns are ``group`` (control/treatment or 0/1) and
    ``duration``; ``censored`` is optional and defaults to false. Negative or
    unparseable durations are rejected with their line number. Zero
    durations only warn unless ``strict_positive`` is set.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_csv(text, group_col=group_col, duration_col=duration_col,
                     censored_col=censored_col, strict_positive=strict_positive,
                     trial_id=trial_id if trial_id is not None else path.stem)


def parse_csv(text, *, group_col="group", duration_col="duration",
              censored_col="censored", strict_positive=False, trial_id=""):
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    for col in (group_col, duration_col):
        if col not in header:
            raise DataError(f"missing required column {col!r}")
    has_censor = censored_col in header

    values = ([], [])
    flags = ([], [])
    for lineno, row in enumerate(reader, start=2):
        label = (row.get(group_col) or "").strip().lower()
        if label not in CONTROL_LABELS:
            raise DataError(f"line {lineno}: unknown group label {row.get(group_col)!r}")
        raw = (row.get(duration_col) or "").strip()
        try:
            value = float(raw)
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse duration {raw!r}") from None
        if not math.isfinite(value) or value < 0:
            raise DataError(f"line {lineno}: invalid duration {raw!r}")
        if value == 0:
            if strict_positive:
                raise DataError(f"line {lineno}: nonpositive duration {raw!r}")
            log.warning("line %d: zero duration", lineno)
        censored = _parse_bool(row.get(censored_col) or "", lineno) if has_censor else False
        g = CONTROL_LABELS[label]
        values[g].append(value)
        flags[g].append(censored)

    if not values[0] or not values[1]:
        raise DataError("both control and treatment rows are required")
    return TrialDataset(
        Sample(values[0], flags[0], label="control"),
        Sample(values[1], flags[1], label="treatment"),
        trial_id=trial_id,
    )


def write_csv(dataset: TrialDataset) -> str:
    """Inverse of :func:`parse_csv`; floats are written with ``repr`` so the
    round trip is lossless."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "duration", "censored"])
    for name, s in (("control", dataset.control), ("treatment", dataset.treatment)):
        for v, c in zip(s.values, s.censor_flags):
            w.writerow([name, repr(float(v)), int(c)])
    return buf.getvalue()


def parse_impute_rule(text: str):
    """``censor`` (impute at the censoring time) or ``fixed:V``."""
    text = text.strip().lower()
    if text in ("censor", "at-censoring-time"):
        return "at-censoring-time"
    if text.startswith("fixed:"):
        try:
            return float(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad fixed imputation value in {text!r}") from None
    raise ConfigError(f"unknown imputation rule {text!r}")


def impute_censored(dataset: TrialDataset, rule="at-censoring-time") -> TrialDataset:
    """Replace right-censored observations and clear their flags.

    ``rule`` is ``"at-censoring-time"`` (keep the censoring day as the
    duration) or a number used as a fixed duration for every censored value.
    A fixed value below a censoring time is refused.
    """
    if isinstance(rule, str):
        rule = parse_impute_rule(rule)
    if rule != "at-censoring-time":
        fixed = float(rule)
        rule_name = f"fixed({fixed:g})"
    else:
        fixed = None
        rule_name = rule

    logs = list(dataset.imputation_log)
    groups = []
    for s in (dataset.control, dataset.treatment):
        vals = s.values.copy()
        for i in np.flatnonzero(s.censor_flags):
            new = vals[i] if fixed is None else fixed
            if new < vals[i]:
                raise DataError(
                    f"fixed imputation {fixed:g} is below censoring time {vals[i]:g}")
            logs.append(ImputationRecord(s.label, float(vals[i]), float(new), rule_name))
            vals[i] = new
        groups.append(Sample(vals, label=s.label))
    return TrialDataset(groups[0], groups[1], dataset.trial_id, logs)


def pool_trials(datasets) -> TrialDataset:
    """Concatenate individual patient data from several trials."""
    datasets = list(datasets)
    if not datasets:
        raise DataError("nothing to pool")
    if len(datasets) == 1:
        return datasets[0]

    def cat(attr):
        samples = [getattr(d, attr) for d in datasets]
        return Sample(
            np.concatenate([s.values for s in samples]),
            np.concatenate([s.censor_flags for s in samples]),
            label=samples[0].label,
        )

    return TrialDataset(
        cat("control"),
        cat("treatment"),
        trial_id="+".join(d.trial_id for d in datasets),
        imputation_log=[r for d in datasets for r in d.imputation_log],
    )


def read_scenario_file(path) -> dict:
    """Parse an INI-style scenario file into ``{section: {key: value}}``.

    A ``[scenario]`` section is required; ``[estimator]`` is optional.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    if not parser.has_section("scenario"):
        raise ConfigError("scenario file needs a [scenario] section")
    return {s: dict(parser.items(s)) for s in parser.sections()}
