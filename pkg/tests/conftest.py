import numpy as np
import pytest

from bqte.data import TrialDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cold_like(rng):
    """Integer-valued, heavily tied durations resembling cold-trial data."""
    c = np.maximum(1, np.round(rng.lognormal(2.0, 0.55, 50)))
    t = np.maximum(1, np.round(rng.lognormal(1.5, 0.55, 50)))
    return TrialDataset.from_arrays(c, t, trial_id="cold-like")


def brute_quantile(values, p):
    """Type-7 quantile from a plain sorted list, written without numpy."""
    v = sorted(values)
    h = p * (len(v) - 1)  # zero-based position
    k = int(h)
    if k + 1 >= len(v):
        return float(v[-1])
    return v[k] + (h - k) * (v[k + 1] - v[k])


def brute_knots(control, treatment, K):
    xs = [brute_quantile(control, i / (K + 1)) for i in range(1, K + 1)]
    ys = [brute_quantile(treatment, i / (K + 1)) for i in range(1, K + 1)]
    # collapse runs of equal x into their mean y
    knots = []
    i = 0
    while i < K:
        j = i
        while j + 1 < K and xs[j + 1] == xs[i]:
            j += 1
        knots.append((xs[i], sum(ys[i:j + 1]) / (j + 1 - i)))
        i = j + 1
    return knots


def brute_bqte(knots, x):
    for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
        if x0 <= x < x1:
            return y0 + (x - x0) / (x1 - x0) * (y1 - y0) - x
    if x == knots[-1][0]:
        return knots[-1][1] - x
    raise ValueError("outside support")


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:4s} criterion {key}: {detail}")
