"""Paired bootstrap replicates with per-replicate random streams.

Replicate ``b`` under master seed ``s`` draws from
``Generator(PCG64(SeedSequence(s, spawn_key=(b,))))``: first ``n_control``
control indices, then ``n_treatment`` treatment indices. Nothing else
touches that stream, so a replicate is the same no matter which worker
computes it or how the index range is chunked.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

STREAM_RULE = "numpy PCG64(SeedSequence(seed, spawn_key=(b,))); control draws then treatment draws"
CHUNK = 250


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))


def resample_indices(seed, start, stop, n_control, n_treatment):
    """Index matrices of shape (stop-start, n) for replicates ``start..stop-1``."""
    rows = stop - start
    ci = np.empty((rows, n_control), dtype=np.intp)
    ti = np.empty((rows, n_treatment), dtype=np.intp)
    for r, b in enumerate(range(start, stop)):
        rng = replicate_rng(seed, b)
        ci[r] = rng.integers(0, n_control, size=n_control)
        ti[r] = rng.integers(0, n_treatment, size=n_treatment)
    return ci, ti


def bootstrap_pairs(control, treatment, seed, count):
    """Yield ``count`` paired resamples ``(control_b, treatment_b)`` in order."""
    control = np.asarray(control, dtype=float)
    treatment = np.asarray(treatment, dtype=float)
    for b in range(count):
        ci, ti = resample_indices(seed, b, b + 1, control.size, treatment.size)
        yield control[ci[0]], treatment[ti[0]]


def _run_chunk(stat, control, treatment, seed, bounds):
    start, stop = bounds
    ci, ti = resample_indices(seed, start, stop, control.size, treatment.size)
    c = np.sort(control[ci], axis=1)
    t = np.sort(treatment[ti], axis=1)
    return stat(c, t)


def _chunks(count, size=CHUNK):
    return [(a, min(a + size, count)) for a in range(0, count, size)]


def replicate_map(stat, control, treatment, seed, count, workers=1):
    """Evaluate ``stat`` on every bootstrap replicate.

    ``stat(c, t)`` receives row-sorted resample matrices for a contiguous
    block of replicates and returns one row per replicate. The result rows
    are in replicate order regardless of ``workers``.
    """
    control = np.asarray(control, dtype=float)
    treatment = np.asarray(treatment, dtype=float)
    job = partial(_run_chunk, stat, control, treatment, seed)
    chunks = _chunks(count)
    workers = resolve_workers(workers)
    if workers == 1 or len(chunks) == 1:
        parts = [job(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, chunks))
    return np.concatenate(parts, axis=0)


def resolve_workers(workers) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)
