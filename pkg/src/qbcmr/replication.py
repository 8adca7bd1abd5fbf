"""Deterministic replication runner.

Replication ``r`` of a study with base seed ``s`` always uses the integer seed
``replication_seed(s, r)``, whatever the worker count or scheduling order, so a
single failing replication can be rerun on its own.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from qbcmr.exceptions import ReplicationError


def replication_seed(base_seed: int, index: int) -> int:
    """63-bit seed derived from (base_seed, index) by SeedSequence hashing."""
    state = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _run_one(fn: Callable, index: int, seed: int, job):
    try:
        return fn(index, seed, job)
    except ReplicationError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise ReplicationError(index, seed, exc) from exc


def run_replications(fn: Callable, job, R: int, base_seed: int, workers: int = 1, first: int = 0) -> list:
    """Evaluate ``fn(index, seed, job)`` for index = first .. first + R - 1.

    Results come back in index order.  ``fn`` and ``job`` must be picklable
    when ``workers > 1``.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    indices = range(first, first + R)
    seeds = [replication_seed(base_seed, i) for i in indices]
    if workers == 1 or R == 1:
        return [_run_one(fn, i, s, job) for i, s in zip(indices, seeds)]
    with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
        futures = [pool.submit(_run_one, fn, i, s, job) for i, s in zip(indices, seeds)]
        return [f.result() for f in futures]
