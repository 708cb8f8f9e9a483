"""Worker-count policy and deterministic RNG stream derivation."""
from __future__ import annotations

import os

import numpy as np

THREADS_ENV = "MINICONVNET_THREADS"

# stream purposes, mixed into every derived seed
INIT, SPLIT, SHUFFLE, AUGMENT, DROPOUT = range(5)


def worker_count(requested: int | None = None) -> int:
    """Requested workers capped by ``MINICONVNET_THREADS`` (default: cpu count)."""
    cap = os.environ.get(THREADS_ENV)
    limit = max(int(cap), 1) if cap else (os.cpu_count() or 1)
    return max(1, min(requested or limit, limit))


def blas_threads(workers: int) -> int:
    """BLAS threads for ``workers``, never more than the CPU count.

    Oversubscribed BLAS threads spin against each other and slow every matmul.
    """
    return max(1, min(workers, os.cpu_count() or 1))


def stream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Independent Generator for ``(seed, purpose, *key)``.

    Streams for different keys never depend on how many other streams were
    drawn, which keeps results independent of worker count and call order.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(purpose, *key)))
