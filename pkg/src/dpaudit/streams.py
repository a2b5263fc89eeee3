"""Splittable, counter-based random streams and chunked Monte Carlo runs.

Every stream is a Philox generator seeded from ``(master seed, key...)``
through :class:`numpy.random.SeedSequence`, so the sample drawn for a given
key never depends on which worker computed it or in what order.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

THREADS_ENV = "DP_AUDIT_THREADS"


def _as_int(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key part {part!r}")


class Streams:
    """A node in a tree of independent random streams."""

    def __init__(self, seed: int, key: Sequence = ()):
        self.seed = int(seed)
        self.key = tuple(_as_int(p) for p in key)

    def child(self, *parts) -> Streams:
        return Streams(self.seed, self.key + tuple(_as_int(p) for p in parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def derive_seed(self) -> int:
        """A 63-bit integer seed for an isolated sub-run."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1

    def __repr__(self):
        return f"Streams(seed={self.seed}, key={self.key})"


def resolve_workers(requested: int | None = None) -> int:
    """Requested worker count, capped by ``DP_AUDIT_THREADS`` when set."""
    env = os.environ.get(THREADS_ENV)
    cap = None
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    n = requested if requested is not None else (cap or 1)
    n = max(1, int(n))
    return min(n, cap) if cap else n


def run_chunked(
    fn: Callable[[int, int, np.random.Generator], np.ndarray],
    n: int,
    chunk_size: int,
    streams: Streams,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``fn(chunk_index, size, rng)`` over fixed-size chunks of ``n``
    iterations and concatenate in chunk order."""
    sizes = [min(chunk_size, n - start) for start in range(0, n, chunk_size)]

    def job(i):
        return fn(i, sizes[i], streams.child(i).generator())

    if workers <= 1 or len(sizes) == 1:
        parts = [job(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    return np.concatenate(parts, axis=0)
