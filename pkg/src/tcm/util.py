"""Seeding and batch-execution helpers shared across modules."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def stable_seed(*parts) -> int:
    """Derive a 64-bit RNG seed from arbitrary parts.

    Python's builtin hash() is salted per process, so anything that must be
    reproducible across runs or worker counts derives its seed here instead.
    """
    token = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def run_tasks(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Apply fn over items in a process pool, preserving input order.

    Each task must be a pure picklable function of its argument (deriving any
    randomness via stable_seed), so the result list is independent of the
    worker count. The numeric kernels hold the GIL, which makes thread pools
    counterproductive; processes are used instead.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
