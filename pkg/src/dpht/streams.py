"""Seeded, counter-indexed random streams.

Every random quantity in the package is drawn from a generator that is a
pure function of a root seed and a key path such as ``("ref", 3)``.  Work is
split into fixed-size blocks, each with its own stream, so a computation
gives bit-identical output whether its blocks run serially or on a thread
pool of any size.
"""

from __future__ import annotations

import os
import secrets
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

BLOCK_SIZE = 4096
SEED_ENV = "DPHT_SEED"

_KEY_CODES = {"privatize": 1, "ref": 2, "trial": 3, "table": 4, "perm": 5, "star": 6, "repeat": 7}


def resolve_seed(seed: int | None = None) -> int:
    """Return ``seed``, else ``$DPHT_SEED``, else fresh OS entropy (63 bits)."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return secrets.randbits(63)


def _encode(key) -> int:
    if isinstance(key, str):
        return _KEY_CODES[key]
    return int(key)


def rng_for(seed: int, *key) -> np.random.Generator:
    """Generator for the substream ``key`` of root ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_encode(k) for k in key))
    return np.random.default_rng(ss)


def child_seed(seed: int, *key) -> int:
    """A 63-bit integer seed derived from ``(seed, key)``; used to hand a
    reproducible seed to a nested computation that records it."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_encode(k) for k in key))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0] >> np.uint64(1))


def block_draws(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    m: int,
    seed: int,
    key: tuple = ("ref",),
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Collect ``m`` draws of ``draw(rng, size)`` over per-block streams.

    Block ``b`` always covers draws ``[b*block_size, (b+1)*block_size)`` and
    uses ``rng_for(seed, *key, b)``, independent of ``threads``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    sizes = [min(block_size, m - start) for start in range(0, m, block_size)]

    def run(b: int) -> np.ndarray:
        out = np.asarray(draw(rng_for(seed, *key, b), sizes[b]), dtype=np.float64)
        if out.shape != (sizes[b],):
            raise ValueError(f"sampler returned shape {out.shape}, expected ({sizes[b]},)")
        return out

    if threads <= 1 or len(sizes) == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts)


def parallel_map(fn: Callable, items, threads: int = 1) -> list:
    """Ordered map, optionally on a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
