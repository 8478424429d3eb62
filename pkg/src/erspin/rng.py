"""Counter-based random streams.

All randomness comes from numpy's Philox4x64 generator. The 128-bit key is
derived from ``(seed, tag)`` with BLAKE2b; the stream index occupies the top
64-bit word of the 256-bit counter, so streams never overlap unless one of
them draws more than 2**192 blocks. Work is split into fixed-size blocks,
each with its own stream, which makes results independent of how blocks are
distributed over threads.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_BLOCK = 4096


def derive_key(seed: int, tag: str) -> tuple:
    if not 0 <= int(seed) <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little"))
    h.update(tag.encode("utf-8"))
    d = h.digest()
    return int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for block ``index`` of the ``tag`` computation."""
    k0, k1 = derive_key(seed, tag)
    key = np.array([k0, k1], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(index) & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def block_sizes(n: int, block: int = DEFAULT_BLOCK) -> list:
    full, rest = divmod(int(n), block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn: Callable, sizes: Sequence[int], seed: int, tag: str, threads: int = 1) -> list:
    """Evaluate ``fn(rng, size)`` for every block, in block order."""
    jobs = [(stream(seed, tag, i), s) for i, s in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(r, s) for r, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
