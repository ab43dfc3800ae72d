"""Deterministic, parallel-safe random streams.

Trials are partitioned into fixed-size chunks and every chunk gets its own
generator derived purely from (seed, chunk index).  The partition does not
depend on how many workers execute the chunks, and chunk results are always
combined in index order, so output is bit-identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Fixed chunk stride; must never depend on trial count or worker count.
CHUNK_TRIALS = 1 << 18


def chunk_rng(seed, index: int) -> np.random.Generator:
    """Generator for one chunk, a pure function of (seed, index).

    seed may be an int or a tuple of ints (a derived stream label).
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def point_rng(seed, index: int) -> np.random.Generator:
    """Generator for one sweep point; never collides with a chunk stream."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index, 1)))


def chunk_layout(trials: int) -> list[int]:
    """Sizes of the fixed chunks covering `trials`."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    full, rest = divmod(trials, CHUNK_TRIALS)
    return [CHUNK_TRIALS] * full + ([rest] if rest else [])


def map_chunks(fn, trials: int, seed, workers: int = 1) -> list:
    """Run `fn(rng, size)` over every chunk, returning results in chunk order.

    `fn` must depend only on its arguments.  With workers > 1 the chunks are
    executed on a thread pool; the returned list is identical either way.
    """
    sizes = chunk_layout(trials)
    jobs = [(chunk_rng(seed, i), sz) for i, sz in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(rng, sz) for rng, sz in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: fn(j[0], j[1]), jobs))
