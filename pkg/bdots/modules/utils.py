"""Small numeric helpers shared by the analysis modules."""
from typing import Iterator, List, Sequence, Tuple

import numpy as np

# Stream ids for --seed derivation: stream_rng(seed, STREAM_*, ...).
STREAM_BOOTSTRAP = 1
STREAM_PERMUTATION = 2
STREAM_REPLICATE = 3


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the sub-stream ``stream`` of a master seed.

    The same (seed, stream) pair always yields the same draws, independent of
    what other streams have consumed.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a master seed from ``rng`` for per-iteration derivation."""
    return int(rng.integers(0, 2**63 - 1))


def iteration_rngs(rng: np.random.Generator, count: int) -> Iterator[np.random.Generator]:
    """One generator per iteration, derived from (master, iteration index)."""
    master = child_seed(rng)
    for i in range(count):
        yield stream_rng(master, i)


def lag1_autocorrelation(x: Sequence[float]) -> float:
    """Lag-1 sample autocorrelation of a demeaned series; 0 for constant input."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom <= np.finfo(float).tiny:
        return 0.0
    return float(np.dot(d[:-1], d[1:]) / denom)


def mask_to_intervals(times: Sequence[float], mask: Sequence[bool]) -> List[Tuple[float, float]]:
    """Maximal runs of True in ``mask`` as (first time, last time) pairs."""
    times = np.asarray(times, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0 or not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [(float(times[s]), float(times[e])) for s, e in zip(starts, ends)]
