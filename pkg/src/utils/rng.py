import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _as_entropy(part: Key) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"seed parts must be non-negative, got {part}")
    return int(part)


def derive_rng(seed: int, *parts: Key) -> np.random.Generator:
    """
    Derive an independent generator from a base seed and a purpose path.

    The same (seed, parts) always yields the same stream, regardless of
    which other streams were drawn before, so per-sample work can run in
    any order or in parallel.

    Args:
        seed: Base seed of the run
        parts: Purpose tags and counters, e.g. ("augment", phase, epoch, index)

    Returns:
        A fresh numpy Generator
    """
    entropy = [_as_entropy(seed)] + [_as_entropy(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))
