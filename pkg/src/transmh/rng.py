"""Seedable, splittable random streams.

All randomness flows through numpy's PCG64 bit generator.  The stream
split rule, recorded in every chain report: a single chain runs on the
root stream ``SeedSequence(s)``; a run with ``k > 1`` chains gives chain
``i`` the stream ``SeedSequence(s).spawn(k)[i]``.
"""

from __future__ import annotations

from typing import List, Union

import numpy as np

RNG_ALGORITHM = "numpy-pcg64"

SeedLike = Union[int, np.random.SeedSequence]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Generator for a single stream (chain 0 of 1)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n_chains: int) -> List[np.random.Generator]:
    """Independent per-chain generators under the documented split rule."""
    children = np.random.SeedSequence(int(seed)).spawn(n_chains)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
