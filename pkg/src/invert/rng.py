"""Deterministic random-stream derivation.

Every stochastic component draws from a generator derived from
(master seed, integer key path): the same triple always reproduces the same
draws, independent streams come from distinct key paths, and parallel or
serial dispatch makes no difference because streams are fixed up front.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rng_stream"]


def rng_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by (master_seed, key path)."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
