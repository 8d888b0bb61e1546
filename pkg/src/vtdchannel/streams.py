"""Counter-based random streams.

Every stochastic operation takes an explicit :class:`numpy.random.Generator`.
Streams are built on Philox keyed by a :class:`~numpy.random.SeedSequence`
whose spawn key carries the caller's coordinates (realization index, stage,
...), so two callers never share a stream and a realization's draws do not
depend on how many workers produced its siblings.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_stream", "realization_stream"]


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent Philox stream for ``(seed, *key)``."""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and key components must be non-negative")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def realization_stream(seed: int, realization: int) -> np.random.Generator:
    return make_stream(seed, realization)
