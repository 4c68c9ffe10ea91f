"""Counter-based random streams.

Every sampling operation in this package takes an explicit
``numpy.random.Generator``.  Streams are built on the Philox counter-based
bit generator so that runs are bitwise reproducible and workers can own
independent sub-streams without coordination.

Seeding scheme
--------------
``substream(seed, index)`` keys Philox with the 128-bit pair
``(seed, index)``.  Distinct ``(seed, index)`` pairs give statistically
independent streams, so a parallel loop over tasks ``i = 0..T-1`` draws from
``substream(seed, base + i)`` and produces the same numbers regardless of
how tasks are scheduled onto workers.  Experiment drivers reserve disjoint
``base`` offsets per phase (see :mod:`rateloss.experiments`).
"""

from __future__ import annotations

import numpy as np

__all__ = ["master_stream", "substream"]

_U64 = np.uint64


def master_stream(seed: int) -> np.random.Generator:
    """Top-level stream for a run; equivalent to ``substream(seed, 0)``."""
    return substream(seed, 0)


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent stream derived from ``(seed, index)``.

    Both values must fit in an unsigned 64-bit word.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in uint64")
    if not 0 <= int(index) < 2**64:
        raise ValueError("stream index must fit in uint64")
    key = np.array([seed, index], dtype=_U64)
    return np.random.Generator(np.random.Philox(key=key))
