"""Named, counter-based random streams.

Every stochastic operation in the package takes an explicit seed and derives
an independent Philox stream from ``(seed, stream name, *indices)``.  The same
key always yields the same draws regardless of call order elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Independent generator keyed by seed, a stream name, and indices."""
    tag = name + "".join(f":{i}" for i in indices)
    digest = hashlib.sha256(f"{seed}|{tag}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
