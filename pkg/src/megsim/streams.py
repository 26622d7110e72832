"""Named deterministic RNG sub-streams derived from one master seed.

Every source of randomness in a scenario pulls from ``substream(master, ...)``
with a stable name tuple, so adding trials or links never perturbs the draws
of existing ones. Names are hashed with SHA-256 (not Python's salted hash) so
streams are reproducible across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token(value) -> int:
    digest = hashlib.sha256(repr(value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed(master_seed: int, *names) -> int:
    """Stable 64-bit seed for the sub-stream identified by ``names``."""
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(16, "big", signed=True))
    for name in names:
        h.update(_token(name).to_bytes(8, "big"))
    return int.from_bytes(h.digest()[:8], "big")


def substream(master_seed: int, *names) -> np.random.Generator:
    """Independent generator for the named sub-stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *names)))
