"""Deterministic seed derivation.

All randomness in a run flows from one root seed. Named sub-streams are
derived by hashing the root together with string/int labels, so any stage
(data, model init, codeswitching, sampling) can be reproduced in isolation
and resuming mid-run re-derives identical streams without carrying RNG
state around.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(root: int, *labels: object) -> int:
    """Derive a 63-bit seed from a root seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng(root: int, *labels: object) -> np.random.Generator:
    """A numpy Generator seeded from the named sub-stream."""
    return np.random.Generator(np.random.PCG64(child_seed(root, *labels)))
