"""Deterministic derived RNG streams.

All randomness in the toolkit flows from one integer seed. Components derive
independent streams from (seed, label...) so that adding or reordering one
consumer never shifts the draws of another.
"""

from __future__ import annotations

import hashlib
import random


def derive_rng(seed: int, *labels: object) -> random.Random:
    """Return a Random seeded from `seed` and a label path.

    Labels are hashed positionally, so ("a", 1) and ("a1",) differ.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return random.Random(int.from_bytes(h.digest()[:8], "big"))
