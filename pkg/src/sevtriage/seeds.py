"""Deterministic named seed substreams.

One top-level seed drives every random stage (split, bootstrap, forest,
net-init, dropout). Each stage derives its own independent stream from
the pair (seed, stage name), so adding or removing a stage never
perturbs the others.
"""

from __future__ import annotations

import hashlib


def substream(seed: int, name: str) -> int:
    """Derive a stable 63-bit child seed for a named stage."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
