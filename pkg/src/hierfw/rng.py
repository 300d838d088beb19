"""Deterministic, parallel-safe random streams.

Every stochastic routine in the package takes an explicit generator (or a
stream factory).  Streams are counter-based (Philox) and keyed by hashing a
seed together with string/integer labels, so replica r of subcommand s always
sees the same numbers regardless of how many other replicas run, in which
order, or on how many workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Replicas are grouped in fixed-width chunks so that vectorised simulators can
# draw (steps, CHUNK) noise blocks while replica identity stays stable when
# the total replica count changes.
CHUNK = 1024


def stream(seed: int, *labels) -> np.random.Generator:
    """Philox generator keyed by ``hash(seed, *labels)``."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"\x1f")
        h.update(str(lab).encode())
    key = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def replica_chunks(n_replicas: int):
    """Yield (chunk_index, width) pairs covering ``n_replicas`` replicas.

    All chunks are drawn CHUNK wide internally; the final chunk uses only its
    first ``width`` columns, so replica k always lives in chunk k // CHUNK,
    column k % CHUNK.
    """
    n_full, rest = divmod(n_replicas, CHUNK)
    for i in range(n_full):
        yield i, CHUNK
    if rest:
        yield n_full, rest
