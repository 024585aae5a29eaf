"""Deterministic random streams derived from one master seed.

Every random consumer (weight init, mask init, per-iteration masks, data
shuffling, ...) owns a named stream, so adding a new consumer never
perturbs the draws seen by existing ones.
"""

import hashlib

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF


def substream(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator for (master_seed, label).

    The label is hashed so the mapping is stable across runs, platforms,
    and code changes that add or remove other streams.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    seq = np.random.SeedSequence([int(master_seed) & _U64, *words])
    return np.random.Generator(np.random.PCG64(seq))
