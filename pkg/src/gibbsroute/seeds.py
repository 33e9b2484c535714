"""Deterministic seed derivation.

A master seed is expanded into component seeds by folding each tag into the
state with a splitmix64 step::

    state = splitmix64(master)
    for tag in tags:
        state = splitmix64(state ^ h(tag))

where h maps integers to themselves, floats to their IEEE-754 bit pattern and
strings through BLAKE2b (8 bytes).  Seeds therefore depend only on the master
seed and the tag path, never on execution order or thread count.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _tag_bits(tag) -> int:
    if isinstance(tag, (bool, np.bool_)):
        return int(tag)
    if isinstance(tag, (int, np.integer)):
        return int(tag) & MASK
    if isinstance(tag, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(tag)))[0]
    if isinstance(tag, str):
        return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")
    if isinstance(tag, (tuple, list, np.ndarray)):
        h = 0x6A09E667F3BCC908
        for t in np.asarray(tag).ravel().tolist() if isinstance(tag, np.ndarray) else tag:
            h = splitmix64(h ^ _tag_bits(t))
        return h
    raise TypeError(f"unsupported seed tag {tag!r}")


def derive_seed(master: int, *tags) -> int:
    """64-bit seed for the component named by `tags` under `master`."""
    state = splitmix64(int(master) & MASK)
    for t in tags:
        state = splitmix64(state ^ _tag_bits(t))
    return state


def rng_for(master: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *tags))
