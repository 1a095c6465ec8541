"""Deterministic derivation of per-chain random streams from one master seed.

Each chain owns a ``numpy.random.Generator`` whose seed sequence is built from
``(master_seed, crc32(tag), index)``. The mapping never depends on execution
order or thread count, so any chain can be advanced independently.
"""
import zlib

import numpy as np


def tag_id(tag):
    return zlib.crc32(tag.encode("utf-8"))


def derive_rng(master_seed, tag, index=0):
    """Return the generator owned by chain ``index`` of stream family ``tag``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, tag_id(tag), int(index)])
    return np.random.Generator(np.random.PCG64(ss))


def derive_rngs(master_seed, tag, n):
    return [derive_rng(master_seed, tag, i) for i in range(n)]


def draw_uniforms(rngs, n_sweeps, width):
    """Stack ``n_sweeps * width`` uniforms from every generator, one row per chain."""
    out = np.empty((len(rngs), n_sweeps, width))
    for i, rng in enumerate(rngs):
        out[i] = rng.random((n_sweeps, width))
    return out
