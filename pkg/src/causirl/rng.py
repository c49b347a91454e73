"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator, which produces the
same stream on every platform for a given seed. Independent substreams are
derived from a master seed plus a string tag, so that adding a new consumer
never shifts the numbers another consumer sees.

Gaussian draws use the Box-Muller transform on PCG64 uniforms rather than
numpy's ziggurat sampler, which keeps the transform itself documented here.
"""
import zlib

import numpy as np


def _tag_key(tag):
    return zlib.crc32(str(tag).encode("utf-8"))


def substream(seed, *tags):
    """Return a ``numpy.random.Generator`` for ``(seed, tags...)``."""
    seed = int(seed)
    if seed < 0:
        seed &= (1 << 64) - 1
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_tag_key(t) for t in tags))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(0 if rng is None else rng)


def box_muller(rng, size):
    """Standard normal draws of the given shape via Box-Muller."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return z.reshape(shape)
