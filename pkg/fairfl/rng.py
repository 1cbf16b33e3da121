"""
Counter-based random streams for reproducible simulation
Each stream is keyed by (seed, purpose tag, indices) so agents can be
generated in any order, or in parallel, without changing their data
"""
import hashlib
import math

import numpy as np


def derive_key(seed, tag, *index):
    """128-bit Philox key from the seed, a purpose tag and integer indices"""
    text = ":".join([str(int(seed)), str(tag)] + [str(int(i)) for i in index])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


class Stream:
    """
    One independent random stream.

    Uniforms come straight from a Philox counter generator; Gaussian draws use
    Box-Muller on those uniforms instead of numpy's ziggurat sampler.
    """

    def __init__(self, seed, tag, *index):
        self.seed = int(seed)
        self.tag = tag
        self.index = tuple(int(i) for i in index)
        self._gen = np.random.Generator(np.random.Philox(key=derive_key(seed, tag, *index)))

    def __repr__(self):
        return f"Stream(seed={self.seed}, tag={self.tag!r}, index={self.index})"

    def uniform(self, size=None):
        """Uniform draws in [0, 1)"""
        return self._gen.random(size)

    def normal(self, size, scale=1.0):
        """N(0, scale^2) draws of the given shape via Box-Muller"""
        shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * math.pi * u2
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).ravel()[:count]
        return scale * z.reshape(shape)

    def unit_vector(self, d):
        """Direction drawn uniformly on the unit sphere in R^d"""
        while True:
            g = self.normal(d)
            norm = np.linalg.norm(g)
            if norm > 1e-12:
                return g / norm

    def in_ball(self, d, radius):
        """Point drawn uniformly from the closed ball of the given radius"""
        if radius == 0:
            return np.zeros(d)
        u = self.uniform()
        return self.unit_vector(d) * (radius * u ** (1.0 / d))

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)
