"""Seeded gradient (Perlin) noise in 2D/3D plus fractal (octave-summed) variants.

All functions are vectorized over numpy arrays and fully deterministic for a
given seed.  Outputs are normalised so |value| <= 1 exactly, which lets
callers turn an amplitude into a hard displacement bound.
"""

from __future__ import annotations

import numpy as np

# Single-octave bounds of classic Perlin noise with unit gradients.
_BOUND_2D = np.sqrt(2.0) / 2.0
_BOUND_3D = np.sqrt(3.0) / 2.0


def _perm_table(seed) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    p = rng.permutation(256)
    return np.concatenate([p, p]).astype(np.int64)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


_GRAD2 = np.array(
    [[np.cos(a), np.sin(a)] for a in np.arange(8) * (np.pi / 4.0)]
)

_GRAD3 = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    ],
    dtype=np.float64,
) / np.sqrt(2.0)


def perlin2(x, y, perm) -> np.ndarray:
    """Classic 2D Perlin noise at (x, y), normalised to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xi = np.floor(x).astype(np.int64)
    yi = np.floor(y).astype(np.int64)
    xf = x - xi
    yf = y - yi
    xi &= 255
    yi &= 255

    u = _fade(xf)
    v = _fade(yf)

    def g(ix, iy, dx, dy):
        h = perm[perm[ix] + iy] & 7
        return _GRAD2[h, 0] * dx + _GRAD2[h, 1] * dy

    n00 = g(xi, yi, xf, yf)
    n10 = g(xi + 1, yi, xf - 1.0, yf)
    n01 = g(xi, yi + 1, xf, yf - 1.0)
    n11 = g(xi + 1, yi + 1, xf - 1.0, yf - 1.0)

    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return (nx0 + v * (nx1 - nx0)) / _BOUND_2D


def perlin3(x, y, z, perm) -> np.ndarray:
    """Classic 3D Perlin noise, normalised to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    xi = np.floor(x).astype(np.int64)
    yi = np.floor(y).astype(np.int64)
    zi = np.floor(z).astype(np.int64)
    xf = x - xi
    yf = y - yi
    zf = z - zi
    xi &= 255
    yi &= 255
    zi &= 255

    u = _fade(xf)
    v = _fade(yf)
    w = _fade(zf)

    def g(ix, iy, iz, dx, dy, dz):
        h = perm[perm[perm[ix] + iy] + iz] % 12
        return _GRAD3[h, 0] * dx + _GRAD3[h, 1] * dy + _GRAD3[h, 2] * dz

    n000 = g(xi, yi, zi, xf, yf, zf)
    n100 = g(xi + 1, yi, zi, xf - 1, yf, zf)
    n010 = g(xi, yi + 1, zi, xf, yf - 1, zf)
    n110 = g(xi + 1, yi + 1, zi, xf - 1, yf - 1, zf)
    n001 = g(xi, yi, zi + 1, xf, yf, zf - 1)
    n101 = g(xi + 1, yi, zi + 1, xf - 1, yf, zf - 1)
    n011 = g(xi, yi + 1, zi + 1, xf, yf - 1, zf - 1)
    n111 = g(xi + 1, yi + 1, zi + 1, xf - 1, yf - 1, zf - 1)

    nx00 = n000 + u * (n100 - n000)
    nx10 = n010 + u * (n110 - n010)
    nx01 = n001 + u * (n101 - n001)
    nx11 = n011 + u * (n111 - n011)
    nxy0 = nx00 + v * (nx10 - nx00)
    nxy1 = nx01 + v * (nx11 - nx01)
    return (nxy0 + w * (nxy1 - nxy0)) / _BOUND_3D


class FractalNoise:
    """Octave-summed Perlin noise with a seeded permutation table.

    The octave sum is renormalised so the output stays strictly in [-1, 1]
    for any octave count.
    """

    def __init__(self, seed, octaves: int = 4, frequency: float = 1.0,
                 lacunarity: float = 2.0, gain: float = 0.5):
        if octaves < 1:
            raise ValueError("octaves must be >= 1")
        self.perm = _perm_table(seed)
        self.octaves = int(octaves)
        self.frequency = float(frequency)
        self.lacunarity = float(lacunarity)
        self.gain = float(gain)
        self._norm = sum(self.gain ** i for i in range(self.octaves))

    def sample2(self, x, y) -> np.ndarray:
        total = 0.0
        freq = self.frequency
        amp = 1.0
        for _ in range(self.octaves):
            total = total + amp * perlin2(x * freq, y * freq, self.perm)
            freq *= self.lacunarity
            amp *= self.gain
        return total / self._norm

    def sample3(self, x, y, z) -> np.ndarray:
        total = 0.0
        freq = self.frequency
        amp = 1.0
        for _ in range(self.octaves):
            total = total + amp * perlin3(x * freq, y * freq, z * freq, self.perm)
            freq *= self.lacunarity
            amp *= self.gain
        return total / self._norm

    def sample1(self, t) -> np.ndarray:
        # 1D slice of the 2D field; smooth along t.
        return self.sample2(np.asarray(t, dtype=np.float64), 0.37)
