"""2D gradient noise (Perlin and simplex), vectorized over pixel grids."""

from __future__ import annotations

import numpy as np

__all__ = ["perlin2d", "simplex2d", "fractal"]

F2 = 0.5 * (np.sqrt(3.0) - 1.0)
G2 = (3.0 - np.sqrt(3.0)) / 6.0

_GRAD2 = np.array([[1, 1], [-1, 1], [1, -1], [-1, -1], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.float64)


def _perm(rng: np.random.Generator) -> np.ndarray:
    p = rng.permutation(256)
    return np.concatenate([p, p])


def _hash(perm: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    return perm[perm[i & 255] + (j & 255)]


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6 - 15) + 10)


def perlin2d(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Classic Perlin noise at coordinates ``(x, y)``; roughly in [-1, 1]."""
    perm = _perm(rng)
    xi, yi = np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)
    xf, yf = x - xi, y - yi
    u, v = _fade(xf), _fade(yf)

    def corner(di, dj):
        g = _GRAD2[_hash(perm, xi + di, yi + dj) % 8]
        return g[..., 0] * (xf - di) + g[..., 1] * (yf - dj)

    n00, n10, n01, n11 = corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return nx0 + v * (nx1 - nx0)


def simplex2d(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """2D simplex noise on the skewed triangular lattice; roughly in [-1, 1]."""
    perm = _perm(rng)
    s = (x + y) * F2
    i, j = np.floor(x + s).astype(np.int64), np.floor(y + s).astype(np.int64)
    t = (i + j) * G2
    x0, y0 = x - (i - t), y - (j - t)
    upper = x0 > y0
    i1, j1 = upper.astype(np.int64), (~upper).astype(np.int64)
    x1, y1 = x0 - i1 + G2, y0 - j1 + G2
    x2, y2 = x0 - 1.0 + 2.0 * G2, y0 - 1.0 + 2.0 * G2

    total = np.zeros_like(x, dtype=np.float64)
    for dx, dy, di, dj in ((x0, y0, 0, 0), (x1, y1, i1, j1), (x2, y2, 1, 1)):
        falloff = 0.5 - dx * dx - dy * dy
        g = _GRAD2[_hash(perm, i + di, j + dj) % 8]
        contrib = np.where(falloff > 0, falloff**4 * (g[..., 0] * dx + g[..., 1] * dy), 0.0)
        total += contrib
    return 70.0 * total


def fractal(kind: str, shape: tuple[int, int], rng: np.random.Generator, cell: float = 6.0, octaves: int = 3) -> np.ndarray:
    """Sum ``octaves`` layers of noise (frequency x2, amplitude x0.5), min-max scaled to [0, 1]."""
    base = {"perlin": perlin2d, "simplex": simplex2d}[kind]
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ox, oy = rng.uniform(0, 256, size=2)
    img = np.zeros(shape)
    amp, freq = 1.0, 1.0 / cell
    for _ in range(octaves):
        img += amp * base(xx * freq + ox, yy * freq + oy, rng)
        amp *= 0.5
        freq *= 2.0
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.zeros(shape)
