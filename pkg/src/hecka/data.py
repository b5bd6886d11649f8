"""Toy datasets: four Gaussian quadrant clusters, 1D regression with a gap and
small grayscale glyph images used as image inliers."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .train import Dataset

__all__ = ["QUADRANT_MEANS", "quadrants", "regress_target", "regress1d", "eval_grid", "glyphs"]

QUADRANT_MEANS = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])


def quadrants(n_per_class: int, seed: int, sigma: float = 0.4) -> Dataset:
    """One isotropic Gaussian class per quadrant, means at (+-2, +-2)."""
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(mu, sigma, size=(n_per_class, 2)) for mu in QUADRANT_MEANS])
    y = np.repeat(np.arange(4), n_per_class)
    return Dataset(X, y, "classification")


def regress_target(x):
    return -np.sin(1.2 * x) * (1.0 + x)


def regress1d(seed: int, n_side: int = 40, n_gap: int = 2) -> Dataset:
    """``n_side`` points from each of (-6, -2) and (2, 6), ``n_gap`` from (-2, 2); noise-free."""
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-6, -2, n_side), rng.uniform(2, 6, n_side), rng.uniform(-2, 2, n_gap)])
    return Dataset(x[:, None], regress_target(x), "regression")


def eval_grid(extent: float = 5.0, resolution: int = 100) -> np.ndarray:
    """``resolution**2`` points on a regular grid over ``[-extent, extent]^2``."""
    t = np.linspace(-extent, extent, resolution)
    xx, yy = np.meshgrid(t, t)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _segment_dist(yy, xx, p, q):
    d = q - p
    t = np.clip(((yy - p[0]) * d[0] + (xx - p[1]) * d[1]) / max(d @ d, 1e-12), 0.0, 1.0)
    return np.hypot(yy - (p[0] + t * d[0]), xx - (p[1] + t * d[1]))


def glyphs(n: int, seed: int, shape: tuple[int, int] = (28, 28)) -> np.ndarray:
    """Digit-like stroke images in ``[0, 1]``: rings, bars and crosses on black.

    These stand in for a handwritten-digit inlier set, which is not bundled.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.empty((n, h, w))
    for i in range(n):
        cy, cx = h / 2 + rng.uniform(-2, 2), w / 2 + rng.uniform(-2, 2)
        size = rng.uniform(0.25, 0.38) * min(h, w)
        width = rng.uniform(1.0, 2.2)
        kind = rng.integers(0, 3)
        if kind == 0:
            dist = np.abs(np.hypot((yy - cy) / rng.uniform(0.7, 1.0), xx - cx) - size)
        else:
            angle = rng.uniform(0, np.pi)
            u = np.array([np.cos(angle), np.sin(angle)]) * size
            c = np.array([cy, cx])
            dist = _segment_dist(yy, xx, c - u, c + u)
            if kind == 2:
                v = np.array([-u[1], u[0]]) * rng.uniform(0.5, 1.0)
                dist = np.minimum(dist, _segment_dist(yy, xx, c - v, c + v))
        img = np.clip(width + 0.5 - dist, 0.0, 1.0)
        out[i] = np.clip(ndimage.gaussian_filter(img, 0.6), 0.0, 1.0)
    return out
