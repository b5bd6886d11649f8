"""Synthetic out-of-distribution inputs: boundary points for vector data and
procedural or corrupted grayscale images. Every generator is a pure function
of its arguments and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .noise import fractal

__all__ = [
    "OodRecipe",
    "OodConfigError",
    "SYNTH_KINDS",
    "CORRUPTIONS",
    "boundary_sample",
    "boundary_sample_2d",
    "synth_image",
    "corrupt_inlier",
    "ood_batch",
    "ood_batch_items",
]

SYNTH_KINDS = ("perlin", "simplex", "gaussian_noise", "lines", "alt_grid", "threshold_blobs")
CORRUPTIONS = ("blur", "affine", "elastic", "erase", "noise", "invert")


class OodConfigError(ValueError):
    pass


@dataclass
class OodRecipe:
    kind: str = "boundary2d"
    mix_ratio_corrupt: float = 0.35
    pad: float = 3.0
    margin: float = 1.2
    seed: int = 0
    octaves: int = 3

    def __post_init__(self):
        if not 0.0 <= self.mix_ratio_corrupt <= 1.0:
            raise OodConfigError("mix_ratio_corrupt must lie in [0, 1]")
        if self.pad < 0 or self.margin < 0:
            raise OodConfigError("pad and margin must be non-negative")


def boundary_sample(train_X, pad: float, margin: float, n: int, seed: int, max_draws: int = 100_000) -> np.ndarray:
    """Uniform points in the padded bounding box, at least ``margin`` from every training point.

    Works in any dimension. Raises :class:`OodConfigError` if fewer than 1% of
    draws are accepted once ``max_draws`` candidates have been tried.
    """
    X = np.asarray(train_X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise OodConfigError("need at least 2 training points")
    if pad <= 0:
        raise OodConfigError("pad must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = X.min(0) - pad, X.max(0) + pad
    tree = cKDTree(X)
    out, drawn, accepted = [], 0, 0
    chunk = max(4 * n, 1024)
    while accepted < n:
        cand = rng.uniform(lo, hi, size=(chunk, X.shape[1]))
        drawn += chunk
        if margin > 0:
            dist, _ = tree.query(cand)
            cand = cand[dist >= margin]
        out.append(cand)
        accepted += len(cand)
        if drawn >= max_draws and accepted / drawn < 0.01:
            raise OodConfigError(f"margin {margin} too large: acceptance {accepted / drawn:.4f} after {drawn} draws")
    return np.concatenate(out)[:n]


def boundary_sample_2d(train_X, pad: float, margin: float, n: int, seed: int) -> np.ndarray:
    X = np.asarray(train_X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise OodConfigError(f"expected N x 2 training points, got {X.shape}")
    return boundary_sample(X, pad, margin, n, seed)


# -- synthetic images -----------------------------------------------------
def _lines(shape, rng):
    h, w = shape
    img = np.zeros(shape)
    for _ in range(rng.integers(1, 6)):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        angle = rng.uniform(0, np.pi)
        half = rng.uniform(0.3, 1.0) * max(h, w)
        t = np.linspace(-half, half, int(4 * half) + 2)
        xs = np.round(cx + t * np.cos(angle)).astype(int)
        ys = np.round(cy + t * np.sin(angle)).astype(int)
        keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        img[ys[keep], xs[keep]] = rng.uniform(0.5, 1.0)
    return img


def _alt_grid(shape, block):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return (((yy // block) + (xx // block)) % 2).astype(np.float64)


def _threshold_blobs(shape, rng):
    smooth = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=rng.uniform(1.0, 3.0), mode="wrap")
    return (smooth > np.quantile(smooth, rng.uniform(0.3, 0.7))).astype(np.float64)


def synth_image(kind: str, shape=(28, 28), seed: int = 0, *, octaves: int = 3, block: int | None = None,
                invert: bool | None = None) -> np.ndarray:
    """Procedural grayscale image in [0, 1].

    ``invert=None`` flips the image with probability 0.5 drawn from the seed.
    ``block`` fixes the cell size of ``alt_grid`` (random 1-4 otherwise).
    """
    h, w = shape
    if h < 8 or w < 8:
        raise OodConfigError("images must be at least 8 x 8")
    rng = np.random.default_rng(seed)
    if kind in ("perlin", "simplex"):
        img = fractal(kind, (h, w), rng, cell=rng.uniform(4, 8), octaves=octaves)
    elif kind == "gaussian_noise":
        img = np.clip(rng.normal(rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4), size=shape), 0.0, 1.0)
    elif kind == "lines":
        img = _lines(shape, rng)
    elif kind == "alt_grid":
        img = _alt_grid(shape, block if block is not None else int(rng.integers(1, 5)))
    elif kind == "threshold_blobs":
        img = _threshold_blobs(shape, rng)
    else:
        raise OodConfigError(f"unknown synthetic kind {kind!r}")
    flip = rng.random() < 0.5 if invert is None else invert
    return np.clip(1.0 - img if flip else img, 0.0, 1.0)


# -- inlier corruption ----------------------------------------------------
def _blur(img, rng):
    if rng.random() < 0.5:
        return ndimage.uniform_filter(img, size=int(rng.integers(2, 5)), mode="constant")
    return ndimage.gaussian_filter(img, sigma=rng.uniform(0.8, 2.5), mode="constant")


def _affine(img, rng):
    h, w = img.shape
    theta = np.deg2rad(rng.uniform(-45, 45))
    scale = rng.uniform(0.5, 1.5)
    shear = rng.uniform(-0.3, 0.3)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    fwd = rot @ np.array([[1.0, shear], [0.0, 1.0]]) * scale
    inv = np.linalg.inv(fwd)
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    return ndimage.affine_transform(img, inv, offset=centre - inv @ centre, order=1, mode="constant")


def _elastic(img, rng):
    h, w = img.shape
    coarse = rng.normal(0.0, rng.uniform(1.5, 4.0), size=(2, 4, 4))
    dy = ndimage.zoom(coarse[0], (h / 4, w / 4), order=1)[:h, :w]
    dx = ndimage.zoom(coarse[1], (h / 4, w / 4), order=1)[:h, :w]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(img, [yy + dy, xx + dx], order=1, mode="constant")


def _erase(img, rng):
    h, w = img.shape
    eh, ew = int(rng.integers(h // 4, h // 2 + 1)), int(rng.integers(w // 4, w // 2 + 1))
    y0, x0 = int(rng.integers(0, h - eh + 1)), int(rng.integers(0, w - ew + 1))
    out = img.copy()
    out[y0:y0 + eh, x0:x0 + ew] = rng.uniform(0.0, 1.0)
    return out


def _noise(img, rng):
    return np.clip(img + rng.normal(0.0, rng.uniform(0.1, 0.5), size=img.shape), 0.0, 1.0)


def _invert(img, rng):
    return 1.0 - img


_CORRUPT = {"blur": _blur, "affine": _affine, "elastic": _elastic, "erase": _erase, "noise": _noise, "invert": _invert}


def corrupt_inlier(image, seed: int, return_ops: bool = False):
    """Apply a random-order subset (3 to 6) of the corruptions; output clamped to [0, 1]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, len(CORRUPTIONS) + 1))
    ops = [CORRUPTIONS[i] for i in rng.permutation(len(CORRUPTIONS))[:k]]
    for op in ops:
        img = np.clip(_CORRUPT[op](img, rng), 0.0, 1.0)
    return (img, ops) if return_ops else img


def ood_batch_items(inliers, recipe: OodRecipe, n: int, seed: int) -> list[tuple[np.ndarray, str, int]]:
    """``(image, kind, item_seed)`` triples; the first ``round(mix * n)`` are corrupted inliers."""
    if n < 1:
        raise OodConfigError("n must be >= 1")
    inliers = np.asarray(inliers, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n_corrupt = int(round(recipe.mix_ratio_corrupt * n))
    item_seeds = rng.integers(0, 2**31 - 1, size=n)
    items = []
    for i in range(n):
        s = int(item_seeds[i])
        if i < n_corrupt:
            src = inliers[rng.integers(0, len(inliers))]
            items.append((corrupt_inlier(src, s), "corrupt_inlier", s))
        else:
            kind = SYNTH_KINDS[int(rng.integers(0, len(SYNTH_KINDS)))]
            items.append((synth_image(kind, inliers.shape[1:], s, octaves=recipe.octaves), kind, s))
    return items


def ood_batch(inliers, recipe: OodRecipe, n: int, seed: int) -> np.ndarray:
    """``n`` OOD images mixing corrupted inliers and synthetic patterns."""
    return np.stack([img for img, _, _ in ood_batch_items(inliers, recipe, n, seed)])
