"""Gram matrices, HSIC/CKA estimators and hyperspherical-energy repulsion.

All functions are written against :mod:`hecka.tensor` so they are
differentiable. They accept plain arrays as well: when no argument is a
:class:`~hecka.tensor.Tensor` the result comes back as a float or ndarray.

Shapes: feature matrices are ``(..., N, p)``, Gram matrices ``(..., N, N)``.
A *kernel set* is a sequence over layers, each entry holding the stacked
Grams of all members for that layer, shape ``(M, N, N)``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, as_tensor

__all__ = [
    "DegenerateGramError",
    "DivergentEnergyError",
    "BandwidthFallbackWarning",
    "RepulsionConfig",
    "gram",
    "gram_linear",
    "gram_rbf",
    "gram_cosine",
    "median_sq_distance",
    "center",
    "center_unit_vectorize",
    "hsic_biased",
    "hsic_unbiased",
    "cka",
    "zero_diag",
    "layer_similarity",
    "cka_matrix",
    "cka_pairwise",
    "he_cka",
    "he_smooth",
    "he_exp",
    "pair_terms",
    "repulsion",
]


class DegenerateGramError(ValueError):
    """A centered Gram matrix is numerically zero (constant features)."""


class DivergentEnergyError(ValueError):
    """The unsmoothed Riesz energy was asked to evaluate a coincident pair."""


class BandwidthFallbackWarning(RuntimeWarning):
    """Median bandwidth was zero; sigma = 1 was used instead."""


FAMILIES = ("riesz", "exponential", "pairwise_cka")
FEATURE_KERNELS = ("linear", "rbf", "cosine")


@dataclass
class RepulsionConfig:
    """Hyperparameters of the feature-repulsion term.

    ``family`` picks the pair potential: smoothed Riesz ``riesz``, the
    exponential variant, or plain pairwise CKA. ``layer_weights`` holds one
    weight per captured layer; an empty list means uniform ``1/L``.
    """

    family: str = "riesz"
    s: float = 2.0
    eps_dist: float = 0.00025
    eps_arc: float = 0.0
    layer_weights: list[float] = field(default_factory=list)
    gamma_id: float = 0.0
    gamma_ood: float = 0.0
    beta: float = 0.0
    feature_kernel: str = "linear"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.feature_kernel not in FEATURE_KERNELS:
            raise ValueError(f"feature_kernel must be one of {FEATURE_KERNELS}, got {self.feature_kernel!r}")
        if not self.s > 0:
            raise ValueError("s must be positive")
        for name in ("eps_dist", "eps_arc", "gamma_id", "gamma_ood", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if any(w < 0 for w in self.layer_weights):
            raise ValueError("layer weights must be non-negative")

    def weights(self, n_layers: int) -> list[float]:
        if not self.layer_weights:
            return [1.0 / n_layers] * n_layers
        if len(self.layer_weights) != n_layers:
            raise ValueError(f"{len(self.layer_weights)} layer weights given for {n_layers} layers")
        return list(self.layer_weights)


def _dual(fn):
    """Return floats/arrays when called without any Tensor argument."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        out = fn(*args, **kwargs)
        if _any_tensor(args) or _any_tensor(kwargs.values()):
            return out
        data = out.data
        return float(data) if data.ndim == 0 else data

    return wrapper


def _any_tensor(values) -> bool:
    for v in values:
        if isinstance(v, Tensor):
            return True
        if isinstance(v, (list, tuple)) and _any_tensor(v):
            return True
    return False


def _check_n(n: int, minimum: int = 2) -> None:
    if n < minimum:
        raise ValueError(f"need at least {minimum} examples, got N={n}")


# -- Gram construction ----------------------------------------------------
@_dual
def gram_linear(F) -> Tensor:
    """``K[i, j] = <f_i, f_j>``."""
    F = as_tensor(F)
    _check_n(F.shape[-2])
    return F @ F.T


def median_sq_distance(F) -> np.ndarray:
    """Median of pairwise squared distances (i < j) per leading batch index."""
    X = as_tensor(F).data
    n = X.shape[-2]
    sq = (X * X).sum(-1)
    D = sq[..., :, None] + sq[..., None, :] - 2.0 * X @ np.swapaxes(X, -1, -2)
    iu = np.triu_indices(n, 1)
    return np.median(np.maximum(D[..., iu[0], iu[1]], 0.0), axis=-1)


@_dual
def gram_rbf(F, bandwidth: float | str = "median") -> Tensor:
    """``K[i, j] = exp(-|f_i - f_j|^2 / (2 sigma^2))``.

    ``bandwidth="median"`` sets sigma^2 to the median pairwise squared
    distance (treated as a constant, no gradient). An all-zero median falls
    back to sigma = 1 and emits :class:`BandwidthFallbackWarning`.
    """
    F = as_tensor(F)
    _check_n(F.shape[-2])
    if bandwidth == "median":
        sigma2 = np.asarray(median_sq_distance(F), dtype=np.float64)
        if np.any(sigma2 <= 0):
            warnings.warn("median pairwise distance is zero; using sigma=1", BandwidthFallbackWarning, stacklevel=3)
            sigma2 = np.where(sigma2 <= 0, 1.0, sigma2)
        sigma2 = sigma2[..., None, None]
    else:
        sigma = float(bandwidth)
        if sigma <= 0:
            raise ValueError("bandwidth must be positive")
        sigma2 = np.asarray(sigma * sigma)
    sq = (F * F).sum(axis=-1)
    D = T.reshape(sq, sq.shape + (1,)) + T.reshape(sq, sq.shape[:-1] + (1, sq.shape[-1])) - 2.0 * (F @ F.T)
    return T.exp(D * (-0.5 / sigma2))


@_dual
def gram_cosine(F) -> Tensor:
    """``K[i, j] = <f_i, f_j> / (|f_i| |f_j|)``; norms get 1e-12 added."""
    F = as_tensor(F)
    _check_n(F.shape[-2])
    norm = T.sqrt((F * F).sum(axis=-1, keepdims=True) + 1e-300) + 1e-12
    Fn = F / norm
    return Fn @ Fn.T


_GRAMS = {"linear": gram_linear, "rbf": gram_rbf, "cosine": gram_cosine}


def gram(F, kind: str = "linear"):
    try:
        return _GRAMS[kind](F)
    except KeyError:
        raise ValueError(f"unknown feature kernel {kind!r}") from None


# -- centering and HSIC ---------------------------------------------------
@_dual
def center(K) -> Tensor:
    """Double centering ``H K H`` with ``H = I - 11^T / N``."""
    return T.double_center(K)


@_dual
def center_unit_vectorize(K) -> Tensor:
    """Unit-norm vectorization of the double-centered Gram, shape ``(..., N*N)``.

    Inner products of two such vectors equal the CKA of their Grams.
    """
    K = as_tensor(K)
    n = K.shape[-1]
    _check_n(n)
    flat = T.reshape(center(K), K.shape[:-2] + (n * n,))
    norm = np.sqrt((flat.data * flat.data).sum(axis=-1))
    if np.any(norm < 1e-12):
        bad = np.argwhere(np.atleast_1d(norm) < 1e-12).ravel().tolist()
        raise DegenerateGramError(f"centered Gram has zero norm (constant features) at batch index {bad}")
    return T.normalize(flat)


def _pair(K1, K2) -> tuple[Tensor, Tensor]:
    K1, K2 = as_tensor(K1), as_tensor(K2)
    if K1.shape[-2:] != K2.shape[-2:]:
        raise ValueError(f"Gram size mismatch: {K1.shape} vs {K2.shape}")
    return K1, K2


@_dual
def hsic_biased(K1, K2) -> Tensor:
    """``tr(K1 H K2 H) / (N - 1)^2`` for symmetric Grams."""
    K1, K2 = _pair(K1, K2)
    n = K1.shape[-1]
    _check_n(n)
    return (center(K1) * center(K2)).sum(axis=(-2, -1)) * (1.0 / (n - 1) ** 2)


@_dual
def zero_diag(M) -> Tensor:
    """``M * (11^T - I)``."""
    M = as_tensor(M)
    return M * (1.0 - np.eye(M.shape[-1]))


@_dual
def hsic_unbiased(K1, K2) -> Tensor:
    """U-statistic HSIC estimator on diagonal-zeroed Grams; needs N >= 4."""
    K1, K2 = _pair(K1, K2)
    n = K1.shape[-1]
    _check_n(n, 4)
    A, B = zero_diag(K1), zero_diag(K2)
    trace = (A * B).sum(axis=(-2, -1))
    sum_a = A.sum(axis=(-2, -1))
    sum_b = B.sum(axis=(-2, -1))
    cross = (A.sum(axis=-1) * B.sum(axis=-1)).sum(axis=-1)  # 1^T A B 1 for symmetric A
    total = trace + sum_a * sum_b * (1.0 / ((n - 1) * (n - 2))) - cross * (2.0 / (n - 2))
    return total * (1.0 / (n * (n - 3)))


@_dual
def cka(K1, K2, estimator: str = "biased") -> Tensor:
    """Centered kernel alignment between two Gram matrices."""
    K1, K2 = _pair(K1, K2)
    if estimator == "biased":
        xy, xx, yy = hsic_biased(K1, K2), hsic_biased(K1, K1), hsic_biased(K2, K2)
        if np.any(xx.data <= 0) or np.any(yy.data <= 0):
            raise DegenerateGramError("self-HSIC is zero (constant features)")
    elif estimator == "unbiased":
        xy, xx, yy = hsic_unbiased(K1, K2), hsic_unbiased(K1, K1), hsic_unbiased(K2, K2)
        xx = _floor(xx, 1e-12)
        yy = _floor(yy, 1e-12)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return xy / T.sqrt(xx * yy)


def _floor(x: Tensor, lo: float) -> Tensor:
    keep = x.data >= lo
    return x * keep + (~keep) * lo


# -- ensemble aggregates --------------------------------------------------
def _as_layer_stack(layer) -> Tensor:
    if isinstance(layer, (list, tuple)):
        return T.stack(layer) if _any_tensor(layer) else Tensor(np.stack([np.asarray(k, dtype=np.float64) for k in layer]))
    return as_tensor(layer)


def layer_similarity(K, other=None) -> Tensor:
    """Matrix of ``Kbar_i . Kbar_j`` for stacked Grams ``K`` of shape ``(M, N, N)``.

    With ``other`` given, rows come from ``K`` and columns from ``other``.
    """
    V = center_unit_vectorize(_as_layer_stack(K))
    W = V if other is None else center_unit_vectorize(_as_layer_stack(other))
    return V @ W.T


@_dual
def cka_matrix(K, estimator: str = "biased") -> Tensor:
    """``M x M`` CKA matrix of one layer's stacked Grams."""
    K = _as_layer_stack(K)
    m = K.shape[0]
    if estimator == "biased":
        return layer_similarity(K)
    out = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            out[i, j] = out[j, i] = cka(K.data[i], K.data[j], estimator="unbiased")
    return Tensor(out)


def _off_diag_mask(m: int) -> np.ndarray:
    if m < 2:
        raise ValueError(f"pairwise terms need at least 2 members, got M={m}")
    return 1.0 - np.eye(m)


def _layers(kset) -> list[Tensor]:
    layers = [_as_layer_stack(k) for k in kset]
    if not layers:
        raise ValueError("empty kernel set")
    return layers


@_dual
def cka_pairwise(kset) -> Tensor:
    """Mean CKA over layers and ordered member pairs ``m != m'``."""
    layers = _layers(kset)
    m = layers[0].shape[0]
    mask = _off_diag_mask(m)
    total = sum((layer_similarity(K) * mask).sum() for K in layers)
    return total * (1.0 / (len(layers) * m * (m - 1)))


def _config(cfg, **overrides) -> RepulsionConfig:
    if cfg is None:
        cfg = RepulsionConfig()
    if overrides:
        cfg = RepulsionConfig(**{**cfg.__dict__, **overrides})
    return cfg


@_dual
def he_cka(kset, cfg: RepulsionConfig | None = None) -> Tensor:
    """Unsmoothed Riesz hyperspherical energy, ``mean arccos(Kbar.Kbar')^(-s)``.

    Layers are weighted uniformly; coincident members raise
    :class:`DivergentEnergyError` (use :func:`he_smooth`).
    """
    cfg = _config(cfg)
    layers = _layers(kset)
    m = layers[0].shape[0]
    mask = _off_diag_mask(m)
    total = 0.0
    for K in layers:
        S = layer_similarity(K)
        off = S.data[mask.astype(bool)]
        if np.any(np.abs(off) >= 1.0 - T.ARCCOS_CLAMP):
            raise DivergentEnergyError("coincident member pair: unsmoothed energy diverges; use he_smooth")
        # diagonal entries are masked; replace them to keep the power finite
        S = S * mask
        total = total + (T.power(T.arccos(S), -cfg.s) * mask).sum()
    return total * (1.0 / (len(layers) * m * (m - 1)))


def pair_terms(S, cfg: RepulsionConfig) -> Tensor:
    """Elementwise pair potential of a similarity matrix under ``cfg.family``."""
    S = as_tensor(S)
    if cfg.family == "pairwise_cka":
        return S
    d = T.arccos(S * (1.0 / (1.0 + cfg.eps_arc)))
    if cfg.family == "riesz":
        return (1.0 + cfg.eps_dist) / (T.power(d, cfg.s) + cfg.eps_dist)
    return T.exp(d * (-cfg.s) - cfg.eps_dist)


def _weighted(kset, cfg: RepulsionConfig) -> Tensor:
    layers = _layers(kset)
    m = layers[0].shape[0]
    mask = _off_diag_mask(m)
    total = 0.0
    for w, K in zip(cfg.weights(len(layers)), layers):
        if w == 0:
            continue
        total = total + (pair_terms(layer_similarity(K), cfg) * mask).sum() * w
    return as_tensor(total) * (1.0 / (m * (m - 1)))


@_dual
def he_smooth(kset, cfg: RepulsionConfig | None = None) -> Tensor:
    """Smoothed, layer-weighted Riesz energy.

    Pair term ``(1 + eps_dist) / (arccos(c / (1 + eps_arc))^s + eps_dist)``
    with ``c`` the CKA of the pair; finite for coincident members.
    """
    return _weighted(kset, _config(cfg, family="riesz"))


@_dual
def he_exp(kset, cfg: RepulsionConfig | None = None) -> Tensor:
    """Layer-weighted exponential energy, pair term ``exp(-s d - eps_dist)``."""
    return _weighted(kset, _config(cfg, family="exponential"))


@_dual
def repulsion(kset, cfg: RepulsionConfig) -> Tensor:
    """Layer-weighted repulsion aggregate for ``cfg.family``.

    For ``pairwise_cka`` with uniform weights this is :func:`cka_pairwise`.
    """
    return _weighted(kset, cfg)
