"""Uncertainty scores and evaluation metrics.

Member probabilities are arrays of shape ``(M, N, C)``. Natural logs
throughout. AUROC treats OOD as the positive class (higher score = more OOD).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import entr, logsumexp, softmax
from scipy.stats import rankdata

__all__ = [
    "UncertaintyReport",
    "GdaModel",
    "member_probs",
    "predictive_entropy",
    "mutual_information",
    "auroc",
    "ece",
    "nll_acc",
    "gda_fit",
    "gda_score",
    "uncertainty_report",
]


def member_probs(logits) -> np.ndarray:
    """Softmax over the class axis of member logits ``(M, N, C)``."""
    return softmax(np.asarray(logits, dtype=np.float64), axis=-1)


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    if np.any(p < 0) or not np.allclose(p.sum(-1), 1.0, atol=1e-8):
        raise ValueError("member probabilities must be non-negative and sum to 1")
    return p


def _entropy(p: np.ndarray) -> np.ndarray:
    return entr(p).sum(-1)


def predictive_entropy(p) -> np.ndarray:
    """Entropy of the member-averaged distribution, per example."""
    p = _check_probs(p)
    return _entropy(p.mean(0))


def mutual_information(p) -> np.ndarray:
    """Predictive entropy minus mean member entropy, clamped at 0."""
    p = _check_probs(p)
    return np.maximum(_entropy(p.mean(0)) - _entropy(p).mean(0), 0.0)


def auroc(scores_in, scores_out) -> float:
    """Mann-Whitney AUROC with ties counted as one half."""
    s_in = np.asarray(scores_in, dtype=np.float64).ravel()
    s_out = np.asarray(scores_out, dtype=np.float64).ravel()
    if s_in.size == 0 or s_out.size == 0:
        raise ValueError("auroc needs non-empty score lists")
    ranks = rankdata(np.concatenate([s_in, s_out]))
    n_in, n_out = s_in.size, s_out.size
    u = ranks[n_in:].sum() - n_out * (n_out + 1) / 2.0
    return float(u / (n_in * n_out))


def ece(probs, labels, bins: int = 15) -> float:
    """Expected calibration error over equal-width max-probability bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels).ravel()
    conf = probs.max(-1)
    correct = (probs.argmax(-1) == labels).astype(np.float64)
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    total = 0.0
    for b in range(bins):
        sel = idx == b
        if sel.any():
            total += sel.mean() * abs(correct[sel].mean() - conf[sel].mean())
    return float(total)


def nll_acc(probs, labels) -> tuple[float, float]:
    """NLL of the (ensemble-mean) distribution with a 1e-12 floor, and accuracy."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels).ravel().astype(int)
    picked = probs[np.arange(len(labels)), labels]
    nll = float(-np.mean(np.log(np.maximum(picked, 1e-12))))
    acc = float(np.mean(probs.argmax(-1) == labels))
    return nll, acc


# -- GDA feature density --------------------------------------------------
@dataclass
class GdaModel:
    means: np.ndarray        # (C, p)
    chols: np.ndarray        # (C, p, p) lower Cholesky factors
    log_priors: np.ndarray   # (C,)
    shared: bool = False
    diagonal_fallback: bool = False

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self.log_priors)


def gda_fit(features, labels, jitter: float = 1e-6) -> GdaModel:
    """One Gaussian per class on penultimate features.

    Classes with no more samples than dimensions share the pooled covariance.
    A covariance that is still singular after jitter is replaced by its
    diagonal (``diagonal_fallback`` is set and a warning emitted).
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).ravel()
    classes = np.unique(y)
    n, p = X.shape
    means = np.stack([X[y == c].mean(0) for c in classes])
    counts = np.array([(y == c).sum() for c in classes])
    shared = bool(np.any(counts <= p))
    if shared:
        resid = X - means[np.searchsorted(classes, y)]
        pooled = resid.T @ resid / max(n - len(classes), 1)
        covs = np.repeat(pooled[None], len(classes), axis=0)
    else:
        covs = np.stack([np.cov(X[y == c], rowvar=False).reshape(p, p) for c in classes])
    covs = covs + jitter * np.eye(p)
    chols, fallback = [], False
    for cov in covs:
        try:
            chols.append(np.linalg.cholesky(cov))
        except np.linalg.LinAlgError:
            fallback = True
            chols.append(np.diag(np.sqrt(np.maximum(np.diag(cov), max(jitter, 1e-12)))))
    if fallback:
        warnings.warn("singular class covariance; using its diagonal", RuntimeWarning, stacklevel=2)
    return GdaModel(means, np.stack(chols), np.log(counts / n), shared, fallback)


def gda_score(model: GdaModel, features) -> np.ndarray:
    """Log density ``log sum_c pi_c N(f; mu_c, Sigma_c)``; lower means more OOD."""
    X = np.asarray(features, dtype=np.float64)
    p = X.shape[1]
    out = []
    for mu, L, lp in zip(model.means, model.chols, model.log_priors):
        z = np.linalg.solve(L, (X - mu).T)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out.append(lp - 0.5 * (z * z).sum(0) - 0.5 * logdet - 0.5 * p * np.log(2 * np.pi))
    return logsumexp(np.stack(out), axis=0)


# -- report ---------------------------------------------------------------
@dataclass
class UncertaintyReport:
    nll: float
    accuracy: float
    ece: float
    auroc_pe: float
    auroc_mi: float
    auroc_density: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "UncertaintyReport":
        return cls(**json.loads(text))


def uncertainty_report(probs_in, labels, probs_out, density_in=None, density_out=None, bins: int = 15) -> UncertaintyReport:
    """Summarize member probabilities on inliers ``(M, N, C)`` and OOD points."""
    probs_in, probs_out = _check_probs(probs_in), _check_probs(probs_out)
    mean_in = probs_in.mean(0)
    nll, acc = nll_acc(mean_in, labels)
    density = None
    if density_in is not None and density_out is not None:
        density = auroc(-np.asarray(density_in), -np.asarray(density_out))
    return UncertaintyReport(
        nll=nll,
        accuracy=acc,
        ece=ece(mean_in, labels, bins),
        auroc_pe=auroc(predictive_entropy(probs_in), predictive_entropy(probs_out)),
        auroc_mi=auroc(mutual_information(probs_in), mutual_information(probs_out)),
        auroc_density=density,
    )
