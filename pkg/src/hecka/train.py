"""Diversity-regularized training: the MAP objective with feature repulsion,
the kernelized particle update, and the training loop for every method.

Methods
-------
``ensemble``            cross-entropy / MSE only
``ensemble_he``         + gamma_id * repulsion on inlier Grams
``ensemble_ood_he``     + gamma_ood * repulsion on OOD Grams - beta * OOD entropy
``svgd_rbf``            particle update, RBF kernel on flattened weights
``svgd_he``/``svgd_cka`` particle update, feature kernel on inlier Grams
``hypernet``            generator trained on the task loss of sampled members
``hypernet_ood_he``     generator trained with the ``ensemble_ood_he`` objective
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels as K
from . import tensor as T
from .kernels import DegenerateGramError, RepulsionConfig
from .models import EnsembleState, Hypernet, HypernetSpec, MlpSpec, ensemble_forward, hypernet_init, hypernet_sample, init_ensemble
from .optim import OptimizerConfig, make_optimizer
from .tensor import Tensor

__all__ = [
    "METHODS",
    "TrainConfig",
    "TrainHistory",
    "Dataset",
    "LossParts",
    "NonFiniteLossError",
    "assemble_loss",
    "entropy_term",
    "task_loss",
    "rbf_weight_kernel",
    "feature_kernel_matrix",
    "svgd_step",
    "train",
    "pairwise_cka_diagnostic",
    "materialize",
]

METHODS = ("ensemble", "ensemble_he", "ensemble_ood_he", "svgd_rbf", "svgd_he", "svgd_cka", "hypernet", "hypernet_ood_he")
OOD_METHODS = ("ensemble_ood_he", "hypernet_ood_he")
ADDITIVE_REPULSION = ("ensemble_he", "ensemble_ood_he", "hypernet_ood_he")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, parts: dict):
        self.step, self.parts = step, parts
        super().__init__(f"non-finite loss at step {step}: {parts}")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = "classification"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification":
            self.y = self.y.astype(np.int64)
        else:
            self.y = self.y.astype(np.float64).reshape(-1, 1)


@dataclass
class TrainConfig:
    method: str = "ensemble"
    members: int = 30
    steps: int = 1000
    batch_size: int | None = 64
    ood_batch_size: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    repulsion: RepulsionConfig = field(default_factory=RepulsionConfig)
    seed: int = 0
    # hypernetwork shape
    latent_dim: int = 8
    code_size: int = 16
    code_hidden: list[int] = field(default_factory=lambda: [32])
    gen_hidden: list[int] = field(default_factory=lambda: [32])
    hyper_activation: str = "relu"
    hyper_output_gain: float = 0.3
    diagnostic_every: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        if isinstance(self.repulsion, dict):
            self.repulsion = RepulsionConfig(**self.repulsion)
        if self.members < 1:
            raise ValueError("members must be >= 1")
        if self.method != "ensemble" and not self.method.startswith("hypernet") and self.members < 2:
            raise ValueError(f"method {self.method} needs at least 2 members")

    @property
    def uses_ood(self) -> bool:
        return self.method in OOD_METHODS


@dataclass
class LossParts:
    total: Tensor
    task: float
    repulsion_id: float = 0.0
    repulsion_ood: float = 0.0
    ood_entropy: float = 0.0
    weighted: dict = field(default_factory=dict)
    feats: list | None = None

    def as_dict(self) -> dict:
        return {"total": self.total.item(), "task": self.task, "repulsion_id": self.repulsion_id,
                "repulsion_ood": self.repulsion_ood, "ood_entropy": self.ood_entropy}


@dataclass
class TrainHistory:
    step: list[int] = field(default_factory=list)
    task_loss: list[float] = field(default_factory=list)
    repulsion: list[float] = field(default_factory=list)
    ood_entropy: list[float] = field(default_factory=list)
    pairwise_cka: list[float] = field(default_factory=list)

    def record(self, step, task, rep, ent, cka):
        self.step.append(step)
        self.task_loss.append(float(task))
        self.repulsion.append(float(rep))
        self.ood_entropy.append(float(ent))
        self.pairwise_cka.append(float(cka))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "task_loss", "repulsion", "ood_entropy", "pairwise_cka"])
            for row in zip(self.step, self.task_loss, self.repulsion, self.ood_entropy, self.pairwise_cka):
                w.writerow([row[0], *(repr(float(v)) for v in row[1:])])

    def __len__(self) -> int:
        return len(self.step)


# -- loss pieces ----------------------------------------------------------
def task_loss(logits: Tensor, y: np.ndarray, task: str) -> Tensor:
    """Member-averaged mean cross-entropy (class labels) or mean squared error."""
    if task == "classification":
        logp = T.log_softmax(logits, axis=-1)
        picked = logp[..., np.arange(len(y)), y]
        return -T.mean(picked)
    diff = logits - y
    return T.mean(diff * diff)


def entropy_term(member_logits_ood, task: str = "classification") -> Tensor:
    """Mean softmax entropy over members and OOD examples."""
    if task != "classification":
        raise ValueError("entropy term is defined for classification only")
    logp = T.log_softmax(T.as_tensor(member_logits_ood), axis=-1)
    return -T.mean((T.exp(logp) * logp).sum(axis=-1))


def _kset(feats: list[Tensor], rows: slice, kind: str) -> list[Tensor]:
    kset = []
    for l, f in enumerate(feats):
        kset.append(K.gram(f[:, rows, :], kind))
    return kset


def _repulsion(kset: list[Tensor], cfg: RepulsionConfig, where: str) -> Tensor:
    try:
        return K.repulsion(kset, cfg)
    except DegenerateGramError:
        for l, Kl in enumerate(kset):
            try:
                K.center_unit_vectorize(Kl)
            except DegenerateGramError as err:
                raise DegenerateGramError(f"{where} Grams, layer {l + 1}: {err}") from None
        raise


def assemble_loss(state: EnsembleState, batch_id: tuple[np.ndarray, np.ndarray], batch_ood: np.ndarray | None,
                  cfg: TrainConfig, task: str = "classification") -> LossParts:
    """Total objective for one step.

    ``task + gamma_id * R(K_id) + gamma_ood * R(K_ood) - beta * H_ood`` where
    ``R`` is the configured repulsion aggregate. Inlier and OOD rows share a
    single forward pass; Grams are built on each row block separately.
    """
    X, y = batch_id
    if len(X) == 0:
        raise ValueError("empty inlier batch")
    rep = cfg.repulsion
    uses_ood = cfg.method in OOD_METHODS
    if uses_ood and batch_ood is None:
        raise ValueError(f"method {cfg.method} needs an OOD batch")
    if cfg.method in ADDITIVE_REPULSION and state.n_members < 2:
        raise ValueError("repulsion needs at least 2 members")
    n = len(X)
    inputs = np.concatenate([X, batch_ood]) if uses_ood else X
    logits, feats = ensemble_forward(state, inputs)
    task_val = task_loss(logits[:, :n], y, task)
    total = task_val
    parts = LossParts(total, task_val.item())
    if cfg.method in ADDITIVE_REPULSION and rep.gamma_id > 0:
        r = _repulsion(_kset(feats, slice(0, n), rep.feature_kernel), rep, "inlier")
        parts.repulsion_id = r.item()
        parts.weighted["repulsion_id"] = rep.gamma_id * r.item()
        total = total + r * rep.gamma_id
    if uses_ood:
        if rep.gamma_ood > 0:
            r = _repulsion(_kset(feats, slice(n, None), rep.feature_kernel), rep, "OOD")
            parts.repulsion_ood = r.item()
            parts.weighted["repulsion_ood"] = rep.gamma_ood * r.item()
            total = total + r * rep.gamma_ood
        if task == "classification" and rep.beta > 0:
            ent = entropy_term(logits[:, n:])
            parts.ood_entropy = ent.item()
            parts.weighted["ood_entropy"] = -rep.beta * ent.item()
            total = total - ent * rep.beta
    parts.total = total
    parts.feats = feats
    return parts


def pairwise_cka_diagnostic(feats, n_rows: int | None = None) -> float:
    """Mean pairwise linear CKA over captured layers (no gradient); NaN if degenerate.

    Uses ``H K H = (H F)(H F)^T`` for the linear kernel, so the features are
    centered instead of the Gram.
    """
    total = 0.0
    for f in feats:
        F = np.asarray(T.as_tensor(f).data)[:, :n_rows]
        m = F.shape[0]
        if m < 2:
            return float("nan")
        Fc = F - F.mean(axis=1, keepdims=True)
        V = (Fc @ np.swapaxes(Fc, 1, 2)).reshape(m, -1)
        norm = np.linalg.norm(V, axis=1)
        if np.any(norm < 1e-12):
            return float("nan")
        V /= norm[:, None]
        S = V @ V.T
        total += (S.sum() - np.trace(S)) / (m * (m - 1))
    return float(total / len(feats))


# -- particle update ------------------------------------------------------
def rbf_weight_kernel(theta, other=None, bandwidth: float | None = None) -> Tensor:
    """``exp(-|theta_i - other_j|^2 / h)`` with ``h = median / ln M`` by default.

    The median of pairwise squared distances is taken over ``other`` (which
    defaults to a detached copy of ``theta``) and is not differentiated.
    """
    theta = T.as_tensor(theta)
    o = theta.data if other is None else np.asarray(T.as_tensor(other).data)
    m = theta.shape[0]
    if bandwidth is None:
        sq = (o * o).sum(1)
        D = sq[:, None] + sq[None, :] - 2.0 * o @ o.T
        iu = np.triu_indices(m, 1)
        med = float(np.median(np.maximum(D[iu], 0.0))) if m > 1 else 1.0
        h = med / np.log(m) if m > 1 else 1.0
        if h <= 0:
            h = 1.0
    else:
        h = float(bandwidth)
    cross = theta @ Tensor(o.T)
    D = (theta * theta).sum(axis=1, keepdims=True) + (o * o).sum(1)[None, :] - 2.0 * cross
    return T.exp(D * (-1.0 / h))


def feature_kernel_matrix(feats: list[Tensor], rep: RepulsionConfig, detach_other: bool = True) -> Tensor:
    """``M x M`` layer-weighted feature kernel ``sum_l w_l k(theta_i, theta_j)``.

    Columns use detached features when ``detach_other`` is set, so gradients
    flow only through the row member.
    """
    weights = rep.weights(len(feats))
    total = None
    for w, f in zip(weights, feats):
        if w == 0:
            continue
        Kl = K.gram(f, rep.feature_kernel)
        V = K.center_unit_vectorize(Kl)
        W = Tensor(V.data) if detach_other else V
        term = K.pair_terms(V @ W.T, rep) * w
        total = term if total is None else total + term
    return total


def _self_kernel(rep: RepulsionConfig, n_layers: int) -> float:
    """Kernel value of a member with itself (coincident Grams)."""
    w = sum(rep.weights(n_layers))
    if rep.family == "riesz" and rep.eps_dist == 0 and rep.eps_arc == 0:
        return float("inf")
    return w * K.pair_terms(1.0, rep).item()


def _flat_grads(params: list[Tensor], m: int) -> np.ndarray:
    return np.concatenate([(p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(m, -1) for p in params], axis=1)


def _unflatten(flat: np.ndarray, params: list[Tensor]) -> list[np.ndarray]:
    out, start = [], 0
    m = flat.shape[0]
    for p in params:
        size = p.data[0].size
        out.append(flat[:, start:start + size].reshape(p.shape))
        start += size
    return out


def svgd_step(state: EnsembleState, batch: tuple[np.ndarray, np.ndarray], cfg: TrainConfig, optimizer,
              task: str = "classification", kernel_override: str | None = None) -> dict:
    """One kernelized particle update.

    ``phi_i = (1/M) sum_j [k(theta_j, theta_i) grad log p(D|theta_j) + grad_{theta_j} k(theta_j, theta_i)]``
    with ``log p(D|theta) = -task_loss``. The repulsive sum is evaluated as
    ``-grad_i sum_j k(theta_i, sg(theta_j))`` (exact for translation-invariant
    kernels) and scaled by ``gamma_id``. The driving kernel is normalized to a
    unit self-similarity. ``kernel_override`` in ``{"identity", "ones"}``
    replaces the driving kernel and drops the repulsive term.
    Parameters receive ``-phi`` as their gradient and ``optimizer`` steps.
    """
    m = state.n_members
    if m < 2:
        raise ValueError("particle update needs at least 2 members")
    params = state.tensors()
    X, y = batch
    logits, feats = ensemble_forward(state, X)
    loss = task_loss(logits, y, task)
    for p in params:
        p.grad = None
    T.backward(loss)
    drive = _flat_grads(params, m)  # row j = (1/M) grad L_j

    if kernel_override is not None:
        kmat = {"identity": np.eye(m), "ones": np.ones((m, m))}[kernel_override]
        repulse = np.zeros_like(drive)
    else:
        rep = cfg.repulsion
        if cfg.method == "svgd_rbf":
            flat = state.flat()
            kfull = rbf_weight_kernel(flat)
            kmat = kfull.data.copy()
            self_k = 1.0
        else:
            fam = "pairwise_cka" if cfg.method == "svgd_cka" else rep.family
            rep = replace(rep, family=fam)
            kfull = feature_kernel_matrix(feats, rep)
            self_k = _self_kernel(rep, len(feats))
            kmat = kfull.data / self_k
        np.fill_diagonal(kmat, 1.0)
        mask = 1.0 - np.eye(m)
        for p in params:
            p.grad = None
        T.backward((kfull * mask).sum())
        repulse = _flat_grads(params, m) * (cfg.repulsion.gamma_id / m)
    grad = kmat.T @ drive + repulse  # = -phi
    for p, g in zip(params, _unflatten(grad, params)):
        p.grad = g
    optimizer.step()
    return {"task": loss.item(), "phi": -grad, "kernel": kmat, "feats": feats}


# -- training loop --------------------------------------------------------
def _batch(rng: np.random.Generator, n: int, size: int | None) -> np.ndarray:
    if size is None or size >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=size, replace=False))


def train(cfg: TrainConfig, spec: MlpSpec, dataset: Dataset, ood_source: np.ndarray | None = None):
    """Run the configured method; return ``(ensemble or hypernet, history)``.

    ``ood_source`` is a pool of OOD inputs; each step draws
    ``cfg.ood_batch_size`` rows from it. Deterministic per ``cfg.seed``.
    """
    if cfg.uses_ood and ood_source is None:
        raise ValueError(f"method {cfg.method} needs an OOD source")
    rng = np.random.default_rng(cfg.seed)
    task = dataset.task
    history = TrainHistory()
    is_hyper = cfg.method.startswith("hypernet")
    if is_hyper:
        hspec = HypernetSpec(spec, cfg.latent_dim, cfg.code_size, list(cfg.code_hidden), list(cfg.gen_hidden),
                             cfg.hyper_activation, cfg.hyper_output_gain)
        model = hypernet_init(hspec, cfg.seed)
        params = model.tensors()
    else:
        model = init_ensemble(spec, cfg.members, cfg.seed)
        params = model.tensors()
    opt = make_optimizer(params, cfg.optimizer)
    n = len(dataset.X)

    for step in range(cfg.steps):
        idx = _batch(rng, n, cfg.batch_size)
        batch = (dataset.X[idx], dataset.y[idx])
        ood = None
        if cfg.uses_ood:
            ood = ood_source[_batch(rng, len(ood_source), cfg.ood_batch_size)]
        if cfg.method.startswith("svgd"):
            out = svgd_step(model, batch, cfg, opt, task)
            record = {"task": out["task"], "rep": 0.0, "ent": 0.0}
            feats = out["feats"]
        else:
            state = hypernet_sample(model, cfg.members, rng) if is_hyper else model
            parts = assemble_loss(state, batch, ood, cfg, task)
            total = parts.total
            if not np.isfinite(total.item()):
                raise NonFiniteLossError(step, parts.as_dict())
            for p in params:
                p.grad = None
            T.backward(total)
            opt.step()
            record = {"task": parts.task, "rep": parts.repulsion_id + parts.repulsion_ood, "ent": parts.ood_entropy}
            feats = parts.feats
        if not np.isfinite(record["task"]):
            raise NonFiniteLossError(step, record)
        cka_val = float("nan")
        if feats is not None and cfg.diagnostic_every and step % cfg.diagnostic_every == 0:
            cka_val = pairwise_cka_diagnostic(feats, len(idx))
        history.record(step, record["task"], record["rep"], record["ent"], cka_val)
    return model, history


def materialize(model, members: int, seed: int) -> EnsembleState:
    """Ensemble to evaluate: the trained state itself, or ``members`` hypernet samples."""
    if isinstance(model, Hypernet):
        with T.no_grad():
            state = hypernet_sample(model, members, seed)
        return state.detached()
    return model.detached()
