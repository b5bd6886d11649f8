"""MLP target networks, stacked ensembles and the noise-conditioned hypernetwork.

Ensemble parameters are stored stacked: layer ``l`` of an ``M``-member
ensemble is a weight tensor ``(M, in, out)`` and a bias ``(M, 1, out)``, so a
single batched matmul runs all members at once. A lone member is the same
structure without the leading axis.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "MlpSpec",
    "EnsembleState",
    "HypernetSpec",
    "Hypernet",
    "init_params",
    "init_ensemble",
    "forward_with_features",
    "ensemble_forward",
    "permute_hidden_units",
    "hypernet_init",
    "hypernet_sample",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

ACTIVATIONS = {"relu": T.relu, "gelu": T.gelu, "tanh": T.tanh}

Params = list  # [(W, b), ...] per layer


@dataclass
class MlpSpec:
    """Fully connected network ``widths[0] -> ... -> widths[-1]``.

    ``capture_layers`` are 1-based layer indices whose outputs are returned as
    features (post-activation for hidden layers, logits for the last one).
    ``None`` captures every layer.
    """

    layer_widths: list[int]
    activation: str = "relu"
    capture_layers: list[int] | None = None

    def __post_init__(self):
        self.layer_widths = [int(w) for w in self.layer_widths]
        if len(self.layer_widths) < 2 or any(w < 1 for w in self.layer_widths):
            raise ValueError(f"need at least 2 positive widths, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if self.capture_layers is None:
            self.capture_layers = list(range(1, self.n_layers + 1))
        self.capture_layers = sorted(int(c) for c in self.capture_layers)
        if any(not 1 <= c <= self.n_layers for c in self.capture_layers):
            raise ValueError(f"capture_layers must lie in 1..{self.n_layers}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_widths[:-1], self.layer_widths[1:]))

    def layer_param_count(self, l: int) -> int:
        fan_in, fan_out = self.layer_shapes()[l]
        return fan_in * fan_out + fan_out

    @property
    def n_params(self) -> int:
        return sum(self.layer_param_count(l) for l in range(self.n_layers))

    def digest(self) -> bytes:
        text = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(text).digest()


def init_params(spec: MlpSpec, seed: int, members: int | None = None, requires_grad: bool = True) -> Params:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    lead = () if members is None else (members,)
    params = []
    for fan_in, fan_out in spec.layer_shapes():
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=lead + (fan_in, fan_out))
        b = np.zeros(lead + (1, fan_out))
        params.append((Tensor(W, requires_grad), Tensor(b, requires_grad)))
    return params


def forward_with_features(params: Params, spec: MlpSpec, X) -> tuple[Tensor, list[Tensor]]:
    """Run the MLP; return logits and the captured per-layer features."""
    h = T.as_tensor(X)
    if h.shape[-1] != spec.layer_widths[0]:
        raise ValueError(f"input width {h.shape[-1]} does not match spec width {spec.layer_widths[0]}")
    act = ACTIVATIONS[spec.activation]
    feats = []
    last = spec.n_layers
    for l, (W, b) in enumerate(params, start=1):
        h = h @ W + b
        if l < last:
            h = act(h)
        if l in spec.capture_layers:
            feats.append(h)
    return h, feats


@dataclass
class EnsembleState:
    """``M`` parameter sets of a shared :class:`MlpSpec`, stored stacked."""

    spec: MlpSpec
    params: Params

    @property
    def n_members(self) -> int:
        return self.params[0][0].shape[0]

    def tensors(self) -> list[Tensor]:
        return [t for pair in self.params for t in pair]

    def member(self, m: int) -> Params:
        return [(Tensor(W.data[m].copy()), Tensor(b.data[m].copy())) for W, b in self.params]

    def flat(self) -> Tensor:
        """``(M, P)`` differentiable view of all parameters."""
        m = self.n_members
        return T.concat([T.reshape(t, (m, -1)) for t in self.tensors()], axis=1)

    def flat_data(self) -> np.ndarray:
        m = self.n_members
        return np.concatenate([t.data.reshape(m, -1) for t in self.tensors()], axis=1)

    def detached(self) -> "EnsembleState":
        return EnsembleState(self.spec, [(Tensor(W.data), Tensor(b.data)) for W, b in self.params])

    @classmethod
    def from_members(cls, spec: MlpSpec, members: Sequence[Params], requires_grad: bool = True) -> "EnsembleState":
        params = []
        for l in range(spec.n_layers):
            W = np.stack([np.asarray(T.as_tensor(p[l][0]).data) for p in members])
            b = np.stack([np.asarray(T.as_tensor(p[l][1]).data).reshape(1, -1) for p in members])
            params.append((Tensor(W, requires_grad), Tensor(b, requires_grad)))
        return cls(spec, params)

    @classmethod
    def from_flat(cls, spec: MlpSpec, flat: np.ndarray, requires_grad: bool = True) -> "EnsembleState":
        m = flat.shape[0]
        params, start = [], 0
        for fan_in, fan_out in spec.layer_shapes():
            W = flat[:, start:start + fan_in * fan_out].reshape(m, fan_in, fan_out)
            start += fan_in * fan_out
            b = flat[:, start:start + fan_out].reshape(m, 1, fan_out)
            start += fan_out
            params.append((Tensor(W.copy(), requires_grad), Tensor(b.copy(), requires_grad)))
        return cls(spec, params)


def init_ensemble(spec: MlpSpec, members: int, seed: int) -> EnsembleState:
    return EnsembleState(spec, init_params(spec, seed, members=members))


def ensemble_forward(state: EnsembleState, X) -> tuple[Tensor, list[Tensor]]:
    """Logits ``(M, N, C)`` and features ``[(M, N, p_l) per captured layer]``."""
    return forward_with_features(state.params, state.spec, X)


def permute_hidden_units(params: Params, layer: int, perm) -> Params:
    """Permute the output units of hidden ``layer`` (1-based) of one member.

    Rows of the next layer's weight are permuted to match, so the network
    computes the same function.
    """
    perm = np.asarray(perm)
    out = [(np.array(T.as_tensor(W).data), np.array(T.as_tensor(b).data)) for W, b in params]
    if not 1 <= layer < len(out):
        raise ValueError("only hidden layers can be permuted")
    W, b = out[layer - 1]
    out[layer - 1] = (W[..., perm], b[..., perm])
    Wn, bn = out[layer]
    out[layer] = (Wn[..., perm, :], bn)
    return [(Tensor(W), Tensor(b)) for W, b in out]


# -- hypernetwork ---------------------------------------------------------
@dataclass
class HypernetSpec:
    """Latent ``z`` -> layer codes ``h(z)`` -> per-layer generators ``g_l``.

    ``output_gain`` shrinks the initial output layer of every generator.
    Generated weights share a low-rank basis, so at unit gain they add up
    coherently and the first target networks have very large outputs.
    """

    target: MlpSpec
    latent_dim: int = 8
    code_size: int = 16
    code_hidden: list[int] = field(default_factory=lambda: [32])
    gen_hidden: list[int] = field(default_factory=lambda: [32])
    activation: str = "relu"
    output_gain: float = 0.3

    def code_spec(self) -> MlpSpec:
        widths = [self.latent_dim, *self.code_hidden, self.target.n_layers * self.code_size]
        return MlpSpec(widths, self.activation)

    def gen_spec(self, l: int) -> MlpSpec:
        widths = [self.code_size, *self.gen_hidden, self.target.layer_param_count(l)]
        return MlpSpec(widths, self.activation)


@dataclass
class Hypernet:
    spec: HypernetSpec
    code_params: Params
    gen_params: list[Params]

    def tensors(self) -> list[Tensor]:
        groups = [self.code_params, *self.gen_params]
        return [t for group in groups for pair in group for t in pair]


def hypernet_init(hspec: HypernetSpec, seed: int) -> Hypernet:
    code = init_params(hspec.code_spec(), seed)
    gens = [init_params(hspec.gen_spec(l), seed + 1 + l) for l in range(hspec.target.n_layers)]
    for g in gens:
        W, b = g[-1]
        g[-1] = (Tensor(W.data * hspec.output_gain, True), Tensor(b.data * hspec.output_gain, True))
    return Hypernet(hspec, code, gens)


def hypernet_sample(net: Hypernet, members: int, seed: int | np.random.Generator) -> EnsembleState:
    """Draw ``members`` latents and generate their target networks.

    The returned parameters stay attached to the graph, so ensemble losses
    backpropagate into the hypernetwork. Generated weights are scaled by
    ``sqrt(1 / fan_in)`` of their target layer.
    """
    if members < 1:
        raise ValueError("members must be >= 1")
    hs = net.spec
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = Tensor(rng.standard_normal((members, hs.latent_dim)))
    codes, _ = forward_with_features(net.code_params, hs.code_spec(), z)
    codes = T.reshape(codes, (members, hs.target.n_layers, hs.code_size))
    params = []
    for l, (fan_in, fan_out) in enumerate(hs.target.layer_shapes()):
        theta, _ = forward_with_features(net.gen_params[l], hs.gen_spec(l), codes[:, l, :])
        scale = np.sqrt(1.0 / fan_in)
        W = T.reshape(theta[:, : fan_in * fan_out], (members, fan_in, fan_out)) * scale
        b = T.reshape(theta[:, fan_in * fan_out:], (members, 1, fan_out)) * scale
        params.append((W, b))
    return EnsembleState(hs.target, params)


# -- checkpoints ----------------------------------------------------------
MAGIC = b"HECKAPRM"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ32s")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, state: EnsembleState) -> None:
    """Binary layout: magic, u32 version, u32 M, u64 P, 32-byte spec digest,
    then M little-endian float64 blocks of P parameters each."""
    flat = np.ascontiguousarray(state.flat_data(), dtype="<f8")
    m, p = flat.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, m, p, state.spec.digest()))
        fh.write(flat.tobytes())


def load_checkpoint(path: str | Path, spec: MlpSpec) -> EnsembleState:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError("file too short for header")
    magic, version, m, p, digest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("bad magic")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    if digest != spec.digest():
        raise CheckpointError("spec digest mismatch")
    if p != spec.n_params or len(raw) != _HEADER.size + 8 * m * p:
        raise CheckpointError("parameter block size mismatch")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(m, p).astype(np.float64)
    return EnsembleState.from_flat(spec, flat)
