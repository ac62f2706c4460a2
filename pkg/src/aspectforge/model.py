"""BERT-style sentence-pair classifier built on :mod:`aspectforge.autograd`.

Post-layer-norm transformer encoder over summed token, position and segment
embeddings; the ``[CLS]`` position feeds a single linear layer over the
seven sentiment classes.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterator, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .tokenizer import EncodedPair

INIT_STD = 0.02


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    heads: int = 4
    hidden: int = 64
    feed_forward: int | None = None
    vocab_size: int = 30522
    max_len: int = 128
    type_vocab: int = 2
    n_labels: int = 7
    dropout: float = 0.1
    layer_norm_eps: float = 1e-12

    def __post_init__(self):
        if self.feed_forward is None:
            object.__setattr__(self, "feed_forward", 4 * self.hidden)
        if self.hidden % self.heads:
            raise ModelError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.max_len < 1 or self.vocab_size < 1 or self.layers < 0:
            raise ModelError(f"invalid config {self}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                continue
            out[k] = float(v) if k in ("dropout", "layer_norm_eps") else int(v)
        return cls(**out)


def base_config(vocab_size: int = 30522, max_len: int = 512) -> ModelConfig:
    """12 layers, 12 heads, hidden size 768."""
    return ModelConfig(layers=12, heads=12, hidden=768, feed_forward=3072, vocab_size=vocab_size, max_len=max_len)


def toy_config(vocab_size: int, max_len: int = 128, **overrides) -> ModelConfig:
    cfg = ModelConfig(layers=2, heads=4, hidden=64, feed_forward=256, vocab_size=vocab_size, max_len=max_len)
    return replace(cfg, **overrides)


PRESETS = {"base": base_config, "toy": toy_config}


def param_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    H, F = config.hidden, config.feed_forward
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    shapes["embeddings.token"] = (config.vocab_size, H)
    shapes["embeddings.position"] = (config.max_len, H)
    shapes["embeddings.segment"] = (config.type_vocab, H)
    shapes["embeddings.norm.scale"] = (H,)
    shapes["embeddings.norm.shift"] = (H,)
    for i in range(config.layers):
        p = f"layers.{i}"
        for proj in ("query", "key", "value", "output"):
            shapes[f"{p}.attention.{proj}.weight"] = (H, H)
            shapes[f"{p}.attention.{proj}.bias"] = (H,)
        shapes[f"{p}.attention.norm.scale"] = (H,)
        shapes[f"{p}.attention.norm.shift"] = (H,)
        shapes[f"{p}.ffn.in.weight"] = (H, F)
        shapes[f"{p}.ffn.in.bias"] = (F,)
        shapes[f"{p}.ffn.out.weight"] = (F, H)
        shapes[f"{p}.ffn.out.bias"] = (H,)
        shapes[f"{p}.ffn.norm.scale"] = (H,)
        shapes[f"{p}.ffn.norm.shift"] = (H,)
    shapes["classifier.weight"] = (H, config.n_labels)
    shapes["classifier.bias"] = (config.n_labels,)
    return shapes


def param_count(config: ModelConfig) -> int:
    """Exact number of trainable scalars."""
    V, H, F, L = config.vocab_size, config.hidden, config.feed_forward, config.layers
    embeddings = V * H + config.max_len * H + config.type_vocab * H + 2 * H
    attention = 4 * H * H + 4 * H + 2 * H
    ffn = 2 * H * F + F + H + 2 * H
    classifier = H * config.n_labels + config.n_labels
    return embeddings + L * (attention + ffn) + classifier


class Parameters:
    """Named trainable tensors in a fixed order."""

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "Parameters":
        return Parameters(
            OrderedDict((k, Tensor(t.data.copy(), requires_grad=True, name=k)) for k, t in self.tensors.items())
        )

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data) for k, t in self.tensors.items())

    @classmethod
    def from_arrays(cls, arrays) -> "Parameters":
        return cls(
            OrderedDict(
                (k, Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=k)) for k, v in arrays.items()
            )
        )


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) redrawn outside two standard deviations."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return x * std


def init_params(config: ModelConfig, seed: int) -> Parameters:
    rng = np.random.default_rng(seed)
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape in param_shapes(config).items():
        if name.endswith(".scale"):
            data = np.ones(shape)
        elif name.endswith((".bias", ".shift")):
            data = np.zeros(shape)
        else:
            data = _truncated_normal(rng, shape, INIT_STD)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return Parameters(tensors)


# -- batches -----------------------------------------------------------------


@dataclass(frozen=True)
class Batch:
    ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    def trimmed(self) -> "Batch":
        """Drop trailing columns that are padding in every row."""
        n = int(self.attention_mask.sum(axis=1).max()) if len(self.ids) else 0
        n = max(n, 1)
        return Batch(self.ids[:, :n], self.segment_ids[:, :n], self.attention_mask[:, :n])


def collate(pairs: Sequence[EncodedPair], trim: bool = False) -> Batch:
    batch = Batch(
        np.stack([p.ids for p in pairs]),
        np.stack([p.segment_ids for p in pairs]),
        np.stack([p.attention_mask for p in pairs]),
    )
    return batch.trimmed() if trim else batch


# -- forward -----------------------------------------------------------------


def embed(
    batch: Batch,
    params: Parameters,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    normalize: bool = True,
) -> Tensor:
    """Sum of token, position and segment embeddings, then layer norm and dropout.

    ``rng`` enables dropout (training mode). ``normalize=False`` returns the
    raw sum, which is only useful for inspection.
    """
    ids = np.asarray(batch.ids, dtype=np.int64)
    segments = np.asarray(batch.segment_ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape != segments.shape:
        raise ModelError(f"ids {ids.shape} and segment ids {segments.shape} must be matching (batch, n) arrays")
    n = ids.shape[1]
    if n > config.max_len:
        raise ModelError(f"sequence length {n} exceeds max_len {config.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ModelError(f"token id outside [0, {config.vocab_size})")
    if segments.size and (segments.min() < 0 or segments.max() >= config.type_vocab):
        raise ModelError(f"segment id outside [0, {config.type_vocab})")

    x = ag.take_rows(params["embeddings.token"], ids)
    x = ag.add(x, ag.index(params["embeddings.position"], slice(0, n)))
    x = ag.add(x, ag.take_rows(params["embeddings.segment"], segments))
    if not normalize:
        return x
    x = ag.layer_norm(x, params["embeddings.norm.scale"], params["embeddings.norm.shift"], config.layer_norm_eps)
    return ag.dropout(x, config.dropout, rng)


def _attention(x: Tensor, key_mask: np.ndarray, params: Parameters, prefix: str, config: ModelConfig, rng):
    B, n, H = x.shape
    A, d = config.heads, config.head_dim

    def heads(name):
        t = ag.linear(x, params[f"{prefix}.{name}.weight"], params[f"{prefix}.{name}.bias"])
        return ag.transpose(ag.reshape(t, (B, n, A, d)), (0, 2, 1, 3))

    q, k, v = heads("query"), heads("key"), heads("value")
    scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    probs = ag.masked_softmax(scores, key_mask[:, None, None, :])
    dropped = ag.dropout(probs, config.dropout, rng)
    context = ag.reshape(ag.transpose(ag.matmul(dropped, v), (0, 2, 1, 3)), (B, n, H))
    out = ag.linear(context, params[f"{prefix}.output.weight"], params[f"{prefix}.output.bias"])
    return ag.dropout(out, config.dropout, rng), probs


def encoder_forward(
    x: Tensor,
    attention_mask: np.ndarray,
    params: Parameters,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    return_attention: bool = False,
):
    """Run every encoder layer; optionally also return per-layer attention probabilities."""
    if x.ndim != 3 or x.shape[2] != config.hidden:
        raise ModelError(f"expected (batch, n, {config.hidden}) input, got {x.shape}")
    key_mask = np.asarray(attention_mask).astype(bool)
    if key_mask.shape != x.shape[:2]:
        raise ModelError(f"attention mask {key_mask.shape} does not match input {x.shape[:2]}")
    eps = config.layer_norm_eps
    attentions = []
    for i in range(config.layers):
        p = f"layers.{i}"
        attn, probs = _attention(x, key_mask, params, f"{p}.attention", config, rng)
        attentions.append(probs.data)
        x = ag.layer_norm(ag.add(x, attn), params[f"{p}.attention.norm.scale"], params[f"{p}.attention.norm.shift"], eps)
        h = ag.gelu(ag.linear(x, params[f"{p}.ffn.in.weight"], params[f"{p}.ffn.in.bias"]))
        h = ag.dropout(ag.linear(h, params[f"{p}.ffn.out.weight"], params[f"{p}.ffn.out.bias"]), config.dropout, rng)
        x = ag.layer_norm(ag.add(x, h), params[f"{p}.ffn.norm.scale"], params[f"{p}.ffn.norm.shift"], eps)
    return (x, attentions) if return_attention else x


@dataclass(frozen=True)
class ClassifierOutput:
    logits: Tensor
    probabilities: np.ndarray


def classify(encoded: Tensor, params: Parameters) -> ClassifierOutput:
    if encoded.ndim != 3:
        raise ModelError(f"expected (batch, n, hidden) input, got {encoded.shape}")
    cls_vec = ag.index(encoded, (slice(None), 0))
    logits = ag.linear(cls_vec, params["classifier.weight"], params["classifier.bias"])
    return ClassifierOutput(logits, ag.softmax(logits.data, axis=-1))


class Model:
    """Config plus parameters with a convenience forward pass."""

    def __init__(self, config: ModelConfig, params: Parameters | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        if self.params.size() != param_count(config):
            raise ModelError("parameters do not match the config")

    def forward(self, batch: Batch, rng: np.random.Generator | None = None) -> ClassifierOutput:
        x = embed(batch, self.params, self.config, rng)
        h = encoder_forward(x, batch.attention_mask, self.params, self.config, rng)
        return classify(h, self.params)

    def predict_proba(self, batch: Batch) -> np.ndarray:
        with ag.no_grad():
            return self.forward(batch).probabilities
