"""Fine-tuning: weighted cross-entropy, minibatch AdamW loop and history records."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .model import Batch, Model, Parameters
from .optim import AdamW, OptimizerError
from .tokenizer import EncodedPair

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "eval_loss", "eval_acc")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 32
    epochs: int = 20
    seed: int = 42
    class_weights: tuple[float, ...] | None = None
    target_train_accuracy: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite. Carries the last good state."""

    def __init__(self, message: str, params: Parameters, history: "TrainingHistory"):
        super().__init__(message)
        self.params = params
        self.history = history


def cross_entropy_loss(logits: Tensor, labels, weights=None) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k - 1}]")
    if weights is not None and len(weights) != k:
        raise ValueError(f"expected {k} class weights, got {len(weights)}")
    return ag.cross_entropy(logits, labels, weights)


@dataclass
class EncodedDataset:
    ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Sequence[EncodedPair], labels) -> "EncodedDataset":
        return cls(
            np.stack([p.ids for p in pairs]),
            np.stack([p.segment_ids for p in pairs]),
            np.stack([p.attention_mask for p in pairs]),
            np.asarray(labels, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.labels)

    def batch(self, rows) -> tuple[Batch, np.ndarray]:
        b = Batch(self.ids[rows], self.segment_ids[rows], self.attention_mask[rows]).trimmed()
        return b, self.labels[rows]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    eval_loss: float
    eval_acc: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.eval_loss), repr(r.eval_acc)])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingHistory":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([
            EpochRecord(int(r["epoch"]), *(float(r[k]) for k in HISTORY_FIELDS[1:]))
            for r in rows
        ])


def evaluate(model: Model, data: EncodedDataset, weights=None, batch_size: int = 64):
    """Return (mean loss, accuracy, probability rows) in evaluation mode."""
    probs = []
    total = 0.0
    with ag.no_grad():
        for start in range(0, len(data), batch_size):
            rows = slice(start, start + batch_size)
            batch, labels = data.batch(rows)
            out = model.forward(batch)
            total += cross_entropy_loss(out.logits, labels, weights).item() * len(labels)
            probs.append(out.probabilities)
    p = np.concatenate(probs) if probs else np.zeros((0, model.config.n_labels))
    acc = float(np.mean(p.argmax(axis=1) == data.labels)) if len(data) else float("nan")
    return total / max(len(data), 1), acc, p


def train_loop(
    train_data: EncodedDataset,
    eval_data: EncodedDataset | None,
    model: Model,
    config: TrainConfig,
) -> tuple[Parameters, TrainingHistory]:
    """Fine-tune ``model`` in place and return the best parameters and the history.

    Each epoch is one seeded shuffled pass. Train and eval metrics are
    recomputed afterwards in evaluation mode; without an eval set the train
    set is used. "Best" means highest eval accuracy, first epoch wins ties.
    """
    if len(train_data) == 0:
        raise ValueError("empty training set")
    if eval_data is None:
        eval_data = train_data
    weights = None if config.class_weights is None else np.asarray(config.class_weights, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    opt = AdamW(
        model.params,
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
        eps=config.epsilon,
        weight_decay=config.weight_decay,
    )
    history = TrainingHistory()
    best = model.params.copy()
    best_acc = -1.0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_data))
        for start in range(0, len(order), config.batch_size):
            batch, labels = train_data.batch(order[start : start + config.batch_size])
            loss = cross_entropy_loss(model.forward(batch, rng).logits, labels, weights)
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(f"loss became {loss.item()} in epoch {epoch}", best, history)
            ag.backward(loss)
            try:
                opt.step()
            except OptimizerError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", best, history) from exc
            opt.zero_grad()

        train_loss, train_acc, _ = evaluate(model, train_data, weights)
        eval_loss, eval_acc, _ = evaluate(model, eval_data, weights)
        if not all(math.isfinite(v) for v in (train_loss, eval_loss)):
            raise TrainingDiverged(f"evaluation loss became non-finite in epoch {epoch}", best, history)
        history.records.append(EpochRecord(epoch, train_loss, train_acc, eval_loss, eval_acc))
        log.info("epoch %d train_loss=%.4f train_acc=%.3f eval_acc=%.3f", epoch, train_loss, train_acc, eval_acc)
        if eval_acc > best_acc:
            best_acc = eval_acc
            best = model.params.copy()
        if config.target_train_accuracy is not None and train_acc >= config.target_train_accuracy:
            break
    return best, history
