"""Masked-language-model and next-sentence-prediction data utilities."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tokenizer import EncodedPair, Vocabulary

IGNORE_INDEX = -100


@dataclass(frozen=True)
class MaskingPolicy:
    select_fraction: float = 0.15
    mask_fraction: float = 0.8
    random_fraction: float = 0.1
    keep_fraction: float = 0.1

    def __post_init__(self):
        total = self.mask_fraction + self.random_fraction + self.keep_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mask/random/keep fractions must sum to 1, got {total}")
        if not 0.0 <= self.select_fraction <= 1.0:
            raise ValueError(f"select_fraction must lie in [0, 1], got {self.select_fraction}")


def selected_count(eligible: int, fraction: float) -> int:
    """Round half up, but select at least one token when any is eligible."""
    if eligible <= 0:
        return 0
    return max(1, math.floor(fraction * eligible + 0.5))


def mask_tokens(
    pair: EncodedPair, policy: MaskingPolicy, vocab: Vocabulary, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt a pair for MLM.

    Returns the corrupted ids and labels holding the original id at every
    selected position and ``IGNORE_INDEX`` elsewhere. Reserved tokens and
    padding are never selected.
    """
    rng = np.random.default_rng(seed)
    ids = pair.ids.copy()
    labels = np.full_like(ids, IGNORE_INDEX)
    eligible = np.flatnonzero((pair.attention_mask == 1) & (ids >= len(vocab.special_ids)))
    k = selected_count(len(eligible), policy.select_fraction)
    if k == 0:
        return ids, labels

    chosen = np.sort(rng.choice(eligible, size=k, replace=False))
    labels[chosen] = ids[chosen]
    u = rng.random(k)
    to_mask = chosen[u < policy.mask_fraction]
    to_random = chosen[(u >= policy.mask_fraction) & (u < policy.mask_fraction + policy.random_fraction)]
    ids[to_mask] = vocab.mask_id
    first = len(vocab.special_ids)
    if len(vocab) > first:
        ids[to_random] = rng.integers(first, len(vocab), size=len(to_random))
    return ids, labels


def make_nsp_pairs(
    documents: Sequence[Sequence[str]], seed: int, positive_probability: float = 0.5
) -> list[tuple[str, str, bool]]:
    """One pair per adjacent sentence pair in each document.

    With ``positive_probability`` the true successor is kept, otherwise it is
    replaced by a random sentence from a different document.
    """
    for i, doc in enumerate(documents):
        if len(doc) < 2:
            raise ValueError(f"document {i} has fewer than 2 sentences")
    if positive_probability < 1.0 and len(documents) < 2:
        raise ValueError("negative pairs need at least 2 documents")

    rng = random.Random(seed)
    pairs = []
    for d, doc in enumerate(documents):
        for a, b in zip(doc, doc[1:]):
            if rng.random() < positive_probability:
                pairs.append((a, b, True))
                continue
            other = rng.randrange(len(documents) - 1)
            other += other >= d
            pairs.append((a, rng.choice(documents[other]), False))
    return pairs
