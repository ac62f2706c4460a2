"""Review datasets: XML parsing, flattening to aspect-level examples,
length filtering, splitting and label statistics.

Dataset schema::

    <dataset>
      <review id="r1" category="dairy">
        <text>...</text>
        <aspects>
          <aspect term="taste" polarity="1"/>
        </aspects>
      </review>
    </dataset>

Polarity is an integer in -3..3 (-3 means the aspect is not discussed).
Unknown elements and attributes are ignored.
"""
from __future__ import annotations

import math
import random
import xml.etree.ElementTree as ET
import xml.parsers.expat
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RAW_LABELS: tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
N_CLASSES = len(RAW_LABELS)

LABEL_NAMES = {
    -3: "no comment",
    -2: "very negative",
    -1: "negative",
    0: "neutral",
    1: "positive",
    2: "very positive",
    3: "mixed",
}


class CorpusError(ValueError):
    """Raised for invalid dataset content or arguments."""


class DatasetParseError(CorpusError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class LabelMap:
    """Bijection between raw polarities and class indices 0..6.

    ``order[i]`` is the raw label assigned to class ``i``.
    """

    order: tuple[int, ...] = RAW_LABELS

    def __post_init__(self):
        if sorted(self.order) != sorted(RAW_LABELS):
            raise CorpusError(f"label map must be a permutation of {RAW_LABELS}, got {self.order}")

    def to_index(self, raw: int) -> int:
        try:
            return self.order.index(raw)
        except ValueError:
            raise CorpusError(f"label {raw!r} outside {RAW_LABELS}") from None

    def to_raw(self, index: int) -> int:
        if not 0 <= index < N_CLASSES:
            raise CorpusError(f"class index {index} outside 0..{N_CLASSES - 1}")
        return self.order[index]

    def label(self, raw: int) -> "SentimentLabel":
        return SentimentLabel(raw, self.to_index(raw))

    def dumps(self) -> str:
        return ",".join(str(r) for r in self.order)

    @classmethod
    def loads(cls, text: str) -> "LabelMap":
        return cls(tuple(int(t) for t in text.split(",")))


DEFAULT_LABEL_MAP = LabelMap()


@dataclass(frozen=True)
class SentimentLabel:
    raw_value: int
    class_index: int


@dataclass(frozen=True)
class Aspect:
    term: str
    polarity: int


@dataclass(frozen=True)
class Review:
    id: str
    category: str
    text: str
    aspects: tuple[Aspect, ...] = ()

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Example:
    review_id: str
    review_text: str
    aspect_term: str
    label: SentimentLabel


@dataclass(frozen=True)
class LabelDistribution:
    counts: tuple[int, ...]
    fractions: tuple[float, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 42
    group_by_review: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise CorpusError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class AbsoluteCap:
    max_words: int


@dataclass(frozen=True)
class Percentile:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 100.0:
            raise CorpusError(f"percentile must lie in (0, 100), got {self.p}")


LengthPolicy = AbsoluteCap | Percentile


# -- parsing -----------------------------------------------------------------


def _error_offset(data: bytes) -> int:
    parser = xml.parsers.expat.ParserCreate()
    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError:
        return parser.ErrorByteIndex
    return -1


def _parse_polarity(value: str | None, review_id: str) -> int:
    try:
        polarity = int(value) if value is not None else None
    except ValueError:
        polarity = None
    if polarity is None or polarity not in RAW_LABELS:
        raise CorpusError(f"review {review_id!r}: polarity {value!r} outside {RAW_LABELS[0]}..{RAW_LABELS[-1]}")
    return polarity


def parse_dataset(xml_bytes: bytes) -> list[Review]:
    """Parse a dataset document into reviews, in document order."""
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise DatasetParseError(f"malformed dataset XML: {exc}", _error_offset(xml_bytes)) from None

    reviews = []
    for i, node in enumerate(root.iter("review")):
        review_id = node.get("id") or f"review-{i}"
        text = " ".join((node.findtext("text") or "").split())
        if not text:
            raise CorpusError(f"review {review_id!r}: empty text")
        aspects = []
        seen = set()
        for a in node.iter("aspect"):
            term = " ".join((a.get("term") or "").split())
            if not term:
                raise CorpusError(f"review {review_id!r}: aspect with empty term")
            if term in seen:
                raise CorpusError(f"review {review_id!r}: duplicate aspect {term!r}")
            seen.add(term)
            aspects.append(Aspect(term, _parse_polarity(a.get("polarity"), review_id)))
        reviews.append(Review(review_id, node.get("category", ""), text, tuple(aspects)))
    return reviews


def serialize_dataset(reviews: Iterable[Review]) -> bytes:
    root = ET.Element("dataset")
    for r in reviews:
        node = ET.SubElement(root, "review", id=r.id, category=r.category)
        ET.SubElement(node, "text").text = r.text
        aspects = ET.SubElement(node, "aspects")
        for a in r.aspects:
            ET.SubElement(aspects, "aspect", term=a.term, polarity=str(a.polarity))
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


# -- examples ----------------------------------------------------------------


def flatten_examples(reviews: Iterable[Review], label_map: LabelMap = DEFAULT_LABEL_MAP) -> list[Example]:
    return [
        Example(r.id, r.text, a.term, label_map.label(a.polarity))
        for r in reviews
        for a in r.aspects
    ]


def filter_long_reviews(reviews: Sequence[Review], policy: LengthPolicy) -> tuple[list[Review], int]:
    """Drop reviews whose whitespace word count exceeds the policy threshold.

    ``Percentile(p)`` uses the nearest-rank threshold: the ``ceil(p/100 * N)``-th
    smallest word count. Reviews longer than it are removed.
    """
    if not reviews:
        return [], 0
    if isinstance(policy, AbsoluteCap):
        limit = policy.max_words
    else:
        lengths = sorted(r.word_count for r in reviews)
        rank = max(1, math.ceil(policy.p / 100.0 * len(lengths)))
        limit = lengths[rank - 1]
    kept = [r for r in reviews if r.word_count <= limit]
    return kept, len(reviews) - len(kept)


def split(examples: Sequence[Example], config: SplitConfig = SplitConfig()) -> tuple[list[Example], list[Example]]:
    """Seeded train/test partition.

    Units (review groups, or single examples when ``group_by_review`` is off)
    are shuffled and the first ``floor(train_fraction * units)`` go to train,
    clamped so both sides get at least one unit. Output keeps input order.
    """
    if config.group_by_review:
        keys = list(dict.fromkeys(e.review_id for e in examples))
        if len(keys) < 2:
            raise CorpusError("need at least 2 distinct reviews to split by review")
        pos = {k: i for i, k in enumerate(keys)}
        unit_of = [pos[e.review_id] for e in examples]
        n_units = len(keys)
    else:
        if len(examples) < 2:
            raise CorpusError("need at least 2 examples to split")
        unit_of = list(range(len(examples)))
        n_units = len(examples)

    order = list(range(n_units))
    random.Random(config.seed).shuffle(order)
    n_train = min(max(math.floor(config.train_fraction * n_units), 1), n_units - 1)
    train_units = set(order[:n_train])
    train = [e for e, u in zip(examples, unit_of) if u in train_units]
    test = [e for e, u in zip(examples, unit_of) if u not in train_units]
    return train, test


def split_manifest(train: Iterable[Example], test: Iterable[Example]) -> str:
    """``review_id<TAB>train|test`` lines, one per review, in first-seen order."""
    side: dict[str, str] = {}
    for name, part in (("train", train), ("test", test)):
        for e in part:
            side.setdefault(e.review_id, name)
    return "".join(f"{rid}\t{s}\n" for rid, s in side.items())


def label_distribution(examples: Iterable[Example]) -> LabelDistribution:
    counter = Counter(e.label.class_index for e in examples)
    counts = tuple(counter.get(i, 0) for i in range(N_CLASSES))
    total = sum(counts)
    fractions = tuple(c / total if total else 0.0 for c in counts)
    return LabelDistribution(counts, fractions)


def compute_class_weights(dist: LabelDistribution) -> np.ndarray:
    """Inverse-frequency weights ``N / (K * count_k)``; their support-weighted mean is 1."""
    counts = np.asarray(dist.counts, dtype=np.float64)
    if np.any(counts <= 0):
        empty = [i for i, c in enumerate(dist.counts) if c <= 0]
        raise CorpusError(
            f"classes {empty} have no examples; disable class weighting or merge those classes"
        )
    return counts.sum() / (len(counts) * counts)
