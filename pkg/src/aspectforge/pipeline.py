"""Glue between corpus, lexicon, tokenizer and model: prepared-example files
and their encoding into training arrays."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import (
    DEFAULT_LABEL_MAP,
    LABEL_NAMES,
    N_CLASSES,
    Example,
    LabelMap,
    LengthPolicy,
    Percentile,
    Review,
    SplitConfig,
    filter_long_reviews,
    flatten_examples,
    label_distribution,
    split,
)
from .lexicon import DEFAULT_MAX_TOKENS, EnrichedAspect, Lexicon, enrich_aspect, render
from .tokenizer import Vocabulary, encode_pair
from .train import EncodedDataset

ROW_FIELDS = ("review_id", "raw_label", "class_index", "aspect", "auxiliary", "synonyms", "review")


@dataclass(frozen=True)
class PreparedRow:
    review_id: str
    raw_label: int
    class_index: int
    aspect: str
    auxiliary: str
    synonyms: tuple[str, ...]
    review: str

    def enriched(self) -> EnrichedAspect | str:
        """The auxiliary in the form :func:`encode_pair` can truncate."""
        if not self.synonyms:
            return self.auxiliary
        return EnrichedAspect(self.aspect, self.synonyms, render(self.aspect, self.synonyms))


def make_rows(
    examples: Iterable[Example],
    lexicon: Lexicon | None,
    enrich: bool = True,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> list[PreparedRow]:
    rows = []
    for e in examples:
        if enrich and lexicon is not None:
            ea = enrich_aspect(lexicon, e.aspect_term, max_tokens)
            aux, syns = ea.rendered, ea.synonyms_used
        else:
            aux, syns = e.aspect_term, ()
        rows.append(
            PreparedRow(e.review_id, e.label.raw_value, e.label.class_index, e.aspect_term, aux, syns, e.review_text)
        )
    return rows


def rows_to_tsv(rows: Iterable[PreparedRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, delimiter="\t", lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([r.review_id, r.raw_label, r.class_index, r.aspect, r.auxiliary, "|".join(r.synonyms), r.review])
    return out.getvalue()


def rows_from_tsv(text: str) -> list[PreparedRow]:
    reader = csv.DictReader(io.StringIO(text), delimiter="\t")
    return [
        PreparedRow(
            r["review_id"],
            int(r["raw_label"]),
            int(r["class_index"]),
            r["aspect"],
            r["auxiliary"],
            tuple(s for s in r["synonyms"].split("|") if s),
            r["review"],
        )
        for r in reader
    ]


def encode_rows(rows: Sequence[PreparedRow], vocab: Vocabulary, max_len: int) -> EncodedDataset:
    pairs = [encode_pair(r.review, r.enriched(), vocab, max_len) for r in rows]
    return EncodedDataset.from_pairs(pairs, [r.class_index for r in rows])


@dataclass
class Prepared:
    train: list[PreparedRow]
    test: list[PreparedRow]
    train_examples: list[Example]
    test_examples: list[Example]
    removed_count: int
    statistics: dict


def prepare(
    reviews: Sequence[Review],
    lexicon: Lexicon | None,
    *,
    enrich: bool = True,
    policy: LengthPolicy = Percentile(95),
    split_config: SplitConfig = SplitConfig(),
    label_map: LabelMap = DEFAULT_LABEL_MAP,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> Prepared:
    kept, removed = filter_long_reviews(reviews, policy)
    examples = flatten_examples(kept, label_map)
    train, test = split(examples, split_config)
    stats = statistics(reviews, kept, examples, train, test, removed, label_map)
    return Prepared(
        make_rows(train, lexicon, enrich, max_tokens),
        make_rows(test, lexicon, enrich, max_tokens),
        train,
        test,
        removed,
        stats,
    )


def statistics(
    reviews: Sequence[Review],
    kept: Sequence[Review],
    examples: Sequence[Example],
    train: Sequence[Example],
    test: Sequence[Example],
    removed: int,
    label_map: LabelMap,
) -> dict:
    dist = label_distribution(examples)
    words = sorted(r.word_count for r in kept)
    return {
        "reviews_total": len(reviews),
        "reviews_kept": len(kept),
        "removed_count": removed,
        "examples": len(examples),
        "train_examples": len(train),
        "test_examples": len(test),
        "label_map": list(label_map.order),
        "label_distribution": {
            "counts": list(dist.counts),
            "fractions": list(dist.fractions),
        },
        "labels": [
            {
                "class_index": i,
                "raw_label": label_map.to_raw(i),
                "name": LABEL_NAMES[label_map.to_raw(i)],
                "count": dist.counts[i],
                "fraction": dist.fractions[i],
            }
            for i in range(N_CLASSES)
        ],
        "train_counts": list(label_distribution(train).counts),
        "categories": dict(sorted(Counter(r.category for r in kept).items())),
        "word_count": {"min": words[0], "max": words[-1]} if words else {},
    }
