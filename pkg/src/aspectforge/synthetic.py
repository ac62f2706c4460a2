"""Synthetic datasets and lexicons standing in for the real review corpus.

``python -m aspectforge.synthetic OUTDIR`` writes the fixture files.
"""
from __future__ import annotations

import random
import sys
from dataclasses import dataclass
from pathlib import Path

from .corpus import DEFAULT_LABEL_MAP, RAW_LABELS, Aspect, LabelMap, Review, serialize_dataset
from .lexicon import Lexicon, dump_lexicon

# Label shares of the review corpus, listed per class index 0..6.
FIG3_COUNTS = (695, 80, 68, 66, 60, 3, 28)

TABLE3_LEXICON = {
    "طعم": ("چاشنی", "مزه", "چشایی", "ذائقه", "مذاق"),
    "ارزش خرید": ("ارزشمند", "شایسته خریدن", "لایق خریدن"),
    "کلی": ("عام", "عمومی", "همگانی", "در مجموع", "فراگیر", "جامع", "در کل"),
}

TABLE3_ROWS = (
    (
        "خیلی به بوی گوشت حساسم خیلی خوب بود چربی اندازه و تازه گوشت صورتی بود ممنون از گوشت خوب باز می‌خرم.",
        "طعم",
        "طعم، چاشنی، مزه، چشایی، ذائقه و مذاق",
        0,
    ),
    (
        "کیفیتش بد بود و درکل خوب بوی ماهی کیلکا رو گرفته بودند.",
        "ارزش خرید",
        "ارزش خرید، ارزشمند، شایسته خریدن و لایق خریدن",
        0,
    ),
    (
        "در مقایسه با سایر برندهای موجود در بازار با توجه به حراجی که داشت ارزانتر بود.",
        "کلی",
        "کلی، عام، عمومی، همگانی، در مجموع، فراگیر، جامع و در کل",
        1,
    ),
    (
        "درمقایسه با سایر برندهای موجود در بازار کیفیتش قابل قبول بود",
        "ارزش خرید",
        "ارزش خرید، ارزشمند، شایسته خریدن و لایق خریدن",
        1,
    ),
)

# Per-class F1 rows and supports of the two reported classifiers, class index order.
TABLE4_F1 = (0.97, 0.71, 0.65, 0.22, 0.70, 0.69, 0.36)
TABLE5_F1 = (0.97, 0.72, 0.57, 0.00, 0.63, 0.70, 0.28)
TABLE_SUPPORTS = (943, 91, 88, 8, 111, 76, 27)

# Hand-made confusion matrix with the supports above and accuracy 1179/1344.
TABLE4_CONFUSION = (
    (915, 6, 5, 1, 7, 5, 4),
    (20, 63, 8, 0, 0, 0, 0),
    (15, 10, 59, 4, 0, 0, 0),
    (3, 0, 2, 1, 2, 0, 0),
    (14, 0, 0, 0, 85, 10, 2),
    (12, 0, 0, 0, 12, 48, 4),
    (9, 0, 0, 0, 5, 5, 8),
)

ASPECT_TERMS = ("طعم", "ارزش خرید", "کیفیت", "بسته بندی", "ارزش غذایی", "ارسال", "کلی")
CATEGORIES = ("لبنیات", "گوشت", "تنقلات", "نوشیدنی", "کنسرو", "خشکبار")
FILLER = (
    "این", "محصول", "خیلی", "خوب", "بود", "بد", "نسبت", "به", "قیمت", "تازه", "ارسال",
    "سریع", "کیفیت", "عالی", "معمولی", "دوباره", "می‌خرم", "نمی‌خرم", "بسته", "سالم",
)


def table3_lexicon() -> Lexicon:
    return Lexicon.from_pairs(TABLE3_LEXICON.items())


def table3_reviews() -> list[Review]:
    return [
        Review(f"t3-{i + 1}", "گوشت" if i == 0 else "کنسرو", text, (Aspect(aspect, raw),))
        for i, (text, aspect, _, raw) in enumerate(TABLE3_ROWS)
    ]


def fig3_reviews(label_map: LabelMap = DEFAULT_LABEL_MAP, seed: int = 0) -> list[Review]:
    """500 reviews, two aspects each, whose 1000 labels follow ``FIG3_COUNTS``.

    Review lengths cycle through 8..12 words, so a 95th-percentile length
    filter keeps every review.
    """
    rng = random.Random(seed)
    labels = [label_map.to_raw(i) for i, c in enumerate(FIG3_COUNTS) for _ in range(c)]
    rng.shuffle(labels)
    reviews = []
    for i in range(len(labels) // 2):
        terms = rng.sample(ASPECT_TERMS, 2)
        text = " ".join(rng.choice(FILLER) for _ in range(8 + i % 5))
        aspects = (Aspect(terms[0], labels[2 * i]), Aspect(terms[1], labels[2 * i + 1]))
        reviews.append(Review(f"r{i:04d}", CATEGORIES[i % len(CATEGORIES)], text, aspects))
    return reviews


def overfit_reviews(n: int = 64, seed: int = 0) -> list[Review]:
    """``n`` single-aspect reviews of random filler with labels cycling over all classes."""
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(200)]
    return [
        Review(
            f"o{i:03d}",
            CATEGORIES[i % len(CATEGORIES)],
            " ".join(rng.choice(words) for _ in range(10)),
            (Aspect(rng.choice(ASPECT_TERMS), RAW_LABELS[i % len(RAW_LABELS)]),),
        )
        for i in range(n)
    ]


SENTIMENT_WORDS = {-2: "awful", -1: "bad", 0: "okay", 1: "good", 2: "great", 3: "mixed"}


@dataclass(frozen=True)
class SynonymShiftCorpus:
    train: list[Review]
    test: list[Review]
    lexicon: Lexicon
    words: tuple[str, ...]


def synonym_shift_corpus(
    seed: int,
    n_train: int = 2000,
    n_test: int = 300,
    groups: int = 6,
    tokens_per_group: int = 8,
    headwords_per_group: int = 6,
    test_headwords_per_group: int = 2,
    synonyms_per_headword: int = 4,
) -> SynonymShiftCorpus:
    """Corpus where test aspects are only reachable through the lexicon.

    Surface tokens fall into latent groups, and every headword lists a few
    tokens of its group as synonyms. A review is ``filler token sentiment
    filler``. Queried with a headword of the token's group, the label is the
    sentiment; queried with a headword of another group it is -3.

    Training uses some headwords, testing uses the rest, so a test headword
    never appears in training. Test reviews name the aspect only through
    one of the headword's own listed synonyms, never the headword itself.
    Word names are opaque, so subword pieces cannot leak group identity.
    """
    rng = random.Random(seed)
    n_tokens = groups * tokens_per_group
    n_heads = groups * headwords_per_group
    token_ids = rng.sample(range(n_tokens), n_tokens)
    head_ids = rng.sample(range(n_heads), n_heads)
    tokens = [[f"s{token_ids[g * tokens_per_group + j]}" for j in range(tokens_per_group)] for g in range(groups)]
    heads = [[f"a{head_ids[g * headwords_per_group + j]}" for j in range(headwords_per_group)] for g in range(groups)]
    synonyms = {h: tuple(rng.sample(tokens[g], synonyms_per_headword)) for g in range(groups) for h in heads[g]}
    group_of = {h: g for g in range(groups) for h in heads[g]}
    test_heads = [h for g in range(groups) for h in heads[g][:test_headwords_per_group]]
    train_heads = [h for g in range(groups) for h in heads[g][test_headwords_per_group:]]
    filler = [f"f{i}" for i in range(20)]

    def make(n, pool, test, prefix):
        out = []
        for i in range(n):
            head = rng.choice(pool)
            raw = rng.choice(list(SENTIMENT_WORDS))
            word = SENTIMENT_WORDS[raw]
            if rng.random() < 0.5:
                pool_tokens = synonyms[head] if test else tokens[group_of[head]]
                token = rng.choice(pool_tokens)
            else:
                other = rng.choice([g for g in range(groups) if g != group_of[head]])
                token = rng.choice(tokens[other])
                raw = -3
            text = f"{rng.choice(filler)} {token} {word} {rng.choice(filler)}"
            out.append(Review(f"{prefix}{i:05d}", "synthetic", text, (Aspect(head, raw),)))
        return out

    train = make(n_train, train_heads, False, "tr")
    test = make(n_test, test_heads, True, "te")
    lexicon = Lexicon.from_pairs(synonyms.items())
    words = sorted(
        {w for r in train + test for w in r.text.split()}
        | set(synonyms)
        | {t for group in tokens for t in group}
        | {"،", "و"}
    )
    return SynonymShiftCorpus(train, test, lexicon, tuple(words))


def confusion_pairs(counts=TABLE4_CONFUSION) -> tuple[list[int], list[int]]:
    """Expand a confusion matrix into (actual, predicted) label lists."""
    actual, predicted = [], []
    for a, row in enumerate(counts):
        for p, n in enumerate(row):
            actual += [a] * n
            predicted += [p] * n
    return actual, predicted


def write_fixtures(outdir: str | Path) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fig3_dataset.xml").write_bytes(serialize_dataset(fig3_reviews()))
    (out / "overfit_dataset.xml").write_bytes(serialize_dataset(overfit_reviews()))
    (out / "table3_dataset.xml").write_bytes(serialize_dataset(table3_reviews()))
    (out / "lexicon.tsv").write_bytes(dump_lexicon(table3_lexicon()))


if __name__ == "__main__":
    write_fixtures(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
