"""WordPiece vocabulary, subword tokenization and sentence-pair encoding."""
from __future__ import annotations

import hashlib
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .lexicon import EnrichedAspect

PAD, UNK, CLS, MASK, SEP = "[PAD]", "[UNK]", "[CLS]", "[MASK]", "[SEP]"
SPECIAL_TOKENS: tuple[str, ...] = (PAD, UNK, CLS, MASK, SEP)
CONTINUATION = "##"
MAX_VOCAB_SIZE = 100_000
MAX_WORD_CHARS = 100


class VocabError(ValueError):
    pass


class EncodingError(ValueError):
    pass


class Vocabulary:
    """Ordered token list; a token's id is its position.

    The first five ids are always ``[PAD] [UNK] [CLS] [MASK] [SEP]``.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise VocabError(f"vocabulary must start with {' '.join(SPECIAL_TOKENS)}")
        if len(tokens) > MAX_VOCAB_SIZE:
            raise VocabError(f"vocabulary has {len(tokens)} tokens, limit is {MAX_VOCAB_SIZE}")
        index: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise VocabError(f"duplicate token {tok!r} on lines {index[tok] + 1} and {i + 1}")
            index[tok] = i
        self.tokens = tuple(tokens)
        self.index = index

    pad_id, unk_id, cls_id, mask_id, sep_id = range(5)
    special_ids = frozenset(range(len(SPECIAL_TOKENS)))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def dumps(self) -> bytes:
        return "".join(t + "\n" for t in self.tokens).encode("utf-8")

    def digest(self) -> str:
        """Short content hash used to pair checkpoints with vocabularies."""
        return hashlib.sha256(self.dumps()).hexdigest()[:16]


def load_vocab(text_bytes: bytes) -> Vocabulary:
    lines = text_bytes.decode("utf-8").splitlines()
    return Vocabulary(lines)


# -- pre-tokenization --------------------------------------------------------


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def pre_tokenize(text: str) -> list[str]:
    """Split on whitespace and make every punctuation mark its own token."""
    out = []
    for chunk in text.split():
        word = []
        for ch in chunk:
            if _is_punctuation(ch):
                if word:
                    out.append("".join(word))
                    word = []
                out.append(ch)
            else:
                word.append(ch)
        if word:
            out.append("".join(word))
    return out


# -- WordPiece ---------------------------------------------------------------


def wordpiece_tokenize(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation of a single word.

    Returns ``[UNK]`` when no full segmentation exists.
    """
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION + candidate
            if candidate in vocab.index:
                piece = candidate
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


def tokenize(text: str, vocab: Vocabulary) -> list[str]:
    return [p for w in pre_tokenize(text) for p in wordpiece_tokenize(w, vocab)]


def build_vocab(corpus: Iterable[str], target_size: int) -> Vocabulary:
    """Train a small WordPiece vocabulary by greedy pair merging.

    Starts from the reserved tokens plus every character in both its
    word-initial and ``##`` form (sorted by code point), then repeatedly adds
    the most frequent adjacent piece pair as a merged token. Ties go to the
    lexicographically smallest pair. Stops at ``target_size`` or when no
    pair is left.
    """
    words = Counter(w for text in corpus for w in pre_tokenize(text))
    alphabet = sorted({ch for w in words for ch in w})
    tokens = list(SPECIAL_TOKENS)
    for ch in alphabet:
        tokens += [ch, CONTINUATION + ch]
    if target_size < len(tokens):
        raise VocabError(
            f"target_size {target_size} cannot hold the {len(SPECIAL_TOKENS)} reserved tokens "
            f"and {2 * len(alphabet)} character tokens"
        )
    known = set(tokens)
    segmented = {w: [w[0]] + [CONTINUATION + c for c in w[1:]] for w in words}

    while len(tokens) < target_size:
        pairs: Counter[tuple[str, str]] = Counter()
        for w, pieces in segmented.items():
            for a, b in zip(pieces, pieces[1:]):
                pairs[(a, b)] += words[w]
        if not pairs:
            break
        best_count = max(pairs.values())
        a, b = min(p for p, c in pairs.items() if c == best_count)
        merged = a + b[len(CONTINUATION):]
        if merged not in known:
            tokens.append(merged)
            known.add(merged)
        for w, pieces in segmented.items():
            i, out = 0, []
            while i < len(pieces):
                if i + 1 < len(pieces) and pieces[i] == a and pieces[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(pieces[i])
                    i += 1
            segmented[w] = out
    return Vocabulary(tokens)


# -- pair encoding -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EncodedPair:
    ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    true_length: int

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EncodedPair)
            and self.true_length == other.true_length
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.segment_ids, other.segment_ids)
            and np.array_equal(self.attention_mask, other.attention_mask)
        )


def _aux_ids(aux, vocab: Vocabulary, budget: int) -> list[int]:
    """Auxiliary token ids, dropping trailing synonyms until ``budget`` fits."""
    from .lexicon import EnrichedAspect, render

    if not isinstance(aux, EnrichedAspect):
        return [vocab.id_of(t) for t in tokenize(aux, vocab)]
    for k in range(len(aux.synonyms_used), -1, -1):
        ids = [vocab.id_of(t) for t in tokenize(render(aux.headword, aux.synonyms_used[:k]), vocab)]
        if len(ids) <= budget:
            return ids
    return ids


def encode_pair(review: str, auxiliary: "str | EnrichedAspect", vocab: Vocabulary, max_len: int) -> EncodedPair:
    """Encode ``[CLS] review [SEP] auxiliary [SEP]`` padded to ``max_len``.

    Over budget, the review loses tokens from its tail (down to one token),
    then an :class:`~aspectforge.lexicon.EnrichedAspect` loses synonyms from
    its end. A plain-string auxiliary is never cut.
    """
    from .lexicon import EnrichedAspect

    aux_text = auxiliary.rendered if isinstance(auxiliary, EnrichedAspect) else auxiliary
    if not review.strip():
        raise EncodingError("empty review")
    if not aux_text.strip():
        raise EncodingError("empty auxiliary sentence")
    if max_len < 8:
        raise EncodingError(f"max_len must be at least 8, got {max_len}")

    budget = max_len - 3
    review_ids = [vocab.id_of(t) for t in tokenize(review, vocab)]
    aux_ids = _aux_ids(auxiliary, vocab, budget - 1)
    if len(aux_ids) > budget - 1:
        raise EncodingError(
            f"auxiliary sentence needs {len(aux_ids)} tokens but only {budget - 1} fit in max_len={max_len}"
        )
    review_ids = review_ids[: budget - len(aux_ids)]

    seq = [vocab.cls_id, *review_ids, vocab.sep_id, *aux_ids, vocab.sep_id]
    n = len(seq)
    ids = np.full(max_len, vocab.pad_id, dtype=np.int64)
    ids[:n] = seq
    segments = np.zeros(max_len, dtype=np.int64)
    segments[len(review_ids) + 2 : n] = 1
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:n] = 1
    return EncodedPair(ids, segments, mask, n)


def decode(ids: Iterable[int], vocab: Vocabulary) -> str:
    words: list[str] = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise VocabError(f"id {i} outside vocabulary of size {len(vocab)}")
        if i in vocab.special_ids:
            continue
        tok = vocab.tokens[i]
        if tok.startswith(CONTINUATION) and words:
            words[-1] += tok[len(CONTINUATION):]
        else:
            words.append(tok)
    return " ".join(words)
