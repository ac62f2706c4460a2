"""Synonym lexicon loading and aspect enrichment.

File format: UTF-8, one entry per line, ``headword<TAB>syn1|syn2|...``.
Blank lines and lines starting with ``#`` are skipped. Repeated headwords are
merged, keeping the first occurrence of each synonym.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .tokenizer import pre_tokenize

DEFAULT_MAX_TOKENS = 32
LIST_SEPARATOR = "، "
FINAL_CONJUNCTION = " و "


class LexiconError(ValueError):
    pass


def normalize(phrase: str) -> str:
    return " ".join(phrase.split())


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, phrase: str) -> bool:
        return normalize(phrase) in self.entries

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Iterable[str]]]) -> "Lexicon":
        merged: dict[str, dict[str, None]] = {}
        for head, syns in pairs:
            head = normalize(head)
            if not head:
                raise LexiconError("empty headword")
            bucket = merged.setdefault(head, {})
            for s in syns:
                s = normalize(s)
                if s:
                    bucket.setdefault(s, None)
        return cls({h: tuple(s) for h, s in merged.items()})


@dataclass(frozen=True)
class EnrichedAspect:
    headword: str
    synonyms_used: tuple[str, ...]
    rendered: str


def load_lexicon(tsv_bytes: bytes) -> Lexicon:
    pairs = []
    for lineno, line in enumerate(tsv_bytes.decode("utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise LexiconError(f"line {lineno}: expected 'headword<TAB>synonyms'")
        head, syns = line.split("\t", 1)
        if not normalize(head):
            raise LexiconError(f"line {lineno}: empty headword")
        pairs.append((head, syns.split("|")))
    return Lexicon.from_pairs(pairs)


def dump_lexicon(lexicon: Lexicon) -> bytes:
    return "".join(f"{h}\t{'|'.join(s)}\n" for h, s in lexicon.entries.items()).encode("utf-8")


def lookup(lexicon: Lexicon, phrase: str) -> tuple[str, ...] | None:
    return lexicon.entries.get(normalize(phrase))


def render(headword: str, synonyms: Iterable[str]) -> str:
    """Join items with Persian commas and a final ``و``."""
    items = [headword, *synonyms]
    if len(items) == 1:
        return headword
    return LIST_SEPARATOR.join(items[:-1]) + FINAL_CONJUNCTION + items[-1]


def enrich_aspect(lexicon: Lexicon, aspect: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> EnrichedAspect:
    """Expand an aspect phrase into an auxiliary sentence listing its synonyms.

    Tokens are counted after :func:`~aspectforge.tokenizer.pre_tokenize`, so
    each separator comma counts as one. Synonyms are dropped from the end
    until the rendering fits ``max_tokens``; the headword always stays.
    """
    head = normalize(aspect)
    if not head:
        raise LexiconError("empty aspect")
    if len(pre_tokenize(head)) > max_tokens:
        raise LexiconError(f"aspect {head!r} alone exceeds max_tokens={max_tokens}")
    synonyms = lexicon.entries.get(head)
    if synonyms is None:
        return EnrichedAspect(head, (), aspect)
    for k in range(len(synonyms), -1, -1):
        text = render(head, synonyms[:k])
        if len(pre_tokenize(text)) <= max_tokens:
            return EnrichedAspect(head, synonyms[:k], text)
    raise AssertionError("unreachable: headword alone fits")
