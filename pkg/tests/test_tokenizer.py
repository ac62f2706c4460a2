import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aspectforge.lexicon import EnrichedAspect, render
from aspectforge.tokenizer import (
    SPECIAL_TOKENS,
    EncodingError,
    Vocabulary,
    VocabError,
    build_vocab,
    decode,
    encode_pair,
    load_vocab,
    pre_tokenize,
    tokenize,
    wordpiece_tokenize,
)

RESERVED = "\n".join(SPECIAL_TOKENS) + "\n"


def vocab_of(*tokens):
    return Vocabulary(list(SPECIAL_TOKENS) + list(tokens))


class TestVocab:
    def test_reserved_only(self):
        v = load_vocab(RESERVED.encode())
        assert len(v) == 5
        assert (v.pad_id, v.unk_id, v.cls_id, v.mask_id, v.sep_id) == (0, 1, 2, 3, 4)

    def test_duplicate_names_both_lines(self):
        with pytest.raises(VocabError, match=r"6.*8|8.*6"):
            load_vocab((RESERVED + "a\nb\na\n").encode())

    def test_misordered_reserved(self):
        with pytest.raises(VocabError):
            load_vocab("[UNK]\n[PAD]\n[CLS]\n[MASK]\n[SEP]\n".encode())

    def test_line_index_rule(self):
        lines = RESERVED + "".join(f"tok{i}\n" for i in range(100))
        v = load_vocab(lines.encode())
        assert len(v) == 105
        line100 = lines.splitlines()[99]
        assert v.id_of(line100) == 99

    def test_dumps_round_trip(self):
        v = vocab_of("x", "##y")
        assert load_vocab(v.dumps()) == v
        assert v.digest() == load_vocab(v.dumps()).digest()

    def test_unknown_maps_to_unk(self):
        assert vocab_of("x").id_of("zz") == 1


class TestPreTokenize:
    def test_whitespace_and_punct(self):
        assert pre_tokenize("a،b  c.‌d") == ["a", "،", "b", "c", ".", "‌d"]

    def test_empty(self):
        assert pre_tokenize("   ") == []


class TestWordPiece:
    def test_whole_word(self):
        assert wordpiece_tokenize("hello", vocab_of("hello")) == ["hello"]

    def test_unaffable(self):
        assert wordpiece_tokenize("unaffable", vocab_of("un", "##aff", "##able")) == ["un", "##aff", "##able"]

    def test_longest_match_first(self):
        v = vocab_of("a", "ab", "##b", "##c", "##bc")
        assert wordpiece_tokenize("abc", v) == ["ab", "##c"]

    def test_missing_char(self):
        assert wordpiece_tokenize("unaffablez", vocab_of("un", "##aff", "##able")) == ["[UNK]"]

    def test_overlong_word(self):
        assert wordpiece_tokenize("a" * 101, vocab_of("a", "##a")) == ["[UNK]"]

    @given(st.text(max_size=30))
    def test_total(self, text):
        v = vocab_of("a", "##a", "b")
        for piece in tokenize(text, v):
            assert piece in v


class TestBuildVocab:
    def test_empty_corpus(self):
        assert build_vocab([], 5).tokens == tuple(SPECIAL_TOKENS)

    def test_aa_trace(self):
        v = build_vocab(["aa"], 9)
        assert v.tokens == (*SPECIAL_TOKENS, "a", "##a", "aa")

    def test_deterministic(self):
        corpus = ["low lower lowest", "new newer wider"]
        assert build_vocab(corpus, 40) == build_vocab(corpus, 40)

    def test_too_small(self):
        with pytest.raises(VocabError):
            build_vocab(["abc"], 6)

    def test_tie_break_lexicographic(self):
        # pairs (a,##b) and (c,##d) both occur once; (a,##b) sorts first
        v = build_vocab(["ab cd"], 5 + 8 + 1)
        assert v.tokens[-1] == "ab"

    def test_covers_corpus(self):
        corpus = ["خیلی خوب بود", "ارزش خرید"]
        v = build_vocab(corpus, 60)
        assert "[UNK]" not in tokenize(" ".join(corpus), v)


TINY = vocab_of("the", "food", "was", "good", "taste", "price", "،", "و")


def assert_layout(p, vocab, max_len):
    ids, seg, mask, n = p.ids, p.segment_ids, p.attention_mask, p.true_length
    assert len(ids) == len(seg) == len(mask) == max_len
    assert ids[0] == vocab.cls_id
    assert int(np.sum(ids == vocab.cls_id)) == 1
    seps = np.flatnonzero(ids == vocab.sep_id)
    assert len(seps) == 2 and seps[1] == n - 1
    assert np.all(seg[: seps[0] + 1] == 0)
    assert np.all(seg[seps[0] + 1 : n] == 1)
    assert np.all(seg[n:] == 0)
    assert np.all(mask[:n] == 1) and np.all(mask[n:] == 0)
    assert np.all(ids[n:] == vocab.pad_id)


class TestEncodePair:
    def test_hand_layout(self):
        p = encode_pair("the food was", "good taste", TINY, 12)
        assert p.true_length == 8
        np.testing.assert_array_equal(p.segment_ids, [0] * 5 + [1] * 3 + [0] * 4)
        np.testing.assert_array_equal(p.ids[:8], [2, 5, 6, 7, 4, 8, 9, 4])
        np.testing.assert_array_equal(p.attention_mask, [1] * 8 + [0] * 4)

    def test_exact_fill(self):
        p = encode_pair("the food was", "good taste", TINY, 8)
        assert p.true_length == 8
        assert not np.any(p.ids == TINY.pad_id)
        assert np.all(p.attention_mask == 1)

    def test_review_tail_truncated(self):
        p = encode_pair("the food was good the food", "price", TINY, 8)
        # budget 5: aux 1, review keeps 4
        assert decode(p.ids, TINY) == "the food was good price"

    def test_enriched_loses_synonyms_after_review_floor(self):
        ea = EnrichedAspect("taste", ("food", "price"), render("taste", ("food", "price")))
        p = encode_pair("the food was", ea, TINY, 8)
        # full aux needs 5 of the 5 slots; dropping "price" leaves 3, so the review keeps 2
        assert decode(p.ids, TINY) == "the food taste و food"
        assert_layout(p, TINY, 8)

    def test_aux_too_long(self):
        with pytest.raises(EncodingError):
            encode_pair("the", "good " * 10, TINY, 8)

    @pytest.mark.parametrize("review,aux", [("  ", "food"), ("food", " ")])
    def test_empty_inputs(self, review, aux):
        with pytest.raises(EncodingError):
            encode_pair(review, aux, TINY, 16)

    def test_max_len_floor(self):
        with pytest.raises(EncodingError):
            encode_pair("the", "food", TINY, 7)

    def test_round_trip(self):
        p = encode_pair("the food  was good", "taste", TINY, 32)
        assert decode(p.ids, TINY) == "the food was good taste"

    def test_random_layouts(self):
        rng = random.Random(0)
        words = ["the", "food", "was", "good", "taste", "price", "xyz"]
        for _ in range(1000):
            max_len = rng.randint(8, 40)
            review = " ".join(rng.choices(words, k=rng.randint(1, 50)))
            aux = " ".join(rng.choices(words, k=rng.randint(1, max_len - 4)))
            assert_layout(encode_pair(review, aux, TINY, max_len), TINY, max_len)


class TestDecode:
    def test_pieces_joined(self):
        v = vocab_of("un", "##aff", "##able")
        assert decode([5, 6, 7], v) == "unaffable"

    def test_all_pad(self):
        assert decode([0] * 10, TINY) == ""

    def test_out_of_range(self):
        with pytest.raises(VocabError):
            decode([999], TINY)
