import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predspec.corpus_io import (
    CorpusError,
    TokenStream,
    load_token_stream,
    prepare_corpus,
    save_token_stream,
    tokenize_bytes,
)


def test_tokenize_bytes():
    s = tokenize_bytes(b"ab")
    assert s.tokens.tolist() == [97, 98]
    assert s.vocab_size == 256
    assert tokenize_bytes(b"aaa").tokens.tolist() == [97, 97, 97]


def test_tokenize_empty():
    with pytest.raises(CorpusError, match="empty corpus"):
        tokenize_bytes(b"")


def test_round_trip(tmp_path):
    s = TokenStream([5, 0, 5], 6)
    save_token_stream(s, tmp_path / "a.toks")
    assert load_token_stream(tmp_path / "a.toks") == s


def test_bad_magic(tmp_path):
    p = tmp_path / "a.toks"
    save_token_stream(TokenStream([1, 2], 3), p)
    data = bytearray(p.read_bytes())
    data[0] = ord("X")
    p.write_bytes(bytes(data))
    with pytest.raises(CorpusError, match="unrecognized format"):
        load_token_stream(p)


def test_bad_version(tmp_path):
    p = tmp_path / "a.toks"
    save_token_stream(TokenStream([1, 2], 3), p)
    data = bytearray(p.read_bytes())
    data[4] = 2
    p.write_bytes(bytes(data))
    with pytest.raises(CorpusError, match="unrecognized format"):
        load_token_stream(p)


def test_truncated(tmp_path):
    p = tmp_path / "a.toks"
    save_token_stream(TokenStream(np.arange(10), 10), p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(CorpusError, match="corrupt stream"):
        load_token_stream(p)


def test_token_out_of_range(tmp_path):
    p = tmp_path / "a.toks"
    save_token_stream(TokenStream([1, 2], 3), p)
    data = bytearray(p.read_bytes())
    data[8] = 2  # vocab_size field -> 2, but token 2 is present
    p.write_bytes(bytes(data))
    with pytest.raises(CorpusError, match="token out of range"):
        load_token_stream(p)
    with pytest.raises(CorpusError, match="token out of range"):
        TokenStream([0, 3], 3)


def test_header_layout(tmp_path):
    p = tmp_path / "a.toks"
    save_token_stream(TokenStream([7, 1], 50257), p)
    raw = p.read_bytes()
    assert raw[:4] == b"SPFK"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 50257
    assert int.from_bytes(raw[12:20], "little") == 2
    assert len(raw) == 20 + 8


@pytest.mark.parametrize("target,expected", [(2, [1, 2]), (3, [1, 2, 3]), (10, [1, 2, 3, 4])])
def test_prepare_prefix(target, expected):
    assert prepare_corpus(TokenStream([1, 2, 3, 4], 5), target).tokens.tolist() == expected


def test_prepare_clamps_short_stream():
    s = TokenStream(np.zeros(100, dtype=int), 1)
    assert len(prepare_corpus(s, 1_000_000)) == 100


def test_prepare_million():
    s = TokenStream(np.arange(2_000_000) % 50257, 50257)
    p = prepare_corpus(s, 1_000_000)
    assert len(p) == 1_000_000
    assert np.array_equal(p.tokens, s.tokens[:1_000_000])


def test_prepare_rejects_small_target():
    with pytest.raises(CorpusError):
        prepare_corpus(TokenStream([1, 2, 3], 4), 1)


def test_round_trip_fuzz(tmp_path):
    rng = np.random.default_rng(12)
    p = tmp_path / "f.toks"
    for _ in range(1000):
        vocab = int(rng.integers(1, 2**31 - 1))
        n = int(rng.integers(1, 60))
        s = TokenStream(rng.integers(0, vocab, n), vocab)
        save_token_stream(s, p)
        raw = p.read_bytes()
        back = load_token_stream(p)
        assert back == s
        save_token_stream(back, p)
        assert p.read_bytes() == raw


@settings(max_examples=200)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=50), st.integers(2, 60))
def test_prepare_is_prefix(tokens, target):
    s = TokenStream(tokens, 10)
    p = prepare_corpus(s, target)
    assert p.tokens.tolist() == tokens[: len(p)]
    assert len(p) == min(target, len(tokens))
