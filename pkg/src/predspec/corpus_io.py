"""Token streams: the binary ``.toks`` format, byte-level tokenization and prefix preparation.

Layout (little-endian)::

    magic    4 bytes  b"SPFK"
    version  u32      1
    vocab    u32
    count    u64
    tokens   count x u32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SPFK"
FORMAT_VERSION = 1
MAX_VOCAB = 2**31 - 1

_HEADER = struct.Struct("<4sIIQ")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TokenStream:
    tokens: np.ndarray
    vocab_size: int

    def __post_init__(self):
        tokens = np.ascontiguousarray(self.tokens, dtype=np.int64)
        if tokens.ndim != 1:
            raise CorpusError("token stream must be one-dimensional")
        if tokens.size == 0:
            raise CorpusError("empty corpus")
        if not 1 <= self.vocab_size <= MAX_VOCAB:
            raise CorpusError(f"vocab_size {self.vocab_size} outside [1, 2^31-1]")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise CorpusError("token out of range")
        tokens = tokens.astype(np.uint32)
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)

    def __len__(self):
        return int(self.tokens.size)

    def __eq__(self, other):
        if not isinstance(other, TokenStream):
            return NotImplemented
        return self.vocab_size == other.vocab_size and np.array_equal(self.tokens, other.tokens)

    __hash__ = None

    @classmethod
    def from_text(cls, text: str) -> "TokenStream":
        """Byte-level stream of a UTF-8 string (handy in tests and examples)."""
        return tokenize_bytes(text.encode("utf-8"))


def tokenize_bytes(raw: bytes) -> TokenStream:
    if len(raw) == 0:
        raise CorpusError("empty corpus")
    return TokenStream(np.frombuffer(bytes(raw), dtype=np.uint8), 256)


def save_token_stream(stream: TokenStream, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, stream.vocab_size, len(stream))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stream.tokens.astype("<u4").tobytes())


def load_token_stream(path) -> TokenStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        if len(data) >= 4 and data[:4] != MAGIC:
            raise CorpusError("unrecognized format")
        raise CorpusError("corrupt stream")
    magic, version, vocab, count = _HEADER.unpack_from(data)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise CorpusError("unrecognized format")
    body = memoryview(data)[_HEADER.size:]
    if len(body) != 4 * count:
        raise CorpusError("corrupt stream")
    tokens = np.frombuffer(body, dtype="<u4")
    if count and int(tokens.max()) >= vocab:
        raise CorpusError("token out of range")
    return TokenStream(tokens, vocab)


def prepare_corpus(stream: TokenStream, target: int) -> TokenStream:
    """First ``min(target, len(stream))`` tokens; preparation is plain prefix truncation."""
    if target < 2:
        raise CorpusError("prepared size must be at least 2 tokens")
    if target >= len(stream):
        return stream
    return TokenStream(stream.tokens[:target], stream.vocab_size)
