"""Online suffix automaton over integer token streams.

Construction runs as a numba kernel over flat arrays: a global open-addressing
hash table maps ``(state, token)`` to an edge slot, and each state keeps a singly
linked list of its edges so clones can copy them. After construction the edges
are compacted into CSR form (``offsets``, ``tokens``, ``targets``), sorted by
token id within each state, which is what every downstream consumer reads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from predspec.corpus_io import TokenStream
from predspec.spectrum import Spectrum

SAM_MAGIC = b"SPFA"
SAM_VERSION = 1
_SAM_HEADER = struct.Struct("<4sIQ")
_STATE_BYTES = 8 + 8 + 8 + 1 + 4
_PAIR_BYTES = 4 + 8


@numba.njit(cache=True, inline="always")
def _slot(key, mask):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    return np.int64((h >> np.uint64(17)) & np.uint64(mask))


@numba.njit(cache=True)
def _build_kernel(tokens, vocab):
    n = tokens.shape[0]
    max_states = 2 * n + 2
    max_edges = 3 * n + 8
    bits = 4
    while (1 << bits) < 2 * max_edges:
        bits += 1
    mask = (1 << bits) - 1

    length = np.zeros(max_states, np.int64)
    link = np.full(max_states, -1, np.int64)
    is_clone = np.zeros(max_states, np.uint8)
    head = np.full(max_states, -1, np.int64)

    e_src = np.empty(max_edges, np.int64)
    e_tok = np.empty(max_edges, np.int64)
    e_tgt = np.empty(max_edges, np.int64)
    e_next = np.empty(max_edges, np.int64)

    keys = np.full(mask + 1, -1, np.int64)
    vals = np.empty(mask + 1, np.int64)

    n_states = 1
    n_edges = 0
    last = 0
    for i in range(n):
        c = np.int64(tokens[i])
        cur = n_states
        n_states += 1
        length[cur] = length[last] + 1

        p = last
        q = -1
        while p != -1:
            key = p * vocab + c
            h = _slot(key, mask)
            found = -1
            while keys[h] != -1:
                if keys[h] == key:
                    found = vals[h]
                    break
                h = (h + 1) & mask
            if found != -1:
                q = e_tgt[found]
                break
            e = n_edges
            n_edges += 1
            e_src[e] = p
            e_tok[e] = c
            e_tgt[e] = cur
            e_next[e] = head[p]
            head[p] = e
            keys[h] = key
            vals[h] = e
            p = link[p]

        if p == -1:
            link[cur] = 0
        elif length[p] + 1 == length[q]:
            link[cur] = q
        else:
            clone = n_states
            n_states += 1
            length[clone] = length[p] + 1
            link[clone] = link[q]
            is_clone[clone] = 1
            e = head[q]
            while e != -1:
                f = n_edges
                n_edges += 1
                tok = e_tok[e]
                e_src[f] = clone
                e_tok[f] = tok
                e_tgt[f] = e_tgt[e]
                e_next[f] = head[clone]
                head[clone] = f
                key = clone * vocab + tok
                h = _slot(key, mask)
                while keys[h] != -1:
                    h = (h + 1) & mask
                keys[h] = key
                vals[h] = f
                e = e_next[e]
            while p != -1:
                key = p * vocab + c
                h = _slot(key, mask)
                while keys[h] != key:
                    h = (h + 1) & mask
                e = vals[h]
                if e_tgt[e] != q:
                    break
                e_tgt[e] = clone
                p = link[p]
            link[q] = clone
            link[cur] = clone
        last = cur

    return (
        length[:n_states].copy(),
        link[:n_states].copy(),
        is_clone[:n_states].copy(),
        e_src[:n_edges].copy(),
        e_tok[:n_edges].copy(),
        e_tgt[:n_edges].copy(),
    )


@numba.njit(cache=True)
def _order_by_length_desc(length):
    """Counting sort of state ids by decreasing ``length`` (ties by ascending id)."""
    top = 0
    for x in length:
        if x > top:
            top = x
    counts = np.zeros(top + 2, np.int64)
    for x in length:
        counts[top - x + 1] += 1
    for k in range(1, top + 2):
        counts[k] += counts[k - 1]
    order = np.empty(length.shape[0], np.int64)
    for s in range(length.shape[0]):
        b = top - length[s]
        order[counts[b]] = s
        counts[b] += 1
    return order


@numba.njit(cache=True)
def _propagate(order, link, is_clone):
    occ = np.zeros(link.shape[0], np.int64)
    for s in range(1, link.shape[0]):
        if is_clone[s] == 0:
            occ[s] = 1
    for s in order:
        if link[s] >= 0:
            occ[link[s]] += occ[s]
    occ[0] = 0
    return occ


class State(NamedTuple):
    len: int
    link: int
    transitions: dict
    occ: int | None
    is_clone: bool


@dataclass(frozen=True, eq=False)
class Automaton:
    """Suffix automaton in array form. State 0 is the root; ``link[0] == -1``.

    ``occ`` is ``None`` until :func:`compute_occurrences` has run.
    """

    length: np.ndarray
    link: np.ndarray
    is_clone: np.ndarray
    offsets: np.ndarray
    tokens: np.ndarray
    targets: np.ndarray
    occ: np.ndarray | None = None
    root: int = 0

    @property
    def n_states(self) -> int:
        return int(self.length.size)

    @property
    def n_transitions(self) -> int:
        return int(self.tokens.size)

    @property
    def source_length(self) -> int:
        return int(self.length.max())

    def out_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def edge_sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states, dtype=np.int64), self.out_degree())

    def transitions(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets[s], self.offsets[s + 1]
        return self.tokens[lo:hi], self.targets[lo:hi]

    def step(self, s: int, token: int) -> int:
        toks, tgts = self.transitions(s)
        i = int(np.searchsorted(toks, token))
        if i < toks.size and toks[i] == token:
            return int(tgts[i])
        return -1

    def walk(self, seq: Sequence[int]) -> int:
        """State reached by reading ``seq`` from the root, or -1."""
        s = self.root
        for t in seq:
            s = self.step(s, int(t))
            if s < 0:
                return -1
        return s

    def accepts(self, seq: Sequence[int]) -> bool:
        return self.walk(seq) >= 0

    def state(self, s: int) -> State:
        toks, tgts = self.transitions(s)
        return State(
            len=int(self.length[s]),
            link=int(self.link[s]),
            transitions=dict(zip(toks.tolist(), tgts.tolist())),
            occ=None if self.occ is None else int(self.occ[s]),
            is_clone=bool(self.is_clone[s]),
        )

    def require_occ(self) -> np.ndarray:
        if self.occ is None:
            raise ValueError("occurrences not computed; call compute_occurrences first")
        return self.occ


def build_sam(stream: TokenStream | Sequence[int]) -> Automaton:
    if isinstance(stream, TokenStream):
        tokens = stream.tokens.astype(np.int64)
        vocab = stream.vocab_size
    else:
        tokens = np.asarray(stream, dtype=np.int64)
        if tokens.size == 0:
            raise ValueError("empty corpus")
        vocab = int(tokens.max()) + 1
    length, link, is_clone, src, tok, tgt = _build_kernel(tokens, np.int64(vocab))
    order = np.lexsort((tok, src))
    offsets = np.zeros(length.size + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=length.size), out=offsets[1:])
    return Automaton(
        length=length,
        link=link,
        is_clone=is_clone.astype(bool),
        offsets=offsets,
        tokens=tok[order],
        targets=tgt[order],
    )


def compute_occurrences(a: Automaton) -> Automaton:
    """Fill ``occ`` with endpos sizes: seed non-clones with 1, sum up the link tree."""
    order = _order_by_length_desc(a.length)
    occ = _propagate(order, a.link, a.is_clone.astype(np.uint8))
    return replace(a, occ=occ)


def distinct_substring_count(a: Automaton) -> int:
    return int((a.length[1:] - a.length[a.link[1:]]).sum())


def state_masses(a: Automaton) -> np.ndarray:
    """mu(s) indexed by state id; the root's entry is 0."""
    occ = a.require_occ().astype(np.float64)
    return occ / occ[1:].sum()


def sort_descending(values: np.ndarray) -> np.ndarray:
    """Indices sorting ``values`` descending, ties kept in ascending index order."""
    return np.argsort(-values, kind="stable")


def state_mass_spectrum(a: Automaton) -> Spectrum:
    mu = state_masses(a)[1:]
    order = sort_descending(mu)
    return Spectrum(
        weights=mu[order],
        provenance="state-mass",
        normalized=True,
        source_size=a.source_length,
        state_ids=order + 1,
    )


# -- .sam serialization ---------------------------------------------------


@numba.njit(cache=True, inline="always")
def _put(buf, pos, value, nbytes):
    v = np.uint64(value)
    for k in range(nbytes):
        buf[pos + k] = np.uint8((v >> np.uint64(8 * k)) & np.uint64(0xFF))
    return pos + nbytes


@numba.njit(cache=True, inline="always")
def _get(buf, pos, nbytes):
    v = np.uint64(0)
    for k in range(nbytes):
        v |= np.uint64(buf[pos + k]) << np.uint64(8 * k)
    return v


@numba.njit(cache=True)
def _encode(length, link, occ, is_clone, offsets, tokens, targets, out, pos):
    for s in range(length.shape[0]):
        pos = _put(out, pos, length[s], 8)
        pos = _put(out, pos, link[s], 8)
        pos = _put(out, pos, occ[s], 8)
        pos = _put(out, pos, is_clone[s], 1)
        pos = _put(out, pos, offsets[s + 1] - offsets[s], 4)
        for e in range(offsets[s], offsets[s + 1]):
            pos = _put(out, pos, tokens[e], 4)
            pos = _put(out, pos, targets[e], 8)
    return pos


@numba.njit(cache=True)
def _decode(buf, pos, n_states):
    length = np.empty(n_states, np.int64)
    link = np.empty(n_states, np.int64)
    occ = np.empty(n_states, np.int64)
    is_clone = np.empty(n_states, np.uint8)
    offsets = np.zeros(n_states + 1, np.int64)
    cap = max(16, (buf.shape[0] - pos) // 12)
    tokens = np.empty(cap, np.int64)
    targets = np.empty(cap, np.int64)
    m = 0
    for s in range(n_states):
        if pos + 29 > buf.shape[0]:
            return False, length, link, occ, is_clone, offsets, tokens[:m].copy(), targets[:m].copy()
        length[s] = np.int64(_get(buf, pos, 8))
        link[s] = np.int64(_get(buf, pos + 8, 8))
        occ[s] = np.int64(_get(buf, pos + 16, 8))
        is_clone[s] = np.uint8(_get(buf, pos + 24, 1))
        cnt = np.int64(_get(buf, pos + 25, 4))
        pos += 29
        if pos + 12 * cnt > buf.shape[0] or m + cnt > cap:
            return False, length, link, occ, is_clone, offsets, tokens[:m].copy(), targets[:m].copy()
        for _ in range(cnt):
            tokens[m] = np.int64(_get(buf, pos, 4))
            targets[m] = np.int64(_get(buf, pos + 4, 8))
            pos += 12
            m += 1
        offsets[s + 1] = m
    ok = pos == buf.shape[0]
    return ok, length, link, occ, is_clone, offsets, tokens[:m].copy(), targets[:m].copy()


def save_automaton(a: Automaton, path) -> None:
    """Write the ``.sam`` layout: header, then per state (len, link, occ, is_clone, pairs)."""
    occ = a.require_occ()
    size = _SAM_HEADER.size + _STATE_BYTES * a.n_states + _PAIR_BYTES * a.n_transitions
    out = np.empty(size, dtype=np.uint8)
    out[: _SAM_HEADER.size] = np.frombuffer(
        _SAM_HEADER.pack(SAM_MAGIC, SAM_VERSION, a.n_states), dtype=np.uint8
    )
    end = _encode(
        a.length, a.link, occ, a.is_clone.astype(np.uint8),
        a.offsets, a.tokens, a.targets, out, _SAM_HEADER.size,
    )
    assert end == size
    Path(path).write_bytes(out.tobytes())


def load_automaton(path) -> Automaton:
    buf = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if buf.size < _SAM_HEADER.size:
        raise ValueError("unrecognized format")
    magic, version, n_states = _SAM_HEADER.unpack_from(bytes(buf[: _SAM_HEADER.size]))
    if magic != SAM_MAGIC or version != SAM_VERSION:
        raise ValueError("unrecognized format")
    ok, length, link, occ, is_clone, offsets, tokens, targets = _decode(
        buf, _SAM_HEADER.size, n_states
    )
    if not ok:
        raise ValueError("corrupt automaton file")
    return Automaton(
        length=length, link=link, is_clone=is_clone.astype(bool),
        offsets=offsets, tokens=tokens, targets=targets, occ=occ,
    )
