"""Next-token distributions, global-KL contributions and spectrum utilities.

A state's next-token count on token ``c`` is the occurrence count of its
``c``-successor, so ``P(next | s)`` is read straight off the automaton. Occurrences
that end at the final position of the stream have no successor and drop out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from predspec.automaton import Automaton
    from predspec.corpus_io import TokenStream

PROVENANCES = ("state-mass", "global-kl-raw", "global-kl-smoothed", "quotient")

DEFAULT_SMOOTHED_ALPHA = 0.5
DEFAULT_BINS_PER_DECADE = 20


class BaselineSupportError(ValueError):
    def __init__(self, msg="baseline support violation"):
        super().__init__(msg)


class DegenerateSpectrumError(ValueError):
    def __init__(self, msg="degenerate spectrum"):
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Sparse distribution: ``tokens`` ascending, ``probs`` aligned with them."""

    tokens: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tokens", np.asarray(self.tokens, dtype=np.int64))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        keys = sorted(d)
        return cls(np.array(keys, dtype=np.int64), np.array([d[k] for k in keys], dtype=np.float64))

    @classmethod
    def from_counts(cls, tokens, counts) -> "Distribution":
        counts = np.asarray(counts, dtype=np.float64)
        return cls(tokens, counts / counts.sum())

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs))

    def as_dict(self) -> dict:
        return dict(zip(self.tokens.tolist(), self.probs.tolist()))

    def prob(self, token: int) -> float:
        i = int(np.searchsorted(self.tokens, token))
        if i < self.tokens.size and self.tokens[i] == token:
            return float(self.probs[i])
        return 0.0

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=np.float64)
        out[self.tokens] = self.probs
        return out


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Descending weights. ``ranks`` is ``None`` for plain per-rank spectra (ranks 1..M);
    log-binned spectra carry the geometric-mean rank of each bin instead."""

    weights: np.ndarray
    provenance: str = "global-kl-raw"
    normalized: bool = False
    source_size: int = 0
    ranks: np.ndarray | None = None
    state_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if self.ranks is not None:
            object.__setattr__(self, "ranks", np.asarray(self.ranks, dtype=np.float64))

    def __len__(self):
        return int(self.weights.size)

    @property
    def rank_values(self) -> np.ndarray:
        if self.ranks is not None:
            return self.ranks
        return np.arange(1, self.weights.size + 1, dtype=np.float64)

    @property
    def total(self) -> float:
        return math.fsum(self.weights.tolist())

    @cached_property
    def tails(self) -> np.ndarray:
        """``tails[K] = sum_{k > K} w_k`` for K = 0..M, accumulated from the small end."""
        out = np.zeros(self.weights.size + 1, dtype=np.float64)
        np.cumsum(self.weights[::-1], out=out[-2::-1])
        return out


# -- distributions ---------------------------------------------------------


def global_next_distribution(stream: "TokenStream", alpha: float = 0.0) -> Distribution:
    """Unigram next-token baseline; ``alpha > 0`` adds add-alpha smoothing over the vocabulary."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    counts = np.bincount(stream.tokens, minlength=stream.vocab_size).astype(np.float64)
    n = len(stream)
    if alpha == 0:
        present = np.flatnonzero(counts)
        return Distribution(present, counts[present] / n)
    probs = (counts + alpha) / (n + alpha * stream.vocab_size)
    return Distribution(np.arange(stream.vocab_size), probs)


def state_next_distribution(a: "Automaton", state: int) -> Distribution | None:
    """``P(next | s)`` from successor occurrence counts; ``None`` if ``s`` has no transitions."""
    if state == a.root:
        raise ValueError("the root state has no next-token distribution")
    occ = a.require_occ()
    toks, tgts = a.transitions(state)
    if toks.size == 0:
        return None
    return Distribution.from_counts(toks, occ[tgts])


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """KL(p || q) in nats."""
    mask = p.probs > 0
    pt, pp = p.tokens[mask], p.probs[mask]
    idx = np.searchsorted(q.tokens, pt)
    idx_clipped = np.minimum(idx, max(q.tokens.size - 1, 0))
    if q.tokens.size == 0:
        raise BaselineSupportError()
    hit = q.tokens[idx_clipped] == pt
    qq = np.where(hit, q.probs[idx_clipped], 0.0)
    if np.any(qq <= 0):
        raise BaselineSupportError()
    return float(np.sum(pp * np.log(pp / qq)))


def edge_kernels(a: "Automaton") -> tuple[np.ndarray, np.ndarray]:
    """Per-edge source state and conditional probability ``P(token | source)``."""
    occ = a.require_occ()
    src = a.edge_sources()
    counts = occ[a.targets].astype(np.float64)
    totals = np.bincount(src, weights=counts, minlength=a.n_states)
    return src, counts / totals[src]


def state_kl(a: "Automaton", baseline: Distribution) -> np.ndarray:
    """KL(P(next|s) || baseline) for every state (0 where ``s`` has no transitions)."""
    src, p = edge_kernels(a)
    size = max(int(a.tokens.max(initial=0)), int(baseline.tokens.max(initial=0))) + 1
    q = baseline.dense(size)[a.tokens]
    if np.any(q <= 0):
        raise BaselineSupportError()
    kl = np.bincount(src, weights=p * np.log(p / q), minlength=a.n_states)
    # summation rounding can push an exact zero slightly negative
    return np.maximum(kl, 0.0)


def global_kl_spectrum(a: "Automaton", baseline: Distribution) -> Spectrum:
    from predspec.automaton import sort_descending, state_masses

    contrib = (state_masses(a) * state_kl(a, baseline))[1:]
    order = sort_descending(contrib)
    return Spectrum(
        weights=contrib[order],
        provenance="global-kl-raw",
        source_size=a.source_length,
        state_ids=order + 1,
    )


# -- spectrum transforms ---------------------------------------------------


def normalize_spectrum(sp: Spectrum) -> Spectrum:
    if sp.normalized:
        return sp
    total = sp.total
    if not total > 0:
        raise DegenerateSpectrumError()
    return replace(sp, weights=sp.weights / total, normalized=True)


def tail_mass(sp: Spectrum, K: int) -> float:
    if not sp.normalized:
        raise ValueError("tail mass requires a normalized spectrum")
    if K < 0 or K > len(sp):
        raise IndexError("rank out of range")
    return float(sp.tails[K])


def smooth_spectrum(
    sp: Spectrum, bins_per_decade: int = DEFAULT_BINS_PER_DECADE, per_rank: bool = False
) -> Spectrum:
    """Log-binned averaging over rank.

    Ranks in ``[10^(i/b), 10^((i+1)/b))`` share a bin. By default each bin becomes one
    point at its geometric-mean rank carrying the mean weight. With ``per_rank`` every
    rank keeps its position but takes its bin's mean weight, which preserves the total
    and the length M (the form frontier matching needs).
    """
    if len(sp) == 0:
        raise ValueError("cannot smooth an empty spectrum")
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    ranks = sp.rank_values
    bin_of = np.floor(bins_per_decade * np.log10(ranks) + 1e-9).astype(np.int64)
    _, inverse, members = np.unique(bin_of, return_inverse=True, return_counts=True)
    mean_w = np.bincount(inverse, weights=sp.weights) / members
    if per_rank:
        return replace(
            sp, weights=mean_w[inverse], provenance="global-kl-smoothed", state_ids=None
        )
    geo_rank = np.exp(np.bincount(inverse, weights=np.log(ranks)) / members)
    order = np.argsort(-mean_w, kind="stable")
    return replace(
        sp,
        weights=mean_w[order],
        ranks=geo_rank[order],
        provenance="global-kl-smoothed",
        normalized=False,
        state_ids=None,
    )


# -- CSV -------------------------------------------------------------------


def write_spectrum_csv(sp: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "weight"])
        if sp.ranks is None:
            for k, x in enumerate(sp.weights.tolist(), start=1):
                w.writerow([k, repr(x)])
        else:
            for r, x in zip(sp.ranks.tolist(), sp.weights.tolist()):
                w.writerow([repr(r), repr(x)])


def read_spectrum_csv(path, provenance: str = "global-kl-raw") -> Spectrum:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["rank", "weight"]:
            raise ValueError(f"{path}: expected header 'rank,weight'")
        rows = [(float(r), float(x)) for r, x in reader]
    ranks = np.array([r for r, _ in rows])
    weights = np.array([x for _, x in rows])
    if np.array_equal(ranks, np.arange(1, len(rows) + 1)):
        ranks = None
    if np.any(np.diff(weights) > 0):
        raise ValueError(f"{path}: weights are not sorted descending")
    normalized = ranks is None and len(rows) > 0 and abs(math.fsum(weights.tolist()) - 1.0) <= 1e-9
    return Spectrum(weights, provenance=provenance, normalized=normalized, ranks=ranks)
