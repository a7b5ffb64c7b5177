"""Synthetic fixtures: seeded Markov corpora and loss curves with a planted frontier.

MarkovSpec JSON::

    {
      "vocab_size": 4,
      "transition": [[0.9, 0.1], [0.2, 0.8]],
      "emission": [{"0": 0.5, "1": 0.5}, [0, 0, 0.5, 0.5]],
      "seed": 7
    }

``transition`` is row-stochastic (n_states x n_states). Each ``emission`` row is either
a dense list of length ``vocab_size`` or a ``{token: probability}`` object. The walk
starts in state 0 and, per step, emits a token from the current state then moves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from predspec.corpus_io import TokenStream
from predspec.fits import LossCurve
from predspec.spectrum import Spectrum, normalize_spectrum


@dataclass
class MarkovSpec:
    transition: np.ndarray
    emission: np.ndarray
    vocab_size: int
    seed: int = 0
    n_states: int = field(init=False)

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.emission = np.asarray(self.emission, dtype=np.float64)
        k = self.transition.shape[0]
        if self.transition.shape != (k, k) or k == 0:
            raise ValueError("transition matrix must be square and non-empty")
        if self.emission.shape != (k, self.vocab_size):
            raise ValueError("emission must have shape (n_states, vocab_size)")
        for name, m in (("transition", self.transition), ("emission", self.emission)):
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                raise ValueError(f"{name} rows must be probability vectors")
        self.n_states = k

    @classmethod
    def from_json(cls, obj: dict) -> "MarkovSpec":
        vocab = int(obj["vocab_size"])
        rows = []
        for row in obj["emission"]:
            if isinstance(row, dict):
                dense = np.zeros(vocab)
                for t, p in row.items():
                    dense[int(t)] = p
                rows.append(dense)
            else:
                rows.append(np.asarray(row, dtype=np.float64))
        return cls(obj["transition"], np.array(rows), vocab, int(obj.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "MarkovSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "transition": self.transition.tolist(),
            "emission": [
                {str(t): float(row[t]) for t in np.flatnonzero(row)} for row in self.emission
            ],
            "seed": self.seed,
        }


@numba.njit(cache=True)
def _walk(trans_cdf, emit_cdf, u):
    n = u.shape[0]
    out = np.empty(n, np.int64)
    state = 0
    for i in range(n):
        out[i] = min(np.searchsorted(emit_cdf[state], u[i, 0], side="right"), emit_cdf.shape[1] - 1)
        state = min(np.searchsorted(trans_cdf[state], u[i, 1], side="right"), trans_cdf.shape[1] - 1)
    return out


def generate_markov_corpus(spec: MarkovSpec, length: int) -> TokenStream:
    if length < 2:
        raise ValueError("length must be at least 2")
    rng = np.random.default_rng(spec.seed)
    u = rng.random((length, 2))
    tokens = _walk(np.cumsum(spec.transition, axis=1), np.cumsum(spec.emission, axis=1), u)
    return TokenStream(tokens, spec.vocab_size)


def power_law_spectrum(M: int, exponent: float) -> Spectrum:
    """Normalized ``w_k proportional to k^exponent`` for k = 1..M (exponent < 0 for a decaying tail)."""
    w = np.arange(1, M + 1, dtype=np.float64) ** exponent
    return normalize_spectrum(Spectrum(w, provenance="global-kl-raw"))


def planted_cutoffs(M: int, gamma: float, scale: float, sizes) -> np.ndarray:
    """``K*(N) = clamp(round(scale * N^gamma), 1, M)``, rounding half up."""
    raw = scale * np.asarray(sizes, dtype=np.float64) ** gamma
    return np.clip(np.floor(raw + 0.5), 1, M).astype(np.int64)


def planted_frontier_losses(
    sp: Spectrum,
    gamma: float,
    scale: float,
    sizes,
    floor: float,
    dataset: str = "planted",
) -> LossCurve:
    """Loss curve ``L(N) = floor + T(K*(N))`` realizing a planted frontier exactly."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sizes = np.asarray(sizes, dtype=np.float64)
    if np.any(np.diff(sizes) <= 0):
        raise ValueError("sizes must be strictly increasing")
    sp = normalize_spectrum(sp)
    ks = planted_cutoffs(len(sp), gamma, scale, sizes)
    return LossCurve(dataset, sizes, floor + sp.tails[ks])


def scale_for_first_rank(first_size: float, gamma: float, rank: float = 1.0) -> float:
    """Scale c that puts K*(first_size) at ``rank``."""
    return rank / math.pow(first_size, gamma)
