#!/usr/bin/env python3
"""Time and size a suffix-automaton build on a byte-level corpus.

Without --corpus a seeded synthetic byte stream is used: a 32-state hidden chain, each
state emitting from its own random 48-byte subset. Prints one JSON object.
"""

import argparse
import json
import resource
import time

import numpy as np

from predspec import TokenStream, build_sam, compute_occurrences, load_token_stream, tokenize_bytes
from predspec.synth import MarkovSpec, generate_markov_corpus


def synthetic_bytes(length: int, seed: int = 0) -> TokenStream:
    rng = np.random.default_rng(seed)
    hidden = 32
    T = rng.dirichlet(np.full(hidden, 0.3), size=hidden)
    E = np.zeros((hidden, 256))
    for h in range(hidden):
        support = rng.choice(256, size=48, replace=False)
        E[h, support] = rng.dirichlet(np.full(48, 0.5))
    return generate_markov_corpus(MarkovSpec(T, E, 256, seed=seed), length)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--length", type=int, default=2_000_000)
    ap.add_argument("--corpus", help="a .toks file or any raw file (read as bytes)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if args.corpus is None:
        stream = synthetic_bytes(args.length, args.seed)
    elif args.corpus.endswith(".toks"):
        stream = load_token_stream(args.corpus)
    else:
        with open(args.corpus, "rb") as fh:
            stream = tokenize_bytes(fh.read())

    # warm the JIT so the timing below is the build alone
    compute_occurrences(build_sam(TokenStream([0, 1, 0], 2)))

    t0 = time.perf_counter()
    a = build_sam(stream)
    t1 = time.perf_counter()
    a = compute_occurrences(a)
    t2 = time.perf_counter()
    n = len(stream)
    print(json.dumps({
        "n_tokens": n,
        "states": a.n_states,
        "transitions": a.n_transitions,
        "state_bound": 2 * n - 1,
        "transition_bound": 3 * n - 4,
        "build_s": round(t1 - t0, 3),
        "occ_s": round(t2 - t1, 3),
        # ru_maxrss is reported in KiB on Linux
        "peak_rss_mb": round(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024, 1),
    }))


if __name__ == "__main__":
    main()
