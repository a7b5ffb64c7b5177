#!/usr/bin/env python3
"""Build a small synthetic workspace and run the full report on it.

Writes OUT/corpora/*.toks, OUT/run.json and OUT/losses.csv, then OUT/report/. Each dataset
is a seeded Markov corpus; its loss curve is planted on its own global-KL spectrum so that
the inferred cutoffs are K = (1, ~M^(1/3), ~M^(2/3), M) at N = N0 * K^(1/gamma).
"""

import argparse
import json
from pathlib import Path

import numpy as np

from predspec import (
    build_sam,
    compute_occurrences,
    global_kl_spectrum,
    global_next_distribution,
    normalize_spectrum,
    save_token_stream,
)
from predspec.cli import main as cli
from predspec.fits import LossCurve, write_loss_table
from predspec.synth import MarkovSpec, generate_markov_corpus


def chain(seed: int, hidden: int = 3, vocab: int = 12, stay: float = 0.8) -> MarkovSpec:
    rng = np.random.default_rng(seed)
    T = np.full((hidden, hidden), (1 - stay) / (hidden - 1))
    np.fill_diagonal(T, stay)
    E = rng.dirichlet(np.full(vocab, 0.4), size=hidden)
    return MarkovSpec(T, E, vocab, seed=seed)


def planted_losses(name, stream, gamma, n0, floor):
    a = compute_occurrences(build_sam(stream))
    sp = normalize_spectrum(global_kl_spectrum(a, global_next_distribution(stream)))
    positive = int(np.count_nonzero(sp.weights > 1e-9))
    ks = [1, max(2, round(positive ** (1 / 3))), round(positive ** (2 / 3)), len(sp)]
    losses = [floor + 1.0] + [floor + float(sp.tails[k]) for k in ks[1:]]
    return LossCurve(name, [n0 * k ** (1 / gamma) for k in ks], losses)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--datasets", type=int, default=3)
    ap.add_argument("--length", type=int, default=20_000)
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    out = Path(args.out)
    (out / "corpora").mkdir(parents=True, exist_ok=True)
    corpora, curves = {}, []
    for i in range(args.datasets):
        name = f"markov{i}"
        stream = generate_markov_corpus(chain(seed=100 + i, stay=0.6 + 0.1 * i), args.length)
        save_token_stream(stream, out / "corpora" / f"{name}.toks")
        corpora[name] = f"corpora/{name}.toks"
        curves.append(planted_losses(name, stream, args.gamma, n0=1e4, floor=2.5))
    write_loss_table(curves, out / "losses.csv")
    config = {
        "corpora": corpora,
        "prepared_size": args.length,
        "tail_windows": [[10, 1000], [30, 3000]],
        "quotient_epsilon": 0.05,
    }
    (out / "run.json").write_text(json.dumps(config, indent=2) + "\n")
    return cli([
        "report", "--config", str(out / "run.json"), "--losses", str(out / "losses.csv"),
        "--out", str(out / "report"), "--workers", str(args.workers),
    ])


if __name__ == "__main__":
    raise SystemExit(main())
