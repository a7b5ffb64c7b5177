"""``predspec`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from predspec import corpus_io
from predspec.automaton import (
    build_sam,
    compute_occurrences,
    distinct_substring_count,
    load_automaton,
    save_automaton,
)
from predspec.fits import (
    FitError,
    effective_cutoff,
    frontier_fit,
    frontier_report,
    read_loss_table,
    scaling_slope,
    tail_slope,
    write_loss_table,
)
from predspec.quotient import DEFAULT_EPSILON, kernel_quotient, quotient_spectrum
from predspec.report import RunConfig, run_report
from predspec.spectrum import (
    DEFAULT_SMOOTHED_ALPHA,
    global_kl_spectrum,
    global_next_distribution,
    normalize_spectrum,
    read_spectrum_csv,
    smooth_spectrum,
    write_spectrum_csv,
)
from predspec.synth import MarkovSpec, generate_markov_corpus, planted_frontier_losses

log = logging.getLogger("predspec")

_SUFFIX = {"k": 1e3, "m": 1e6, "g": 1e9}


def parse_count(text: str) -> float:
    """``300``, ``50k``, ``1.5M`` -> float."""
    t = text.strip().lower()
    if t and t[-1] in _SUFFIX:
        return float(t[:-1]) * _SUFFIX[t[-1]]
    return float(t)


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return parse_count(lo), parse_count(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like LO:HI, got {text!r}")


def _read_int_tokens(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    return np.array(path.read_text().split(), dtype=np.int64)


def cmd_ingest(args):
    src = Path(args.input)
    if args.bytes:
        stream = corpus_io.tokenize_bytes(src.read_bytes())
    elif src.suffix == ".toks":
        stream = corpus_io.load_token_stream(src)
    else:
        stream = corpus_io.TokenStream(_read_int_tokens(src), args.vocab_size)
    if args.truncate is not None:
        stream = corpus_io.prepare_corpus(stream, int(parse_count(args.truncate)))
    corpus_io.save_token_stream(stream, args.output)
    print(f"wrote {len(stream)} tokens (vocab {stream.vocab_size}) to {args.output}")


def cmd_sam_build(args):
    stream = corpus_io.load_token_stream(args.corpus)
    a = compute_occurrences(build_sam(stream))
    if args.output:
        save_automaton(a, args.output)
    if args.stats or not args.output:
        print(f"tokens\t{len(stream)}")
        print(f"states\t{a.n_states}")
        print(f"transitions\t{a.n_transitions}")
        print(f"distinct_substrings\t{distinct_substring_count(a)}")


def _load_pair(args):
    a = load_automaton(args.sam)
    stream = corpus_io.load_token_stream(args.corpus)
    if a.source_length != len(stream):
        raise SystemExit("error: automaton and corpus lengths differ")
    return a, stream


def cmd_spectrum(args):
    a, stream = _load_pair(args)
    sp = global_kl_spectrum(a, global_next_distribution(stream, args.alpha))
    if args.normalize:
        sp = normalize_spectrum(sp)
    if args.smooth:
        sp = smooth_spectrum(sp, args.smooth)
    write_spectrum_csv(sp, args.output)
    print(f"wrote {len(sp)} spectrum points to {args.output}")


def cmd_quotient(args):
    a, stream = _load_pair(args)
    q = kernel_quotient(a, args.epsilon)
    sp = quotient_spectrum(q, global_next_distribution(stream, args.alpha))
    write_spectrum_csv(sp, args.output)
    if args.clusters:
        q.dump(args.clusters)
    print(f"{len(q)} clusters from {a.n_states - 1} states; wrote {args.output}")


def cmd_fit_tail(args):
    sp = read_spectrum_csv(args.spectrum)
    fit = tail_slope(sp, args.window)
    print(json.dumps({**fit.to_json(), "n_dropped_zero": fit.n_dropped}, indent=2))


def _spectrum_for(directory: Path, dataset: str):
    for name in (f"{dataset}.csv", f"{dataset}.raw.csv"):
        if (directory / name).is_file():
            return read_spectrum_csv(directory / name)
    return None


def cmd_frontier(args):
    curves = read_loss_table(args.losses)
    directory = Path(args.spectrum_dir)
    traces, missing = [], {}
    for c in curves:
        sp = _spectrum_for(directory, c.dataset)
        if sp is None:
            missing[c.dataset] = "missing spectrum"
            continue
        if args.smooth:
            sp = smooth_spectrum(sp, args.smooth, per_rank=True)
        traces.append(effective_cutoff(normalize_spectrum(sp), c))
    fits = frontier_fit(traces, pooled=True, interior_only=args.interior_only)
    report = frontier_report(traces, fits)
    for name, msg in missing.items():
        report[name] = {"error": msg}
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(f"{'fit':<28}{'slope':>10}{'R^2':>10}")
    for name, entry in report.items():
        if "slope" in entry:
            print(f"{name:<28}{entry['slope']:>10.3f}{entry['r_squared']:>10.3f}")
        else:
            print(f"{name:<28}{entry['error']:>20}")


def cmd_slopes(args):
    print(f"{'dataset':<24}{'slope':>10}{'intercept':>12}{'R^2':>8}")
    for c in read_loss_table(args.losses):
        try:
            f = scaling_slope(c)
            print(f"{c.dataset:<24}{f.slope:>10.4f}{f.intercept:>12.4f}{f.r_squared:>8.3f}")
        except FitError as exc:
            print(f"{c.dataset:<24}  error: {exc}")


def cmd_synth_markov(args):
    spec = MarkovSpec.load(args.spec)
    stream = generate_markov_corpus(spec, int(parse_count(args.length)))
    corpus_io.save_token_stream(stream, args.output)
    print(f"wrote {len(stream)} tokens to {args.output}")


def cmd_synth_frontier(args):
    sp = normalize_spectrum(read_spectrum_csv(args.spectrum))
    sizes = [parse_count(x) for x in args.sizes.split(",")]
    curve = planted_frontier_losses(sp, args.gamma, args.scale, sizes, args.floor, args.dataset)
    write_loss_table([curve], args.output)
    print(f"wrote {len(curve)} planted losses for {args.dataset} to {args.output}")


def cmd_report(args):
    cfg = RunConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    pooled = run_report(cfg, read_loss_table(args.losses), args.out, losses_path=args.losses)
    for row in pooled["table"]:
        slope = "-" if row["slope"] is None else f"{row['slope']:.3f}"
        r2 = "-" if row["r_squared"] is None else f"{row['r_squared']:.3f}"
        print(f"{row['fit']:<36}{slope:>10}{r2:>10}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predspec", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="convert a corpus to the .toks format")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--bytes", action="store_true", help="byte-level tokens (vocab 256)")
    s.add_argument("--vocab-size", type=int, default=50257,
                   help="vocabulary for whitespace-separated integer input (default: GPT-2)")
    s.add_argument("--truncate", help="keep only the first N tokens (accepts 1000k, 1M)")
    s.set_defaults(func=cmd_ingest)

    sam = sub.add_parser("sam", help="suffix automaton tools")
    samsub = sam.add_subparsers(dest="sam_command", required=True)
    s = samsub.add_parser("build")
    s.add_argument("--corpus", required=True)
    s.add_argument("--output")
    s.add_argument("--stats", action="store_true")
    s.set_defaults(func=cmd_sam_build)

    s = sub.add_parser("spectrum", help="global-KL predictive contribution spectrum")
    s.add_argument("--sam", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--alpha", type=float, nargs="?", default=0.0, const=DEFAULT_SMOOTHED_ALPHA,
                   help=f"add-alpha baseline smoothing (bare flag: {DEFAULT_SMOOTHED_ALPHA})")
    s.add_argument("--smooth", type=int, metavar="BINS", help="log-bin the spectrum (bins per decade)")
    s.add_argument("--normalize", action="store_true")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("quotient", help="kernel-quotient spectrum")
    s.add_argument("--sam", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--alpha", type=float, nargs="?", default=0.0, const=DEFAULT_SMOOTHED_ALPHA)
    s.add_argument("--output", required=True)
    s.add_argument("--clusters", help="write cluster membership JSON here")
    s.set_defaults(func=cmd_quotient)

    s = sub.add_parser("fit-tail", help="log-log tail slope of a spectrum CSV")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--window", required=True, type=parse_window, help="LO:HI ranks, e.g. 1k:100k")
    s.set_defaults(func=cmd_fit_tail)

    s = sub.add_parser("frontier", help="effective cutoff K(N) and frontier fits")
    s.add_argument("--spectrum-dir", required=True)
    s.add_argument("--losses", required=True)
    s.add_argument("--smooth", type=int, metavar="BINS")
    s.add_argument("--interior-only", action="store_true")
    s.add_argument("--output")
    s.set_defaults(func=cmd_frontier)

    s = sub.add_parser("slopes", help="data-scaling slopes from a loss table")
    s.add_argument("--losses", required=True)
    s.set_defaults(func=cmd_slopes)

    synth = sub.add_parser("synth", help="synthetic fixtures")
    synthsub = synth.add_subparsers(dest="synth_command", required=True)
    s = synthsub.add_parser("markov")
    s.add_argument("--spec", required=True)
    s.add_argument("--length", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_markov)
    s = synthsub.add_parser("frontier")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--scale", type=float, required=True)
    s.add_argument("--sizes", required=True, help="comma-separated, e.g. 100k,200k,500k,1M,2M")
    s.add_argument("--floor", type=float, required=True)
    s.add_argument("--dataset", default="planted")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth_frontier)

    s = sub.add_parser("report", help="full analysis bundle")
    s.add_argument("--config", required=True)
    s.add_argument("--losses", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (corpus_io.CorpusError, FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
