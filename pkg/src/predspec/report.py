"""End-to-end analysis bundle: spectra, tail slopes, scaling slopes, frontier traces and fits.

Bundle layout under the output directory::

    manifest.json                 config, input and output sha256 hashes
    fits.json                     per-dataset fits and recorded errors
    pooled.json                   pooled frontier fits, cross-dataset regressions, table rows
    table.csv                     fit,slope,r_squared (frontier summary table)
    slopes.csv                    scaling slope vs tail slopes, one row per dataset
    scaling.csv                   the loss curves that were analysed
    spectra/<ds>.{raw,smooth,mass}.csv   (+ .quotient.csv when quotient_epsilon is set)
    frontier/<ds>.csv             n,loss,delta_l,ratio,k_raw,k_smooth
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from predspec.automaton import build_sam, compute_occurrences, state_mass_spectrum
from predspec.corpus_io import load_token_stream, prepare_corpus
from predspec.fits import (
    FitError,
    LossCurve,
    cross_dataset_regression,
    effective_cutoff,
    frontier_fit,
    scaling_slope,
    tail_slope,
)
from predspec.quotient import kernel_quotient, quotient_spectrum
from predspec.spectrum import (
    DEFAULT_BINS_PER_DECADE,
    Spectrum,
    global_kl_spectrum,
    global_next_distribution,
    normalize_spectrum,
    smooth_spectrum,
    write_spectrum_csv,
)

log = logging.getLogger(__name__)

DEFAULT_TAIL_WINDOWS = ((1000, 100000), (300, 50000))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpora: dict[str, str]
    prepared_size: int = 1_000_000
    alpha: float = 0.0
    smooth_bins: int = DEFAULT_BINS_PER_DECADE
    tail_windows: list[tuple[float, float]] = field(default_factory=lambda: [tuple(w) for w in DEFAULT_TAIL_WINDOWS])
    quotient_epsilon: float | None = None
    interior_only: bool = False
    workers: int = 1

    def __post_init__(self):
        self.tail_windows = [tuple(float(x) for x in w) for w in self.tail_windows]
        if self.prepared_size < 2:
            raise ConfigError("prepared_size must be at least 2")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.smooth_bins < 1:
            raise ConfigError("smooth_bins must be >= 1")
        for lo, hi in self.tail_windows:
            if not 0 < lo < hi:
                raise ConfigError(f"malformed tail window ({lo}, {hi})")
        if self.quotient_epsilon is not None and self.quotient_epsilon < 0:
            raise ConfigError("quotient_epsilon must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        with open(path) as fh:
            obj = json.load(fh)
        if "corpora" not in obj:
            raise ConfigError("config needs a 'corpora' mapping of dataset -> .toks path")
        base = path.parent
        obj["corpora"] = {k: str(base / v) for k, v in obj["corpora"].items()}
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def manifest_view(self) -> dict:
        # worker count is execution detail; leaving it out keeps bundles comparable
        d = asdict(self)
        d.pop("workers")
        d["tail_windows"] = [list(w) for w in self.tail_windows]
        return d


def window_label(window) -> str:
    return "{}:{}".format(*(int(x) if float(x).is_integer() else x for x in window))


@dataclass
class DatasetSpectra:
    name: str
    n_tokens: int
    n_states: int
    raw: Spectrum
    smooth_binned: Spectrum
    smooth_per_rank: Spectrum
    mass: Spectrum
    quotient: Spectrum | None


def analyze_corpus(name: str, path: str, cfg: RunConfig) -> DatasetSpectra:
    stream = prepare_corpus(load_token_stream(path), cfg.prepared_size)
    a = compute_occurrences(build_sam(stream))
    baseline = global_next_distribution(stream, cfg.alpha)
    raw = global_kl_spectrum(a, baseline)
    quotient = None
    if cfg.quotient_epsilon is not None:
        quotient = quotient_spectrum(kernel_quotient(a, cfg.quotient_epsilon), baseline)
    return DatasetSpectra(
        name=name,
        n_tokens=len(stream),
        n_states=a.n_states,
        raw=raw,
        smooth_binned=smooth_spectrum(raw, cfg.smooth_bins),
        smooth_per_rank=smooth_spectrum(raw, cfg.smooth_bins, per_rank=True),
        mass=state_mass_spectrum(a),
        quotient=quotient,
    )


def _analyze_safe(args):
    name, path, cfg = args
    try:
        return analyze_corpus(name, path, cfg)
    except (OSError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _fit_or_error(fn, *args):
    try:
        return fn(*args).to_json()
    except FitError as exc:
        return {"error": str(exc)}


def run_report(cfg: RunConfig, losses: list[LossCurve], out_dir, losses_path=None) -> dict:
    """Run the full analysis and write the bundle; returns the pooled summary."""
    out = Path(out_dir)
    names = [c.dataset for c in losses]
    todo = [n for n in names if n in cfg.corpora]
    if not todo:
        raise ConfigError("no dataset appears in both the loss table and the config corpora")
    errors: dict[str, str] = {n: "missing corpus" for n in names if n not in cfg.corpora}

    jobs = [(n, cfg.corpora[n], cfg) for n in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx) as pool:
            results = list(pool.map(_analyze_safe, jobs))
    else:
        results = [_analyze_safe(j) for j in jobs]

    spectra: dict[str, DatasetSpectra] = {}
    for n, res in zip(todo, results):
        if isinstance(res, str):
            errors[n] = res
            log.warning("%s: %s", n, res)
        else:
            spectra[n] = res

    (out / "spectra").mkdir(parents=True, exist_ok=True)
    (out / "frontier").mkdir(parents=True, exist_ok=True)
    curves = {c.dataset: c for c in losses}

    fits: dict[str, dict] = {}
    traces = {"raw": [], "smooth": []}
    tail = {"raw": {}, "smooth": {}}
    scaling: dict[str, float] = {}
    for n in names:
        entry: dict = {}
        curve = curves[n]
        sc = _fit_or_error(scaling_slope, curve)
        entry["scaling_slope"] = sc
        if "slope" in sc:
            scaling[n] = sc["slope"]
        if n not in spectra:
            entry["error"] = errors[n]
            fits[n] = entry
            continue
        ds = spectra[n]
        entry["n_tokens"] = ds.n_tokens
        entry["n_states"] = ds.n_states
        entry["spectrum_length"] = len(ds.raw)

        write_spectrum_csv(ds.raw, out / "spectra" / f"{n}.raw.csv")
        write_spectrum_csv(ds.smooth_binned, out / "spectra" / f"{n}.smooth.csv")
        write_spectrum_csv(ds.mass, out / "spectra" / f"{n}.mass.csv")
        if ds.quotient is not None:
            write_spectrum_csv(ds.quotient, out / "spectra" / f"{n}.quotient.csv")

        entry["tail_slopes"] = {}
        for variant, sp in (("raw", ds.raw), ("smooth", ds.smooth_binned)):
            per_window = {}
            for w in cfg.tail_windows:
                res = _fit_or_error(tail_slope, sp, w)
                per_window[window_label(w)] = res
                if "slope" in res:
                    tail[variant].setdefault(window_label(w), {})[n] = res["slope"]
            entry["tail_slopes"][variant] = per_window

        entry["frontier"] = {}
        trace_by_variant = {}
        for variant, sp in (("raw", ds.raw), ("smooth", ds.smooth_per_rank)):
            try:
                tr = effective_cutoff(normalize_spectrum(sp), curve)
            except ValueError as exc:
                entry["frontier"][variant] = {"error": str(exc)}
                continue
            traces[variant].append(tr)
            trace_by_variant[variant] = tr
        _write_frontier_csv(out / "frontier" / f"{n}.csv", curve, trace_by_variant)
        fits[n] = entry

    pooled: dict = {"frontier": {}, "cross_dataset": {}}
    for variant in ("raw", "smooth"):
        ff = frontier_fit(traces[variant], pooled=True, interior_only=cfg.interior_only)
        for tr in traces[variant]:
            if tr.dataset in ff.per_dataset:
                fits[tr.dataset]["frontier"][variant] = ff.per_dataset[tr.dataset].to_json()
            else:
                fits[tr.dataset]["frontier"][variant] = {"error": ff.errors[tr.dataset]}
            fits[tr.dataset]["frontier"][variant]["trace"] = [e.to_json() for e in tr.entries]
        pooled["frontier"][variant] = (
            ff.pooled.to_json() if ff.pooled is not None else {"error": ff.errors.get("pooled", "no fit")}
        )
        for label, xs in tail[variant].items():
            common = {k: v for k, v in xs.items() if k in scaling}
            ys = {k: scaling[k] for k in common}
            pooled["cross_dataset"][f"{variant} {label}"] = _fit_or_error(
                cross_dataset_regression, common, ys
            )
    pooled["interior_only"] = cfg.interior_only
    pooled["table"] = _table_rows(names, pooled, fits)

    _dump_json(fits, out / "fits.json")
    _dump_json(pooled, out / "pooled.json")
    _write_table(out / "table.csv", pooled["table"])
    _write_slopes(out / "slopes.csv", names, fits, cfg)
    _write_scaling(out / "scaling.csv", losses)
    _write_manifest(out, cfg, losses_path, errors)
    return pooled


def _table_rows(names, pooled, fits) -> list[dict]:
    rows = []
    for variant in ("raw", "smooth"):
        f = pooled["frontier"][variant]
        rows.append({
            "fit": f"Pooled {variant} global-KL cutoff",
            "slope": f.get("slope"),
            "r_squared": f.get("r_squared"),
        })
    for n in names:
        f = fits[n].get("frontier", {}).get("smooth", {})
        rows.append({"fit": f"{n} (smooth)", "slope": f.get("slope"), "r_squared": f.get("r_squared")})
    return rows


def _cell(x):
    return "" if x is None else repr(x)


def _write_table(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fit", "slope", "r_squared"])
        for r in rows:
            w.writerow([r["fit"], _cell(r["slope"]), _cell(r["r_squared"])])


def _write_frontier_csv(path: Path, curve: LossCurve, traces) -> None:
    raw, smooth = traces.get("raw"), traces.get("smooth")
    base = raw or smooth
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "loss", "delta_l", "ratio", "k_raw", "k_smooth"])
        if base is None:
            return
        for i, e in enumerate(base.entries):
            w.writerow([
                e.to_json()["n"], repr(float(curve.loss[i])), repr(e.delta_l), repr(e.ratio),
                raw.entries[i].k if raw else "", smooth.entries[i].k if smooth else "",
            ])


def _write_slopes(path: Path, names, fits, cfg: RunConfig) -> None:
    labels = [window_label(w) for w in cfg.tail_windows]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "scaling_slope"] + [f"{v} {l}" for v in ("raw", "smooth") for l in labels])
        for n in names:
            e = fits[n]
            row = [n, _cell(e["scaling_slope"].get("slope"))]
            for v in ("raw", "smooth"):
                for l in labels:
                    row.append(_cell(e.get("tail_slopes", {}).get(v, {}).get(l, {}).get("slope")))
            w.writerow(row)


def _write_scaling(path: Path, losses) -> None:
    from predspec.fits import write_loss_table

    write_loss_table(losses, path)


def _write_manifest(out: Path, cfg: RunConfig, losses_path, errors) -> None:
    inputs = {}
    for name, p in sorted(cfg.corpora.items()):
        if Path(p).is_file():
            inputs[name] = _sha256(Path(p))
    if losses_path is not None:
        inputs["losses"] = _sha256(Path(losses_path))
    outputs = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    _dump_json(
        {
            "tool": "predspec",
            "config": cfg.manifest_view(),
            "errors": dict(sorted(errors.items())),
            "inputs_sha256": inputs,
            "outputs_sha256": outputs,
        },
        out / "manifest.json",
    )
