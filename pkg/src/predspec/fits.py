"""Regression machinery: log-log fits, scaling/tail slopes, cross-dataset regression,
excess loss, effective cutoff ranks and frontier fits."""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from predspec.spectrum import Spectrum, normalize_spectrum


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float] | None
    n_points: int
    n_dropped: int = 0

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "window": None if self.window is None else list(self.window),
        }


def linear_fit(x, y, window=None) -> FitResult:
    """Ordinary least squares ``y = slope * x + intercept``.

    R^2 is ``1 - SS_res / SS_tot``; a constant response (SS_tot = 0) reports 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.unique(x).size < 2:
        raise FitError("insufficient points")
    dx = x - x.mean()
    dy = y - y.mean()
    slope = float(np.dot(dx, dy) / np.dot(dx, dx))
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(np.dot(dy, dy))
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    r2 = 0.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(slope, intercept, r2, window, int(x.size))


def loglog_fit(x, y, window: tuple[float, float] | None = None) -> FitResult:
    """Least squares of ln y on ln x, optionally restricted to ``window[0] <= x <= window[1]``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if window is not None:
        lo, hi = window
        keep = (x >= lo) & (x <= hi)
        x, y = x[keep], y[keep]
    if x.size < 2:
        raise FitError("insufficient points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("domain error")
    return linear_fit(np.log(x), np.log(y), window=window)


# -- loss curves -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LossCurve:
    dataset: str
    n_tokens: np.ndarray
    loss: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n_tokens, dtype=np.float64)
        L = np.asarray(self.loss, dtype=np.float64)
        if n.shape != L.shape or n.ndim != 1:
            raise ValueError(f"{self.dataset}: N and loss must be equal-length vectors")
        if n.size < 2:
            raise ValueError(f"{self.dataset}: a loss curve needs at least 2 points")
        if np.any(np.diff(n) <= 0):
            raise ValueError(f"{self.dataset}: N values must be strictly increasing")
        if np.any(L <= 0) or np.any(n <= 0):
            raise ValueError(f"{self.dataset}: N and losses must be positive")
        object.__setattr__(self, "n_tokens", n)
        object.__setattr__(self, "loss", L)

    @classmethod
    def from_pairs(cls, dataset: str, pairs: Iterable[tuple[float, float]]) -> "LossCurve":
        pairs = sorted(pairs)
        return cls(dataset, [p[0] for p in pairs], [p[1] for p in pairs])

    def __len__(self):
        return int(self.n_tokens.size)


def read_loss_table(path) -> list[LossCurve]:
    """Parse ``dataset,n_tokens,loss`` rows; datasets keep first-appearance order."""
    rows: OrderedDict[str, list] = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"dataset", "n_tokens", "loss"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'dataset,n_tokens,loss'")
        for row in reader:
            rows.setdefault(row["dataset"], []).append((float(row["n_tokens"]), float(row["loss"])))
    return [LossCurve.from_pairs(name, pts) for name, pts in rows.items()]


def write_loss_table(curves: Iterable[LossCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "n_tokens", "loss"])
        for c in curves:
            for n, L in zip(c.n_tokens.tolist(), c.loss.tolist()):
                w.writerow([c.dataset, _fmt_count(n), repr(L)])


def _fmt_count(n: float):
    return int(n) if float(n).is_integer() else repr(n)


def scaling_slope(curve: LossCurve) -> FitResult:
    return loglog_fit(curve.n_tokens, curve.loss)


def tail_slope(sp: Spectrum, window: tuple[float, float]) -> FitResult:
    """Log-log slope of weight against rank inside ``window``; zero weights are skipped."""
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    ranks = sp.rank_values
    inside = (ranks >= lo) & (ranks <= hi)
    if not inside.any():
        raise FitError("window out of range")
    r, w = ranks[inside], sp.weights[inside]
    positive = w > 0
    fit = loglog_fit(r[positive], w[positive])
    return FitResult(
        fit.slope, fit.intercept, fit.r_squared, (lo, hi), fit.n_points,
        n_dropped=int((~positive).sum()),
    )


def cross_dataset_regression(
    xs: Mapping[str, float] | Sequence[tuple[str, float]],
    ys: Mapping[str, float] | Sequence[tuple[str, float]],
) -> FitResult:
    """Linear OLS of scaling slope (y) on tail slope (x), one point per dataset."""
    xs, ys = dict(xs), dict(ys)
    if set(xs) != set(ys):
        raise FitError("dataset mismatch")
    names = sorted(xs)
    if len(names) < 3:
        raise FitError("insufficient points")
    return linear_fit([xs[k] for k in names], [ys[k] for k in names])


# -- excess loss and the cutoff frontier -------------------------------------


def excess_loss(curve: LossCurve) -> list[tuple[float, float, float]]:
    """``(N, L(N) - min L, that excess / max excess)`` per point; all ratios 0 on flat curves."""
    dl = curve.loss - curve.loss.min()
    dl_max = dl.max()
    ratio = dl / dl_max if dl_max > 0 else np.zeros_like(dl)
    return list(zip(curve.n_tokens.tolist(), dl.tolist(), ratio.tolist()))


# losses arrive as floor + tail; subtracting the floor again costs an ulp or two
CUTOFF_TIE_TOL = 1e-12


def cutoff_rank(sp: Spectrum, ratio: float, tol: float = CUTOFF_TIE_TOL) -> int:
    """Smallest K with T(K) <= ratio (+ tol), with ratio 1 -> K=1 and ratio 0 -> K=M forced."""
    M = len(sp)
    if ratio == 1.0:
        return 1
    if ratio == 0.0:
        return M
    # tails is non-increasing, so -tails is sorted ascending
    k = int(np.searchsorted(-sp.tails, -(ratio + tol), side="left"))
    return min(max(k, 1), M)


@dataclass(frozen=True)
class FrontierEntry:
    n: float
    delta_l: float
    ratio: float
    k: int

    def to_json(self) -> dict:
        return {"n": _fmt_count(self.n), "delta_l": self.delta_l, "ratio": self.ratio, "k": self.k}


@dataclass(frozen=True)
class FrontierTrace:
    dataset: str
    entries: list[FrontierEntry]
    provenance: str
    spectrum_length: int
    degenerate: bool = False

    @property
    def n(self) -> np.ndarray:
        return np.array([e.n for e in self.entries])

    @property
    def k(self) -> np.ndarray:
        return np.array([e.k for e in self.entries], dtype=np.float64)


def effective_cutoff(sp: Spectrum, curve: LossCurve) -> FrontierTrace:
    sp = normalize_spectrum(sp)
    if sp.ranks is not None:
        raise ValueError("cutoff matching needs a per-rank spectrum (use smooth_spectrum(per_rank=True))")
    rows = excess_loss(curve)
    entries = [FrontierEntry(n, dl, r, cutoff_rank(sp, r)) for n, dl, r in rows]
    degenerate = max(dl for _, dl, _ in rows) == 0.0
    return FrontierTrace(curve.dataset, entries, sp.provenance, len(sp), degenerate)


def _trace_points(trace: FrontierTrace, interior_only: bool):
    if trace.degenerate:
        # a flat curve pins every K to M by convention; it carries no frontier information
        return np.empty(0), np.empty(0)
    keep = [e for e in trace.entries if not (interior_only and e.ratio in (0.0, 1.0))]
    return np.array([e.n for e in keep]), np.array([e.k for e in keep], dtype=np.float64)


@dataclass
class FrontierFits:
    per_dataset: dict[str, FitResult] = field(default_factory=dict)
    pooled: FitResult | None = None
    errors: dict[str, str] = field(default_factory=dict)


def frontier_fit(
    traces: Sequence[FrontierTrace], pooled: bool = True, interior_only: bool = False
) -> FrontierFits:
    """Log-log fit of K against N per dataset and, optionally, over all points pooled.

    Failed fits are recorded in ``errors`` by dataset name (``"pooled"`` for the pool).
    """
    out = FrontierFits()
    xs, ys = [], []
    for tr in traces:
        n, k = _trace_points(tr, interior_only)
        try:
            out.per_dataset[tr.dataset] = loglog_fit(n, k)
        except FitError as exc:
            out.errors[tr.dataset] = str(exc)
        xs.append(n)
        ys.append(k)
    if pooled:
        if len(traces) < 2:
            out.errors["pooled"] = "pooled fit needs at least 2 datasets"
        else:
            try:
                out.pooled = loglog_fit(np.concatenate(xs), np.concatenate(ys))
            except FitError as exc:
                out.errors["pooled"] = str(exc)
    return out


def frontier_report(traces: Sequence[FrontierTrace], fits: FrontierFits) -> dict:
    report: dict = {}
    for tr in traces:
        if tr.dataset in fits.per_dataset:
            entry = fits.per_dataset[tr.dataset].to_json()
        else:
            entry = {"error": fits.errors.get(tr.dataset, "no fit")}
        entry["provenance"] = tr.provenance
        entry["trace"] = [e.to_json() for e in tr.entries]
        report[tr.dataset] = entry
    if fits.pooled is not None:
        report["pooled"] = fits.pooled.to_json()
    elif "pooled" in fits.errors:
        report["pooled"] = {"error": fits.errors["pooled"]}
    return report
