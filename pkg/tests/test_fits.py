import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from predspec.fits import (
    FitError,
    FrontierEntry,
    FrontierTrace,
    LossCurve,
    cross_dataset_regression,
    cutoff_rank,
    effective_cutoff,
    excess_loss,
    frontier_fit,
    loglog_fit,
    read_loss_table,
    scaling_slope,
    tail_slope,
    write_loss_table,
)
from predspec.spectrum import Spectrum, normalize_spectrum
from predspec.synth import planted_frontier_losses, power_law_spectrum

SCALE_SIZES = [1e5, 2e5, 5e5, 1e6, 2e6]


def spec(w):
    return normalize_spectrum(Spectrum(np.asarray(w, dtype=float)))


# -- loglog_fit ---------------------------------------------------------------


def test_loglog_exact_power_laws():
    x = np.array([1.0, 2, 5, 10, 100])
    f = loglog_fit(x, x ** -2.0)
    assert f.slope == pytest.approx(-2, abs=1e-12) and f.r_squared == pytest.approx(1, abs=1e-12)
    f = loglog_fit(x, 3 * x ** 3.9)
    assert f.slope == pytest.approx(3.9, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert loglog_fit([1, 10], [1, 10]).slope == pytest.approx(1.0, abs=1e-15)


def test_loglog_window():
    x = np.arange(1, 101, dtype=float)
    y = np.where(x < 50, x ** -1.0, 50.0 * x ** -2.0)
    f = loglog_fit(x, y, window=(50, 100))
    assert f.slope == pytest.approx(-2, abs=1e-12)
    assert f.n_points == 51 and f.window == (50, 100)


def test_loglog_errors():
    with pytest.raises(FitError, match="insufficient points"):
        loglog_fit([1.0], [1.0])
    with pytest.raises(FitError, match="insufficient points"):
        loglog_fit([2.0, 2.0], [1.0, 3.0])
    with pytest.raises(FitError, match="domain error"):
        loglog_fit([1.0, 2.0], [1.0, 0.0])
    with pytest.raises(FitError, match="insufficient points"):
        loglog_fit([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], window=(2.5, 10))


@settings(max_examples=300)
@given(st.floats(-5, 5), st.floats(-3, 3), st.lists(st.floats(1e-3, 1e6), min_size=2, max_size=30, unique=True))
def test_loglog_recovers_plant(slope, intercept, xs):
    x = np.array(xs)
    if np.ptp(np.log(x)) < 1e-3:
        return
    f = loglog_fit(x, np.exp(intercept) * x ** slope)
    assert f.slope == pytest.approx(slope, abs=1e-9)
    assert f.intercept == pytest.approx(intercept, abs=1e-9 * (1 + abs(np.log(x)).max()))
    assert 0.0 <= f.r_squared <= 1.0


# -- scaling slopes -------------------------------------------------------------


def test_scaling_slope_planted():
    N = np.array(SCALE_SIZES)
    f = scaling_slope(LossCurve("d", N, 7.0 * N ** -0.08))
    assert f.slope == pytest.approx(-0.08, abs=1e-12) and f.r_squared == pytest.approx(1.0, abs=1e-12)


def test_scaling_slope_constant():
    f = scaling_slope(LossCurve("d", SCALE_SIZES, [4.0] * 5))
    assert f.slope == 0.0 and f.r_squared == 0.0


def test_scaling_slope_noisy_monte_carlo():
    N = np.array(SCALE_SIZES)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        L = 5.0 * N ** -0.1 * np.exp(rng.normal(0, 0.01, N.size))
        assert scaling_slope(LossCurve("d", N, L)).slope == pytest.approx(-0.1, abs=0.02)


def test_loss_curve_validation():
    with pytest.raises(ValueError):
        LossCurve("d", [1.0], [1.0])
    with pytest.raises(ValueError):
        LossCurve("d", [2.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        LossCurve("d", [1.0, 2.0], [1.0, 0.0])


def test_loss_table_round_trip(tmp_path):
    curves = [LossCurve("b", [100, 200], [5.0, 4.5]), LossCurve("a", [100, 300, 900], [6.1, 5.2, 4.9])]
    write_loss_table(curves, tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines()[:2] == ["dataset,n_tokens,loss", "b,100,5.0"]
    back = read_loss_table(tmp_path / "l.csv")
    assert [c.dataset for c in back] == ["b", "a"]
    assert np.array_equal(back[1].loss, curves[1].loss)


# -- tail slopes ----------------------------------------------------------------


def test_tail_slope_exact():
    sp = Spectrum(np.arange(1, 60_001, dtype=float) ** -1.5)
    f = tail_slope(sp, (300, 50_000))
    assert f.slope == pytest.approx(-1.5, abs=1e-9)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12)
    assert f.n_points == 50_000 - 300 + 1


def test_tail_slope_out_of_range():
    with pytest.raises(FitError, match="window out of range"):
        tail_slope(Spectrum(np.ones(500)), (1000, 100_000))


def test_tail_slope_broken_power_law():
    k = np.arange(1, 200_001, dtype=float)
    w = np.where(k < 1000, k ** -1.0, 1000.0 * k ** -2.0)
    f = tail_slope(Spectrum(w), (1000, 100_000))
    assert f.slope == pytest.approx(-2.0, abs=0.05)


def test_tail_slope_skips_zeros():
    w = np.concatenate([np.arange(1, 101, dtype=float) ** -1.0, np.zeros(50)])
    f = tail_slope(Spectrum(w), (10, 1000))
    assert f.n_dropped == 50
    assert f.slope == pytest.approx(-1.0, abs=1e-12)


def test_tail_slope_uses_binned_ranks():
    from predspec.spectrum import smooth_spectrum

    sp = smooth_spectrum(Spectrum(np.arange(1, 100_001, dtype=float) ** -1.5), 20)
    assert tail_slope(sp, (1000, 100_000)).slope == pytest.approx(-1.5, abs=2e-3)


# -- cross-dataset regression ---------------------------------------------------


def test_cross_dataset_collinear():
    xs = {f"d{i}": -1 - 0.1 * i for i in range(5)}
    ys = {k: 0.3 * v + 0.1 for k, v in xs.items()}
    assert cross_dataset_regression(xs, ys).r_squared == pytest.approx(1.0, abs=1e-12)


def test_cross_dataset_constant_y():
    xs = {f"d{i}": float(i) for i in range(5)}
    assert cross_dataset_regression(xs, {k: -0.1 for k in xs}).r_squared == 0.0


def test_cross_dataset_mismatch():
    with pytest.raises(FitError, match="dataset mismatch"):
        cross_dataset_regression({"a": 1, "b": 2, "c": 3}, {"a": 1, "b": 2, "d": 3})
    with pytest.raises(FitError):
        cross_dataset_regression({"a": 1, "b": 2}, {"a": 1, "b": 2})


def test_cross_dataset_calibrated_r2():
    # y = 0.05 x + noise with population R^2 = 0.83 over 12 datasets
    target = 0.83
    slope, x_sd = 0.05, 0.3
    noise_sd = slope * x_sd * math.sqrt(1 / target - 1)
    r2s = []
    for seed in range(400):
        rng = np.random.default_rng(seed)
        x = rng.normal(-1.2, x_sd, 12)
        y = slope * x - 0.02 + rng.normal(0, noise_sd, 12)
        names = [f"d{i}" for i in range(12)]
        r2s.append(cross_dataset_regression(zip(names, x), zip(names, y)).r_squared)
    assert np.mean(r2s) == pytest.approx(target, abs=0.05)


# -- excess loss and cutoff -----------------------------------------------------


@pytest.mark.parametrize(
    "losses,dl,ratios",
    [
        ([5.0, 4.5, 4.0], [1.0, 0.5, 0.0], [1.0, 0.5, 0.0]),
        ([4.0, 4.0, 4.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ([4.2, 4.0, 4.1], [0.2, 0.0, 0.1], [1.0, 0.0, 0.5]),
    ],
)
def test_excess_loss(losses, dl, ratios):
    rows = excess_loss(LossCurve("d", [1, 2, 3], losses))
    assert [r[1] for r in rows] == pytest.approx(dl, abs=1e-12)
    assert [r[2] for r in rows] == pytest.approx(ratios, abs=1e-12)


@pytest.mark.parametrize("ratio,k", [(1.0, 1), (0.0, 3), (0.4, 2), (0.5, 1), (0.2, 2), (0.19, 3)])
def test_cutoff_rank_small(ratio, k):
    sp = spec([0.5, 0.3, 0.2])
    assert cutoff_rank(sp, ratio) == k
    assert oracles.cutoff_linear_scan([0.5, 0.3, 0.2], ratio) == k


def test_effective_cutoff_trace():
    sp = spec([0.5, 0.3, 0.2])
    tr = effective_cutoff(sp, LossCurve("d", [1, 2, 3], [3.0, 2.4, 2.0]))
    assert [e.k for e in tr.entries] == [1, 2, 3]
    assert [e.ratio for e in tr.entries] == pytest.approx([1.0, 0.4, 0.0])
    assert tr.spectrum_length == 3 and not tr.degenerate


def test_effective_cutoff_degenerate_spectrum():
    with pytest.raises(ValueError, match="degenerate"):
        effective_cutoff(Spectrum(np.zeros(4)), LossCurve("d", [1, 2], [3.0, 2.0]))


def test_cutoff_matches_linear_scan_fuzz():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        M = int(rng.integers(1, 40))
        w = np.sort(rng.pareto(1.0, M) + rng.random(M) * (rng.random() < 0.5))[::-1]
        if rng.random() < 0.2:
            w = np.round(w, 1)  # plenty of ties
        if w.sum() == 0:
            continue
        sp = spec(w)
        r = float(rng.choice([0.0, 1.0, rng.random(), rng.random() ** 6]))
        assert cutoff_rank(sp, r) == oracles.cutoff_linear_scan(sp.weights.tolist(), r)


@settings(max_examples=200)
@given(
    st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=40).filter(lambda w: sum(w) > 0),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_cutoff_monotone(w, r1, r2):
    sp = spec(sorted(w, reverse=True))
    k1, k2 = cutoff_rank(sp, r1), cutoff_rank(sp, r2)
    assert 1 <= k1 <= len(sp)
    if r1 > r2:
        assert k1 <= k2


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.001, 5), min_size=3, max_size=60),
    st.lists(st.integers(1, 59), min_size=1, max_size=4),
    st.floats(0.5, 4.0),
)
def test_round_trip_planted_cutoffs(w, interior, floor):
    # K*(N_min) = 0 and K*(N_max) = M make the excess ratio equal T(K*) itself
    sp = spec(sorted(w, reverse=True))
    M = len(sp)
    kstar = sorted({0, M, *(min(k, M - 1) for k in interior)})
    tr = effective_cutoff(sp, LossCurve("d", np.arange(1, len(kstar) + 1), floor + sp.tails[kstar]))
    for e, ks in zip(tr.entries[1:-1], kstar[1:-1]):
        assert e.k <= ks
        assert sp.tails[e.k] <= sp.tails[ks] + 1e-9
        # equality wherever the tail strictly drops just before K*
        if sp.tails[ks - 1] - sp.tails[ks] > 1e-9:
            assert e.k == ks
    assert tr.entries[-1].k == M


def test_round_trip_exact_when_normalization_is_identity():
    # with K*(N_min) = 0 and K*(N_max) = M the excess ratio equals T(K*) itself
    sp = spec([0.4, 0.25, 0.15, 0.1, 0.06, 0.04])
    kstar = [0, 2, 3, 5, 6]
    curve = LossCurve("d", [1, 2, 3, 4, 5], 1.5 + sp.tails[kstar])
    tr = effective_cutoff(sp, curve)
    assert [e.k for e in tr.entries][1:] == kstar[1:]


# -- frontier fits --------------------------------------------------------------


def planted_trace(name, gamma, c, sizes=SCALE_SIZES):
    ks = [int(math.floor(c * n ** gamma + 0.5)) for n in sizes]
    ratios = np.linspace(1, 0, len(sizes))
    return FrontierTrace(name, [FrontierEntry(n, r, r, k) for n, r, k in zip(sizes, ratios, ks)], "global-kl-raw", max(ks))


def test_frontier_fit_planted():
    tr = planted_trace("d", 3.9, 1000 / 1e5 ** 3.9)
    f = frontier_fit([tr], pooled=False).per_dataset["d"]
    assert f.slope == pytest.approx(3.9, abs=0.05)
    assert f.r_squared >= 0.999


def test_frontier_fit_flat():
    tr = FrontierTrace("d", [FrontierEntry(n, 0.5, 0.5, 7) for n in SCALE_SIZES], "global-kl-raw", 10)
    assert frontier_fit([tr], pooled=False).per_dataset["d"].slope == pytest.approx(0.0, abs=1e-12)


def test_pooled_identical_traces_equal_single():
    tr = planted_trace("d", 2.5, 3 / 1e5 ** 2.5)
    single = frontier_fit([tr], pooled=False).per_dataset["d"]
    pooled = frontier_fit([tr, tr, tr]).pooled
    assert pooled.slope == pytest.approx(single.slope, abs=1e-12)
    assert pooled.r_squared == pytest.approx(single.r_squared, abs=1e-12)
    assert pooled.n_points == 15


def test_interior_only_drops_endpoints():
    sp = power_law_spectrum(10_000, -1.2)
    curve = planted_frontier_losses(sp, 3.0, 1 / 1e5 ** 3, SCALE_SIZES, 2.0)
    tr = effective_cutoff(sp, curve)
    full = frontier_fit([tr], pooled=False).per_dataset["planted"]
    inner = frontier_fit([tr], pooled=False, interior_only=True).per_dataset["planted"]
    assert full.n_points == 5 and inner.n_points == 3


def test_degenerate_trace_is_recorded_not_fitted():
    sp = spec([0.5, 0.3, 0.2])
    tr = effective_cutoff(sp, LossCurve("flat", [1, 2, 3], [4.0, 4.0, 4.0]))
    assert all(e.ratio == 0.0 and e.k == 3 for e in tr.entries)
    fits = frontier_fit([tr])
    assert fits.errors["flat"] == "insufficient points"
    assert "pooled" in fits.errors and fits.pooled is None
