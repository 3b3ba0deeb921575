import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavurllc.traffic import (
    DEFAULT_DATASET,
    NOISE_GRID,
    THETA1_GRID,
    DatasetError,
    KernelParams,
    TrafficWindow,
    design,
    fit_hyperparams,
    gp_posterior,
    ingest_series,
    log_marginal_likelihood,
    normalize,
    periodic_kernel,
    predict_next,
    rolling_forecast,
    slide,
    split_warmup,
    theta2_grid,
)


def direct_posterior(x, y, xq, p: KernelParams):
    """Oracle: posterior by explicit kernel matrix and a dense solve."""
    x = np.asarray(x, dtype=float)
    k = np.array([[math.exp(-math.sin(math.pi * (a - b) / p.theta2) ** 2 / p.theta1) for b in x] for a in x])
    k += p.noise_var * np.eye(len(x))
    kq = np.array([math.exp(-math.sin(math.pi * (xq - b) / p.theta2) ** 2 / p.theta1) for b in x])
    mean = kq @ np.linalg.solve(k, y)
    var = 1.0 - kq @ np.linalg.solve(k, kq)
    return mean, var


params_st = st.builds(
    KernelParams,
    theta1=st.floats(min_value=0.05, max_value=20.0),
    theta2=st.floats(min_value=2.0, max_value=200.0),
    noise_var=st.floats(min_value=1e-3, max_value=0.1),
)
window5 = st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=5, max_size=5)


# -- kernel and posterior ---------------------------------------------------------


def test_kernel_reference_values():
    p = KernelParams(theta1=2.0, theta2=8.0)
    assert periodic_kernel(3.0, 3.0, p) == 1.0
    # sin^2(pi/4) = 1/2
    assert periodic_kernel(0.0, 2.0, p) == pytest.approx(math.exp(-0.25), rel=1e-14)
    assert periodic_kernel(0.0, 8.0, p) == pytest.approx(1.0)


@given(st.floats(-50, 50), st.floats(-50, 50), params_st)
def test_kernel_symmetric_and_bounded(a, b, p):
    k = periodic_kernel(a, b, p)
    assert k == pytest.approx(periodic_kernel(b, a, p))
    assert 0.0 < k <= 1.0


@settings(max_examples=60)
@given(window5, params_st, st.sampled_from(["lagged", "time"]))
def test_posterior_matches_direct_solve(values, p, inputs):
    w = TrafficWindow.from_series(values, 5, start=10)
    x, y, xq = design(w, inputs)
    pred = gp_posterior(x, y, xq, p)
    mean, var = direct_posterior(x, y, xq, p)
    assert abs(pred.mean - mean) <= 1e-8
    assert abs(pred.variance - max(var, 0.0)) <= 1e-8


@settings(max_examples=40)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=30), params_st)
def test_time_domain_shortcut_matches_general_posterior(values, p):
    w = TrafficWindow.from_series(values, 30, start=100)
    x, y, xq = design(w, "time")
    fast = predict_next(w, p, "time")
    slow = gp_posterior(x, y, xq, p)
    assert fast.mean == pytest.approx(slow.mean, abs=1e-9)
    assert fast.variance == pytest.approx(slow.variance, abs=1e-9)


@settings(max_examples=40)
@given(window5, params_st)
def test_posterior_variance_in_unit_interval(values, p):
    pred = predict_next(TrafficWindow.from_series(values, 5), p)
    assert 0.0 <= pred.variance <= 1.0


def test_predict_needs_two_points():
    with pytest.raises(ValueError):
        predict_next(TrafficWindow.from_series([0.3], 5), KernelParams())


def test_unknown_input_domain():
    with pytest.raises(ValueError):
        design(TrafficWindow.from_series([0.1, 0.2, 0.3], 3), "values")


# -- window ----------------------------------------------------------------------


def test_slide_evicts_oldest():
    w = TrafficWindow.from_series([0.1, 0.2, 0.3], 3, start=5)
    assert w.times == (5, 6, 7)
    w2 = slide(w, 0.4, 8)
    assert w2.values == (0.2, 0.3, 0.4)
    assert w2.times == (6, 7, 8)


def test_slide_rejects_gap():
    w = TrafficWindow.from_series([0.1, 0.2], 3)
    with pytest.raises(ValueError):
        slide(w, 0.5, 5)


@given(st.integers(1, 20), st.lists(st.floats(0, 1), max_size=60))
def test_slide_keeps_capacity_and_contiguity(cap, stream):
    w = TrafficWindow(cap)
    for t, v in enumerate(stream):
        w = slide(w, v, t)
        assert len(w) == min(t + 1, cap)
        assert w.values[-1] == v
    if stream:
        assert list(w.times) == list(range(len(stream) - len(w), len(stream)))


# -- fitting ---------------------------------------------------------------------


def test_fit_picks_grid_maximum():
    rng = np.random.default_rng(0)
    t = np.arange(40)
    w = TrafficWindow.from_series(0.5 + 0.3 * np.sin(2 * np.pi * t / 10) + 0.01 * rng.standard_normal(40), 40)
    fit = fit_hyperparams(w, "time")
    x, y, _ = design(w, "time")
    assert not fit.degenerate
    assert fit.log_likelihood == pytest.approx(log_marginal_likelihood(x, y, fit.params), rel=1e-9)
    best = max(log_marginal_likelihood(x, y, KernelParams(t1, t2, nv))
               for t1 in THETA1_GRID for t2 in theta2_grid(40) for nv in NOISE_GRID)
    assert fit.log_likelihood == pytest.approx(best, rel=1e-9)


def test_fit_constant_window_is_flagged():
    fit = fit_hyperparams(TrafficWindow.from_series([0.4] * 20, 20))
    assert fit.degenerate


def test_fit_needs_enough_points():
    with pytest.raises(ValueError):
        fit_hyperparams(TrafficWindow.from_series([0.1, 0.2], 20))


# -- ingestion -------------------------------------------------------------------


def test_normalize_range():
    v, flat = normalize([3.0, 5.0, 4.0])
    np.testing.assert_allclose(v, [0.0, 1.0, 0.5])
    assert not flat
    v, flat = normalize([2.0, 2.0])
    assert flat and np.all(v == 0.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_normalize_bounds(raw):
    v, _ = normalize(raw)
    assert np.all((v >= 0) & (v <= 1))


def test_ingest_skips_bad_rows(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("# comment\nDate;Close\n1;10\n2;\n3;abc\n4;20\n5;15\n", encoding="utf-8")
    s = ingest_series(f, delimiter=";")
    assert s.rejected == 2
    np.testing.assert_allclose(s.values, [0.0, 1.0, 0.5])
    assert s.stamps == ["1", "4", "5"]


def test_ingest_missing_column(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("Date,Open\n1,2\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="Close"):
        ingest_series(f)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        ingest_series(tmp_path / "nope.csv")


def test_bundled_dataset_loads():
    s = ingest_series(DEFAULT_DATASET)
    assert len(s) > 600 and s.rejected == 0
    assert s.values.min() == 0.0 and s.values.max() == 1.0


def test_split_warmup():
    warm, stream = split_warmup(np.arange(10.0), 6)
    assert len(warm) == 6 and len(stream) == 4
    with pytest.raises(DatasetError):
        split_warmup(np.arange(5.0), 5)


# -- rolling forecast -------------------------------------------------------------


def test_constant_series_is_predicted_exactly():
    f = rolling_forecast(np.full(60, 0.5), 20, refit_every=10)
    assert f.mse <= 1e-6


def test_forecast_length_and_alignment():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=45)
    f = rolling_forecast(x, 30, refit_every=5)
    assert len(f.mean) == 45 - 30
    assert f.start == 30
    np.testing.assert_array_equal(f.observed, x[30:])
    assert [slot for slot, _ in f.fits] == [30, 35, 40]


def test_forecast_uses_only_the_past():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=40)
    y = x.copy()
    y[35:] = 0.0  # changing the future must not change earlier predictions
    fx = rolling_forecast(x, 25, refit_every=50)
    fy = rolling_forecast(y, 25, refit_every=50)
    np.testing.assert_array_equal(fx.mean[:11], fy.mean[:11])


def test_forecast_tracks_periodic_signal():
    t = np.arange(200)
    x = 0.5 + 0.4 * np.sin(2 * np.pi * t / 12)
    f = rolling_forecast(x, 60, refit_every=70, inputs="time")
    assert f.mse < 1e-3
