"""Online traffic-load forecasting with a periodic-kernel Gaussian process.

Loads are min-max normalised to [0, 1] and the GP has zero prior mean.  Two
input domains are supported for the kernel:

``"lagged"`` (default)
    autoregressive: the GP maps the load of one slot to the load of the next,
    trained on consecutive pairs inside the window and queried at the latest
    observed load.
``"time"``
    the kernel is evaluated on integer slot indices and queried at the next
    slot.  For a full window the Gram matrix then only depends on the window
    length, so one Cholesky factor is reused between refits.  A periodic kernel
    whose period fits inside the window makes the query correlate with the
    point one period back, which forecasts trending series poorly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

log = logging.getLogger(__name__)

DEFAULT_DATASET = Path(__file__).parent / "data" / "goog_daily.csv"


class DatasetError(ValueError):
    """Raised when a traffic file cannot be turned into a usable load series."""


class GramFactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    theta1: float = 1.0
    theta2: float = 150.0
    noise_var: float = 1e-4

    def __post_init__(self):
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ValueError("theta1 and theta2 must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")


class Prediction(NamedTuple):
    mean: float
    variance: float


class HyperFit(NamedTuple):
    params: KernelParams
    log_likelihood: float
    degenerate: bool


@dataclass(frozen=True)
class TrafficWindow:
    """The last ``capacity`` normalised observations and their slot indices."""

    capacity: int
    values: tuple = ()
    times: tuple = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if len(self.values) != len(self.times):
            raise ValueError("values and times differ in length")
        if len(self.values) > self.capacity:
            raise ValueError("window longer than its capacity")
        if any(b - a != 1 for a, b in zip(self.times, self.times[1:])):
            raise ValueError("window times must be contiguous and increasing")

    @classmethod
    def from_series(cls, values: Sequence[float], capacity: int, start: int = 0) -> "TrafficWindow":
        values = tuple(float(v) for v in values)[-capacity:]
        end = start + len(values)
        return cls(capacity, values, tuple(range(end - len(values), end)))

    def __len__(self):
        return len(self.values)

    @property
    def last_time(self):
        return self.times[-1] if self.times else None

    def as_arrays(self):
        return np.asarray(self.times, dtype=float), np.asarray(self.values, dtype=float)


def slide(window: TrafficWindow, observed: float, slot: int) -> TrafficWindow:
    """Append one observation, evicting the oldest one once at capacity."""
    if window.times and slot != window.times[-1] + 1:
        raise ValueError(f"non-contiguous slot {slot}, expected {window.times[-1] + 1}")
    values = window.values + (float(observed),)
    times = window.times + (int(slot),)
    if len(values) > window.capacity:
        values, times = values[1:], times[1:]
    return TrafficWindow(window.capacity, values, times)


# -- kernel and posterior -----------------------------------------------------


def periodic_kernel(a, b, params: KernelParams):
    """exp(-sin^2(pi (a - b) / theta2) / theta1); broadcasts."""
    s = np.sin(np.pi * (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) / params.theta2)
    k = np.exp(-(s * s) / params.theta1)
    return float(k) if np.ndim(k) == 0 else k


def _gram(x: np.ndarray, params: KernelParams) -> np.ndarray:
    g = periodic_kernel(x[:, None], x[None, :], params)
    g[np.diag_indices_from(g)] += params.noise_var
    return g


INPUT_DOMAINS = ("lagged", "time")


def design(window: TrafficWindow, inputs: str = "lagged"):
    """Training inputs, targets and the query input for a one-step forecast."""
    times, values = window.as_arrays()
    if inputs == "time":
        return times, values, times[-1] + 1.0
    if inputs == "lagged":
        return values[:-1], values[1:], values[-1]
    raise ValueError(f"unknown kernel input domain {inputs!r}")


def build_gram(window: TrafficWindow, params: KernelParams, inputs: str = "time") -> np.ndarray:
    """Noisy Gram matrix over the window's training inputs."""
    if len(window) == 0:
        raise ValueError("empty window")
    return _gram(design(window, inputs)[0], params)


def _factor(g: np.ndarray) -> np.ndarray:
    try:
        return cholesky(g, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise GramFactorizationError(
            "Gram matrix is not positive definite; refit with a larger noise_var floor"
        ) from exc


def gp_posterior(x, y, query, params: KernelParams) -> Prediction:
    """Zero-mean GP posterior at ``query`` from arbitrary (input, target) pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    chol = _factor(_gram(x, params))
    kq = periodic_kernel(query, x, params)
    alpha = cho_solve((chol, True), y, check_finite=False)
    v = solve_triangular(chol, kq, lower=True, check_finite=False)
    var = 1.0 - float(v @ v)
    return Prediction(float(kq @ alpha), max(var, 0.0))


@lru_cache(maxsize=16)
def _contiguous_factor(n: int, params: KernelParams):
    # Stationary kernel on slots 0..n-1, query at slot n.
    times = np.arange(n, dtype=float)
    chol = _factor(_gram(times, params))
    kq = periodic_kernel(float(n), times, params)
    v = solve_triangular(chol, kq, lower=True, check_finite=False)
    # weights w with mean = w @ y
    w = cho_solve((chol, True), kq, check_finite=False)
    return w, max(1.0 - float(v @ v), 0.0)


def predict_next(window: TrafficWindow, params: KernelParams, inputs: str = "lagged") -> Prediction:
    """One-step-ahead posterior mean and variance for slot ``last_time + 1``."""
    if len(window) < 2:
        raise ValueError("need at least two observations to predict")
    if inputs == "time":
        w, var = _contiguous_factor(len(window), params)
        return Prediction(float(w @ np.asarray(window.values)), var)
    x, y, xq = design(window, inputs)
    return gp_posterior(x, y, xq, params)


# -- hyperparameter fitting ---------------------------------------------------

THETA1_GRID = tuple(np.logspace(-2, 2, 9))
NOISE_GRID = tuple(np.logspace(-6, -1, 6))


def theta2_grid(n: int) -> tuple:
    return tuple(np.logspace(math.log10(2.0), math.log10(max(n, 3)), 12))


def default_params(n: int) -> KernelParams:
    return KernelParams(theta1=1.0, theta2=max(n / 4.0, 1.0), noise_var=1e-4)


def log_marginal_likelihood(x, y, params: KernelParams) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        chol = _factor(_gram(x, params))
    except GramFactorizationError:
        return -math.inf
    a = solve_triangular(chol, y, lower=True, check_finite=False)
    return float(-0.5 * a @ a - np.log(np.diag(chol)).sum() - 0.5 * len(y) * math.log(2 * math.pi))


def fit_hyperparams(window: TrafficWindow, inputs: str = "lagged", min_obs: int = 10) -> HyperFit:
    """Grid-search the exact log marginal likelihood.

    Grid: theta1 in logspace(1e-2, 1e2, 9), theta2 in logspace(2, N, 12),
    noise_var in logspace(1e-6, 1e-1, 6), with N the window capacity.  Ties
    keep the first grid point in (theta1, theta2, noise) lexicographic order.
    """
    if len(window) < min_obs:
        raise ValueError(f"need at least {min_obs} observations to fit, got {len(window)}")
    x, y, _ = design(window, inputs)
    if np.ptp(window.values) == 0.0:
        log.warning("constant traffic window; using default kernel parameters")
        return HyperFit(default_params(window.capacity), math.nan, True)

    n = len(y)
    lag = x[:, None] - x[None, :]
    diag = np.diag_indices(n)
    const = 0.5 * n * math.log(2 * math.pi)
    best = (-math.inf, None)
    for t1 in THETA1_GRID:
        for t2 in theta2_grid(window.capacity):
            s = np.sin(np.pi * lag / t2)
            base = np.exp(-(s * s) / t1)
            for nv in NOISE_GRID:
                g = base.copy()
                g[diag] += nv
                try:
                    chol = cholesky(g, lower=True, check_finite=False)
                except LinAlgError:
                    continue
                a = solve_triangular(chol, y, lower=True, check_finite=False)
                ll = -0.5 * float(a @ a) - float(np.log(np.diag(chol)).sum()) - const
                if ll > best[0]:
                    best = (ll, KernelParams(float(t1), float(t2), float(nv)))
    if best[1] is None:
        return HyperFit(default_params(window.capacity), math.nan, True)
    return HyperFit(best[1], best[0], False)


# -- data ingestion -----------------------------------------------------------


@dataclass
class LoadSeries:
    values: np.ndarray
    raw: np.ndarray
    stamps: list
    rejected: int = 0
    degenerate: bool = False
    source: str = ""

    def __len__(self):
        return len(self.values)


def normalize(raw) -> tuple:
    """Min-max scale to [0, 1]; a constant series maps to 0.5 (flagged)."""
    raw = np.asarray(raw, dtype=float)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full_like(raw, 0.5), True
    return (raw - lo) / (hi - lo), False


def ingest_series(path, time_col: str = "Date", value_col: str = "Close",
                  delimiter: str = ",", min_rows: int = 1) -> LoadSeries:
    """Read a delimited file with a header row and normalise its value column.

    Rows with a missing or non-numeric value are skipped and counted.  Lines
    starting with ``#`` are ignored.
    """
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    stamps, raw, rejected = [], [], 0
    with fh:
        reader = csv.reader((line for line in fh if not line.startswith("#")), delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in (time_col, value_col):
            if col not in header:
                raise DatasetError(f"{path}: missing column {col!r} (have {header})")
        ti, vi = header.index(time_col), header.index(value_col)
        for lineno, row in enumerate(reader, start=2):
            try:
                v = float(row[vi])
            except (IndexError, ValueError):
                rejected += 1
                log.debug("%s:%d rejected row %r", path, lineno, row)
                continue
            if not math.isfinite(v):
                rejected += 1
                continue
            stamps.append(row[ti] if ti < len(row) else "")
            raw.append(v)
    if rejected:
        log.warning("%s: rejected %d rows with missing values", path, rejected)
    if len(raw) < max(min_rows, 1):
        raise DatasetError(f"{path}: {len(raw)} usable rows, need at least {min_rows}")
    values, degenerate = normalize(raw)
    return LoadSeries(values, np.asarray(raw), stamps, rejected, degenerate, str(path))


def split_warmup(values, window_size: int):
    """First ``window_size`` values seed the window, the rest are streamed."""
    values = np.asarray(values)
    if len(values) <= window_size:
        raise DatasetError(f"series of {len(values)} slots leaves nothing after a {window_size}-slot window")
    return values[:window_size], values[window_size:]


# -- rolling forecast ---------------------------------------------------------


@dataclass
class Forecast:
    """One-step-ahead predictions for slots ``start .. start + len(mean) - 1``."""

    start: int
    mean: np.ndarray
    variance: np.ndarray
    observed: np.ndarray
    fits: list = field(default_factory=list)

    @property
    def squared_error(self):
        return (self.mean - self.observed) ** 2

    @property
    def mse(self) -> float:
        return float(np.mean(self.squared_error))

    def at(self, slot: int) -> Prediction:
        i = slot - self.start
        if i < 0 or i >= len(self.mean):
            raise IndexError(f"slot {slot} outside forecast range")
        return Prediction(float(self.mean[i]), float(self.variance[i]))


def rolling_forecast(values, window_size: int, refit_every: int = 50, inputs: str = "lagged") -> Forecast:
    """Predict every slot after the first ``window_size`` from the slots before it.

    Hyperparameters are refit on the current window every ``refit_every``
    slots; the prediction itself uses the latest window at every slot.
    """
    values = np.asarray(values, dtype=float)
    if refit_every < 1:
        raise ValueError("refit_every must be positive")
    n_pred = len(values) - window_size
    if n_pred <= 0:
        raise DatasetError("series is not longer than the window")
    mean = np.empty(n_pred)
    var = np.empty(n_pred)
    window = TrafficWindow.from_series(values[:window_size], window_size)
    params = None
    fits = []
    for i in range(n_pred):
        slot = window_size + i
        if i % refit_every == 0:
            fit = fit_hyperparams(window, inputs)
            params = fit.params
            fits.append((slot, fit))
        pred = predict_next(window, params, inputs)
        mean[i], var[i] = pred
        window = slide(window, values[slot], slot)
    return Forecast(window_size, mean, var, values[window_size:].copy(), fits)


_FORECASTS: dict = {}


def cached_forecast(values, window_size: int, refit_every: int, inputs: str = "lagged") -> Forecast:
    """Memoised :func:`rolling_forecast`, keyed on the series contents."""
    values = np.ascontiguousarray(values, dtype=float)
    key = (values.tobytes(), window_size, refit_every, inputs)
    if key not in _FORECASTS:
        _FORECASTS[key] = rolling_forecast(values, window_size, refit_every, inputs)
    return _FORECASTS[key]
