"""Monte Carlo harness: scenarios, per-slot evaluation, baselines and sweeps.

A trial draws one scenario (user drop, altitude, start slot in the traffic
trace) and then runs ``horizon`` consecutive slots.  Every slot plans on the
expected channel and evaluates the chosen allocation on freshly sampled Rician
fading, shared by all strategies so that comparisons are paired.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelParams, achievable_rate, sample_fading_power
from .optimizer import (
    Allocation,
    ProblemInstance,
    Rect,
    SolverConfig,
    objective,
    successive_maximization,
)
from .traffic import DEFAULT_DATASET, DatasetError, Forecast, cached_forecast, ingest_series

log = logging.getLogger(__name__)

STRATEGIES = ("proposed", "max_power", "random_placement")
AXES = ("eps", "users", "bandwidth")


@dataclass(frozen=True)
class TrafficConfig:
    """Where per-user loads come from and how they become packet counts.

    ``max_arrivals`` (Lambda) maps a normalised load of 1 to packets per
    slot.  User ``u`` reads the trace shifted by ``u * user_stride`` slots.
    """

    dataset: str = str(DEFAULT_DATASET)
    time_col: str = "Date"
    value_col: str = "Close"
    delimiter: str = ","
    max_arrivals: float = 500.0
    window: int = 600
    refit_every: int = 50
    kappa: float = 1.0
    user_stride: int = 7
    inputs: str = "lagged"

    def __post_init__(self):
        if self.max_arrivals < 0 or self.kappa < 0:
            raise ValueError("max_arrivals and kappa must be non-negative")
        if self.window < 2 or self.refit_every < 1 or self.user_stride < 0:
            raise ValueError("window >= 2, refit_every >= 1 and user_stride >= 0 required")


@dataclass(frozen=True)
class ScenarioConfig:
    num_users: int = 20
    num_rbs: int = 50
    total_power: float = 10.0
    packet_size: float = 32.0
    outage_eps: float = 0.1
    tradeoff_zeta: float = 1e12
    coverage: tuple = (0.0, 0.0, 250.0, 250.0)
    altitude_range: tuple = (100.0, 150.0)
    slot_duration: float = 1e-3
    horizon: int = 1
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self):
        if self.num_users < 1 or self.num_rbs < 1 or self.horizon < 1:
            raise ValueError("num_users, num_rbs and horizon must be at least 1")
        lo, hi = self.altitude_range
        if not 0 < lo <= hi:
            raise ValueError("altitude_range must satisfy 0 < low <= high")
        x0, y0, x1, y1 = self.coverage
        if not (x0 < x1 and y0 < y1):
            raise ValueError("coverage must be (x0, y0, x1, y1) with x0 < x1 and y0 < y1")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        if not 0 < self.outage_eps < 1:
            raise ValueError("outage_eps must lie in (0, 1)")
        if self.total_power <= 0 or self.packet_size <= 0 or self.tradeoff_zeta < 0:
            raise ValueError("total_power and packet_size must be positive, tradeoff_zeta non-negative")


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    traffic: TrafficConfig
    users: np.ndarray
    altitude: float
    offsets: np.ndarray
    start_slot: int
    seed: int

    @property
    def num_users(self):
        return self.config.num_users


@dataclass(frozen=True)
class SlotRecord:
    trial: int
    slot: int
    strategy: str
    objective: float
    energy_j: float
    sum_rate_bps: float
    min_user_rate_bps: float
    violations: int
    infeasible_flag: bool
    users: int
    iterations: int = 0
    converged: bool = True
    squared_error: float = 0.0

    COLUMNS = ("trial", "slot", "strategy", "objective", "energy_j", "sum_rate_bps",
               "min_user_rate_bps", "violations", "infeasible_flag")

    def row(self):
        return (self.trial, self.slot, self.strategy, self.objective, self.energy_j, self.sum_rate_bps,
                self.min_user_rate_bps, self.violations, int(self.infeasible_flag))


@dataclass
class RunReport:
    """Aggregate over trials for one strategy at one sweep value."""

    value: float
    strategy: str
    trials: int
    energy_mean: float
    energy_std: float
    sum_rate_mean: float
    sum_rate_std: float
    per_user_rate_mean: float
    per_user_rate_std: float
    violation_freq_mean: float
    violation_freq_std: float
    predictor_mse: float
    infeasible_frac: float
    mean_iterations: float
    converged_frac: float
    records: list = field(default_factory=list, repr=False)

    METRICS = ("energy", "sum_rate", "per_user_rate", "violation_freq")

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "records"}


# -- traffic ------------------------------------------------------------------


def load_traffic(traffic: TrafficConfig):
    """Normalised trace and its rolling one-step forecast (memoised)."""
    series = ingest_series(traffic.dataset, traffic.time_col, traffic.value_col,
                           traffic.delimiter, min_rows=traffic.window + 1)
    return series.values, cached_forecast(series.values, traffic.window, traffic.refit_every, traffic.inputs)


def trace_index(traffic: TrafficConfig, n_values: int, slot: int, offsets) -> np.ndarray:
    """Trace rows read by each user at ``slot``.

    Users read the post-warm-up stream cyclically, shifted by their offsets,
    so every user always has a forecast whatever the user count.
    """
    n_eval = n_values - traffic.window
    if n_eval < 1:
        raise DatasetError(f"trace of {n_values} slots leaves nothing after a {traffic.window}-slot window")
    return traffic.window + (slot - traffic.window + np.asarray(offsets)) % n_eval


# -- scenarios ----------------------------------------------------------------


_SCENARIO, _FADING, _PLACEMENT = range(3)


def _rng(seed, *key):
    """Generator for one purpose within a trial.

    Keys are fixed per (purpose, slot, user), so a scenario with more users or
    more RBs extends the draws of a smaller one instead of reshuffling them.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def fading_draw(scenario: "Scenario", slot: int) -> np.ndarray:
    """|rho|^2 for every (user, RB) pair in one slot."""
    c = scenario.config
    return np.vstack([sample_fading_power(c.channel, _rng(scenario.seed, _FADING, slot, u), c.num_rbs)
                      for u in range(c.num_users)])


def generate_scenario(config: ScenarioConfig, seed: int, traffic: TrafficConfig | None = None,
                      n_values: int | None = None) -> Scenario:
    """Drop users uniformly over the coverage area and draw the altitude.

    Users are drawn one row at a time, so two scenarios with the same seed and
    different ``num_users`` share their first users.  ``n_values`` (trace
    length) lets the start slot fall anywhere in the post-warm-up stream;
    without it the start is the first slot after warm-up.
    """
    traffic = traffic or TrafficConfig()
    rng = _rng(seed, _SCENARIO)
    x0, y0, x1, y1 = config.coverage
    altitude = float(rng.uniform(*config.altitude_range))
    u_start = float(rng.uniform())
    users = rng.uniform((x0, y0), (x1, y1), size=(config.num_users, 2))
    offsets = np.arange(config.num_users) * traffic.user_stride
    start = traffic.window
    if n_values is not None:
        start += int(u_start * (n_values - traffic.window))
    return Scenario(config, traffic, users, altitude, offsets, start, int(seed))


def build_instance(scenario: Scenario, expected_loads) -> ProblemInstance:
    c = scenario.config
    return ProblemInstance(
        users=scenario.users, channel=c.channel, num_rbs=c.num_rbs, total_power=c.total_power,
        packet_size=c.packet_size, outage_eps=c.outage_eps, predicted_loads=expected_loads,
        coverage=Rect(*c.coverage), altitude=scenario.altitude, tradeoff_zeta=c.tradeoff_zeta)


def expected_load(traffic: TrafficConfig, mean, variance):
    """Packets per slot used in the reliability constraint: Lambda (mean + kappa sd)."""
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(variance, 0.0))
    return traffic.max_arrivals * np.maximum(mean + traffic.kappa * sd, 0.0)


# -- baselines ----------------------------------------------------------------


def baseline_max_power(instance: ProblemInstance, proposed: Allocation) -> Allocation:
    """Keep the proposed RBs and position, put P_max / B on every assigned RB."""
    a = (np.asarray(proposed.assign) > 0.5).astype(float)
    return Allocation(a, a * (instance.total_power / instance.num_rbs), proposed.uav_pos)


def random_position(instance: ProblemInstance, rng: np.random.Generator):
    r = instance.coverage
    return instance.position(rng.uniform(r.x0, r.x1), rng.uniform(r.y0, r.y1))


def baseline_random_placement(instance: ProblemInstance, rng: np.random.Generator,
                              config: SolverConfig | None = None):
    """UAV dropped uniformly at random; RBs and power optimised around it."""
    return successive_maximization(instance, config, fixed_position=random_position(instance, rng))


# -- evaluation ---------------------------------------------------------------


def placement_rng(scenario: Scenario, slot: int) -> np.random.Generator:
    """Generator for the random-placement baseline at one slot."""
    return _rng(scenario.seed, _PLACEMENT, slot)


def realized_rates(instance: ProblemInstance, alloc: Allocation, fading_power) -> np.ndarray:
    g = instance.gains(alloc.uav_pos) * fading_power
    return np.sum(achievable_rate(instance.channel, alloc.assign, alloc.power, g), axis=1)


def run_slot(scenario: Scenario, slot: int, forecast: Forecast, values, strategies=STRATEGIES,
             trial: int = 0, solver: SolverConfig | None = None) -> list:
    """Plan one slot with every requested strategy and score it on one fading draw.

    ``slot`` counts slots from the start of the trace; see :func:`trace_index`
    for which rows each user reads.
    Returns one :class:`SlotRecord` per strategy.
    """
    idx = trace_index(scenario.traffic, len(values), slot, scenario.offsets)
    preds = [forecast.at(int(i)) for i in idx]
    mean = np.array([p.mean for p in preds])
    var = np.array([p.variance for p in preds])
    observed = np.asarray(values)[idx]
    inst = build_instance(scenario, expected_load(scenario.traffic, mean, var))
    c = scenario.config
    fading = fading_draw(scenario, slot)
    sq_err = float(np.mean((mean - observed) ** 2))
    need = 8.0 * c.packet_size * scenario.traffic.max_arrivals * observed

    proposed = None
    if "proposed" in strategies or "max_power" in strategies:
        proposed = successive_maximization(inst, solver)
    out = []
    for name in strategies:
        if name == "proposed":
            alloc, res = proposed.allocation, proposed
        elif name == "max_power":
            alloc, res = baseline_max_power(inst, proposed.allocation), proposed
        elif name == "random_placement":
            res = baseline_random_placement(inst, placement_rng(scenario, slot), solver)
            alloc = res.allocation
        else:
            raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
        bad = alloc.violations(inst)
        if bad:
            raise RuntimeError(f"{name} produced an invalid allocation: {bad}")
        rates = realized_rates(inst, alloc, fading)
        out.append(SlotRecord(
            trial=trial, slot=int(slot), strategy=name, objective=objective(inst, alloc),
            energy_j=alloc.total_power * c.slot_duration, sum_rate_bps=float(rates.sum()),
            min_user_rate_bps=float(rates.min()), violations=int(np.sum(rates < need)),
            infeasible_flag=res.status == "infeasible", users=inst.num_users,
            iterations=res.iterations, converged=res.converged, squared_error=sq_err))
    return out


def run_trial(config: ScenarioConfig, traffic: TrafficConfig, seed: int, trial: int = 0,
              strategies=STRATEGIES, solver: SolverConfig | None = None) -> list:
    values, forecast = load_traffic(traffic)
    scenario = generate_scenario(config, seed, traffic, len(values))
    records = []
    for k in range(config.horizon):
        records += run_slot(scenario, scenario.start_slot + k, forecast, values, strategies, trial, solver)
    return records


# -- aggregation --------------------------------------------------------------


def _mean_std(x):
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return math.nan, math.nan
    return float(x.mean()), float(x.std(ddof=1)) if len(x) > 1 else 0.0


def aggregate(records, value, strategy) -> RunReport:
    """Per-trial totals (energy) and slot averages (rates), then mean / std over trials."""
    mine = [r for r in records if r.strategy == strategy]
    trials = sorted({r.trial for r in mine})
    energy, rate, per_user, viol, sq = [], [], [], [], []
    for t in trials:
        rs = [r for r in mine if r.trial == t]
        energy.append(math.fsum(r.energy_j for r in rs))
        rate.append(np.mean([r.sum_rate_bps for r in rs]))
        per_user.append(np.mean([r.sum_rate_bps / r.users for r in rs]))
        viol.append(sum(r.violations for r in rs) / sum(r.users for r in rs))
        sq += [r.squared_error for r in rs]
    e, es = _mean_std(energy)
    s, ss = _mean_std(rate)
    p, ps = _mean_std(per_user)
    v, vs = _mean_std(viol)
    n = max(len(mine), 1)
    return RunReport(
        value=value, strategy=strategy, trials=len(trials), energy_mean=e, energy_std=es,
        sum_rate_mean=s, sum_rate_std=ss, per_user_rate_mean=p, per_user_rate_std=ps,
        violation_freq_mean=v, violation_freq_std=vs,
        predictor_mse=float(np.mean(sq)) if sq else math.nan,
        infeasible_frac=sum(r.infeasible_flag for r in mine) / n,
        mean_iterations=sum(r.iterations for r in mine) / n,
        converged_frac=sum(r.converged for r in mine) / n, records=mine)


# -- sweeps -------------------------------------------------------------------


def trial_seed(master_seed: int, trial: int) -> int:
    """Seed of one trial; shared by every sweep value (common random numbers)."""
    return int(np.random.SeedSequence([int(master_seed), int(trial)]).generate_state(1, np.uint64)[0])


def apply_axis(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Scenario with one axis set.  ``bandwidth`` is the total in MHz, rounded to whole RBs."""
    if axis == "eps":
        return replace(config, outage_eps=float(value))
    if axis == "users":
        if int(value) != value:
            raise ValueError("users axis needs integer values")
        return replace(config, num_users=int(value))
    if axis == "bandwidth":
        b = int(round(float(value) * 1e6 / config.channel.rb_bandwidth))
        if b < 1:
            raise ValueError(f"bandwidth {value} MHz is less than one RB")
        return replace(config, num_rbs=b)
    raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")


def _trial_job(args):
    config, traffic, seed, trial, strategies, solver = args
    try:
        return run_trial(config, traffic, seed, trial, strategies, solver), None
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d failed: %s", trial, exc)
        return [], f"trial {trial}: {exc}"


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: dict
    failures: list = field(default_factory=list)

    def series(self, strategy, metric):
        rs = self.reports[strategy]
        return (np.array([getattr(r, f"{metric}_mean") for r in rs]),
                np.array([getattr(r, f"{metric}_std") for r in rs]))


def sweep(axis: str, values, base: ScenarioConfig, traffic: TrafficConfig, trials: int,
          master_seed: int = 0, strategies=STRATEGIES, solver: SolverConfig | None = None,
          workers: int = 1) -> SweepResult:
    """Independent trials at each axis value, paired across values by trial seed.

    Failed trials are logged and skipped.  ``workers > 1`` runs trials in a
    process pool; results do not depend on it.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    values = list(values)
    if not values:
        raise ValueError("need at least one axis value")
    configs = [apply_axis(base, axis, v) for v in values]
    load_traffic(traffic)  # warm the forecast cache before any fork
    jobs = [(cfg, traffic, trial_seed(master_seed, t), t, tuple(strategies), solver)
            for cfg in configs for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    reports = {s: [] for s in strategies}
    failures = []
    for i, v in enumerate(values):
        chunk = results[i * trials:(i + 1) * trials]
        recs = [r for rs, _ in chunk for r in rs]
        failures += [f"{axis}={v} {err}" for _, err in chunk if err]
        for s in strategies:
            reports[s].append(aggregate(recs, v, s))
    return SweepResult(axis, values, reports, failures)


def default_workers() -> int:
    return os.cpu_count() or 1
