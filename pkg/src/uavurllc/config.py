"""Run configuration: a YAML tree of overrides on top of built-in defaults.

Radio constants are written in the units people quote them in (dB, dBm/Hz)
and converted once when the run objects are built.  Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ChannelParams, db_to_linear, dbm_to_watt
from .optimizer import SolverConfig
from .sim import ScenarioConfig, TrafficConfig
from .traffic import DEFAULT_DATASET


class ConfigError(ValueError):
    pass


@dataclass
class ChannelBlock:
    gamma0_db: float = -30.0
    pathloss_exp: float = 2.0
    noise_density_dbm_hz: float = -174.0
    rb_bandwidth_hz: float = 180e3
    rician_k: float = 10.0
    blocklength: int = 168
    decode_err: float = 1e-5

    def build(self) -> ChannelParams:
        return ChannelParams(
            gamma0=db_to_linear(self.gamma0_db), pathloss_exp=self.pathloss_exp,
            noise_density=dbm_to_watt(self.noise_density_dbm_hz), rb_bandwidth=self.rb_bandwidth_hz,
            rician_k=self.rician_k, blocklength=self.blocklength, decode_err=self.decode_err)


@dataclass
class ScenarioBlock:
    num_users: int = 20
    num_rbs: int = 50
    total_power_w: float = 10.0
    packet_size_bytes: float = 32.0
    outage_eps: float = 0.1
    tradeoff_zeta: float = 1e12
    coverage_m: list = field(default_factory=lambda: [0.0, 0.0, 250.0, 250.0])
    altitude_range_m: list = field(default_factory=lambda: [100.0, 150.0])
    slot_duration_s: float = 1e-3
    horizon: int = 1


@dataclass
class SolverBlock:
    bcd_tol: float = 1e-4
    max_bcd_iters: int = 100
    inner_tol: float = 1e-6
    max_inner_iters: int = 5000
    rounding_threshold: float = 0.5
    dual_step: float = 1.0
    position_step: float = 25.0
    max_feas_iters: int = 20
    softmin_temp: float = 1e-2


@dataclass
class TrafficBlock:
    dataset: str = ""  # empty: the bundled series
    time_col: str = "Date"
    value_col: str = "Close"
    delimiter: str = ","
    max_arrivals: float = 500.0
    window: int = 600
    refit_every: int = 50
    kappa: float = 1.0
    user_stride: int = 7
    inputs: str = "lagged"


@dataclass
class SweepBlock:
    trials: int = 20
    eps: list = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1])
    users: list = field(default_factory=lambda: [5, 8, 11, 14, 17, 20])
    bandwidth_mhz: list = field(default_factory=lambda: [9.0, 10.8, 13.5, 16.2, 18.0, 22.5])


@dataclass
class OutputBlock:
    directory: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    workers: int = 1


@dataclass
class RunConfig:
    master_seed: int = 0
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)
    channel: ChannelBlock = field(default_factory=ChannelBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    traffic: TrafficBlock = field(default_factory=TrafficBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # -- conversion to run objects ----------------------------------------

    def channel_params(self) -> ChannelParams:
        return self.channel.build()

    def scenario_config(self) -> ScenarioConfig:
        s = self.scenario
        return ScenarioConfig(
            num_users=s.num_users, num_rbs=s.num_rbs, total_power=s.total_power_w,
            packet_size=s.packet_size_bytes, outage_eps=s.outage_eps, tradeoff_zeta=s.tradeoff_zeta,
            coverage=tuple(s.coverage_m), altitude_range=tuple(s.altitude_range_m),
            slot_duration=s.slot_duration_s, horizon=s.horizon, channel=self.channel_params())

    def traffic_config(self) -> TrafficConfig:
        t = dataclasses.asdict(self.traffic)
        t["dataset"] = t["dataset"] or str(DEFAULT_DATASET)
        return TrafficConfig(**t)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**dataclasses.asdict(self.solver))

    def validate(self) -> "RunConfig":
        """Build every run object once so bad values fail at load time."""
        try:
            self.scenario_config()
            self.traffic_config()
            self.solver_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.traffic.inputs not in ("lagged", "time"):
            raise ConfigError("traffic.inputs must be 'lagged' or 'time'")
        if self.sweep.trials < 1:
            raise ConfigError("sweep.trials must be at least 1")
        if self.output.workers < 0:
            raise ConfigError("output.workers must be >= 0 (0: one per CPU)")
        bad = set(self.output.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")
        return self

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def digest(self) -> str:
        """Hash of everything that can change results (not where they go or how many workers)."""
        d = self.to_dict()
        del d["output"]["directory"], d["output"]["workers"]
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=False).encode()).hexdigest()[:16]


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        # plain YAML 1.1 reads 1e-5 as a string, so accept numeric strings
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if default:
            return [_coerce(v, default[0], f"{where}[{i}]") for i, v in enumerate(value)]
        return list(value)
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _merge(obj, overrides: dict, where: str):
    if not isinstance(overrides, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(overrides).__name__}")
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'top level'}: {', '.join(map(str, unknown))}")
    for key, value in overrides.items():
        cur = getattr(obj, key)
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(cur):
            _merge(cur, {} if value is None else value, path)
        else:
            setattr(obj, key, _coerce(value, cur, path))
    return obj


def from_dict(overrides: dict | None) -> RunConfig:
    return _merge(RunConfig(), overrides or {}, "").validate()


def load_config(path=None) -> RunConfig:
    """Defaults, overridden by the YAML file at ``path`` if given."""
    if path is None:
        return from_dict({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return from_dict(data)
