"""Problem data, decision variables and objective evaluation for one slot."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..channel import ChannelParams, Position3D, achievable_rate, dispersion, path_gain

LN2 = math.log(2.0)


class Rect(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float

    def clamp(self, x, y):
        return (min(max(x, self.x0), self.x1), min(max(y, self.y0), self.y1))

    def contains(self, x, y, tol=1e-9):
        return self.x0 - tol <= x <= self.x1 + tol and self.y0 - tol <= y <= self.y1 + tol


@dataclass
class ProblemInstance:
    """Everything the per-slot optimizer needs.

    ``predicted_loads`` are expected packet arrivals per slot.  ``fading`` is
    an optional U x B multiplier on the path gain; ones (the default) means the
    optimizer plans on the expected channel power.
    """

    users: np.ndarray
    channel: ChannelParams = field(default_factory=ChannelParams)
    num_rbs: int = 50
    total_power: float = 10.0
    packet_size: float = 32.0
    outage_eps: float = 0.1
    predicted_loads: np.ndarray | None = None
    coverage: Rect = Rect(0.0, 0.0, 250.0, 250.0)
    altitude: float = 120.0
    tradeoff_zeta: float = 1e12
    fading: np.ndarray | None = None

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=float).reshape(-1, 2)
        u = len(self.users)
        if self.predicted_loads is None:
            self.predicted_loads = np.zeros(u)
        self.predicted_loads = np.asarray(self.predicted_loads, dtype=float).reshape(u)
        self.coverage = Rect(*self.coverage)
        if self.num_rbs < 1:
            raise ValueError("need at least one RB")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if not 0 < self.outage_eps < 1:
            raise ValueError("outage_eps must lie in (0, 1)")
        if self.packet_size <= 0:
            raise ValueError("packet_size must be positive")
        if self.tradeoff_zeta < 0:
            raise ValueError("tradeoff_zeta must be non-negative")
        if self.altitude <= 0:
            raise ValueError("altitude must be positive")
        if np.any(self.predicted_loads < 0):
            raise ValueError("predicted loads must be non-negative")
        if self.fading is not None:
            self.fading = np.asarray(self.fading, dtype=float)
            if self.fading.shape != (u, self.num_rbs) or np.any(self.fading < 0):
                raise ValueError("fading must be a non-negative U x B array")

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def shape(self):
        return (self.num_users, self.num_rbs)

    def gains(self, pos) -> np.ndarray:
        """Channel power |h|^2 for every (user, RB) pair with the UAV at ``pos``."""
        g = path_gain(self.channel, (pos[0], pos[1], self.altitude), self.users)
        g = np.broadcast_to(np.atleast_1d(g)[:, None], self.shape)
        return g * self.fading if self.fading is not None else g.copy()

    def snr_per_watt(self, pos) -> np.ndarray:
        return self.gains(pos) / self.channel.noise_power

    def required_rates(self) -> np.ndarray:
        return required_rate(self, slice(None))

    def position(self, x, y) -> Position3D:
        return Position3D(float(x), float(y), float(self.altitude))


@dataclass(frozen=True)
class SolverConfig:
    bcd_tol: float = 1e-4
    max_bcd_iters: int = 100
    inner_tol: float = 1e-6
    max_inner_iters: int = 5000
    rounding_threshold: float = 0.5
    dual_step: float = 1.0
    position_step: float = 25.0
    max_feas_iters: int = 20
    softmin_temp: float = 1e-2

    def __post_init__(self):
        for name in ("bcd_tol", "inner_tol", "dual_step", "position_step", "softmin_temp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_bcd_iters", "max_inner_iters", "max_feas_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.rounding_threshold < 1:
            raise ValueError("rounding_threshold must lie in (0, 1)")


@dataclass
class Allocation:
    """RB assignment, transmit power and UAV position for one slot.

    ``power`` may hold a candidate level for unassigned pairs while the solver
    runs; :meth:`masked` zeroes those entries.
    """

    assign: np.ndarray
    power: np.ndarray
    uav_pos: Position3D

    def copy(self) -> "Allocation":
        return Allocation(self.assign.copy(), self.power.copy(), self.uav_pos)

    def masked(self) -> "Allocation":
        return Allocation(self.assign.copy(), np.where(self.assign > 0, self.power, 0.0), self.uav_pos)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.assign * self.power))

    def violations(self, instance: ProblemInstance, binary: bool = True, tol: float = 1e-8) -> list:
        """Human-readable list of broken invariants (empty when valid)."""
        out = []
        a, p = self.assign, self.power
        if a.shape != instance.shape or p.shape != instance.shape:
            return [f"shape mismatch: assign {a.shape}, power {p.shape}, expected {instance.shape}"]
        if np.any(a < -tol) or np.any(a > 1 + tol):
            out.append("assignment outside [0, 1]")
        if binary and np.any((a != 0) & (a != 1)):
            out.append("assignment not binary")
        if a.size and np.max(a.sum(axis=0)) > 1 + tol:
            out.append("an RB is shared by more than one user")
        if np.any(p < -tol) or np.any(p > instance.total_power * (1 + tol)):
            out.append("power outside [0, P_max]")
        if self.total_power > instance.total_power * (1 + tol):
            out.append(f"power budget exceeded: {self.total_power:.6g} W")
        if not instance.coverage.contains(self.uav_pos[0], self.uav_pos[1]):
            out.append("UAV outside the coverage rectangle")
        if abs(self.uav_pos[2] - instance.altitude) > 1e-9:
            out.append("UAV altitude differs from the scenario altitude")
        return out


class SolveOutcome(NamedTuple):
    allocation: Allocation
    objective: float
    per_user_rate: np.ndarray
    reliability_slack: np.ndarray
    iterations: int
    objective_trace: list
    status: str
    min_slack: float = math.nan
    converged: bool = False  # stopped on the relative-change rule


def required_rate(instance: ProblemInstance, user):
    """Rate a user needs so that the Markov bound meets the outage target.

    ``8 * packet_size * E[L] / eps``; vectorised when ``user`` is a slice or
    index array.
    """
    bits = 8.0 * instance.packet_size
    return bits * instance.predicted_loads[user] / instance.outage_eps


def rate_matrix(instance: ProblemInstance, power, pos=None, snr_w=None) -> np.ndarray:
    """Per-pair rate if the pair were assigned, at the given power."""
    if snr_w is None:
        snr_w = instance.snr_per_watt(pos)
    gain = snr_w * instance.channel.noise_power
    return achievable_rate(instance.channel, 1.0, power, gain)


def user_rates(instance: ProblemInstance, alloc: Allocation, snr_w=None) -> np.ndarray:
    w = rate_matrix(instance, alloc.power, alloc.uav_pos, snr_w)
    return np.sum(alloc.assign * w, axis=1)


def objective(instance: ProblemInstance, alloc: Allocation, snr_w=None) -> float:
    """Sum-rate minus zeta times the spent power, for this slot.

    Power on unassigned pairs is not counted, so for a binary assignment with
    power zero off the assignment this is exactly sum r - zeta sum p.
    """
    if instance.num_users == 0:
        return 0.0
    w = rate_matrix(instance, alloc.power, alloc.uav_pos, snr_w)
    a = alloc.assign
    return float(np.sum(a * w) - instance.tradeoff_zeta * np.sum(a * alloc.power))


def slack_scale(instance: ProblemInstance) -> np.ndarray:
    """Normaliser for reliability slacks; one RB bandwidth as a floor."""
    return np.maximum(instance.required_rates(), instance.channel.rb_bandwidth)


def fbl_penalty(instance: ProblemInstance, power, snr_w) -> np.ndarray:
    return np.sqrt(dispersion(power * snr_w)) * instance.channel.fbl_coeff
