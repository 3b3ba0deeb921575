"""Position subproblem: projected gradient ascent over the UAV's (x, y)."""
from __future__ import annotations

import math

import numpy as np

from ..channel import path_gain
from .problem import LN2, ProblemInstance


def _snr_and_d2(instance: ProblemInstance, x, y):
    dx = x - instance.users[:, 0]
    dy = y - instance.users[:, 1]
    d2 = instance.altitude ** 2 + dx * dx + dy * dy
    g = path_gain(instance.channel, (x, y, instance.altitude), instance.users)
    s = np.atleast_1d(g)[:, None] / instance.channel.noise_power
    s = np.broadcast_to(s, instance.shape)
    if instance.fading is not None:
        s = s * instance.fading
    return s, dx, dy, d2


def _pair_rates(instance, power, s):
    ch = instance.channel
    x = power * s
    r = ch.rb_bandwidth * np.log2(1.0 + x) - np.sqrt(x / (1.0 + x)) * ch.fbl_coeff
    return np.maximum(r, 0.0)


def position_value(instance: ProblemInstance, assign, power, x, y):
    """(objective, per-user rates) with the UAV at (x, y)."""
    s, *_ = _snr_and_d2(instance, x, y)
    r = assign * _pair_rates(instance, power, s)
    obj = float(r.sum() - instance.tradeoff_zeta * np.sum(assign * power))
    return obj, r.sum(axis=1)


def _rate_sensitivity(instance, assign, power, s):
    # d r_ub / d s_ub, zero where the rate is clamped
    ch = instance.channel
    x = power * s
    dlog = ch.rb_bandwidth * power / (LN2 * (1.0 + x))
    with np.errstate(divide="ignore", invalid="ignore"):
        dsqrtv = np.where(x > 0, 0.5 / np.sqrt(x * (1.0 + x)) * power / (1.0 + x), 0.0)
    d = dlog - ch.fbl_coeff * dsqrtv
    return np.where(_pair_rates(instance, power, s) > 0, assign * d, 0.0)


def user_rate_gradient(instance: ProblemInstance, assign, power, x, y):
    """d(rate_u)/dx and d(rate_u)/dy for every user, shape (U, 2)."""
    s, dx, dy, d2 = _snr_and_d2(instance, x, y)
    drds = np.sum(_rate_sensitivity(instance, assign, power, s) * s, axis=1)  # sum_b dr/ds * s
    coef = -instance.channel.pathloss_exp * drds / d2
    return np.column_stack([coef * dx, coef * dy])


def position_gradient(instance: ProblemInstance, assign, power, x, y) -> np.ndarray:
    """Analytic gradient of the objective with respect to (x, y)."""
    return user_rate_gradient(instance, assign, power, x, y).sum(axis=0)


def _ascent(f, grad, x0, rect, accept, step0, max_iters, tol):
    """Backtracking projected gradient ascent of ``f`` from ``x0``.

    ``accept(value, point)`` can veto points (e.g. reliability).  Returns the
    best point found; never worse than ``x0``.
    """
    x = np.array(x0, dtype=float)
    fx = f(x)
    step = step0
    for _ in range(max_iters):
        g = grad(x)
        gn = float(np.hypot(*g))
        if gn == 0 or not math.isfinite(gn):
            break
        moved = False
        while step > 1e-6:
            cand = np.array(rect.clamp(*(x + step * g / gn)))
            delta = cand - x
            if np.hypot(*delta) < 1e-9:
                step *= 0.5
                continue
            fc = f(cand)
            if fc >= fx + 1e-4 * float(g @ delta) and accept(fc, cand):
                x, fx, moved = cand, fc, True
                break
            step *= 0.5
        if not moved:
            break
        if np.hypot(*delta) < tol:
            break
        step = min(2.0 * step, step0 * 4)
    return x, fx


def solve_position(instance: ProblemInstance, assign, power, uav_pos, targets=None, config=None):
    """Move the UAV to increase the objective while keeping every user's rate
    at or above ``targets`` (default: reliability requirement).

    Returns the new :class:`Position3D`; falls back to the start position when
    no improving step exists.
    """
    if instance.num_users == 0:
        return instance.position(*instance.coverage.clamp(uav_pos[0], uav_pos[1]))
    if targets is None:
        targets = instance.required_rates()
    tol_rel = 1e-6 if config is None else config.inner_tol
    step0 = 25.0 if config is None else config.position_step
    iters = 500 if config is None else config.max_inner_iters
    floor = targets * (1 - tol_rel)
    start = instance.coverage.clamp(uav_pos[0], uav_pos[1])

    def f(c):
        return position_value(instance, assign, power, c[0], c[1])[0]

    def grad(c):
        return position_gradient(instance, assign, power, c[0], c[1])

    def accept(_, c):
        rates = position_value(instance, assign, power, c[0], c[1])[1]
        return bool(np.all(rates >= np.minimum(floor, start_rates)))

    start_rates = position_value(instance, assign, power, *start)[1]
    best, _ = _ascent(f, grad, start, instance.coverage, accept, step0, iters, 1e-3)
    return instance.position(*best)


def softmin_position(instance: ProblemInstance, assign, power, uav_pos, scale, temp=1e-2, config=None):
    """Ascend a soft-min of normalised reliability slacks over (x, y)."""
    req = instance.required_rates()
    step0 = 25.0 if config is None else config.position_step
    iters = 500 if config is None else config.max_inner_iters

    def slacks(c):
        return (position_value(instance, assign, power, c[0], c[1])[1] - req) / scale

    def f(c):
        z = -slacks(c) / temp
        m = z.max()
        return float(-temp * (m + np.log(np.exp(z - m).sum())))

    def grad(c):
        z = -slacks(c) / temp
        w = np.exp(z - z.max())
        w /= w.sum()
        du = user_rate_gradient(instance, assign, power, c[0], c[1]) / scale[:, None]
        return (w[:, None] * du).sum(axis=0)

    start = instance.coverage.clamp(uav_pos[0], uav_pos[1])
    best, _ = _ascent(f, grad, start, instance.coverage, lambda *_: True, step0, iters, 1e-3)
    return instance.position(*best)
