"""Power subproblem: per-user water-filling under reliability and budget.

For a fixed assignment the Lagrangian separates per (user, RB) pair.  With the
dispersion term frozen at the previous iterate, the maximiser has the form

    p_ub = clip(W_u - 1/s_ub, 0, P_max),   W_u = (1 + lam_u) w / (ln2 (zeta + mu))

where ``s_ub`` is the SNR per watt.  ``W_u`` is a per-user water level: the
reliability multiplier ``lam_u`` lifts it to ``W_rel_u`` when the user's
constraint binds, and the budget multiplier ``mu`` lowers the common level
``W0 = w / (ln2 (zeta + mu))``.  Both are found by bisection.  Levels are
defined for every pair, assigned or not, which gives the RB subproblem a power
to price each candidate pair at.
"""
from __future__ import annotations

import math

import numpy as np

from .problem import LN2, ProblemInstance, fbl_penalty

_BISECT_ITERS = 64


def _inv_snr(snr_w):
    with np.errstate(divide="ignore"):
        return np.where(snr_w > 0, 1.0 / snr_w, np.inf)


def powers_at_levels(levels, snr_w, p_max):
    """p_ub = clip(W_u - 1/s_ub, 0, P_max); zero where the gain is zero."""
    p = np.asarray(levels, dtype=float)[:, None] - _inv_snr(snr_w)
    return np.clip(np.nan_to_num(p, nan=0.0, neginf=0.0), 0.0, p_max)


def _log_rates(assign, snr_w, levels, omega, p_max):
    # sum_b a * w * log2(1 + s * clip(W - 1/s, 0, P))
    x = np.clip(levels[:, None] * snr_w, 1.0, 1.0 + p_max * snr_w)
    return omega * np.sum(assign * np.log2(x), axis=1)


def user_levels(assign, snr_w, targets, omega, p_max):
    """Smallest water level per user whose Shannon-term rate meets ``targets``.

    Returns ``(levels, reachable)``; unreachable users get the level that puts
    full power on every pair.
    """
    u = assign.shape[0]
    levels = np.zeros(u)
    active = (assign > 0) & (snr_w > 0)
    w_max = np.where(active, p_max + _inv_snr(snr_w), 0.0).max(axis=1, initial=0.0)
    reach = _log_rates(assign, snr_w, w_max, omega, p_max)
    need = targets > 0
    reachable = ~need | (reach >= targets)
    levels[need & ~reachable] = w_max[need & ~reachable]
    todo = need & reachable
    if not np.any(todo):
        return levels, reachable
    with np.errstate(divide="ignore"):
        w_min = np.where(active, _inv_snr(snr_w), np.inf).min(axis=1)
    lo = np.log(np.where(todo, w_min, 1.0))
    hi = np.log(np.where(todo, w_max, 1.0))
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        ok = _log_rates(assign, snr_w, np.exp(mid), omega, p_max) >= targets
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    levels[todo] = np.exp(hi[todo])
    return levels, reachable


def _total(assign, snr_w, levels, p_max):
    return float(np.sum(assign * powers_at_levels(levels, snr_w, p_max)))


def budget_level(assign, snr_w, floor_levels, w_cap, p_max, budget):
    """Largest common level W0 <= w_cap with total power within ``budget``.

    Returns None when the floor levels alone exceed the budget.
    """
    def total(w0):
        return _total(assign, snr_w, np.maximum(floor_levels, w0), p_max)

    if total(0.0) > budget * (1 + 1e-12):
        return None
    if math.isfinite(w_cap) and total(w_cap) <= budget:
        return w_cap
    active = (assign > 0) & (snr_w > 0)
    hi_level = float(np.where(active, p_max + _inv_snr(snr_w), 0.0).max(initial=0.0))
    hi_level = min(w_cap, hi_level) if math.isfinite(w_cap) else hi_level
    if hi_level <= 0 or total(hi_level) <= budget:
        return hi_level
    lo, hi = 0.0, hi_level
    for _ in range(_BISECT_ITERS * 2):
        mid = 0.5 * (lo + hi)
        if total(mid) <= budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def solve_power(instance: ProblemInstance, assign, uav_pos, targets=None, prev_power=None,
                config=None, snr_w=None, passes: int = 4):
    """Maximise sum a*r - zeta * sum a*p over power for a fixed assignment.

    ``targets`` are per-user rate floors (default: the reliability
    requirement).  The dispersion penalty is frozen at ``prev_power`` and
    refreshed for ``passes`` rounds.  Returns ``(power, ok)``; ``ok`` is False
    when the floors cannot be met within the budget, in which case ``power``
    is None.
    """
    ch = instance.channel
    omega, p_max = ch.rb_bandwidth, instance.total_power
    if snr_w is None:
        snr_w = instance.snr_per_watt(uav_pos)
    if targets is None:
        targets = instance.required_rates()
    tol = 1e-6 if config is None else config.inner_tol
    zeta = instance.tradeoff_zeta
    w_price = omega / (LN2 * zeta) if zeta > 0 else math.inf
    has_rb = assign.sum(axis=1) > 0
    pen_power = prev_power if prev_power is not None else np.full(assign.shape, p_max / assign.shape[1])
    power = None
    for _ in range(passes):
        pen = np.sum(assign * fbl_penalty(instance, pen_power, snr_w), axis=1)
        floor, reachable = user_levels(assign, snr_w, np.where(targets > 0, targets + pen, 0.0), omega, p_max)
        if not np.all(reachable[has_rb]) or np.any(~has_rb & (targets > 0)):
            return None, False
        w0 = budget_level(assign, snr_w, floor, w_price, p_max, p_max)
        if w0 is None:
            return None, False
        levels = np.maximum(floor, w0)
        power = powers_at_levels(levels, snr_w, p_max)
        rates = np.sum(assign * np.maximum(omega * np.log2(1 + power * snr_w)
                                           - fbl_penalty(instance, power, snr_w), 0.0), axis=1)
        short = targets - rates
        if np.all(short <= tol * np.maximum(targets, 1.0)):
            break
        pen_power = power
    return power, True


def maxmin_power(instance: ProblemInstance, assign, uav_pos, scale=None, snr_w=None,
                 prev_power=None, iters: int = 60):
    """Power at full budget maximising the smallest normalised reliability slack.

    Slack of user u is ``(rate_u - R_u) / scale_u``.  Returns ``(power, t)``
    with ``t`` the achieved max-min slack (Shannon term minus frozen penalty).
    """
    ch = instance.channel
    omega, p_max = ch.rb_bandwidth, instance.total_power
    if snr_w is None:
        snr_w = instance.snr_per_watt(uav_pos)
    req = instance.required_rates()
    if scale is None:
        scale = np.maximum(req, omega)
    pen_power = prev_power if prev_power is not None else np.full(assign.shape, p_max / assign.shape[1])
    pen = np.sum(assign * fbl_penalty(instance, pen_power, snr_w), axis=1)
    active = (assign > 0) & (snr_w > 0)
    w_max = np.where(active, p_max + _inv_snr(snr_w), 0.0).max(axis=1, initial=0.0)
    max_rate = _log_rates(assign, snr_w, w_max, omega, p_max) - pen

    def levels_for(t):
        tg = req + t * scale + pen
        lv, ok = user_levels(assign, snr_w, np.where(req + t * scale > 0, tg, 0.0), omega, p_max)
        return lv, bool(np.all(ok))

    def feasible(t):
        lv, ok = levels_for(t)
        return ok and _total(assign, snr_w, lv, p_max) <= p_max, lv

    t_lo = float(np.min(-req / scale))
    t_hi = float(np.min((max_rate - req) / scale))
    ok_hi, lv_hi = feasible(t_hi)
    if ok_hi:
        t, lv = t_hi, lv_hi
    else:
        lv = levels_for(t_lo)[0]
        lo, hi = t_lo, t_hi
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok, lv_mid = feasible(mid)
            if ok:
                lo, lv = mid, lv_mid
            else:
                hi = mid
        t = lo
    # spend what is left of the budget on everyone's common level
    w0 = budget_level(assign, snr_w, lv, math.inf, p_max, p_max)
    if w0 is not None:
        lv = np.maximum(lv, w0)
    return powers_at_levels(lv, snr_w, p_max), t
