"""Block coordinate ascent over (assignment, power, position).

Each block update is accepted only if it does not lower the objective and
keeps every user at or above its rate floor, so the recorded objective trace
is non-decreasing by construction.
"""
from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np

from .assignment import maxmin_rb_allocation, round_allocation, round_robin, solve_rb_allocation
from .position import softmin_position, solve_position
from .power import maxmin_power, solve_power
from .problem import (
    Allocation,
    ProblemInstance,
    SolveOutcome,
    SolverConfig,
    objective,
    rate_matrix,
    slack_scale,
    user_rates,
)

log = logging.getLogger(__name__)


class FeasibilityResult(NamedTuple):
    min_slack: float
    witness: Allocation


def initial_allocation(instance: ProblemInstance) -> Allocation:
    """Round-robin RBs, P_max/B on every pair, UAV over the user centroid."""
    u, b = instance.shape
    a = round_robin(u, b)
    p = np.full((u, b), instance.total_power / b)
    c = instance.users.mean(axis=0) if u else np.array([
        0.5 * (instance.coverage.x0 + instance.coverage.x1),
        0.5 * (instance.coverage.y0 + instance.coverage.y1)])
    return Allocation(a, p, instance.position(*instance.coverage.clamp(*c)))


def _min_slack(instance, alloc, scale):
    return float(np.min((user_rates(instance, alloc) - instance.required_rates()) / scale))


def feasibility_phase(instance: ProblemInstance, config: SolverConfig | None = None,
                      start: Allocation | None = None, move: bool = True) -> FeasibilityResult:
    """Maximise the smallest normalised reliability slack at full budget.

    Slack of user u is ``(rate_u - R_u) / max(R_u, w)``.  A negative optimum
    means the reliability targets cannot be met (to the accuracy of this local
    search).  ``move=False`` keeps the UAV where ``start`` puts it.
    """
    config = config or SolverConfig()
    if instance.num_users == 0:
        return FeasibilityResult(math.inf, initial_allocation(instance))
    scale = slack_scale(instance)
    alloc = start.copy() if start is not None else initial_allocation(instance)
    best = (_min_slack(instance, alloc, scale), alloc.copy())
    if instance.required_rates().max() == 0:
        return FeasibilityResult(best[0], best[1])
    prev = best[0]
    for _ in range(config.max_feas_iters):
        a, _t = maxmin_rb_allocation(instance, alloc.power, alloc.uav_pos, scale)
        alloc.assign = a
        alloc.power, _t = maxmin_power(instance, a, alloc.uav_pos, scale, prev_power=alloc.power)
        if move:
            alloc.uav_pos = softmin_position(instance, a, alloc.power, alloc.uav_pos, scale,
                                             config.softmin_temp, config)
            # power again at the new position so the slack reflects it
            alloc.power, _t = maxmin_power(instance, a, alloc.uav_pos, scale, prev_power=alloc.power)
        t = _min_slack(instance, alloc, scale)
        if t > best[0]:
            best = (t, alloc.copy())
        if t - prev <= config.bcd_tol * max(1.0, abs(t)):
            break
        prev = t
    return FeasibilityResult(best[0], best[1])


def _accept(instance, cand, cur_obj, floors, tol):
    obj = objective(instance, cand)
    rates = user_rates(instance, cand)
    ok = np.all(rates >= floors - tol * np.maximum(floors, 1.0))
    return ok and obj >= cur_obj, obj


def _repair(instance, assign, relaxed, power, uav_pos, tol=1e-9):
    """Fix up a rounded assignment.

    RBs left unassigned go to the user furthest below its requirement, or else
    to the user that gains most from them.  Users still short then take RBs
    from owners that can spare them, preferring RBs where their relaxed share
    was largest.
    """
    a = assign.copy()
    w = rate_matrix(instance, power, uav_pos)
    req = instance.required_rates()
    norm = np.maximum(req, 1.0)
    gain = w - instance.tradeoff_zeta * power
    for b in np.flatnonzero(a.sum(axis=0) == 0):
        deficit = req - np.sum(a * w, axis=1)
        if np.any(deficit > tol * norm):
            u = int(np.argmax(deficit / norm))
        else:
            u = int(np.argmax(gain[:, b]))
            if gain[u, b] <= 0:
                continue
        a[u, b] = 1.0
    stuck = set()
    for _ in range(a.size):
        rates = np.sum(a * w, axis=1)
        deficit = (req - rates) / norm
        deficit[list(stuck)] = -np.inf
        u = int(np.argmax(deficit))
        if deficit[u] <= tol:
            break
        owner = np.argmax(a, axis=0)
        spare = (a.max(axis=0) > 0) & (owner != u) & (rates[owner] - w[owner, np.arange(a.shape[1])] >= req[owner])
        spare &= w[u] > 0
        if not np.any(spare):
            stuck.add(u)
            continue
        key = np.where(spare, relaxed[u] + 1e-12 * w[u] / max(w[u].max(), 1.0), -np.inf)
        b = int(np.argmax(key))
        a[owner[b], b] = 0.0
        a[u, b] = 1.0
    return a


def _binary(instance, relaxed: Allocation, floors, config):
    """Round, repair and re-solve power; returns (allocation, meets floors, objective)."""
    binary = round_allocation(relaxed.assign, config.rounding_threshold)
    binary = _repair(instance, binary, relaxed.assign, relaxed.power, relaxed.uav_pos)
    p, ok = solve_power(instance, binary, relaxed.uav_pos, floors, relaxed.power, config)
    if not ok:
        p, _ = maxmin_power(instance, binary, relaxed.uav_pos, slack_scale(instance), prev_power=relaxed.power)
    final = Allocation(binary, p, relaxed.uav_pos).masked()
    meets = bool(np.all(user_rates(instance, final) >= floors - config.inner_tol * np.maximum(floors, 1.0)))
    return final, meets, objective(instance, final)


def _integral_maxmin(instance, start: Allocation, floors, config, rounds: int = 3):
    """Binary max-min slack by alternating an integral assignment and power.

    Used only when rounding could not meet the floors.  ``start`` should carry
    a candidate power on every pair, not just the assigned ones.
    """
    scale = slack_scale(instance)
    alloc = start.copy()
    best = (-math.inf, None)
    for _ in range(rounds):
        a, _t = maxmin_rb_allocation(instance, alloc.power, alloc.uav_pos, scale, integral=True)
        p, _t = maxmin_power(instance, a, alloc.uav_pos, scale, prev_power=alloc.power)
        alloc = Allocation(a, p, alloc.uav_pos).masked()
        t = _min_slack(instance, alloc, scale)
        if t <= best[0] + 1e-9:
            break
        best = (t, alloc.copy())
        # unmasked power for the next integral pass
        alloc.power = p
    final = best[1]
    p, ok = solve_power(instance, final.assign, final.uav_pos, floors, final.power, config)
    if ok:
        final = Allocation(final.assign, p, final.uav_pos).masked()
    meets = bool(np.all(user_rates(instance, final) >= floors - config.inner_tol * np.maximum(floors, 1.0)))
    return final, meets, objective(instance, final)


def successive_maximization(instance: ProblemInstance, config: SolverConfig | None = None,
                            trace_file=None, fixed_position=None) -> SolveOutcome:
    """Alternate the RB, power and position subproblems until the objective
    settles, then round the assignment and re-solve power.

    With ``fixed_position`` the UAV stays at that (x, y) and only the RB and
    power blocks run.
    """
    config = config or SolverConfig()
    u, b = instance.shape
    start = initial_allocation(instance)
    if fixed_position is not None:
        start.uav_pos = instance.position(*instance.coverage.clamp(fixed_position[0], fixed_position[1]))
    if u == 0:
        alloc = Allocation(np.zeros((0, b)), np.zeros((0, b)), start.uav_pos)
        return SolveOutcome(alloc, 0.0, np.zeros(0), np.zeros(0), 1, [0.0], "converged", math.inf, True)

    req = instance.required_rates()
    feas = feasibility_phase(instance, config, start, move=fixed_position is None)
    alloc = feas.witness.copy()
    infeasible = feas.min_slack < 0
    # rate floors: the requirement, or what the witness reaches if that is less
    floors = np.minimum(req, user_rates(instance, alloc)) if infeasible else req
    tol = config.inner_tol

    # the witness spends the full budget; let the power block trim it first
    cur = objective(instance, alloc)
    p, ok = solve_power(instance, alloc.assign, alloc.uav_pos, floors, alloc.power, config)
    if ok:
        cand = Allocation(alloc.assign, p, alloc.uav_pos)
        ok, obj = _accept(instance, cand, cur, floors, tol)
        if ok:
            alloc, cur = cand, obj
    trace = [cur]
    status = "max-iters"
    stopped = False
    rows = []
    for k in range(1, config.max_bcd_iters + 1):
        start_obj = cur
        a = solve_rb_allocation(instance, alloc.power, alloc.uav_pos, floors, config)
        if a is not None:
            cand = Allocation(a, alloc.power, alloc.uav_pos)
            ok, obj = _accept(instance, cand, cur, floors, tol)
            if ok:
                alloc, cur = cand, obj
        p, ok = solve_power(instance, alloc.assign, alloc.uav_pos, floors, alloc.power, config)
        if ok:
            cand = Allocation(alloc.assign, p, alloc.uav_pos)
            ok, obj = _accept(instance, cand, cur, floors, tol)
            if ok:
                alloc, cur = cand, obj
        if fixed_position is None:
            pos = solve_position(instance, alloc.assign, alloc.power, alloc.uav_pos, floors, config)
            cand = Allocation(alloc.assign, alloc.power, pos)
            ok, obj = _accept(instance, cand, cur, floors, tol)
            if ok:
                alloc, cur = cand, obj
        trace.append(cur)
        if trace_file is not None:
            scale = slack_scale(instance)
            rows.append((k, cur, _min_slack(instance, alloc, scale), alloc.uav_pos[0], alloc.uav_pos[1]))
        if abs(cur - start_obj) <= config.bcd_tol * max(abs(cur), 1.0):
            status = "converged"
            stopped = True
            break
    iterations = k

    # round the BCD iterate and, as a fallback, the feasibility witness
    cands = [_binary(instance, alloc, floors, config)]
    if feas.witness.assign is not alloc.assign:
        cands.append(_binary(instance, feas.witness, floors, config))
    # when the relaxation met every requirement but rounding lost it, search
    # binary assignments directly; skipped when that cannot help (known
    # infeasible, or more users with demand than RBs)
    if not infeasible and np.count_nonzero(req > 0) <= b and not any(c[1] for c in cands):
        cands.append(_integral_maxmin(instance, feas.witness, floors, config))
    final = max(cands, key=lambda c: (c[1], c[2]))[0]
    rates = user_rates(instance, final)
    slack = rates - req
    if np.any(slack < -tol * np.maximum(req, 1.0)):
        status = "infeasible"
    if infeasible:
        status = "infeasible"
    if trace_file is not None:
        _write_trace(trace_file, rows)
    return SolveOutcome(final, objective(instance, final), rates, slack, iterations, trace, status,
                        feas.min_slack, stopped)


def _write_trace(dest, rows):
    """Write the per-iteration trace to a path or an open text file."""
    lines = ["iteration,objective,min_slack,x,y\n"]
    lines += [",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in r) + "\n" for r in rows]
    if hasattr(dest, "write"):
        dest.writelines(lines)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
