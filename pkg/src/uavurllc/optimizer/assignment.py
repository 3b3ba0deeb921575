"""RB subproblem: relaxed assignment LP and threshold rounding.

With power fixed the rate of a pair is ``a * w(p)``, so the relaxed problem is
a linear program in ``a``.  It is solved with HiGHS through
:func:`scipy.optimize.linprog`; rows are scaled so that coefficients are O(1).
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .problem import ProblemInstance, rate_matrix


class LPFailure(RuntimeError):
    pass


def _structure(u, b):
    n = u * b
    cols = sparse.kron(sparse.eye(b), np.ones((1, u)), format="csr")  # a is column-major: idx = b*U + u
    rows = sparse.kron(np.ones((1, b)), sparse.eye(u), format="csr")
    return n, cols, rows


def _flat(m):
    return np.asarray(m, dtype=float).T.ravel()


def _unflat(x, u, b):
    return np.clip(x[: u * b].reshape(b, u).T, 0.0, 1.0)


def solve_rb_allocation(instance: ProblemInstance, power, uav_pos, targets=None,
                        config=None, snr_w=None, with_cost: bool = True):
    """Relaxed assignment maximising sum a*(r - zeta*p) for fixed power and position.

    Constraints: every RB shared to at most one user in total, a-weighted
    power within the budget, and every user's rate at least ``targets``
    (default: its reliability requirement).  Returns the U x B matrix in
    [0, 1] or None when the LP is infeasible.
    """
    u, b = instance.shape
    if u == 0:
        return np.zeros((0, b))
    omega = instance.channel.rb_bandwidth
    w = rate_matrix(instance, power, uav_pos, snr_w)
    if targets is None:
        targets = instance.required_rates()
    gain = w - (instance.tradeoff_zeta * power if with_cost else 0.0)
    n, cols, rows = _structure(u, b)
    scale = np.maximum(targets, omega)
    rel = -(rows.multiply(_flat(w)[None, :])).tocsr()
    rel = sparse.diags(1.0 / scale) @ rel
    bud = sparse.csr_matrix(_flat(power)[None, :] / instance.total_power)
    a_ub = sparse.vstack([cols, bud, rel], format="csr")
    b_ub = np.concatenate([np.ones(b), [1.0], -targets / scale])
    res = linprog(-_flat(gain) / omega, A_ub=a_ub, b_ub=b_ub, bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        return None
    return _unflat(res.x, u, b)


def maxmin_rb_allocation(instance: ProblemInstance, power, uav_pos, scale=None, snr_w=None,
                         integral: bool = False, time_limit: float = 10.0):
    """Assignment maximising the smallest normalised reliability slack.

    Relaxed by default; ``integral=True`` solves the binary version as a MILP
    (HiGHS branch and bound, stopped after ``time_limit`` seconds with the
    incumbent).  Returns ``(assign, t)``.
    """
    u, b = instance.shape
    omega = instance.channel.rb_bandwidth
    w = rate_matrix(instance, power, uav_pos, snr_w)
    req = instance.required_rates()
    if scale is None:
        scale = np.maximum(req, omega)
    n, cols, rows = _structure(u, b)
    rel = -(rows.multiply(_flat(w)[None, :])).tocsr()
    rel = sparse.hstack([sparse.diags(1.0 / scale) @ rel, np.ones((u, 1))], format="csr")
    cols = sparse.hstack([cols, np.zeros((b, 1))], format="csr")
    bud = sparse.csr_matrix(np.append(_flat(power) / instance.total_power, 0.0)[None, :])
    a_ub = sparse.vstack([cols, bud, rel], format="csr")
    b_ub = np.concatenate([np.ones(b), [1.0], -req / scale])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    # tiny reward for rate breaks ties toward useful assignments
    c[:n] = -1e-9 * _flat(w) / (omega * max(b, 1))
    if integral:
        lo = np.append(np.zeros(n), -np.inf)
        hi = np.append(np.ones(n), np.inf)
        res = milp(c, constraints=LinearConstraint(a_ub, -np.inf, b_ub), bounds=Bounds(lo, hi),
                   integrality=np.append(np.ones(n), 0), options={"time_limit": time_limit})
        if res.x is None:
            raise LPFailure(res.message)
        return np.round(_unflat(res.x, u, b)), float(res.x[-1])
    bounds = [(0.0, 1.0)] * n + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise LPFailure(res.message)
    return _unflat(res.x, u, b), float(res.x[-1])


def round_allocation(relaxed, threshold: float = 0.5) -> np.ndarray:
    """Threshold rounding: each RB goes to its largest share if that share
    reaches ``threshold``; otherwise the RB is left unassigned.

    Ties go to the lowest user index (``argmax`` semantics).
    """
    relaxed = np.asarray(relaxed, dtype=float)
    out = np.zeros_like(relaxed)
    if relaxed.size == 0:
        return out
    winner = np.argmax(relaxed, axis=0)
    cols = np.arange(relaxed.shape[1])
    keep = relaxed[winner, cols] >= threshold
    out[winner[keep], cols[keep]] = 1.0
    return out


def round_robin(u: int, b: int) -> np.ndarray:
    a = np.zeros((u, b))
    if u:
        a[np.arange(b) % u, np.arange(b)] = 1.0
    return a
