"""Independent reference implementations used by the test suite.

Nothing here calls into the optimizer; rates come straight from the channel
model so a bug in the solver's bookkeeping cannot hide behind its own oracle.
"""
import itertools
import math

import numpy as np

from uavurllc.channel import ChannelParams, achievable_rate, path_gain
from uavurllc.optimizer import ProblemInstance, Rect


def pair_rates(instance, power, x, y):
    g = path_gain(instance.channel, (x, y, instance.altitude), instance.users)
    g = np.broadcast_to(np.atleast_1d(g)[:, None], instance.shape)
    return achievable_rate(instance.channel, 1.0, power, g)


def exhaustive_micro(instance, levels=3, grid=3):
    """Best objective over a discrete grid of (assignment, power, position).

    Each RB goes to nobody or one user; each assigned RB takes one of
    ``levels`` evenly spaced powers in (0, P_max]; the UAV sits on a
    ``grid`` x ``grid`` lattice over the coverage rectangle including the
    edges.  Only points meeting every rate requirement and the budget count.
    Returns ``(best objective, number of feasible points)``; the objective is
    -inf when nothing is feasible.
    """
    u, b = instance.shape
    pmax = instance.total_power
    plevels = pmax * np.arange(1, levels + 1) / levels
    r = instance.coverage
    xs = np.linspace(r.x0, r.x1, grid)
    ys = np.linspace(r.y0, r.y1, grid)
    req = 8.0 * instance.packet_size * instance.predicted_loads / instance.outage_eps
    best, count = -math.inf, 0
    for owners in itertools.product(range(-1, u), repeat=b):
        used = [j for j in range(b) if owners[j] >= 0]
        for lv in itertools.product(plevels, repeat=len(used)):
            if sum(lv) > pmax * (1 + 1e-12):
                continue
            a = np.zeros((u, b))
            p = np.zeros((u, b))
            for j, level in zip(used, lv):
                a[owners[j], j] = 1.0
                p[owners[j], j] = level
            for x in xs:
                for y in ys:
                    w = pair_rates(instance, p, x, y)
                    rates = np.sum(a * w, axis=1)
                    if np.any(rates < req * (1 - 1e-9)):
                        continue
                    count += 1
                    obj = float(np.sum(a * w) - instance.tradeoff_zeta * np.sum(a * p))
                    best = max(best, obj)
    return best, count


def random_instance(rng, users=(5, 20), rbs=(5, 25), zeta=1e12, eps=0.1, max_load=300.0,
                    channel=None, coverage=(0.0, 0.0, 250.0, 250.0)):
    """Seeded instance with uniform users, altitude in [100, 150] m and uniform loads."""
    u = int(rng.integers(users[0], users[1] + 1))
    b = int(rng.integers(rbs[0], rbs[1] + 1))
    x0, y0, x1, y1 = coverage
    pts = rng.uniform((x0, y0), (x1, y1), size=(u, 2))
    return ProblemInstance(
        users=pts, channel=channel or ChannelParams(), num_rbs=b, total_power=10.0,
        packet_size=32.0, outage_eps=eps, predicted_loads=rng.uniform(0.0, max_load, size=u),
        coverage=Rect(*coverage), altitude=float(rng.uniform(100.0, 150.0)), tradeoff_zeta=zeta)


def central_difference(f, x, h):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out
