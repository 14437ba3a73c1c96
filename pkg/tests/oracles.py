"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def brute_force_los(sensor, target, points, R, Z):
    """Full scan of every terrain point, pure Python; returns (blocked, candidates)."""
    sx, sy, sz = sensor
    dx, dy, dz = target
    vx, vy = dx - sx, dy - sy
    L = math.hypot(vx, vy)
    if L == 0:
        return 0, 0
    blocked = n = 0
    for px, py, pz in points:
        tx, ty = px - sx, py - sy
        proj = (tx * vx + ty * vy) / L
        dist = abs(tx * vy - ty * vx) / L
        if 0 <= proj <= L and dist <= R:
            n += 1
            h = sz + proj / L * (dz - sz)
            if pz >= h - Z:
                blocked += 1
    return blocked, n


def largest_remainder_exact(total, weights):
    """Hamilton apportionment in exact rational arithmetic, ties to the earlier bin."""
    w = [Fraction(x) for x in weights]
    s = sum(w)
    quotas = [total * x / s for x in w]
    base = [math.floor(q) for q in quotas]
    left = total - sum(base)
    order = sorted(range(len(w)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def brute_force_dispatch(scenario, hubs, backups, travel):
    """Optimal dispatch objective by enumeration, or None when infeasible.

    Each backup picks, per failed primary, either nothing or one (hub, start)
    pair. Combinations breaking the no-overlap rule are dropped, and the unit
    is then credited for every step at which it has arrived at some primary
    still under repair (it can serve only one per step). Per-backup results
    are combined over all ways of covering every failure.
    """
    failed = scenario.failed
    if not failed:
        return 0.0
    per_unit = []
    for unit in backups:
        hub_ids = [h.id for h in hubs if unit.home_hub in (None, h.id)]
        options = []
        for o in failed:
            start, end = scenario.window(o)
            opts = [None]
            for h in hub_ids:
                tt = travel[(unit.id, h, o)]
                opts += [(h, t) for t in range(start, end) if t + tt < end]
            options.append(opts)
        best = {}
        for combo in itertools.product(*options):
            chosen = [(o, c) for o, c in zip(failed, combo) if c is not None]
            ok = True
            for (o1, _), (o2, (_, t2)) in itertools.permutations(chosen, 2):
                s1, e1 = scenario.window(o1)
                if s1 <= t2 < e1:
                    ok = False
                    break
            if not ok:
                continue
            cost = sum(travel[(unit.id, h, o)] for o, (h, _) in chosen)
            busy = set()
            for o, (h, t) in chosen:
                _, end = scenario.window(o)
                busy.update(range(t + travel[(unit.id, h, o)], end))
            value = cost - unit.prob * len(busy)
            served = frozenset(o for o, _ in chosen)
            if served not in best or value < best[served] - 1e-12:
                best[served] = value
        per_unit.append(best)
    target = frozenset(failed)
    result = None
    for picks in itertools.product(*[list(b.items()) for b in per_unit]):
        covered = frozenset().union(*[s for s, _ in picks]) if picks else frozenset()
        if covered != target:
            continue
        value = sum(v for _, v in picks)
        if result is None or value < result:
            result = value
    return result
