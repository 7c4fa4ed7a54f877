"""Independent reference implementations used to pin expected values.

Nothing here touches the optimized data structures: percentiles sort a fresh
list, the eviction history is a plain list and victims are found by a scan.
Programs run through the tree-walking interpreter.
"""
from __future__ import annotations

import math
from fractions import Fraction

from policyforge.cache import MissReport
from policyforge.dsl.interp import EvalContext, evaluate
from policyforge.dsl.nodes import CACHE


def naive_percentile(values, p):
    if not values:
        return 0
    xs = sorted(values)
    # decimal reading of p, so 0.7 * 10 is exactly 7
    rank = max(1, math.ceil(Fraction(repr(p)) * len(xs)))
    return xs[rank - 1]


class ListSeries:
    def __init__(self, values):
        self.values = list(values)

    def percentile(self, p):
        return naive_percentile(self.values, p)


class ListHistory:
    def __init__(self, capacity):
        self.capacity = capacity
        self.records = []  # (oid, time, count, age)

    def _latest(self, oid):
        for rec in reversed(self.records[-self.capacity:]):
            if rec[0] == oid:
                return rec
        return None

    def contains(self, oid):
        return self._latest(oid) is not None

    def count(self, oid):
        rec = self._latest(oid)
        return 0 if rec is None else rec[2]

    def age_at_eviction(self, oid):
        rec = self._latest(oid)
        return 0 if rec is None else rec[3]


def naive_priority_simulate(trace, program, capacity, history_capacity=1024):
    """Priority-template semantics written out the slow way."""
    res = {}  # oid -> dict
    hist = ListHistory(history_capacity)
    misses = byte_misses = evictions = total = 0

    def score(now, oid):
        m = res[oid]
        series = {
            "counts": ListSeries(r["count"] for r in res.values()),
            "sizes": ListSeries(r["size"] for r in res.values()),
            "ages": ListSeries(now - r["last"] for r in res.values()),
        }
        values = {"now": now, "obj_id": oid, "count": m["count"], "last_access_time": m["last"],
                  "insert_time": m["insert"], "size": m["size"]}
        m["score"] = evaluate(program, EvalContext(CACHE, values, series, hist))

    def evict(now):
        victim = min(res, key=lambda o: (res[o]["score"], res[o]["insert"], o))
        m = res.pop(victim)
        hist.records.append((victim, now, m["count"], now - m["last"]))

    for now, oid, size in trace:
        total += size
        if oid in res:
            m = res[oid]
            m["count"] += 1
            m["last"] = now
            m["size"] = size
            score(now, oid)
            while sum(r["size"] for r in res.values()) > capacity:
                evict(now)
                evictions += 1
            continue
        misses += 1
        byte_misses += size
        if size > capacity:
            continue
        while sum(r["size"] for r in res.values()) + size > capacity:
            evict(now)
            evictions += 1
        res[oid] = {"insert": now, "last": now, "count": 1, "size": size}
        score(now, oid)
    n = len(trace)
    return MissReport(n, misses, byte_misses, misses / n, byte_misses / total, evictions)


def chi_square_uniform(counts):
    """Pearson statistic of observed counts against the uniform law."""
    n = sum(counts)
    e = n / len(counts)
    return sum((c - e) ** 2 / e for c in counts)


def random_context(rng, mode):
    """A random evaluation context with list-backed series and history."""
    from policyforge.dsl import features

    def num():
        r = rng.random()
        if r < 0.15:
            return 0
        if r < 0.25:
            return rng.choice([1, -1, 2**62, -(2**62), 2**63 - 1])
        return rng.randint(-10_000, 10_000) if mode != CACHE else rng.randint(0, 10_000)

    values = {name: num() for name in features.scalars(mode)}
    series = {name: ListSeries(rng.randint(0, 5000) for _ in range(rng.randint(0, 12))) for name in features.series(mode)}
    hist = ListHistory(rng.randint(1, 8))
    for _ in range(rng.randint(0, 10)):
        hist.records.append((rng.choice([values.get("obj_id", 0), rng.randint(0, 20)]), 0, rng.randint(1, 9), rng.randint(0, 900)))
    return EvalContext(mode, values, series, hist)
