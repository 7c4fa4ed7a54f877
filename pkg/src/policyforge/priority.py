"""Priority-queue eviction driven by a heuristic program.

Each access or insertion re-scores the touched object with the program; the
lowest score is evicted, ties broken by (insert time, object id). Scores are
snapshots taken at the last touch. The program sees the object's metadata,
percentiles over resident objects and a bounded record of recent evictions.
"""
from __future__ import annotations

import heapq
import math
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

from sortedcontainers import SortedList

from .cache import EvictionPolicy, _make_report
from .dsl.checker import CheckFailed, check_program
from .dsl.interp import EvalContext, compile_program
from .dsl.nodes import CACHE, Program
from .policies import LazyHeap

DEFAULT_HISTORY = 1024


def nearest_rank(p: float, n: int) -> int:
    """1-based index ``ceil(p * n)``, at least 1."""
    # round away float noise such as 0.7 * 10 == 7.000000000000001
    return max(1, math.ceil(round(p * n, 9)))


_RANKS: Dict[tuple, int] = {}


def _rank0(p: float, n: int) -> int:
    key = (p, n)
    r = _RANKS.get(key)
    if r is None:
        if len(_RANKS) > 1_000_000:
            _RANKS.clear()
        r = _RANKS[key] = nearest_rank(p, n) - 1
    return r


class OrderStatMultiset:
    """Sorted multiset with nearest-rank percentile queries.

    Small multisets live in one flat list (C-level bisect and memmove beat
    any tree at that size); past ``SPLIT`` elements the storage switches to a
    ``SortedList`` for O(log n) updates, and back below ``MERGE``.
    """

    SPLIT = 4096
    MERGE = 1024

    __slots__ = ("flat", "tree", "ops")

    def __init__(self, values=()):
        self.flat = sorted(values)
        self.tree = None
        self.ops = 0
        if len(self.flat) > self.SPLIT:
            self.tree = SortedList(self.flat)
            self.flat = None

    def __len__(self):
        return len(self.flat) if self.tree is None else len(self.tree)

    def __iter__(self):
        return iter(self.flat if self.tree is None else self.tree)

    def add(self, v) -> None:
        self.ops += 1
        if self.tree is None:
            insort(self.flat, v)
            if len(self.flat) > self.SPLIT:
                self.tree = SortedList(self.flat)
                self.flat = None
        else:
            self.tree.add(v)

    def remove(self, v) -> None:
        self.ops += 1
        if self.tree is None:
            flat = self.flat
            i = bisect_left(flat, v)
            if i == len(flat) or flat[i] != v:
                raise ValueError(f"{v!r} not in multiset")
            del flat[i]
        else:
            self.tree.remove(v)
            if len(self.tree) < self.MERGE:
                self.flat = list(self.tree)
                self.tree = None

    def increment(self, v) -> None:
        """Replace one copy of ``v`` with ``v + 1``."""
        if self.tree is None:
            flat = self.flat
            # the last copy of v can become v + 1 without breaking the order
            i = bisect_right(flat, v) - 1
            if i < 0 or flat[i] != v:
                raise ValueError(f"{v!r} not in multiset")
            flat[i] = v + 1
            self.ops += 2
        else:
            self.remove(v)
            self.add(v + 1)

    def advance(self, old, new) -> None:
        """Replace ``old`` with ``new``, where ``new`` is at least every element."""
        if self.tree is None:
            flat = self.flat
            i = bisect_left(flat, old)
            if i == len(flat) or flat[i] != old:
                raise ValueError(f"{old!r} not in multiset")
            del flat[i]
            flat.append(new)
            self.ops += 2
        else:
            self.remove(old)
            self.add(new)

    def percentile(self, p: float):
        items = self.flat if self.tree is None else self.tree
        n = len(items)
        if n == 0:
            return 0
        r = _RANKS.get((p, n))
        if r is None:
            r = _rank0(p, n)
        return items[r]

    def percentile_desc(self, p: float):
        """Nearest-rank percentile of the values taken in descending order."""
        items = self.flat if self.tree is None else self.tree
        n = len(items)
        if n == 0:
            return 0
        r = _RANKS.get((p, n))
        if r is None:
            r = _rank0(p, n)
        return items[n - 1 - r]


class AgeSeries:
    """Ages (now - last access) answered from the last-access multiset."""

    def __init__(self, last_access: OrderStatMultiset, now: int):
        self.last_access = last_access
        self.now = now

    def percentile(self, p: float):
        # ascending ages are descending last-access times
        if len(self.last_access) == 0:
            return 0
        return self.now - self.last_access.percentile_desc(p)


class HistoryRecord(NamedTuple):
    object_id: int
    eviction_time: int
    count_at_eviction: int
    age_at_eviction: int  # eviction time minus last access time


class EvictionHistory:
    """Ring of the last ``capacity`` evictions with an id index for O(1) lookups."""

    def __init__(self, capacity: int = DEFAULT_HISTORY):
        if capacity < 1:
            raise ValueError("history capacity must be ≥ 1")
        self.capacity = capacity
        self.ring: list = [None] * capacity
        self.pos = 0
        self.index: Dict[int, int] = {}  # id -> slot of its latest record
        self.ops = 0

    def record(self, oid, eviction_time, count, age) -> None:
        slot = self.pos
        old = self.ring[slot]
        if old is not None and self.index.get(old.object_id) == slot:
            del self.index[old.object_id]
        self.ring[slot] = HistoryRecord(oid, eviction_time, count, age)
        self.index[oid] = slot
        self.pos = (slot + 1) % self.capacity
        self.ops += 1

    def get(self, oid) -> Optional[HistoryRecord]:
        slot = self.index.get(oid)
        return None if slot is None else self.ring[slot]

    def contains(self, oid) -> bool:
        return oid in self.index

    def count(self, oid) -> int:
        slot = self.index.get(oid)
        return 0 if slot is None else self.ring[slot].count_at_eviction

    def age_at_eviction(self, oid) -> int:
        slot = self.index.get(oid)
        return 0 if slot is None else self.ring[slot].age_at_eviction

    def __len__(self):
        return len(self.index)


@dataclass(frozen=True)
class ObjectMeta:
    object_id: int
    size: int
    count: int
    last_access_time: int
    insert_time: int


class AggregateView:
    """Percentile series over resident objects: counts, ages and sizes.

    Only the series named in ``enabled`` are maintained; the rest answer 0.
    """

    def __init__(self, enabled=("counts", "ages", "sizes")):
        self.enabled = frozenset(enabled)
        self.counts = OrderStatMultiset() if "counts" in self.enabled else None
        self.last_access = OrderStatMultiset() if "ages" in self.enabled else None
        self.sizes = OrderStatMultiset() if "sizes" in self.enabled else None

    def add(self, count, last, size):
        if self.counts is not None:
            self.counts.add(count)
        if self.last_access is not None:
            self.last_access.add(last)
        if self.sizes is not None:
            self.sizes.add(size)

    def remove(self, count, last, size):
        if self.counts is not None:
            self.counts.remove(count)
        if self.last_access is not None:
            self.last_access.remove(last)
        if self.sizes is not None:
            self.sizes.remove(size)

    def series(self, now) -> dict:
        out = {}
        if self.counts is not None:
            out["counts"] = self.counts
        if self.sizes is not None:
            out["sizes"] = self.sizes
        if self.last_access is not None:
            out["ages"] = AgeSeries(self.last_access, now)
        return out

    @property
    def ops(self) -> int:
        return sum(s.ops for s in (self.counts, self.last_access, self.sizes) if s is not None)


def _zero(_p):
    return 0.0


class PriorityPolicy(EvictionPolicy):
    """Evict the lowest-scoring resident object under a cache-mode program."""

    def __init__(self, program: Program, history_capacity: int = DEFAULT_HISTORY, label: Optional[str] = None, all_aggregates: bool = False):
        if program.mode != CACHE:
            raise ValueError("priority programs must be cache-mode")
        report = check_program(program)
        if not report.ok:
            raise CheckFailed(report)
        self.program = program
        self.compiled = compile_program(program, checked=True)
        self.label = label or "program"
        enabled = ("counts", "ages", "sizes") if all_aggregates else self.compiled.series_used
        self.aggregates = AggregateView(enabled)
        self.history = EvictionHistory(history_capacity)
        # eviction history is only kept when the program can observe it
        self.track_history = all_aggregates or self.compiled.history_used
        self.heap = LazyHeap()
        self.meta: Dict[int, list] = {}  # oid -> [insert, last, count, size]
        self._now = 0
        agg = self.aggregates
        self._pct_counts = agg.counts.percentile if agg.counts is not None else _zero
        self._pct_sizes = agg.sizes.percentile if agg.sizes is not None else _zero
        self._pct_ages = self._ages if agg.last_access is not None else _zero
        self._fn = self.compiled.fn
        h = self.history
        self._h_contains, self._h_count, self._h_age = h.contains, h.count, h.age_at_eviction

    def _ages(self, p):
        return self._now - self.aggregates.last_access.percentile_desc(p) if len(self.aggregates.last_access) else 0

    def on_insert(self, now, oid, size):
        fnow = float(now)
        # [insert, last, count, size, float(oid), float(insert)]
        m = [now, now, 1, size, float(oid), fnow]
        self.meta[oid] = m
        agg = self.aggregates
        if agg.counts is not None:
            agg.counts.add(1)
        if agg.last_access is not None:
            agg.last_access.add(now)
        if agg.sizes is not None:
            agg.sizes.add(size)
        self._now = now
        score = self._fn(
            fnow, m[4], 1.0, fnow, fnow, float(size),
            oid, self._pct_counts, self._pct_ages, self._pct_sizes,
            self._h_contains, self._h_count, self._h_age,
        )
        self.heap.set(oid, (score, now, oid))

    def on_hit(self, now, oid, size):
        m = self.meta[oid]
        agg = self.aggregates
        count = m[2] + 1
        if agg.counts is not None:
            agg.counts.increment(m[2])
        if agg.last_access is not None:
            agg.last_access.advance(m[1], now)
        if agg.sizes is not None and size != m[3]:
            agg.sizes.remove(m[3])
            agg.sizes.add(size)
        m[1] = now
        m[2] = count
        m[3] = size
        self._now = now
        fnow = float(now)
        score = self._fn(
            fnow, m[4], float(count), fnow, m[5], float(size),
            oid, self._pct_counts, self._pct_ages, self._pct_sizes,
            self._h_contains, self._h_count, self._h_age,
        )
        self.heap.set(oid, (score, m[0], oid))

    def evict_victim(self, now):
        oid = self.heap.pop()
        insert, last, count, size = self.meta.pop(oid)[:4]
        self.aggregates.remove(count, last, size)
        if self.track_history:
            self.history.record(oid, now, count, now - last)
        return oid

    def replay(self, trace, config, trace_name: str = ""):
        """Whole-trace simulation with the policy hooks inlined.

        Same semantics as :func:`policyforge.cache.simulate` driving this policy
        through its hooks, minus the per-request call overhead. Needs a fresh
        policy.
        """
        if self.meta:
            raise ValueError("replay needs a fresh policy")
        if not trace:
            raise ValueError("empty trace")
        cap = config.capacity_bytes
        meta = self.meta
        lazy = self.heap
        heap, live = lazy.heap, lazy.live
        push, pop = heapq.heappush, heapq.heappop
        fn = self._fn
        pc, pa, ps = self._pct_counts, self._pct_ages, self._pct_sizes
        hc, hn, ha = self._h_contains, self._h_count, self._h_age
        agg = self.aggregates
        counts, lasts, sizes = agg.counts, agg.last_access, agg.sizes
        record = self.history.record if self.track_history else None
        used = misses = byte_misses = evictions = total = 0
        heap_ops = 0
        for now, oid, size in trace:
            total += size
            self._now = now
            fnow = float(now)
            m = meta.get(oid)
            if m is not None:
                count = m[2] + 1
                if counts is not None:
                    counts.increment(m[2])
                if lasts is not None:
                    # request times never decrease, so now is the largest value
                    lasts.advance(m[1], now)
                if size != m[3]:
                    if sizes is not None:
                        sizes.remove(m[3])
                        sizes.add(size)
                    used += size - m[3]
                    m[3] = size
                m[1] = now
                m[2] = count
                entry = (fn(fnow, m[4], float(count), fnow, m[5], float(size), oid, pc, pa, ps, hc, hn, ha), m[0], oid)
                live[oid] = entry
                push(heap, entry)
                heap_ops += 1
                if len(heap) > 2 * len(live) + 64:
                    heap[:] = live.values()
                    heapq.heapify(heap)
                need = 0
            else:
                misses += 1
                byte_misses += size
                if size > cap:
                    continue
                need = size
            while used + need > cap:
                while True:
                    e = pop(heap)
                    heap_ops += 1
                    victim = e[2]
                    if live.get(victim) is e:
                        break
                del live[victim]
                vi, vl, vc, vs = meta.pop(victim)[:4]
                if counts is not None:
                    counts.remove(vc)
                if lasts is not None:
                    lasts.remove(vl)
                if sizes is not None:
                    sizes.remove(vs)
                if record is not None:
                    record(victim, now, vc, now - vl)
                used -= vs
                evictions += 1
            if need:
                m = [now, now, 1, size, float(oid), fnow]
                meta[oid] = m
                if counts is not None:
                    counts.add(1)
                if lasts is not None:
                    lasts.add(now)
                if sizes is not None:
                    sizes.add(size)
                used += size
                entry = (fn(fnow, m[4], 1.0, fnow, fnow, float(size), oid, pc, pa, ps, hc, hn, ha), now, oid)
                live[oid] = entry
                push(heap, entry)
                heap_ops += 1
                if len(heap) > 2 * len(live) + 64:
                    heap[:] = live.values()
                    heapq.heapify(heap)
        lazy.ops += heap_ops
        return _make_report(len(trace), misses, byte_misses, total, evictions, self.name(), trace_name, cap)

    def name(self):
        return self.label

    # -- introspection --

    def object_meta(self, oid) -> ObjectMeta:
        insert, last, count, size = self.meta[oid][:4]
        return ObjectMeta(oid, size, count, last, insert)

    def stored_score(self, oid) -> float:
        return self.heap.live[oid][0]

    def context_for(self, oid, now) -> EvalContext:
        """The EvalContext the program would see for resident ``oid`` at ``now``."""
        insert, last, count, size = self.meta[oid][:4]
        return EvalContext(
            CACHE,
            {"now": now, "obj_id": oid, "count": count, "last_access_time": last, "insert_time": insert, "size": size},
            self.aggregates.series(now),
            self.history,
        )

    @property
    def ops(self) -> int:
        return self.heap.ops + self.aggregates.ops + self.history.ops


def make_priority_policy(program: Program, history_capacity: int = DEFAULT_HISTORY, label: Optional[str] = None) -> PriorityPolicy:
    return PriorityPolicy(program, history_capacity, label)
