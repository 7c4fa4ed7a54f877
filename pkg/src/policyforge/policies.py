"""Baseline eviction policies.

Ties are broken the same way everywhere: lowest insert time, then lowest
object id. Queue-ordered policies (FIFO-Reinsertion, SIEVE, S3-FIFO, ARC, 2Q)
order by insertion instead, which coincides whenever logical times are
distinct.
"""
from __future__ import annotations

import heapq
from collections import OrderedDict
from typing import Callable, Dict, Optional

from .cache import EvictionPolicy


class LazyHeap:
    """Min-heap keyed by object id; re-keying leaves stale entries behind.

    Entries are tuples ending in the object id. Stale entries are skipped on
    pop and purged when they outnumber live ones.
    """

    __slots__ = ("heap", "live", "ops")

    def __init__(self):
        self.heap: list = []
        self.live: Dict[int, tuple] = {}
        self.ops = 0  # structural operations, for complexity instrumentation

    def __len__(self):
        return len(self.live)

    def __contains__(self, oid):
        return oid in self.live

    def set(self, oid, entry: tuple) -> None:
        self.live[oid] = entry
        heapq.heappush(self.heap, entry)
        self.ops += 1
        if len(self.heap) > 2 * len(self.live) + 64:
            self.heap = list(self.live.values())
            heapq.heapify(self.heap)

    def discard(self, oid) -> None:
        self.live.pop(oid, None)

    def pop_entry(self) -> tuple:
        heap, live = self.heap, self.live
        while True:
            entry = heapq.heappop(heap)
            self.ops += 1
            oid = entry[-1]
            if live.get(oid) is entry:
                del live[oid]
                return entry

    def pop(self):
        return self.pop_entry()[-1]

    def peek_entry(self, oid):
        return self.live.get(oid)


class _KeyedPolicy(EvictionPolicy):
    """Evicts the resident object with the smallest ``key(meta)`` tuple."""

    label = "keyed"

    def __init__(self):
        self.heap = LazyHeap()
        self.meta: Dict[int, list] = {}  # oid -> [insert, last, count, size]

    def key(self, now, oid, m) -> tuple:
        raise NotImplementedError

    def on_insert(self, now, oid, size):
        m = [now, now, 1, size]
        self.meta[oid] = m
        self.heap.set(oid, self.key(now, oid, m) + (oid,))

    def on_hit(self, now, oid, size):
        m = self.meta[oid]
        m[1] = now
        m[2] += 1
        m[3] = size
        self.heap.set(oid, self.key(now, oid, m) + (oid,))

    def evict_victim(self, now):
        oid = self.heap.pop()
        self.on_evict(oid, self.meta.pop(oid))
        return oid

    def on_evict(self, oid, m):
        pass

    def name(self):
        return self.label


class FIFO(_KeyedPolicy):
    label = "fifo"

    def key(self, now, oid, m):
        return (m[0],)

    def on_hit(self, now, oid, size):
        m = self.meta[oid]
        m[1] = now
        m[2] += 1
        m[3] = size


class LRU(_KeyedPolicy):
    label = "lru"

    def key(self, now, oid, m):
        return (m[1], m[0])


class LFU(_KeyedPolicy):
    """In-cache LFU: counts restart at 1 on every insertion."""

    label = "lfu"

    def key(self, now, oid, m):
        return (m[2], m[0])


class MRU(_KeyedPolicy):
    label = "mru"

    def key(self, now, oid, m):
        return (-m[1], m[0])


class GDSF(_KeyedPolicy):
    """Greedy-Dual-Size-Frequency with unit cost: H = L + count / size.

    L inflates to the H of each evicted object; H is fixed at last touch.
    """

    label = "gdsf"

    def __init__(self):
        super().__init__()
        self.clock = 0.0

    def key(self, now, oid, m):
        return (self.clock + m[2] / m[3], m[0])

    def evict_victim(self, now):
        entry = self.heap.pop_entry()
        oid = entry[-1]
        del self.meta[oid]
        self.clock = entry[0]
        return oid


class FIFOReinsertion(EvictionPolicy):
    """FIFO with one reference bit (second chance / CLOCK)."""

    def __init__(self):
        self.queue: "OrderedDict[int, bool]" = OrderedDict()

    def on_insert(self, now, oid, size):
        self.queue[oid] = False

    def on_hit(self, now, oid, size):
        self.queue[oid] = True

    def evict_victim(self, now):
        q = self.queue
        while True:
            oid, visited = next(iter(q.items()))
            if not visited:
                del q[oid]
                return oid
            q[oid] = False
            q.move_to_end(oid)

    def name(self):
        return "fifo-reinsertion"


class SIEVE(EvictionPolicy):
    """SIEVE: FIFO list, new objects at the head, a hand sweeping tail→head."""

    def __init__(self):
        self.newer: Dict[int, Optional[int]] = {}
        self.older: Dict[int, Optional[int]] = {}
        self.visited: Dict[int, bool] = {}
        self.head: Optional[int] = None  # newest
        self.tail: Optional[int] = None  # oldest
        self.hand: Optional[int] = None

    def on_insert(self, now, oid, size):
        self.visited[oid] = False
        self.older[oid] = self.head
        self.newer[oid] = None
        if self.head is not None:
            self.newer[self.head] = oid
        self.head = oid
        if self.tail is None:
            self.tail = oid

    def on_hit(self, now, oid, size):
        self.visited[oid] = True

    def _unlink(self, oid):
        n, o = self.newer.pop(oid), self.older.pop(oid)
        if n is not None:
            self.older[n] = o
        else:
            self.head = o
        if o is not None:
            self.newer[o] = n
        else:
            self.tail = n
        del self.visited[oid]

    def evict_victim(self, now):
        obj = self.hand if self.hand is not None else self.tail
        while self.visited[obj]:
            self.visited[obj] = False
            obj = self.newer[obj]
            if obj is None:
                obj = self.tail
        self.hand = self.newer[obj]
        self._unlink(obj)
        return obj

    def name(self):
        return "sieve"


class S3FIFO(EvictionPolicy):
    """S3-FIFO: small probationary FIFO, main FIFO with 2-bit clock, ghost FIFO.

    ``small`` is the small queue's share of capacity (bytes). Objects leave the
    small queue for main when hit at least ``move_threshold`` times; ids
    demoted from small go to the ghost, which readmits them straight to main.
    """

    def __init__(self, capacity_bytes: int, small: float = 0.10, move_threshold: int = 1):
        if not 0 < small < 1:
            raise ValueError("small must be in (0, 1)")
        if move_threshold < 1:
            raise ValueError("move_threshold must be ≥ 1")
        self.capacity = capacity_bytes
        self.small_target = small * capacity_bytes
        self.ghost_limit = capacity_bytes - self.small_target
        self.move_threshold = move_threshold
        self.S: "OrderedDict[int, int]" = OrderedDict()
        self.M: "OrderedDict[int, int]" = OrderedDict()
        self.G: "OrderedDict[int, int]" = OrderedDict()
        self.s_bytes = self.m_bytes = self.g_bytes = 0
        self.freq: Dict[int, int] = {}

    def on_insert(self, now, oid, size):
        self.freq[oid] = 0
        if oid in self.G:
            self.g_bytes -= self.G.pop(oid)
            self.M[oid] = size
            self.m_bytes += size
        else:
            self.S[oid] = size
            self.s_bytes += size

    def on_hit(self, now, oid, size):
        self.freq[oid] = min(self.freq[oid] + 1, 3)
        if oid in self.S:
            self.s_bytes += size - self.S[oid]
            self.S[oid] = size
        else:
            self.m_bytes += size - self.M[oid]
            self.M[oid] = size

    def _to_ghost(self, oid, size):
        self.G[oid] = size
        self.g_bytes += size
        while self.g_bytes > self.ghost_limit and self.G:
            _, gs = self.G.popitem(last=False)
            self.g_bytes -= gs

    def _evict_small(self):
        while self.S:
            oid, size = self.S.popitem(last=False)
            self.s_bytes -= size
            if self.freq[oid] >= self.move_threshold:
                self.freq[oid] = 0
                self.M[oid] = size
                self.m_bytes += size
            else:
                del self.freq[oid]
                self._to_ghost(oid, size)
                return oid
        return None

    def _evict_main(self):
        while True:
            oid, size = self.M.popitem(last=False)
            if self.freq[oid] > 0:
                self.freq[oid] -= 1
                self.M[oid] = size
            else:
                self.m_bytes -= size
                del self.freq[oid]
                return oid

    def evict_victim(self, now):
        if self.s_bytes >= self.small_target or not self.M:
            victim = self._evict_small()
            if victim is not None:
                return victim
        return self._evict_main()

    def name(self):
        return "s3fifo"


class ARC(EvictionPolicy):
    """Adaptive Replacement Cache, byte-weighted.

    T1/T2 hold residents seen once / more than once, B1/B2 their ghosts; the
    target size of T1 (``p``, bytes) grows on B1 ghost hits and shrinks on B2
    ghost hits by the ghost hit's size scaled with the usual ratio.
    """

    def __init__(self, capacity_bytes: int):
        self.c = capacity_bytes
        self.p = 0.0
        self.T1: "OrderedDict[int, int]" = OrderedDict()
        self.T2: "OrderedDict[int, int]" = OrderedDict()
        self.B1: "OrderedDict[int, int]" = OrderedDict()
        self.B2: "OrderedDict[int, int]" = OrderedDict()
        self.t1 = self.t2 = self.b1 = self.b2 = 0
        self._into_t2 = False
        self._from_b2 = False

    def on_miss(self, now, oid, size):
        self._into_t2 = False
        self._from_b2 = False
        if oid in self.B1:
            delta = size * max(1.0, self.b2 / self.b1) if self.b1 else size
            self.p = min(float(self.c), self.p + delta)
            self.b1 -= self.B1.pop(oid)
            self._into_t2 = True
        elif oid in self.B2:
            delta = size * max(1.0, self.b1 / self.b2) if self.b2 else size
            self.p = max(0.0, self.p - delta)
            self.b2 -= self.B2.pop(oid)
            self._into_t2 = True
            self._from_b2 = True

    def on_insert(self, now, oid, size):
        if self._into_t2:
            self.T2[oid] = size
            self.t2 += size
        else:
            self.T1[oid] = size
            self.t1 += size
        self._into_t2 = self._from_b2 = False
        while self.t1 + self.b1 > self.c and self.B1:
            self.b1 -= self.B1.popitem(last=False)[1]
        while self.t1 + self.t2 + self.b1 + self.b2 > 2 * self.c and self.B2:
            self.b2 -= self.B2.popitem(last=False)[1]

    def on_hit(self, now, oid, size):
        if oid in self.T1:
            self.t1 -= self.T1.pop(oid)
            self.T2[oid] = size
            self.t2 += size
        else:
            self.t2 += size - self.T2[oid]
            self.T2[oid] = size
            self.T2.move_to_end(oid)

    def evict_victim(self, now):
        take_t1 = self.T1 and (
            self.t1 > self.p or (self._from_b2 and self.t1 == self.p) or not self.T2
        )
        if take_t1:
            oid, size = self.T1.popitem(last=False)
            self.t1 -= size
            self.B1[oid] = size
            self.b1 += size
        else:
            oid, size = self.T2.popitem(last=False)
            self.t2 -= size
            self.B2[oid] = size
            self.b2 += size
        return oid

    def name(self):
        return "arc"


class TwoQ(EvictionPolicy):
    """Full 2Q: A1in FIFO (``kin`` of capacity), A1out ghost (``kout``), Am LRU."""

    def __init__(self, capacity_bytes: int, kin: float = 0.25, kout: float = 0.50):
        if not 0 < kin < 1 or kout <= 0:
            raise ValueError("need 0 < kin < 1 and kout > 0")
        self.kin = kin * capacity_bytes
        self.kout = kout * capacity_bytes
        self.A1in: "OrderedDict[int, int]" = OrderedDict()
        self.A1out: "OrderedDict[int, int]" = OrderedDict()
        self.Am: "OrderedDict[int, int]" = OrderedDict()
        self.in_bytes = self.out_bytes = 0

    def on_insert(self, now, oid, size):
        if oid in self.A1out:
            self.out_bytes -= self.A1out.pop(oid)
            self.Am[oid] = size
        else:
            self.A1in[oid] = size
            self.in_bytes += size

    def on_hit(self, now, oid, size):
        if oid in self.Am:
            self.Am[oid] = size
            self.Am.move_to_end(oid)
        else:
            self.in_bytes += size - self.A1in[oid]
            self.A1in[oid] = size

    def evict_victim(self, now):
        if self.in_bytes > self.kin or not self.Am:
            oid, size = self.A1in.popitem(last=False)
            self.in_bytes -= size
            self.A1out[oid] = size
            self.out_bytes += size
            while self.out_bytes > self.kout and self.A1out:
                self.out_bytes -= self.A1out.popitem(last=False)[1]
            return oid
        oid, _ = self.Am.popitem(last=False)
        return oid

    def name(self):
        return "twoq"


# -- registry ------------------------------------------------------------------

POLICY_NAMES = ("fifo", "lru", "lfu", "mru", "fifo-reinsertion", "sieve", "s3fifo", "gdsf", "arc", "twoq")

ALIASES = {
    "fifo-re": "fifo-reinsertion",
    "fifo_reinsertion": "fifo-reinsertion",
    "clock": "fifo-reinsertion",
    "s3-fifo": "s3fifo",
    "2q": "twoq",
}

_PARAMS = {
    "s3fifo": {"small": float, "move_threshold": int},
    "twoq": {"kin": float, "kout": float},
}


def canonical_name(name: str) -> str:
    n = name.strip().lower()
    n = ALIASES.get(n, n)
    if n not in POLICY_NAMES:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
    return n


def parse_policy_spec(spec: str) -> tuple:
    """``"s3fifo:small=0.1"`` -> ``("s3fifo", {"small": 0.1})``."""
    name, _, rest = spec.partition(":")
    n = canonical_name(name)
    params = {}
    if rest:
        allowed = _PARAMS.get(n, {})
        for item in rest.split(","):
            k, eq, v = item.partition("=")
            k = k.strip()
            if not eq or k not in allowed:
                raise ValueError(f"invalid parameter {item!r} for policy {n}")
            try:
                params[k] = allowed[k](v)
            except ValueError:
                raise ValueError(f"invalid value for {n}.{k}: {v!r}") from None
    return n, params


def make_policy(name: str, params: Optional[dict] = None, capacity_bytes: Optional[int] = None) -> EvictionPolicy:
    """Fresh instance of a named baseline. Capacity-aware policies need ``capacity_bytes``."""
    n = canonical_name(name)
    params = dict(params or {})
    allowed = _PARAMS.get(n, {})
    for k in params:
        if k not in allowed:
            raise ValueError(f"invalid parameter {k!r} for policy {n}")
    simple: Dict[str, Callable[[], EvictionPolicy]] = {
        "fifo": FIFO,
        "lru": LRU,
        "lfu": LFU,
        "mru": MRU,
        "gdsf": GDSF,
        "fifo-reinsertion": FIFOReinsertion,
        "sieve": SIEVE,
    }
    if n in simple:
        return simple[n]()
    if capacity_bytes is None:
        raise ValueError(f"policy {n} needs capacity_bytes")
    if n == "s3fifo":
        return S3FIFO(capacity_bytes, **params)
    if n == "arc":
        return ARC(capacity_bytes)
    return TwoQ(capacity_bytes, **params)


def policy_factory(spec: str, capacity_bytes: int) -> Callable[[], EvictionPolicy]:
    name, params = parse_policy_spec(spec)
    make_policy(name, params, capacity_bytes)  # validate eagerly
    return lambda: make_policy(name, params, capacity_bytes)
