"""Trace-driven cache simulator, miss metrics and FIFO-relative comparisons."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence

from .trace import Request

REPORT_FIELDS = (
    "requests",
    "object_misses",
    "byte_misses",
    "object_miss_ratio",
    "byte_miss_ratio",
    "evictions",
    "policy",
    "trace",
    "capacity_bytes",
)

SYNTHESIZED_PREFIX = "program:"


class PolicyContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class CacheConfig:
    capacity_bytes: int
    history_capacity: int = 1024

    def __post_init__(self):
        if self.capacity_bytes < 1:
            raise ValueError("capacity_bytes must be ≥ 1")
        if self.history_capacity < 1:
            raise ValueError("history_capacity must be ≥ 1")


@dataclass(frozen=True)
class MissReport:
    requests: int
    object_misses: int
    byte_misses: int
    object_miss_ratio: float
    byte_miss_ratio: float
    evictions: int
    policy: str = ""
    trace: str = ""
    capacity_bytes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MissReport":
        return cls(**{k: d[k] for k in REPORT_FIELDS})

    def same_context(self, other: "MissReport") -> bool:
        return (self.trace, self.capacity_bytes, self.requests) == (other.trace, other.capacity_bytes, other.requests)


def reports_to_csv(reports: Iterable[MissReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.to_dict())
    return buf.getvalue()


def reports_from_csv(text: str) -> list:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            MissReport(
                requests=int(row["requests"]),
                object_misses=int(row["object_misses"]),
                byte_misses=int(row["byte_misses"]),
                object_miss_ratio=float(row["object_miss_ratio"]),
                byte_miss_ratio=float(row["byte_miss_ratio"]),
                evictions=int(row["evictions"]),
                policy=row["policy"],
                trace=row["trace"],
                capacity_bytes=int(row["capacity_bytes"]),
            )
        )
    return out


class EvictionPolicy:
    """Behaviour the simulator drives.

    ``on_miss`` runs before any eviction made room for the missed object (the
    default does nothing; ARC uses it to adapt). ``evict_victim`` must return a
    resident id and forget it.
    """

    def on_miss(self, now: int, obj_id: int, size: int) -> None:
        pass

    def on_hit(self, now: int, obj_id: int, size: int) -> None:
        raise NotImplementedError

    def on_insert(self, now: int, obj_id: int, size: int) -> None:
        raise NotImplementedError

    def evict_victim(self, now: int) -> int:
        raise NotImplementedError

    def name(self) -> str:
        return type(self).__name__.lower()


def _make_report(requests, misses, byte_misses, total_bytes, evictions, policy, trace_name, cap):
    return MissReport(
        requests=requests,
        object_misses=misses,
        byte_misses=byte_misses,
        object_miss_ratio=misses / requests if requests else 0.0,
        byte_miss_ratio=byte_misses / total_bytes if total_bytes else 0.0,
        evictions=evictions,
        policy=policy,
        trace=trace_name,
        capacity_bytes=cap,
    )


def simulate(
    trace: Sequence[Request],
    policy: EvictionPolicy,
    config: CacheConfig,
    trace_name: str = "",
    fast: bool = True,
) -> MissReport:
    """Replay ``trace`` through ``policy`` with always-admit insertion.

    Objects larger than the cache bypass it (a miss, never inserted). A hit
    that changes an object's size updates it and evicts until occupancy fits
    again, which may evict the object itself.

    Policies with a ``replay`` method run their own inlined loop unless
    ``fast`` is false; both paths give identical reports.
    """
    if not trace:
        raise ValueError("empty trace")
    replay = getattr(policy, "replay", None) if fast else None
    if replay is not None:
        return replay(trace, config, trace_name)
    cap = config.capacity_bytes
    resident: Dict[int, int] = {}
    used = 0
    misses = byte_misses = evictions = total_bytes = 0
    on_hit, on_insert, on_miss, evict = policy.on_hit, policy.on_insert, policy.on_miss, policy.evict_victim

    for now, oid, size in trace:
        total_bytes += size
        old = resident.get(oid)
        if old is not None:
            on_hit(now, oid, size)
            if size != old:
                resident[oid] = size
                used += size - old
            while used > cap:
                victim = evict(now)
                vsize = resident.pop(victim, None)
                if vsize is None:
                    raise PolicyContractViolation(f"{policy.name()} evicted non-resident object {victim!r}")
                used -= vsize
                evictions += 1
            continue
        misses += 1
        byte_misses += size
        if size > cap:
            continue
        on_miss(now, oid, size)
        while used + size > cap:
            victim = evict(now)
            vsize = resident.pop(victim, None)
            if vsize is None:
                raise PolicyContractViolation(f"{policy.name()} evicted non-resident object {victim!r}")
            used -= vsize
            evictions += 1
        resident[oid] = size
        used += size
        on_insert(now, oid, size)
        assert used <= cap
    return _make_report(len(trace), misses, byte_misses, total_bytes, evictions, policy.name(), trace_name, cap)


# -- naive reference -----------------------------------------------------------

_REFERENCE_KEYS = {
    "fifo": lambda m: (m["insert"], m["id"]),
    "lru": lambda m: (m["last"], m["insert"], m["id"]),
    "lfu": lambda m: (m["count"], m["insert"], m["id"]),
}


def reference_simulate(trace: Sequence[Request], policy: str, capacity_bytes: int, trace_name: str = "") -> MissReport:
    """Deliberately naive simulator for FIFO/LRU/LFU.

    Keeps residents in a plain list and finds each victim by a full scan, so it
    shares no data structure with :func:`simulate` or the policy classes.
    """
    key = _REFERENCE_KEYS[policy]
    cache: list = []
    misses = byte_misses = evictions = total = 0
    for r in trace:
        total += r.size
        entry = next((m for m in cache if m["id"] == r.object_id), None)
        if entry is not None:
            entry["count"] += 1
            entry["last"] = r.time
            entry["size"] = r.size
            while sum(m["size"] for m in cache) > capacity_bytes:
                victim = min(cache, key=key)
                cache.remove(victim)
                evictions += 1
            continue
        misses += 1
        byte_misses += r.size
        if r.size > capacity_bytes:
            continue
        while sum(m["size"] for m in cache) + r.size > capacity_bytes:
            victim = min(cache, key=key)
            cache.remove(victim)
            evictions += 1
        cache.append({"id": r.object_id, "size": r.size, "count": 1, "last": r.time, "insert": r.time})
    return _make_report(len(trace), misses, byte_misses, total, evictions, policy, trace_name, capacity_bytes)


# -- comparisons ---------------------------------------------------------------


def improvement_over_fifo(report_p: MissReport, report_fifo: MissReport) -> float:
    """(m_FIFO - m_P) / m_FIFO on object miss ratio; 0 when FIFO never misses."""
    if not report_p.same_context(report_fifo):
        raise ValueError("reports come from different (trace, capacity) contexts")
    m_fifo = report_fifo.object_miss_ratio
    if m_fifo == 0:
        return 0.0
    return (m_fifo - report_p.object_miss_ratio) / m_fifo


@dataclass(frozen=True)
class OracleResult:
    pool: str
    per_trace: Dict[str, tuple]  # trace -> (best policy, improvement)
    mean: float


def is_synthesized(policy_name: str) -> bool:
    return policy_name.startswith(SYNTHESIZED_PREFIX)


def oracle_improvement(
    reports: Mapping[str, Mapping[str, MissReport]],
    pool: str = "baselines",
    fifo_name: str = "fifo",
) -> OracleResult:
    """Per-trace best improvement over FIFO within a policy pool.

    ``reports`` maps trace -> policy name -> report, and each trace needs a
    FIFO report. ``pool`` is ``"baselines"`` (B-Oracle) or
    ``"baselines+synthesized"`` (PS-Oracle); synthesized policies are the ones
    named ``program:...``. Ties pick the lexicographically smallest name.
    """
    if pool not in ("baselines", "baselines+synthesized"):
        raise ValueError(f"unknown pool {pool!r}")
    per_trace: Dict[str, tuple] = {}
    for trace_name in sorted(reports):
        by_policy = reports[trace_name]
        if fifo_name not in by_policy:
            raise ValueError(f"trace {trace_name!r} has no {fifo_name} report")
        fifo = by_policy[fifo_name]
        best: Optional[tuple] = None
        for name in sorted(by_policy):
            if pool == "baselines" and is_synthesized(name):
                continue
            imp = improvement_over_fifo(by_policy[name], fifo)
            if best is None or imp > best[1]:
                best = (name, imp)
        if best is None:
            raise ValueError("empty policy pool")
        per_trace[trace_name] = best
    if not per_trace:
        raise ValueError("no traces")
    mean = sum(v[1] for v in per_trace.values()) / len(per_trace)
    return OracleResult(pool, per_trace, mean)
