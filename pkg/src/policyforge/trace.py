"""Request traces: CSV ingest, footprint statistics and synthetic workloads."""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

HEADER = "time,object_id,size"


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyTrace(ValueError):
    pass


class Request(NamedTuple):
    time: int
    object_id: int
    size: int


@dataclass(frozen=True)
class TraceStats:
    request_count: int
    unique_objects: int
    footprint_bytes: int
    time_span: int


def _parse_lines(lines: Iterable[str]) -> list[Request]:
    out: list[Request] = []
    last_time = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if lineno == 1 and line == HEADER:
            continue
        if not line:
            raise ParseError(lineno, "empty line")
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(lineno, f"expected 3 fields, got {len(parts)}")
        try:
            t, oid, size = (int(p) for p in parts)
        except ValueError:
            raise ParseError(lineno, "non-integer field") from None
        if t < 0:
            raise ParseError(lineno, "time must be ≥ 0")
        if size < 1:
            raise ParseError(lineno, "size must be ≥ 1")
        if not -(2**63) <= oid < 2**64:
            raise ParseError(lineno, "object_id out of 64-bit range")
        if last_time is not None and t < last_time:
            raise ParseError(lineno, "time decreased")
        last_time = t
        out.append(Request(t, oid, size))
    return out


def parse_trace(path: str | os.PathLike, format: str = "csv") -> list[Request]:
    """Read a ``time,object_id,size`` CSV trace; any malformed line rejects the file."""
    if format != "csv":
        raise ValueError(f"unsupported trace format: {format!r}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_trace_text(text)


def parse_trace_text(text: str) -> list[Request]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return _parse_lines(lines)


def format_trace(trace: Sequence[Request], header: bool = False) -> str:
    buf = io.StringIO()
    if header:
        buf.write(HEADER + "\n")
    buf.write("\n".join(f"{r.time},{r.object_id},{r.size}" for r in trace))
    return buf.getvalue()


def write_trace(trace: Sequence[Request], path: str | os.PathLike, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_trace(trace, header=header))
        fh.write("\n")


def compute_stats(trace: Sequence[Request]) -> TraceStats:
    if not trace:
        raise EmptyTrace("trace has no requests")
    last_size: dict[int, int] = {}
    for r in trace:
        last_size[r.object_id] = r.size
    return TraceStats(
        request_count=len(trace),
        unique_objects=len(last_size),
        footprint_bytes=sum(last_size.values()),
        time_span=trace[-1].time - trace[0].time,
    )


# -- synthetic workloads -------------------------------------------------------


@dataclass(frozen=True)
class SizeDist:
    """Object size law: ``fixed`` uses ``lo``; ``uniform`` draws from [lo, hi] once per object."""

    kind: str = "fixed"
    lo: int = 1
    hi: int = 1

    @classmethod
    def fixed(cls, size: int) -> "SizeDist":
        return cls("fixed", size, size)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "SizeDist":
        return cls("uniform", lo, hi)

    @classmethod
    def parse(cls, text: str) -> "SizeDist":
        # "fixed:4096" or "uniform:512:8192"
        parts = text.split(":")
        try:
            if parts[0] == "fixed" and len(parts) == 2:
                return cls.fixed(int(parts[1]))
            if parts[0] == "uniform" and len(parts) == 3:
                return cls.uniform(int(parts[1]), int(parts[2]))
        except ValueError:
            pass
        raise ValueError(f"bad size distribution {text!r}")

    def validate(self) -> None:
        if self.kind not in ("fixed", "uniform"):
            raise ValueError(f"unknown size distribution {self.kind!r}")
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError("size bounds must satisfy 1 ≤ lo ≤ hi")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(n, self.lo, dtype=np.int64)
        return rng.integers(self.lo, self.hi + 1, size=n, dtype=np.int64)


def synth_zipf(
    n_requests: int,
    n_objects: int,
    alpha: float,
    size_dist: SizeDist = SizeDist.fixed(1),
    seed: int = 0,
) -> list[Request]:
    """Independent Zipf draws: object ``i`` (1-based) has weight ``i**-alpha``.

    ``alpha == 0`` gives the uniform law. Object sizes are drawn once per object
    so every id keeps a stable size; ``time`` is the request index.
    """
    if n_requests < 1 or n_objects < 1:
        raise ValueError("n_requests and n_objects must be ≥ 1")
    if not alpha >= 0:
        raise ValueError("alpha must be ≥ 0")
    size_dist.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    ranks = np.arange(1, n_objects + 1, dtype=np.float64)
    weights = ranks ** (-float(alpha))
    probs = weights / weights.sum()
    ids = rng.choice(n_objects, size=n_requests, p=probs)
    sizes = size_dist.draw(rng, n_objects)
    return [Request(i, int(o), int(sizes[o])) for i, o in enumerate(ids.tolist())]


@dataclass(frozen=True)
class Phase:
    kind: str  # "scan" | "churn"
    length: int
    working_set: int = 0

    def validate(self) -> None:
        if self.kind not in ("scan", "churn"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("phase length must be ≥ 1")
        if self.kind == "churn" and self.working_set < 1:
            raise ValueError("churn phase needs working_set ≥ 1")

    @classmethod
    def parse(cls, text: str) -> "Phase":
        # "scan:500" or "churn:2000:64"
        parts = text.split(":")
        try:
            if parts[0] == "scan" and len(parts) == 2:
                return cls("scan", int(parts[1]))
            if parts[0] == "churn" and len(parts) == 3:
                return cls("churn", int(parts[1]), int(parts[2]))
        except ValueError:
            pass
        raise ValueError(f"bad phase descriptor {text!r}")


def synth_scan_churn(
    phases: Sequence[Phase],
    seed: int = 0,
    size_dist: SizeDist = SizeDist.fixed(1),
) -> list[Request]:
    """Concatenate scan phases (fresh ids, never repeated) and churn phases.

    Every churn phase samples uniformly from one fixed working set, ids
    ``0 .. working_set-1``, shared by all churn phases. Scan ids start above the
    largest working set so they never collide with churn ids.
    """
    if not phases:
        raise ValueError("need at least one phase")
    for ph in phases:
        ph.validate()
    size_dist.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    max_ws = max((ph.working_set for ph in phases if ph.kind == "churn"), default=0)
    next_scan = max_ws
    total = sum(ph.length for ph in phases)
    # sizes for every id that can appear: churn ids, then scan ids in order
    sizes = size_dist.draw(rng, max_ws + total)
    out: list[Request] = []
    t = 0
    for ph in phases:
        if ph.kind == "scan":
            ids = range(next_scan, next_scan + ph.length)
            next_scan += ph.length
        else:
            ids = rng.integers(0, ph.working_set, size=ph.length).tolist()
        for oid in ids:
            out.append(Request(t, int(oid), int(sizes[oid])))
            t += 1
    return out
