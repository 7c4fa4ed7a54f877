"""Context-specific evaluators: program in, scalar fitness out (higher is better)."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

from ..cache import CacheConfig, simulate
from ..ccsim import ConfigError, LinkConfig, cc_fitness, run_cc
from ..dsl.nodes import CACHE, KERNEL, Program
from ..priority import PriorityPolicy
from ..trace import (
    EmptyTrace,
    ParseError,
    Phase,
    SizeDist,
    compute_stats,
    parse_trace,
    synth_scan_churn,
    synth_zipf,
)


class EvaluatorError(ValueError):
    pass


def parse_capacity(text, footprint: int) -> int:
    """``"10%"`` of the footprint (floored) or a plain byte count."""
    s = str(text).strip()
    try:
        if s.endswith("%"):
            frac = float(s[:-1]) / 100
            if not 0 < frac:
                raise ValueError
            return max(1, int(frac * footprint))
        cap = int(s)
        if cap < 1:
            raise ValueError
        return cap
    except ValueError:
        raise EvaluatorError(f"bad capacity {text!r}") from None


@dataclass(frozen=True)
class EvaluatorSpec:
    """Everything needed to rebuild an evaluator, e.g. inside a worker process.

    ``kind`` is ``cache`` or ``cc``. A cache context reads ``trace`` when set,
    otherwise synthesizes one (``synth`` = ``zipf`` or ``scan_churn``).
    """

    kind: str = "cache"
    trace: Optional[str] = None
    synth: str = "zipf"
    synth_requests: int = 100_000
    synth_objects: int = 1000
    synth_alpha: float = 1.0
    synth_phases: str = ""
    synth_size: str = "fixed:1"
    synth_seed: int = 0
    capacity: str = "10%"
    history_capacity: int = 1024
    link: LinkConfig = field(default_factory=LinkConfig)
    cc_lambda: float = 0.5
    cc_budget_ms: float = 100.0

    @property
    def mode(self) -> str:
        return CACHE if self.kind == "cache" else KERNEL


class CacheEvaluator:
    """Fitness = 1 - object miss ratio of the priority template on one trace."""

    mode = CACHE

    def __init__(self, trace, capacity_bytes: int, trace_name: str = "", history_capacity: int = 1024):
        if not trace:
            raise EvaluatorError("empty trace")
        self.trace = trace
        self.config = CacheConfig(capacity_bytes, history_capacity)
        self.trace_name = trace_name

    def report(self, program: Program):
        policy = PriorityPolicy(program, self.config.history_capacity)
        return simulate(self.trace, policy, self.config, self.trace_name)

    def evaluate(self, program: Program) -> float:
        return 1.0 - self.report(program).object_miss_ratio

    def describe(self) -> dict:
        return {"kind": "cache", "trace": self.trace_name, "capacity_bytes": self.config.capacity_bytes, "requests": len(self.trace)}


class CcEvaluator:
    """Fitness = utilization - lambda * avg queue delay / delay budget."""

    mode = KERNEL

    def __init__(self, link: LinkConfig, lam: float = 0.5, budget_ms: float = 100.0):
        if budget_ms <= 0:
            raise EvaluatorError("delay budget must be positive")
        self.link = link
        self.lam = lam
        self.budget_ms = budget_ms

    def evaluate(self, program: Program) -> float:
        return cc_fitness(run_cc(program, self.link), self.lam, self.budget_ms)

    def describe(self) -> dict:
        return {"kind": "cc", "rate_bps": self.link.rate_bps, "one_way_delay_ms": self.link.one_way_delay_ms,
                "queue_bytes": self.link.queue_bytes, "duration_s": self.link.duration_s,
                "lambda": self.lam, "budget_ms": self.budget_ms}


def load_spec_trace(spec: EvaluatorSpec):
    """(trace, name) for a cache spec."""
    try:
        if spec.trace:
            return parse_trace(spec.trace), os.path.basename(spec.trace)
        size = SizeDist.parse(spec.synth_size)
        if spec.synth == "zipf":
            tr = synth_zipf(spec.synth_requests, spec.synth_objects, spec.synth_alpha, size, spec.synth_seed)
            return tr, f"zipf-a{spec.synth_alpha}-n{spec.synth_requests}-k{spec.synth_objects}-s{spec.synth_seed}"
        if spec.synth == "scan_churn":
            phases = [Phase.parse(p) for p in spec.synth_phases.split(",") if p.strip()]
            return synth_scan_churn(phases, spec.synth_seed, size), f"scan_churn-s{spec.synth_seed}"
    except (OSError, ParseError, EmptyTrace, ValueError) as e:
        raise EvaluatorError(f"cannot build trace: {e}") from None
    raise EvaluatorError(f"unknown synthetic trace kind {spec.synth!r}")


def build_evaluator(spec: EvaluatorSpec):
    if spec.kind == "cache":
        trace, name = load_spec_trace(spec)
        if not trace:
            raise EvaluatorError("empty trace")
        cap = parse_capacity(spec.capacity, compute_stats(trace).footprint_bytes)
        return CacheEvaluator(trace, cap, name, spec.history_capacity)
    if spec.kind == "cc":
        return CcEvaluator(spec.link, spec.cc_lambda, spec.cc_budget_ms)
    raise EvaluatorError(f"unknown evaluator kind {spec.kind!r}")


def with_link(spec: EvaluatorSpec, **changes) -> EvaluatorSpec:
    try:
        return replace(spec, link=replace(spec.link, **changes))
    except ConfigError as e:
        raise EvaluatorError(str(e)) from None
