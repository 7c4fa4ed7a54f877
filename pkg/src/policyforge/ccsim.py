"""Single-bottleneck congestion-control simulator driven by a kernel-mode program.

Senders keep at most ``cwnd`` bytes outstanding. Packets join a drop-tail
queue in front of one link, are served in FIFO order, cross the propagation
delay and are acknowledged individually. On every ACK, and once per loss
event, the program picks the next cwnd from the flow's current state and a
10-slot history of smoothed per-RTT samples.

Times are integer microseconds throughout.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import List, Optional

from .dsl.checker import CheckFailed, check_program
from .dsl.features import HISTORY_SLOTS
from .dsl.interp import compile_program, sat
from .dsl.nodes import KERNEL, Program

DUP_THRESHOLD = 3  # later ACKs needed before a hole counts as a loss
MIN_RTO_US = 200_000
EWMA_GAIN = 1 / 8
INITIAL_CWND_PACKETS = 10
CWND_CAP_BDP = 10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    rate_bps: int = 12_000_000
    one_way_delay_ms: float = 20.0
    queue_capacity_bytes: Optional[int] = None  # None means 1 x BDP
    mss_bytes: int = 1500
    duration_s: float = 60.0
    flows: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.rate_bps <= 0 or self.one_way_delay_ms <= 0 or self.mss_bytes <= 0:
            raise ConfigError("rate, delay and mss must be positive")
        if not self.duration_s > 0:
            raise ConfigError("duration must be positive")
        if self.flows < 1:
            raise ConfigError("need at least one flow")
        if self.queue_capacity_bytes is not None and self.queue_capacity_bytes <= 0:
            raise ConfigError("queue capacity must be positive")

    @property
    def bdp_bytes(self) -> int:
        return int(round(self.rate_bps / 8 * 2 * self.one_way_delay_ms / 1000))

    @property
    def queue_bytes(self) -> int:
        return self.bdp_bytes if self.queue_capacity_bytes is None else self.queue_capacity_bytes

    @property
    def one_way_us(self) -> int:
        return int(round(self.one_way_delay_ms * 1000))

    @property
    def service_us(self) -> int:
        # transmission time of one mss packet
        return max(1, int(round(self.mss_bytes * 8 * 1_000_000 / self.rate_bps)))

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * 1_000_000))


@dataclass
class FlowState:
    cwnd_bytes: int
    prev_cwnd: int
    inflight_bytes: int = 0
    srtt_us: int = 0
    min_rtt_us: int = 0
    last_rtt_us: int = 0
    delivered_bytes: int = 0
    loss_events: int = 0
    lost_packets: int = 0
    delivery_rate: int = 0
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_SLOTS))


@dataclass(frozen=True)
class CcMetrics:
    utilization: float
    avg_queue_delay_ms: float
    p95_queue_delay_ms: float
    loss_rate: float
    retransmits: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "CcMetrics":
        return cls(
            utilization=float(d["utilization"]),
            avg_queue_delay_ms=float(d["avg_queue_delay_ms"]),
            p95_queue_delay_ms=float(d["p95_queue_delay_ms"]),
            loss_rate=float(d["loss_rate"]),
            retransmits=int(d["retransmits"]),
        )


CSV_FIELDS = ("utilization", "avg_queue_delay_ms", "p95_queue_delay_ms", "loss_rate", "retransmits")


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for m in rows:
        w.writerow(m.to_dict())
    return buf.getvalue()


def metrics_from_csv(text: str) -> list:
    return [CcMetrics.from_dict(row) for row in csv.DictReader(io.StringIO(text))]


@dataclass(frozen=True)
class CcRun:
    """Metrics plus the raw counters behind them, for invariant checks."""

    metrics: CcMetrics
    sent_bytes: int
    served_bytes: int  # bytes that finished link service
    dropped_bytes: int
    in_network_bytes: int  # queued, in service or in propagation at the end
    min_rtt_sample_us: int  # smallest RTT measured by any flow (0 if none)
    min_rtt_monotone: bool
    cwnd_min: int
    cwnd_max: int
    decisions: int
    flows: tuple  # final FlowState per flow


def cc_fitness(m: CcMetrics, lam: float = 0.5, budget_ms: float = 100.0) -> float:
    """Utilization minus a delay penalty scaled by a delay budget."""
    return m.utilization - lam * (m.avg_queue_delay_ms / budget_ms)


# event kinds, ordered so simultaneous events resolve deterministically
_DEPART, _ACK, _RTO = 0, 1, 2


class _Sim:
    def __init__(self, program: Program, link: LinkConfig):
        report = check_program(program, KERNEL)
        if not report.ok:
            raise CheckFailed(report)
        self.fn = compile_program(program, checked=True).fn
        self.link = link
        self.mss = link.mss_bytes
        self.service = link.service_us
        self.prop = link.one_way_us
        self.qcap = link.queue_bytes
        self.lo = self.mss
        self.hi = max(self.mss, CWND_CAP_BDP * link.bdp_bytes)
        self.end = link.duration_us
        self.events: list = []
        self.tick = 0
        # bottleneck
        self.busy = False
        self.waiting: deque = deque()  # (flow, seq, arrival)
        self.waiting_bytes = 0
        self.queue_delays: List[int] = []
        # totals
        self.sent_bytes = self.served_bytes = self.dropped_bytes = 0
        self.sent_pkts = self.dropped_pkts = 0
        self.retransmits = 0
        self.decisions = 0
        self.cwnd_min = self.cwnd_max = None
        self.min_rtt_sample = 0
        self.min_rtt_monotone = True
        init = min(self.hi, max(self.lo, INITIAL_CWND_PACKETS * self.mss))
        self.flows = [FlowState(cwnd_bytes=init, prev_cwnd=init) for _ in range(link.flows)]
        n = link.flows
        # per-flow sender bookkeeping
        self.next_seq = [0] * n
        self.outstanding = [dict() for _ in range(n)]  # seq -> send time
        self.order = [deque() for _ in range(n)]  # outstanding seqs in send order (lazily pruned)
        self.suspects = [deque() for _ in range(n)]  # (seq, acks seen since detection)
        self.recovery = [-1] * n
        self.pending_retx = [0] * n
        self.last_progress = [0] * n
        self.rto_armed = [False] * n
        # per-RTT interval accumulators
        self.iv_start = [0] * n
        self.iv_acked = [0] * n
        self.iv_losses = [0] * n
        self.smooth = [None] * n
        self.hist_args = [(0,) * (4 * HISTORY_SLOTS) for _ in range(n)]

    # -- plumbing --

    def push(self, t, kind, payload):
        self.tick += 1
        heapq.heappush(self.events, (t, kind, self.tick, payload))

    def rto(self, f: FlowState) -> int:
        return max(MIN_RTO_US, 2 * f.srtt_us)

    # -- link --

    def arrive(self, now, flow, seq):
        size = self.mss
        if not self.busy:
            self.busy = True
            self.queue_delays.append(0)
            self.push(now + self.service, _DEPART, (flow, seq))
        elif self.waiting_bytes + size <= self.qcap:
            self.waiting.append((flow, seq, now))
            self.waiting_bytes += size
        else:
            self.dropped_bytes += size
            self.dropped_pkts += 1

    def depart(self, now, flow, seq):
        self.served_bytes += self.mss
        self.push(now + 2 * self.prop, _ACK, (flow, seq))
        if self.waiting:
            nf, nseq, arrival = self.waiting.popleft()
            self.waiting_bytes -= self.mss
            self.queue_delays.append(now - arrival)
            self.push(now + self.service, _DEPART, (nf, nseq))
        else:
            self.busy = False

    # -- sender --

    def send(self, now, i):
        f = self.flows[i]
        out = self.outstanding[i]
        while f.inflight_bytes + self.mss <= f.cwnd_bytes:
            seq = self.next_seq[i]
            self.next_seq[i] = seq + 1
            out[seq] = now
            self.order[i].append(seq)
            f.inflight_bytes += self.mss
            self.sent_bytes += self.mss
            self.sent_pkts += 1
            if self.pending_retx[i]:
                self.pending_retx[i] -= 1
                self.retransmits += 1
            self.arrive(now, i, seq)
        if out and not self.rto_armed[i]:
            self.rto_armed[i] = True
            self.push(now + self.rto(f), _RTO, (i, None))

    def decide(self, i, acked, loss):
        f = self.flows[i]
        args = (
            f.cwnd_bytes,
            f.prev_cwnd,
            f.srtt_us,
            f.min_rtt_us,
            f.last_rtt_us,
            f.inflight_bytes,
            self.mss,
            acked,
            1 if loss else 0,
            f.delivery_rate,
        ) + self.hist_args[i]
        new = sat(self.fn(*args))
        new = min(self.hi, max(self.lo, new))
        if new != f.cwnd_bytes:
            f.prev_cwnd = f.cwnd_bytes
            f.cwnd_bytes = new
        self.decisions += 1
        if self.cwnd_min is None or new < self.cwnd_min:
            self.cwnd_min = new
        if self.cwnd_max is None or new > self.cwnd_max:
            self.cwnd_max = new

    def declare_lost(self, now, i, seq):
        f = self.flows[i]
        f.inflight_bytes -= self.mss
        f.lost_packets += 1
        self.pending_retx[i] += 1
        self.iv_losses[i] += 1
        if seq > self.recovery[i]:
            # first loss of a new event: one decision, then ride out the window
            self.recovery[i] = self.next_seq[i] - 1
            f.loss_events += 1
            self.decide(i, 0, True)

    def close_interval(self, now, i):
        f = self.flows[i]
        span = now - self.iv_start[i]
        rate = self.iv_acked[i] * 1_000_000 // span if span > 0 else 0
        f.delivery_rate = rate
        sample = (f.cwnd_bytes, f.srtt_us, rate, self.iv_losses[i])
        prev = self.smooth[i]
        if prev is None:
            cur = tuple(float(x) for x in sample)
        else:
            cur = tuple(p + (x - p) * EWMA_GAIN for p, x in zip(prev, sample))
        self.smooth[i] = cur
        f.history.appendleft(tuple(int(round(v)) for v in cur))
        slots = list(f.history) + [(0, 0, 0, 0)] * (HISTORY_SLOTS - len(f.history))
        # argument order: all cwnd slots, then srtt, rate and loss slots
        self.hist_args[i] = tuple(s[m] for m in range(4) for s in slots)
        self.iv_start[i] = now
        self.iv_acked[i] = 0
        self.iv_losses[i] = 0

    def on_ack(self, now, i, seq):
        f = self.flows[i]
        out = self.outstanding[i]
        sent_at = out.pop(seq, None)
        if sent_at is None:
            return  # already written off as lost
        f.inflight_bytes -= self.mss
        f.delivered_bytes += self.mss
        self.iv_acked[i] += self.mss
        self.last_progress[i] = now
        rtt = now - sent_at
        f.last_rtt_us = rtt
        if self.min_rtt_sample == 0 or rtt < self.min_rtt_sample:
            self.min_rtt_sample = rtt
        if f.min_rtt_us == 0 or rtt < f.min_rtt_us:
            f.min_rtt_us = rtt
        f.srtt_us = rtt if f.srtt_us == 0 else int(round(f.srtt_us + (rtt - f.srtt_us) * EWMA_GAIN))
        if f.min_rtt_us > f.srtt_us:
            f.srtt_us = f.min_rtt_us
        # older packets still outstanding were dropped (the queue is FIFO);
        # they count as lost once enough later ACKs have arrived
        sus = self.suspects[i]
        order = self.order[i]
        while order and (order[0] not in out or order[0] < seq):
            s = order.popleft()
            if s in out:
                del out[s]
                sus.append([s, 0])
        for entry in sus:
            entry[1] += 1
        while sus and sus[0][1] >= DUP_THRESHOLD:
            self.declare_lost(now, i, sus.popleft()[0])
        self.decide(i, self.mss, False)
        if f.srtt_us and now - self.iv_start[i] >= f.srtt_us:
            self.close_interval(now, i)
        self.send(now, i)

    def on_rto(self, now, i):
        self.rto_armed[i] = False
        f = self.flows[i]
        out = self.outstanding[i]
        sus = self.suspects[i]
        rto = self.rto(f)
        if (out or sus) and now - self.last_progress[i] >= rto:
            # nothing acknowledged for a full timeout: write off the oldest window
            while sus:
                self.declare_lost(now, i, sus.popleft()[0])
            for s in [s for s, t in out.items() if now - t >= rto]:
                del out[s]
                self.declare_lost(now, i, s)
            self.last_progress[i] = now
        self.send(now, i)

    def run(self) -> CcRun:
        rng = random.Random(self.link.rng_seed)
        for i in range(len(self.flows)):
            # extra flows start within the first millisecond, in seeded order
            start = 0 if i == 0 else rng.randrange(1000)
            self.iv_start[i] = start
            self.last_progress[i] = start
            self.push(start, _RTO, (i, None))
        events = self.events
        last_min = [0] * len(self.flows)
        while events:
            now, kind, _, (i, seq) = heapq.heappop(events)
            if now > self.end:
                heapq.heappush(events, (now, kind, 0, (i, seq)))
                break
            if kind == _DEPART:
                self.depart(now, i, seq)
            elif kind == _ACK:
                self.on_ack(now, i, seq)
                m = self.flows[i].min_rtt_us
                if last_min[i] and m > last_min[i]:
                    self.min_rtt_monotone = False
                last_min[i] = m
            else:
                self.on_rto(now, i)
        return self._finish(events)

    def _finish(self, pending) -> CcRun:
        # bytes still queued, in service or travelling back as an ACK
        in_service = sum(1 for e in pending if e[1] == _DEPART) * self.mss
        in_network = self.waiting_bytes + in_service
        link = self.link
        capacity = link.rate_bps / 8 * link.duration_us / 1_000_000
        delays = sorted(self.queue_delays)
        avg = sum(delays) / len(delays) / 1000 if delays else 0.0
        if delays:
            p95 = delays[max(1, math.ceil(round(0.95 * len(delays), 9))) - 1] / 1000
        else:
            p95 = 0.0
        metrics = CcMetrics(
            utilization=self.served_bytes / capacity,
            avg_queue_delay_ms=avg,
            p95_queue_delay_ms=p95,
            loss_rate=self.dropped_pkts / self.sent_pkts if self.sent_pkts else 0.0,
            retransmits=self.retransmits,
        )
        assert self.sent_bytes == self.served_bytes + in_network + self.dropped_bytes
        return CcRun(
            metrics=metrics,
            sent_bytes=self.sent_bytes,
            served_bytes=self.served_bytes,
            dropped_bytes=self.dropped_bytes,
            in_network_bytes=in_network,
            min_rtt_sample_us=self.min_rtt_sample,
            min_rtt_monotone=self.min_rtt_monotone,
            cwnd_min=self.cwnd_min if self.cwnd_min is not None else self.flows[0].cwnd_bytes,
            cwnd_max=self.cwnd_max if self.cwnd_max is not None else self.flows[0].cwnd_bytes,
            decisions=self.decisions,
            flows=tuple(self.flows),
        )


def run_cc_detailed(program: Program, link: LinkConfig = LinkConfig()) -> CcRun:
    return _Sim(program, link).run()


def run_cc(program: Program, link: LinkConfig = LinkConfig()) -> CcMetrics:
    """Simulate ``program`` as the cwnd decision function on ``link``."""
    return run_cc_detailed(program, link).metrics
