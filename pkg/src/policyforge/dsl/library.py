"""Stock programs: search seeds, reference heuristics and graft donors."""
from __future__ import annotations

from functools import lru_cache

from .nodes import CACHE, KERNEL
from .parser import parse, parse_expr

LRU_SEED = "return last_access_time;"
LFU_SEED = "return count;"

# hand-written score combining frequency, recency, size, eviction history
# and resident percentiles; a reference point for searches
EXAMPLE_SCORE = """\
let score = count * 20;
let age = now - last_access_time;
score -= age / 300;
score -= size / 500;
if (history_contains(obj_id)) {
  score += history_count(obj_id) * 15;
  score += history_age_at_eviction(obj_id) / 150;
} else {
  score -= 40;
}
let recent = percentile(ages, 0.75);
if (last_access_time < recent) {
  score -= 30;
}
let big = percentile(sizes, 0.75);
if (size > big) {
  score -= 25;
} else {
  score += 10;
}
let frequent = percentile(counts, 0.7);
score += count > frequent ? 50 : -5;
if (age < 1000) {
  score += 25;
}
if (count < 3) {
  score -= 15;
}
return score;
"""

AIMD = """\
let next = cwnd + mss * mss / max(1, cwnd);
if (loss_flag != 0) {
  next = max(mss, cwnd / 2);
}
return next;
"""


def fixed_cwnd(packets: int) -> str:
    return f"return {int(packets)} * mss;"


CACHE_DONORS = (
    "now - last_access_time",
    "now - insert_time",
    "-last_access_time",
    "last_access_time",
    "insert_time",
    "count",
    "count * 20",
    "size / 500",
    "count / max(1, size)",
    "last_access_time + 100 * count",
    "last_access_time - insert_time",
    "history_count(obj_id)",
    "history_contains(obj_id) ? 40 : 0",
    "history_contains(obj_id) ? last_access_time : insert_time",
    "history_age_at_eviction(obj_id)",
    "percentile(ages, 0.75)",
    "percentile(sizes, 0.5)",
    "percentile(counts, 0.7)",
    "count > percentile(counts, 0.7) ? 50 : -5",
    "size > percentile(sizes, 0.75) ? -25 : 10",
    "now - last_access_time < percentile(ages, 0.5) ? 1000 : 0",
    "min(count, 8) * 1000",
)

KERNEL_DONORS = (
    "cwnd + mss",
    "cwnd + mss * mss / max(1, cwnd)",
    "max(mss, cwnd / 2)",
    "cwnd * min_rtt_us / max(1, srtt_us)",
    "loss_flag != 0 ? max(mss, cwnd / 2) : cwnd + mss",
    "delivery_rate * min_rtt_us / 1000000",
    "inflight_bytes + mss",
    "hist_cwnd_0",
    "hist_rate_0 * min_rtt_us / 1000000",
    "2 * mss",
    "srtt_us > min_rtt_us + min_rtt_us / 4 ? cwnd - mss : cwnd + mss",
)


@lru_cache(maxsize=None)
def donor_exprs(mode: str) -> tuple:
    return tuple(parse_expr(s) for s in (CACHE_DONORS if mode == CACHE else KERNEL_DONORS))


def cache_seeds():
    return [parse(LRU_SEED, CACHE), parse(LFU_SEED, CACHE)]


def cc_seed_programs(packets: int = 2) -> dict:
    """Congestion-control seeds: ``aimd`` and a constant ``fixed_cwnd``."""
    return {"aimd": parse(AIMD, KERNEL), "fixed_cwnd": parse(fixed_cwnd(packets), KERNEL)}
