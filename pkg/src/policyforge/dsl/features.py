"""Identifier surface per mode: scalar features, series handles and builtins."""
from __future__ import annotations

from .nodes import CACHE, KERNEL

# per-object and clock features handed to priority()
CACHE_SCALARS = ("now", "obj_id", "count", "last_access_time", "insert_time", "size")
CACHE_SERIES = ("counts", "ages", "sizes")

HISTORY_METRICS = ("cwnd", "srtt", "rate", "loss")
HISTORY_SLOTS = 10
KERNEL_HISTORY = tuple(
    f"hist_{m}_{i}" for m in HISTORY_METRICS for i in range(HISTORY_SLOTS)
)
KERNEL_SCALARS = (
    "cwnd",
    "prev_cwnd",
    "srtt_us",
    "min_rtt_us",
    "rtt_us",
    "inflight_bytes",
    "mss",
    "acked_bytes",
    "loss_flag",
    "delivery_rate",
) + KERNEL_HISTORY

# name -> arity; "percentile" takes (series, literal)
COMMON_FUNCS = {"min": 2, "max": 2, "abs": 1}
CACHE_FUNCS = dict(
    COMMON_FUNCS,
    percentile=2,
    history_contains=1,
    history_count=1,
    history_age_at_eviction=1,
)
KERNEL_FUNCS = dict(COMMON_FUNCS)

HISTORY_FUNCS = ("history_contains", "history_count", "history_age_at_eviction")


def scalars(mode: str) -> tuple:
    return CACHE_SCALARS if mode == CACHE else KERNEL_SCALARS


def series(mode: str) -> tuple:
    return CACHE_SERIES if mode == CACHE else ()


def funcs(mode: str) -> dict:
    return CACHE_FUNCS if mode == CACHE else KERNEL_FUNCS


def check_mode(mode: str) -> None:
    if mode not in (CACHE, KERNEL):
        raise ValueError(f"unknown mode {mode!r}")
