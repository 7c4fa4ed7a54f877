"""Flat ``key = value`` search config files.

Lines starting with ``#`` are comments. Recognised keys::

    rounds, candidates_per_round, exemplar_count, repair_attempts   integers
    seed, jobs                                                      integers
    generator          mock | llm
    db                 path of the JSON-lines database
    seeds              comma list of lru, lfu, aimd, fixed_cwnd or .dsl paths
    prompt_template    path of a prompt template file
    llm_max_retries, llm_backoff_s, llm_max_in_flight
    evaluator          cache | cc
    trace              CSV trace path (cache); when absent a trace is synthesized
    synth              zipf | scan_churn
    synth_requests, synth_objects, synth_alpha, synth_seed
    synth_phases       e.g. churn:2000:64,scan:500
    synth_size         fixed:N | uniform:LO:HI
    capacity           bytes or a percentage of the footprint, e.g. 10%
    history_capacity
    rate_bps, one_way_delay_ms, queue_capacity_bytes, mss_bytes, duration_s, flows, link_seed
    cc_lambda, cc_budget_ms

Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import os
from dataclasses import replace

from ..ccsim import ConfigError as LinkError
from ..ccsim import LinkConfig
from .driver import SEED_LIBRARY, ConfigError, SearchConfig
from .evaluators import EvaluatorSpec

_INT = int
_FLOAT = float

TOP_KEYS = {
    "rounds": ("rounds", _INT),
    "candidates_per_round": ("candidates_per_round", _INT),
    "exemplar_count": ("exemplar_count", _INT),
    "repair_attempts": ("repair_attempts", _INT),
    "seed": ("seed", _INT),
    "jobs": ("jobs", _INT),
    "generator": ("generator", str),
    "db": ("db_path", str),
    "prompt_template": ("prompt_template", str),
    "llm_max_retries": ("llm_max_retries", _INT),
    "llm_backoff_s": ("llm_backoff_s", _FLOAT),
    "llm_max_in_flight": ("llm_max_in_flight", _INT),
}
EVAL_KEYS = {
    "evaluator": ("kind", str),
    "trace": ("trace", str),
    "synth": ("synth", str),
    "synth_requests": ("synth_requests", _INT),
    "synth_objects": ("synth_objects", _INT),
    "synth_alpha": ("synth_alpha", _FLOAT),
    "synth_seed": ("synth_seed", _INT),
    "synth_phases": ("synth_phases", str),
    "synth_size": ("synth_size", str),
    "capacity": ("capacity", str),
    "history_capacity": ("history_capacity", _INT),
    "cc_lambda": ("cc_lambda", _FLOAT),
    "cc_budget_ms": ("cc_budget_ms", _FLOAT),
}
LINK_KEYS = {
    "rate_bps": ("rate_bps", _INT),
    "one_way_delay_ms": ("one_way_delay_ms", _FLOAT),
    "queue_capacity_bytes": ("queue_capacity_bytes", _INT),
    "mss_bytes": ("mss_bytes", _INT),
    "duration_s": ("duration_s", _FLOAT),
    "flows": ("flows", _INT),
    "link_seed": ("rng_seed", _INT),
}
PATH_KEYS = {"db", "trace", "prompt_template"}


def parse_kv(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def config_from_dict(kv: dict, base_dir: str = ".") -> SearchConfig:
    top, ev, link = {}, {}, {}
    for key, value in kv.items():
        if key in PATH_KEYS and not os.path.isabs(value):
            value = os.path.join(base_dir, value)
        try:
            if key in TOP_KEYS:
                name, conv = TOP_KEYS[key]
                top[name] = conv(value)
            elif key in EVAL_KEYS:
                name, conv = EVAL_KEYS[key]
                ev[name] = conv(value)
            elif key in LINK_KEYS:
                name, conv = LINK_KEYS[key]
                link[name] = conv(value)
            elif key == "seeds":
                top["seeds"] = tuple(_seed_source(s.strip(), base_dir) for s in value.split(",") if s.strip())
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    try:
        spec = EvaluatorSpec(**ev)
        if link:
            spec = replace(spec, link=LinkConfig(**link))
    except LinkError as e:
        raise ConfigError(str(e)) from None
    return SearchConfig(evaluator=spec, **top)


def _seed_source(item: str, base_dir: str) -> str:
    if item in SEED_LIBRARY:
        return item
    path = item if os.path.isabs(item) else os.path.join(base_dir, item)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise ConfigError(f"seed {item!r}: {e}") from None


def load_config(path: str) -> SearchConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return config_from_dict(parse_kv(text), os.path.dirname(os.path.abspath(path)))
