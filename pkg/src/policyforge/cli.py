"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (checker rejection, no ok candidate,
unreachable generator), 2 usage or configuration error. Every run writes one
``<subcommand>_manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

from . import __version__
from .cache import CacheConfig, MissReport, improvement_over_fifo, oracle_improvement, reports_to_csv, simulate
from .ccsim import ConfigError as LinkError
from .ccsim import LinkConfig, metrics_to_csv, run_cc
from .dsl.checker import check_source
from .dsl.nodes import CACHE, KERNEL
from .dsl.render import render
from .policies import POLICY_NAMES, make_policy, parse_policy_spec
from .priority import PriorityPolicy
from .search import ConfigError, GeneratorUnavailable, load_config, run_search
from .search.evaluators import EvaluatorError, parse_capacity
from .trace import EmptyTrace, ParseError, Phase, SizeDist, compute_stats, parse_trace, synth_scan_churn, synth_zipf, write_trace

PROGRAM_PREFIX = "program:"

log = logging.getLogger("policyforge")


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    tool_version: str = __version__
    inputs: Dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, f"{self.subcommand}_manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: str, text: str, manifest: RunManifest) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    manifest.outputs.append(path)


def _read_program(path: str, mode: str, manifest: RunManifest):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            src = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read program {path}: {e}") from None
    manifest.inputs[path] = file_digest(path)
    return check_source(src, mode)


def _load_trace(path: str, manifest: RunManifest):
    try:
        trace = parse_trace(path)
    except OSError as e:
        raise UsageError(f"cannot read trace {path}: {e}") from None
    except ParseError as e:
        raise DomainError(f"{path}: {e}") from None
    if not trace:
        raise DomainError(f"{path}: trace has no requests")
    manifest.inputs[path] = file_digest(path)
    return trace


def _capacity(text: str, trace) -> int:
    try:
        return parse_capacity(text, compute_stats(trace).footprint_bytes)
    except EvaluatorError as e:
        raise UsageError(str(e)) from None


def _policy_instance(spec: str, capacity: int, history: int, manifest: RunManifest):
    """(label, policy) for a baseline spec or ``program:path``."""
    if spec.startswith(PROGRAM_PREFIX):
        path = spec[len(PROGRAM_PREFIX):]
        prog, report = _read_program(path, CACHE, manifest)
        if not report.ok:
            raise DomainError(f"{path} fails the checker:\n{report.feedback()}")
        label = PROGRAM_PREFIX + os.path.splitext(os.path.basename(path))[0]
        return label, PriorityPolicy(prog, history, label)
    try:
        name, params = parse_policy_spec(spec)
        return spec, make_policy(name, params, capacity)
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad policy {spec!r}: {e}") from None


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args, manifest: RunManifest) -> int:
    trace = _load_trace(args.trace, manifest)
    cap = _capacity(args.capacity, trace)
    manifest.config["capacity_bytes"] = cap
    label, policy = _policy_instance(args.policy, cap, args.history_capacity, manifest)
    report = simulate(trace, policy, CacheConfig(cap, args.history_capacity), os.path.basename(args.trace))
    report = replace(report, policy=label)
    out = os.path.join(args.out_dir, "simulate_report.json")
    _write_text(out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", manifest)
    print(report.to_json())
    return 0


COMPARE_FIELDS = ("trace", "policy", "object_miss_ratio", "improvement_over_fifo")
ORACLE_FIELDS = ("pool", "trace", "best_policy", "improvement_over_fifo")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_compare(args, manifest: RunManifest) -> int:
    paths = sorted({p for g in args.traces for p in glob.glob(g)})
    if not paths:
        raise UsageError("no trace files match")
    specs = list(args.policies) if args.policies else list(POLICY_NAMES)
    if "fifo" not in specs:
        specs.append("fifo")
    specs += [PROGRAM_PREFIX + p for p in args.programs]
    reports: Dict[str, Dict[str, MissReport]] = {}
    for path in paths:
        trace = _load_trace(path, manifest)
        cap = _capacity(args.capacity, trace)
        name = os.path.basename(path)
        reports[name] = {}
        for spec in specs:
            label, policy = _policy_instance(spec, cap, args.history_capacity, manifest)
            rep = simulate(trace, policy, CacheConfig(cap, args.history_capacity), name)
            reports[name][label] = replace(rep, policy=label)
    rows = []
    for tname in sorted(reports):
        fifo = reports[tname]["fifo"]
        for label in sorted(reports[tname]):
            rep = reports[tname][label]
            rows.append((tname, label, repr(rep.object_miss_ratio), repr(improvement_over_fifo(rep, fifo))))
    table = _csv_text(COMPARE_FIELDS, rows)
    _write_text(os.path.join(args.out_dir, "compare.csv"), table, manifest)
    _write_text(os.path.join(args.out_dir, "reports.csv"), reports_to_csv(r for t in sorted(reports) for _, r in sorted(reports[t].items())), manifest)
    oracle_rows = []
    pools = ["baselines"] + (["baselines+synthesized"] if args.programs else [])
    for pool in pools:
        res = oracle_improvement(reports, pool)
        for tname, (best, imp) in sorted(res.per_trace.items()):
            oracle_rows.append((pool, tname, best, repr(imp)))
        oracle_rows.append((pool, "mean", "", repr(res.mean)))
    oracle = _csv_text(ORACLE_FIELDS, oracle_rows)
    _write_text(os.path.join(args.out_dir, "oracle.csv"), oracle, manifest)
    sys.stdout.write(table)
    sys.stdout.write(oracle)
    return 0


def cmd_search(args, manifest: RunManifest) -> int:
    manifest.inputs[args.config] = file_digest(args.config) if os.path.exists(args.config) else ""
    config = load_config(args.config)
    if args.generator:
        config.generator = args.generator
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.seed is not None:
        config.seed = args.seed
    if args.db:
        config.db_path = args.db
    if args.rounds is not None:
        config.rounds = args.rounds
    manifest.config["resolved"] = _jsonable(asdict(config))
    result = run_search(config, resume=args.resume, overwrite=args.overwrite)
    manifest.outputs.append(config.db_path)
    best_path = os.path.join(args.out_dir, "best_program.dsl")
    _write_text(best_path, render(result.best) + "\n", manifest)
    summary = {
        "best_id": result.best_id,
        "best_fitness": result.fitness,
        "best_per_round": result.best_per_round,
        "records": result.records,
        "ok_generated": result.ok_generated,
        "evaluations": result.evaluations,
        "db_path": result.db_path,
    }
    _write_text(os.path.join(args.out_dir, "search_result.json"), json.dumps(summary, indent=2) + "\n", manifest)
    print(f"best fitness {result.fitness:.6f} ({result.best_id}); {result.records} records")
    return 0 if result.ok_generated > 0 else 1


def cmd_check(args, manifest: RunManifest) -> int:
    prog, report = _read_program(args.program, args.mode, manifest)
    if report.ok:
        print("ok")
        return 0
    for d in report.diagnostics:
        print(f"{args.program}:{d}")
    return 1


def cmd_ccsim(args, manifest: RunManifest) -> int:
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    try:
        link = LinkConfig(
            rate_bps=args.rate_bps,
            one_way_delay_ms=args.delay_ms,
            queue_capacity_bytes=args.queue_bytes,
            mss_bytes=args.mss,
            duration_s=args.duration,
            flows=args.flows,
            rng_seed=args.seed,
        )
    except LinkError as e:
        raise UsageError(str(e)) from None
    prog, report = _read_program(args.program, KERNEL, manifest)
    if not report.ok:
        for d in report.diagnostics:
            print(f"{args.program}:{d}")
        return 1
    manifest.config["link"] = asdict(link)
    manifest.config["bdp_bytes"] = link.bdp_bytes
    m = run_cc(prog, link)
    _write_text(os.path.join(args.out_dir, "ccsim_metrics.json"), json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n", manifest)
    _write_text(os.path.join(args.out_dir, "ccsim_metrics.csv"), metrics_to_csv([m]), manifest)
    print(m.to_json())
    return 0


def cmd_synth_trace(args, manifest: RunManifest) -> int:
    try:
        size = SizeDist.parse(args.size)
        if args.kind == "zipf":
            trace = synth_zipf(args.requests, args.objects, args.alpha, size, args.seed)
        else:
            if not args.phases:
                raise UsageError("scan_churn needs --phases")
            trace = synth_scan_churn([Phase.parse(p) for p in args.phases.split(",")], args.seed, size)
    except ValueError as e:
        raise UsageError(str(e)) from None
    write_trace(trace, args.out, header=args.header)
    manifest.outputs.append(args.out)
    st = compute_stats(trace)
    print(json.dumps(asdict(st), sort_keys=True))
    return 0


# -- parser --------------------------------------------------------------------


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=str))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="policyforge", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out-dir", default=".", help="directory for reports and the run manifest")

    p = sub.add_parser("simulate", help="replay a trace through one policy")
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", required=True, help="baseline spec (e.g. lru, s3fifo:small=0.1) or program:PATH")
    p.add_argument("--capacity", default="10%", help="bytes or percent of the footprint")
    p.add_argument("--history-capacity", type=int, default=1024)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="improvement over FIFO for many traces and policies")
    p.add_argument("--traces", nargs="+", required=True, help="trace paths or globs")
    p.add_argument("--policies", nargs="*", default=[], help="baseline specs (default: all baselines)")
    p.add_argument("--programs", nargs="*", default=[], help="synthesized program files")
    p.add_argument("--capacity", default="10%")
    p.add_argument("--history-capacity", type=int, default=1024)
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("search", help="run a heuristic search from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--generator", choices=("mock", "llm"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--db", help="override the database path")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--resume", action="store_true")
    g.add_argument("--overwrite", action="store_true")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("check", help="run the checker on a program file")
    p.add_argument("program")
    p.add_argument("--mode", choices=(CACHE, KERNEL), default=CACHE)
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("ccsim", help="simulate a kernel-mode program on a bottleneck link")
    p.add_argument("--program", required=True)
    p.add_argument("--rate-bps", type=int, default=12_000_000)
    p.add_argument("--delay-ms", type=float, default=20.0, help="one-way propagation delay")
    p.add_argument("--queue-bytes", type=int, default=None, help="default: one BDP")
    p.add_argument("--mss", type=int, default=1500)
    p.add_argument("--duration", type=float, default=60.0, help="seconds")
    p.add_argument("--flows", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_ccsim)

    p = sub.add_parser("synth-trace", help="write a synthetic CSV trace")
    p.add_argument("--kind", choices=("zipf", "scan_churn"), default="zipf")
    p.add_argument("--requests", type=int, default=100_000)
    p.add_argument("--objects", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--phases", default="", help="e.g. churn:2000:64,scan:500")
    p.add_argument("--size", default="fixed:1", help="fixed:N or uniform:LO:HI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_trace, out_dir=None)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out_dir = args.out_dir if args.out_dir is not None else (os.path.dirname(os.path.abspath(args.out)))
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = RunManifest(args.subcommand, _jsonable(cfg))
    t0 = time.perf_counter()
    try:
        os.makedirs(out_dir, exist_ok=True)
        code = args.func(args, manifest)
    except (UsageError, ConfigError, EvaluatorError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = 2
    except (DomainError, GeneratorUnavailable, EmptyTrace) as e:
        print(f"error: {e}", file=sys.stderr)
        code = 1
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.config["exit_code"] = code
    try:
        manifest.write(out_dir)
    except OSError as e:
        print(f"warning: cannot write manifest: {e}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
