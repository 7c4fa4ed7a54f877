"""The search loop: propose, check and repair, score, persist, pick exemplars, repeat."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from ..dsl.checker import SYNTAX, CheckReport, Diagnostic, check_source
from ..dsl.library import AIMD, LFU_SEED, LRU_SEED, fixed_cwnd
from ..dsl.nodes import Program
from ..dsl.parser import parse
from ..dsl.render import render
from .evaluators import EvaluatorSpec, build_evaluator
from .generators import (
    ChatClient,
    GeneratorConfigError,
    LLMConfig,
    LLMGenerator,
    MockGenerator,
    Proposal,
    derive_seed,
    load_template,
)
from .records import (
    CHECK_FAILED,
    OK,
    REPAIR_EXHAUSTED,
    CandidateRecord,
    candidate_id,
    db_append,
    db_load,
    db_rewrite,
    top_k,
)

log = logging.getLogger(__name__)

SEED_LIBRARY = {"lru": LRU_SEED, "lfu": LFU_SEED, "aimd": AIMD, "fixed_cwnd": fixed_cwnd(2)}
DEFAULT_SEEDS = {"cache": ("lru", "lfu"), "cc": ("aimd", "fixed_cwnd")}


class ConfigError(ValueError):
    pass


class SearchDBExists(ConfigError):
    pass


@dataclass
class SearchConfig:
    rounds: int = 20
    candidates_per_round: int = 25
    exemplar_count: int = 2
    repair_attempts: int = 3
    seeds: Tuple[str, ...] = ()  # library names or DSL source; empty = context defaults
    generator: str = "mock"  # "mock" | "llm"
    seed: int = 0
    evaluator: EvaluatorSpec = field(default_factory=EvaluatorSpec)
    db_path: str = "search_db.jsonl"
    jobs: int = 1
    prompt_template: Optional[str] = None
    llm_max_retries: int = 4
    llm_backoff_s: float = 1.0
    llm_max_in_flight: int = 4

    @property
    def mode(self) -> str:
        return self.evaluator.mode

    def seed_sources(self) -> List[Tuple[str, str]]:
        """(label, source) for each seed."""
        names = self.seeds or DEFAULT_SEEDS[self.evaluator.kind]
        return [(s, SEED_LIBRARY[s]) if s in SEED_LIBRARY else (f"seed{i}", s) for i, s in enumerate(names)]

    def validate(self) -> None:
        if self.rounds < 1 or self.candidates_per_round < 1:
            raise ConfigError("rounds and candidates_per_round must be ≥ 1")
        if self.exemplar_count < 1:
            raise ConfigError("exemplar_count must be ≥ 1")
        if self.repair_attempts < 0:
            raise ConfigError("repair_attempts must be ≥ 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be ≥ 1")
        if self.generator not in ("mock", "llm"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.evaluator.kind not in ("cache", "cc"):
            raise ConfigError(f"unknown evaluator kind {self.evaluator.kind!r}")
        for label, src in self.seed_sources():
            prog, report = check_source(src, self.mode)
            if not report.ok:
                raise ConfigError(f"seed {label} fails the checker:\n{report.feedback()}")


@dataclass
class SearchResult:
    best: Program
    fitness: float
    best_id: str
    db_path: str
    best_per_round: List[float]
    records: int
    ok_generated: int
    evaluations: int  # fitness values assigned (one per ok record)
    simulations: int  # distinct programs actually simulated in this process


# -- evaluation workers --------------------------------------------------------

_WORKER_EVAL = None


def _init_worker(spec: EvaluatorSpec):
    global _WORKER_EVAL
    _WORKER_EVAL = build_evaluator(spec)


def _worker_eval(source: str) -> float:
    return _WORKER_EVAL.evaluate(parse(source, _WORKER_EVAL.mode))


class _Scorer:
    """Fitness by canonical program text; each distinct program is simulated once."""

    def __init__(self, evaluator, spec: Optional[EvaluatorSpec], jobs: int):
        self.evaluator = evaluator
        self.memo: Dict[str, float] = {}
        self.simulations = 0
        self.pool = None
        if jobs > 1 and spec is not None:
            self.pool = ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(spec,))

    def score(self, programs: List[Program]) -> List[float]:
        keys = [render(p) for p in programs]
        todo, queued = [], set()
        for k, p in zip(keys, programs):
            if k not in self.memo and k not in queued:
                queued.add(k)
                todo.append((k, p))
        if self.pool is not None and len(todo) > 1:
            results = list(self.pool.map(_worker_eval, [k for k, _ in todo]))
        else:
            results = [self.evaluator.evaluate(p) for _, p in todo]
        for (k, _), fit in zip(todo, results):
            self.memo[k] = fit
        self.simulations += len(todo)
        return [self.memo[k] for k in keys]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


# -- helpers -------------------------------------------------------------------


def make_generator(config: SearchConfig):
    if config.generator == "mock":
        return MockGenerator()
    try:
        llm = LLMConfig.from_env(
            max_retries=config.llm_max_retries,
            backoff_s=config.llm_backoff_s,
            max_in_flight=config.llm_max_in_flight,
        )
    except GeneratorConfigError as e:
        raise ConfigError(str(e)) from None
    template = load_template(config.prompt_template, config.mode)
    return LLMGenerator(ChatClient(llm), config.mode, template)


def _extract_failure(msg: str) -> CheckReport:
    return CheckReport((Diagnostic((1, 1), SYNTAX, msg),))


def _check(proposal: Proposal, mode: str):
    if proposal.extract_error is not None:
        return None, _extract_failure(proposal.extract_error)
    return check_source(proposal.source, mode)


def _add_tokens(total, n):
    if n is None:
        return total
    return n if total is None else total + n


def _complete_prefix(records: List[CandidateRecord], n_seeds: int, per_round: int) -> List[CandidateRecord]:
    """Records of the leading run of fully persisted rounds."""
    by_round: Dict[int, List[CandidateRecord]] = {}
    for r in records:
        by_round.setdefault(r.round, []).append(r)
    kept = []
    rnd = 0
    while rnd in by_round and len(by_round[rnd]) == (n_seeds if rnd == 0 else per_round):
        kept.extend(by_round[rnd])
        rnd += 1
    return kept


def _prepare_db(path: str, resume: bool, overwrite: bool, n_seeds: int, per_round: int) -> List[CandidateRecord]:
    if resume and overwrite:
        raise ConfigError("--resume and --overwrite are mutually exclusive")
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    if not exists:
        open(path, "w").close()
        return []
    if overwrite:
        open(path, "w").close()
        return []
    if not resume:
        raise SearchDBExists(f"{path} already holds a search; pass --resume or --overwrite")
    records = db_load(path)
    kept = _complete_prefix(records, n_seeds, per_round)
    if len(kept) != len(records):
        log.warning("%s: discarding %d records of an unfinished round", path, len(records) - len(kept))
        db_rewrite(path, kept)
    return kept


# -- the loop ------------------------------------------------------------------


def run_search(
    config: SearchConfig,
    generator=None,
    evaluator=None,
    resume: bool = False,
    overwrite: bool = False,
    on_round: Optional[Callable[[int, float], None]] = None,
) -> SearchResult:
    """Run (or resume) a search and return the global best program.

    ``generator`` and ``evaluator`` default to the ones the config describes;
    tests inject stubs here.
    """
    config.validate()
    mode = config.mode
    spec = None
    if evaluator is None:
        spec = config.evaluator
        evaluator = build_evaluator(spec)
    if generator is None:
        generator = make_generator(config)
    seeds = config.seed_sources()
    K = config.candidates_per_round
    records = _prepare_db(config.db_path, resume, overwrite, len(seeds), K)
    scorer = _Scorer(evaluator, spec, config.jobs)
    best_per_round: List[float] = []
    try:
        done_rounds = max((r.round for r in records), default=-1)
        for rnd in range(done_rounds + 1):
            best_per_round.append(top_k((r for r in records if r.round <= rnd), 1)[0].fitness)
        if done_rounds < 0:
            batch = []
            progs = [parse(src, mode) for _, src in seeds]
            t0 = time.perf_counter()
            fits = scorer.score(progs)
            dt = (time.perf_counter() - t0) / len(progs)
            for i, ((label, _), prog, fit) in enumerate(zip(seeds, progs, fits)):
                batch.append(CandidateRecord(candidate_id(0, i, seed=True), 0, render(prog), OK, [], fit, f"seed:{label}", dt))
            db_append(config.db_path, batch)
            records.extend(batch)
            best_per_round.append(top_k(records, 1)[0].fitness)
            if on_round:
                on_round(0, best_per_round[-1])
            done_rounds = 0
        for rnd in range(done_rounds + 1, config.rounds + 1):
            batch = _run_round(config, rnd, records, generator, scorer)
            db_append(config.db_path, batch)
            records.extend(batch)
            best_per_round.append(top_k(records, 1)[0].fitness)
            log.info("round %d: best %.6f", rnd, best_per_round[-1])
            if on_round:
                on_round(rnd, best_per_round[-1])
    finally:
        scorer.close()
    best = top_k(records, 1)[0]
    return SearchResult(
        best=parse(best.source, mode),
        fitness=best.fitness,
        best_id=best.candidate_id,
        db_path=config.db_path,
        best_per_round=best_per_round,
        records=len(records),
        ok_generated=sum(1 for r in records if r.ok and r.round > 0),
        evaluations=sum(1 for r in records if r.ok),
        simulations=scorer.simulations,
    )


def _run_round(config: SearchConfig, rnd: int, records, generator, scorer: _Scorer) -> List[CandidateRecord]:
    mode = config.mode
    K = config.candidates_per_round
    exemplars = [(parse(r.source, mode), r.fitness) for r in top_k(records, config.exemplar_count)]
    t0 = time.perf_counter()
    proposals = generator.propose(exemplars, K, derive_seed(config.seed, rnd))
    if len(proposals) != K:
        raise RuntimeError(f"generator returned {len(proposals)} candidates, expected {K}")
    share = (time.perf_counter() - t0) / K
    pending = []  # (index, record fields, program or None, elapsed)
    for i, prop in enumerate(proposals):
        t1 = time.perf_counter()
        tin, tout = prop.tokens_in, prop.tokens_out
        prog, report = _check(prop, mode)
        repairs = 0
        while not report.ok and repairs < config.repair_attempts:
            repairs += 1
            prop = generator.repair(prop, report.feedback(), derive_seed(config.seed, rnd, i, repairs))
            tin, tout = _add_tokens(tin, prop.tokens_in), _add_tokens(tout, prop.tokens_out)
            prog, report = _check(prop, mode)
        status = OK if report.ok else (CHECK_FAILED if repairs == 0 else REPAIR_EXHAUSTED)
        source = render(prog) if report.ok else prop.source
        pending.append((i, status, source, report, prog, tin, tout, repairs, share + time.perf_counter() - t1))
    oks = [p for p in pending if p[1] == OK]
    t2 = time.perf_counter()
    fits = scorer.score([p[4] for p in oks])
    eval_share = (time.perf_counter() - t2) / max(1, len(oks))
    fit_of = {p[0]: f for p, f in zip(oks, fits)}
    out = []
    for i, status, source, report, prog, tin, tout, repairs, dt in pending:
        ok = status == OK
        out.append(
            CandidateRecord(
                candidate_id=candidate_id(rnd, i),
                round=rnd,
                source=source,
                status=status,
                diagnostics=[d.to_dict() for d in report.diagnostics],
                fitness=fit_of[i] if ok else None,
                generator=generator.label,
                wall_time_s=dt + (eval_share if ok else 0.0),
                tokens_in=tin,
                tokens_out=tout,
                repairs=repairs,
            )
        )
    return out
