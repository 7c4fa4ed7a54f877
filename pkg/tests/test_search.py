import json
import logging

import pytest

from policyforge.cache import CacheConfig, simulate
from policyforge.dsl.checker import check_program
from policyforge.dsl.library import AIMD, LFU_SEED, LRU_SEED
from policyforge.dsl.parser import parse
from policyforge.dsl.render import render
from policyforge.policies import make_policy
from policyforge.search import (
    CacheEvaluator,
    CandidateRecord,
    ConfigError,
    EvaluatorSpec,
    Proposal,
    SearchConfig,
    SearchDBExists,
    db_append,
    db_load,
    load_config,
    mock_generate,
    run_search,
)
from policyforge.search.evaluators import EvaluatorError, parse_capacity
from policyforge.search.records import CHECK_FAILED, OK, REPAIR_EXHAUSTED, top_k
from policyforge.trace import compute_stats, synth_zipf

TRACE = synth_zipf(3000, 200, 1.0, seed=4)
CAP = compute_stats(TRACE).footprint_bytes // 10


@pytest.fixture(scope="module")
def evaluator():
    return CacheEvaluator(TRACE, CAP, "zipf-small")


def subdir(base, name):
    d = base / name
    d.mkdir()
    return d


def config(tmp_path, **kw):
    kw.setdefault("rounds", 3)
    kw.setdefault("candidates_per_round", 6)
    return SearchConfig(db_path=str(tmp_path / "db.jsonl"), **kw)


# -- records --


def rec(i, fit=0.5):
    return CandidateRecord(f"r001-c{i:03d}", 1, "return count;", OK, [], fit, "mock", 0.1)


def test_db_append_and_load(tmp_path):
    path = tmp_path / "db.jsonl"
    db_append(path, [rec(0), rec(1)])
    db_append(path, [rec(2)])
    assert [r.candidate_id for r in db_load(path)] == ["r001-c000", "r001-c001", "r001-c002"]


def test_db_truncated_tail(tmp_path, caplog):
    path = tmp_path / "db.jsonl"
    db_append(path, [rec(0), rec(1), rec(2)])
    text = path.read_text()
    path.write_text(text[: len(text) - 20])
    with caplog.at_level(logging.WARNING):
        assert len(db_load(path)) == 2
    assert "truncated" in caplog.text


def test_record_status_contract():
    with pytest.raises(ValueError):
        CandidateRecord("x", 1, "", OK, [], None)
    with pytest.raises(ValueError):
        CandidateRecord("x", 1, "", CHECK_FAILED, [], 0.3)
    with pytest.raises(ValueError):
        CandidateRecord("x", 1, "", "weird")


def test_top_k_ties_break_by_id():
    rs = [rec(3, 0.7), rec(1, 0.7), rec(2, 0.9)]
    assert [r.candidate_id for r in top_k(rs, 2)] == ["r001-c002", "r001-c001"]


# -- mock generator --


def test_mock_generate_reproducible_and_checked():
    ex = [(parse(LRU_SEED), 0.6), (parse(LFU_SEED), 0.7)]
    a = [render(p) for p in mock_generate(ex, 25, 99)]
    assert a == [render(p) for p in mock_generate(ex, 25, 99)]
    assert a[:10] == [render(p) for p in mock_generate(ex, 10, 99)]
    assert all(check_program(p).ok for p in mock_generate(ex, 200, 5))


def test_mock_generate_kernel():
    ex = [(parse(AIMD, "kernel"), 0.5)]
    assert all(p.mode == "kernel" and check_program(p).ok for p in mock_generate(ex, 100, 1))


# -- the loop --


def test_lfu_wins_round_zero_and_floor(tmp_path, evaluator):
    lru = 1 - simulate(TRACE, make_policy("lru"), CacheConfig(CAP)).object_miss_ratio
    lfu = 1 - simulate(TRACE, make_policy("lfu"), CacheConfig(CAP)).object_miss_ratio
    assert lfu > lru  # the premise of this check
    res = run_search(config(tmp_path), evaluator=evaluator)
    assert res.best_per_round[0] == pytest.approx(lfu)
    assert res.fitness >= lfu
    assert all(b >= a for a, b in zip(res.best_per_round, res.best_per_round[1:]))


def test_record_accounting(tmp_path, evaluator):
    res = run_search(config(tmp_path, rounds=4, candidates_per_round=5), evaluator=evaluator)
    recs = db_load(res.db_path)
    assert len(recs) == res.records == 2 + 20
    assert [r.candidate_id for r in recs[:2]] == ["r000-s000", "r000-s001"]
    assert [r.generator for r in recs[:2]] == ["seed:lru", "seed:lfu"]
    for rnd in range(1, 5):
        assert [r.candidate_id for r in recs if r.round == rnd] == [f"r{rnd:03d}-c{i:03d}" for i in range(5)]
    assert res.evaluations == sum(r.ok for r in recs)
    assert res.simulations <= res.evaluations
    assert res.simulations == len({r.source for r in recs if r.ok})
    assert res.best_id == top_k(recs, 1)[0].candidate_id


def test_search_deterministic(tmp_path, evaluator):
    a = run_search(config(subdir(tmp_path, "a"), seed=3), evaluator=evaluator)
    b = run_search(config(subdir(tmp_path, "b"), seed=3), evaluator=evaluator)
    strip = lambda p: [{k: v for k, v in r.to_dict().items() if k != "wall_time_s"} for r in db_load(p)]
    assert strip(a.db_path) == strip(b.db_path)
    assert render(a.best) == render(b.best)


def test_refuses_existing_db(tmp_path, evaluator):
    cfg = config(tmp_path, rounds=1)
    run_search(cfg, evaluator=evaluator)
    with pytest.raises(SearchDBExists):
        run_search(cfg, evaluator=evaluator)
    res = run_search(cfg, evaluator=evaluator, overwrite=True)
    assert res.records == 2 + 6


def test_resume_matches_uninterrupted(tmp_path, evaluator):
    full = run_search(config(subdir(tmp_path, "full"), rounds=4), evaluator=evaluator)
    part_dir = subdir(tmp_path, "part")
    run_search(config(part_dir, rounds=2), evaluator=evaluator)
    # simulate a crash in the middle of round 3: two records and half a line
    path = part_dir / "db.jsonl"
    extra = [r for r in db_load(full.db_path) if r.round == 3][:2]
    db_append(path, extra)
    with open(path, "a") as fh:
        fh.write('{"candidate_id": "r003-c0')
    res = run_search(config(part_dir, rounds=4), evaluator=evaluator, resume=True)
    assert res.best_per_round == full.best_per_round
    strip = lambda p: [(r.candidate_id, r.source, r.fitness) for r in db_load(p)]
    assert strip(path) == strip(full.db_path)


class TwoShot:
    """First proposal is kernel-illegal; the repair is valid."""

    label = "stub"

    def __init__(self):
        self.feedback = []

    def propose(self, exemplars, k, seed):
        return [Proposal("return cwnd / rtt_us;", 10, 5) for _ in range(k)]

    def repair(self, proposal, feedback, seed):
        self.feedback.append(feedback)
        return Proposal("return cwnd / max(1, rtt_us);", 12, 6)


class AlwaysBad(TwoShot):
    def repair(self, proposal, feedback, seed):
        self.feedback.append(feedback)
        return Proposal("return 1.5 * cwnd;", 1, 1)


class ConstEval:
    mode = "kernel"

    def evaluate(self, program):
        return float(len(render(program)))


def cc_config(tmp_path, **kw):
    spec = EvaluatorSpec(kind="cc")
    return config(tmp_path, rounds=1, candidates_per_round=2, evaluator=spec, **kw)


def test_two_shot_repair_gives_ok(tmp_path):
    gen = TwoShot()
    res = run_search(cc_config(tmp_path), generator=gen, evaluator=ConstEval())
    recs = [r for r in db_load(res.db_path) if r.round == 1]
    assert [(r.status, r.repairs) for r in recs] == [(OK, 1), (OK, 1)]
    assert recs[0].tokens_in == 22 and recs[0].tokens_out == 11
    assert "unguarded-division" in gen.feedback[0]
    assert res.ok_generated == 2


def test_repair_exhausted_and_check_failed(tmp_path):
    res = run_search(cc_config(tmp_path, repair_attempts=2), generator=AlwaysBad(), evaluator=ConstEval())
    recs = [r for r in db_load(res.db_path) if r.round == 1]
    assert [(r.status, r.repairs, r.fitness) for r in recs] == [(REPAIR_EXHAUSTED, 2, None)] * 2
    assert recs[0].diagnostics[0]["category"] == "forbidden-construct"
    res = run_search(cc_config(tmp_path, repair_attempts=0), generator=AlwaysBad(), evaluator=ConstEval(), overwrite=True)
    recs = [r for r in db_load(res.db_path) if r.round == 1]
    assert [(r.status, r.repairs) for r in recs] == [(CHECK_FAILED, 0)] * 2
    assert res.ok_generated == 0
    # the seeds still provide a best program
    assert res.best_id.startswith("r000-")


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config(tmp_path, rounds=0).validate()
    with pytest.raises(ConfigError):
        config(tmp_path, seeds=("return cwnd / rtt_us;",), evaluator=EvaluatorSpec(kind="cc")).validate()
    with pytest.raises(ConfigError):
        config(tmp_path, generator="oracle").validate()


def test_load_config(tmp_path):
    (tmp_path / "seed.dsl").write_text("return size;")
    (tmp_path / "s.cfg").write_text(
        "# comment\nrounds = 2\ncandidates_per_round = 4\nseeds = lru, seed.dsl\n"
        "db = out.jsonl\nsynth_requests = 500\ncapacity = 5%\n"
    )
    cfg = load_config(tmp_path / "s.cfg")
    assert (cfg.rounds, cfg.candidates_per_round) == (2, 4)
    assert cfg.seeds == ("lru", "return size;")
    assert cfg.db_path == str(tmp_path / "out.jsonl")
    assert cfg.evaluator.synth_requests == 500
    res = run_search(cfg)
    assert res.records == 2 + 8
    for bad in ("rounds = two\n", "nonsense = 1\n", "rounds = 1\nrounds = 2\n", "rounds\n"):
        (tmp_path / "bad.cfg").write_text(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.cfg")


def test_capacity_parsing():
    assert parse_capacity("10%", 1005) == 100
    assert parse_capacity("512", 10) == 512
    for bad in ("0", "-3%", "abc"):
        with pytest.raises(EvaluatorError):
            parse_capacity(bad, 100)


def test_db_lines_are_json(tmp_path, evaluator):
    res = run_search(config(tmp_path, rounds=1), evaluator=evaluator)
    for line in open(res.db_path):
        d = json.loads(line)
        assert set(d) >= {"candidate_id", "round", "source", "status", "diagnostics", "fitness", "generator", "wall_time_s", "tokens_in", "tokens_out"}
