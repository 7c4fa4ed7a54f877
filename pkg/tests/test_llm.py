import pytest

from stub_llm import StubServer, fenced, reply
from policyforge.dsl.parser import parse
from policyforge.search import (
    ChatClient,
    EvaluatorSpec,
    GeneratorUnavailable,
    LLMConfig,
    LLMGenerator,
    PromptBundle,
    SearchConfig,
    db_load,
    llm_generate,
    run_search,
)
from policyforge.search.generators import (
    GeneratorConfigError,
    default_template,
    extract_code,
    fill_template,
)
from policyforge.search.records import CHECK_FAILED, OK

GOOD = "return cwnd + mss;"


def client_for(server, sleeps=None, **kw):
    cfg = LLMConfig(server.base_url, "stub-model", "secret-key", timeout_s=5, **kw)
    return ChatClient(cfg, sleep=(sleeps.append if sleeps is not None else lambda s: None))


def bundle():
    return PromptBundle(default_template("kernel"), "kernel", [(parse("return cwnd;", "kernel"), 0.4)])


def test_fixed_program_k_times():
    with StubServer(lambda n, body: reply(fenced(GOOD))) as srv:
        props = llm_generate(bundle(), 5, client_for(srv), seed=3)
    assert [p.source for p in props] == [GOOD] * 5
    assert all(p.tokens_in == 11 and p.tokens_out == 7 for p in props)
    req = srv.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["headers"]["Authorization"] == "Bearer secret-key"
    assert req["json"]["model"] == "stub-model"
    prompt = req["json"]["messages"][0]["content"]
    assert "return cwnd;" in prompt and "cwnd" in prompt
    assert "{exemplars}" not in prompt
    # one distinct per-request seed each
    assert len({r["json"]["seed"] for r in srv.requests}) == 5


def test_retry_with_backoff():
    def script(n, body):
        return (503, {"error": "busy"}) if n < 2 else reply(fenced(GOOD))

    sleeps = []
    with StubServer(script) as srv:
        text, tin, tout = client_for(srv, sleeps, backoff_s=0.5).complete("hi")
    assert extract_code(text) == GOOD
    assert sleeps == [0.5, 1.0]
    assert len(srv.requests) == 3


def test_malformed_body_is_retried():
    def script(n, body):
        return (200, "not json") if n == 0 else reply(fenced(GOOD))

    with StubServer(script) as srv:
        assert extract_code(client_for(srv).complete("hi")[0]) == GOOD
    assert len(srv.requests) == 2


def test_gives_up_after_retries():
    sleeps = []
    with StubServer(lambda n, body: (429, {"error": "slow down"})) as srv:
        with pytest.raises(GeneratorUnavailable):
            client_for(srv, sleeps, max_retries=3, backoff_s=0.1).complete("hi")
    assert len(srv.requests) == 4
    assert sleeps == pytest.approx([0.1, 0.2, 0.4])


def test_client_error_not_retried():
    with StubServer(lambda n, body: (401, {"error": "bad key"})) as srv:
        with pytest.raises(GeneratorUnavailable):
            client_for(srv).complete("hi")
    assert len(srv.requests) == 1


def test_unreachable_endpoint():
    cfg = LLMConfig("http://127.0.0.1:9/v1", "m", "k", timeout_s=0.5, max_retries=1)
    with pytest.raises(GeneratorUnavailable):
        ChatClient(cfg, sleep=lambda s: None).complete("hi")


def test_in_flight_cap():
    with StubServer(lambda n, body: reply(fenced(GOOD)), delay_s=0.05) as srv:
        llm_generate(bundle(), 12, client_for(srv, max_in_flight=3))
    assert 1 <= srv.max_active <= 3


def test_prose_reply_marks_extract_error():
    with StubServer(lambda n, body: reply("I would simply double the window.")) as srv:
        (prop,) = llm_generate(bundle(), 1, client_for(srv))
    assert prop.extract_error is not None


def test_extract_first_fence():
    assert extract_code("a\n```dsl\nreturn 1;\n```\nb\n```\nreturn 2;\n```") == "return 1;"
    assert extract_code("no code") is None


def test_fill_template_keeps_braces():
    out = fill_template("{signature}\n{ return x; }\n{feedback}", signature="S", feedback="F")
    assert out == "S\n{ return x; }\nF"


def test_from_env():
    env = {"POLICYFORGE_LLM_BASE_URL": "http://h/v1/", "POLICYFORGE_LLM_MODEL": "m", "POLICYFORGE_LLM_API_KEY": "k"}
    cfg = LLMConfig.from_env(env, max_retries=2)
    assert (cfg.base_url, cfg.model, cfg.max_retries) == ("http://h/v1", "m", 2)
    with pytest.raises(GeneratorConfigError):
        LLMConfig.from_env({"POLICYFORGE_LLM_MODEL": "m"})


class LenEval:
    mode = "kernel"

    def evaluate(self, program):
        return 1.0


def search_cfg(tmp_path, **kw):
    return SearchConfig(
        rounds=1, candidates_per_round=3, evaluator=EvaluatorSpec(kind="cc"), db_path=str(tmp_path / "db.jsonl"), **kw
    )


def test_search_prose_is_check_failed(tmp_path):
    with StubServer(lambda n, body: reply("Just use a bigger window.")) as srv:
        gen = LLMGenerator(client_for(srv), "kernel")
        res = run_search(search_cfg(tmp_path, repair_attempts=0), generator=gen, evaluator=LenEval())
    recs = [r for r in db_load(res.db_path) if r.round == 1]
    assert [(r.status, r.repairs) for r in recs] == [(CHECK_FAILED, 0)] * 3
    assert all(r.diagnostics[0]["category"] == "syntax" for r in recs)
    assert all(r.tokens_in == 11 and r.tokens_out == 7 for r in recs)


def test_search_two_shot_repair(tmp_path):
    def script(n, body):
        prompt = body["messages"][0]["content"]
        if "rejected by the checker" in prompt:
            assert "unguarded-division" in prompt
            return reply(fenced("return cwnd / max(1, rtt_us);"), 20, 9)
        return reply(fenced("return cwnd / rtt_us;"))

    with StubServer(script) as srv:
        gen = LLMGenerator(client_for(srv, max_in_flight=1), "kernel")
        res = run_search(search_cfg(tmp_path), generator=gen, evaluator=LenEval())
    recs = [r for r in db_load(res.db_path) if r.round == 1]
    assert [(r.status, r.repairs) for r in recs] == [(OK, 1)] * 3
    assert recs[0].tokens_in == 31 and recs[0].tokens_out == 16
    assert recs[0].generator == "llm"
