import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policyforge.cache import (
    CacheConfig,
    EvictionPolicy,
    MissReport,
    PolicyContractViolation,
    improvement_over_fifo,
    oracle_improvement,
    reference_simulate,
    reports_from_csv,
    reports_to_csv,
    simulate,
)
from policyforge.policies import POLICY_NAMES, make_policy, parse_policy_spec
from policyforge.trace import Request, synth_scan_churn, Phase

A, B, C = 1, 2, 3


def unit(ids):
    return [Request(t, o, 1) for t, o in enumerate(ids)]


def run(policy, ids, cap, **kw):
    return simulate(unit(ids), make_policy(policy, capacity_bytes=cap, **kw), CacheConfig(cap))


traces = st.lists(
    st.tuples(st.integers(0, 12), st.integers(1, 6)), min_size=1, max_size=120
).map(lambda xs: [Request(t, o, s) for t, (o, s) in enumerate(xs)])


@pytest.mark.parametrize("policy", POLICY_NAMES)
def test_compulsory_misses_only(policy):
    rep = run(policy, [A, B, A], 2)
    assert rep.object_misses == 2
    assert rep.object_miss_ratio == pytest.approx(2 / 3)


def test_lru_hand_trace():
    assert run("lru", [A, B, C, A], 2).object_miss_ratio == 1.0


def test_mru_hand_trace():
    assert run("mru", [A, B, C, B], 2).object_miss_ratio == 1.0


def test_fifo_hand_trace():
    rep = run("fifo", [A, B, C, A], 2)
    assert rep.object_misses == 4
    assert rep.evictions == 2


def test_lfu_keeps_frequent():
    assert run("lfu", [A, A, B, C, A], 2).object_misses == 3


def test_gdsf_evicts_large_first():
    tr = [Request(0, A, 1), Request(1, B, 100), Request(2, C, 1)]
    pol = make_policy("gdsf")
    simulate(tr, pol, CacheConfig(101))
    # the 100-byte object had the lower count/size priority
    assert B not in pol.meta and A in pol.meta


def test_oversize_bypasses():
    tr = [Request(0, A, 50), Request(1, A, 50)]
    rep = simulate(tr, make_policy("lru"), CacheConfig(10))
    assert rep.object_misses == 2 and rep.evictions == 0


def test_size_change_on_hit_evicts():
    tr = [Request(0, A, 2), Request(1, B, 2), Request(2, A, 4)]
    rep = simulate(tr, make_policy("lru"), CacheConfig(5))
    assert rep.object_misses == 2
    assert rep.evictions == 1


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        simulate([], make_policy("fifo"), CacheConfig(1))


class _Rogue(EvictionPolicy):
    def on_insert(self, now, oid, size):
        pass

    def evict_victim(self, now):
        return 999

    def name(self):
        return "rogue"


def test_contract_violation():
    with pytest.raises(PolicyContractViolation):
        simulate(unit([A, B]), _Rogue(), CacheConfig(1))


@settings(max_examples=150, deadline=None)
@given(traces, st.integers(1, 20), st.sampled_from(["fifo", "lru", "lfu"]))
def test_reference_equivalence(trace, cap, policy):
    fast = simulate(trace, make_policy(policy), CacheConfig(cap))
    slow = reference_simulate(trace, policy, cap)
    assert (fast.object_misses, fast.byte_misses, fast.evictions) == (slow.object_misses, slow.byte_misses, slow.evictions)


@settings(max_examples=60, deadline=None)
@given(traces, st.integers(1, 20), st.sampled_from(POLICY_NAMES))
def test_every_policy_respects_contract(trace, cap, policy):
    rep = simulate(trace, make_policy(policy, capacity_bytes=cap), CacheConfig(cap))
    assert 0 < rep.object_misses <= rep.requests
    assert 0.0 <= rep.byte_miss_ratio <= 1.0
    # every first access is a miss
    assert rep.object_misses >= len({r.object_id for r in trace})


@pytest.mark.parametrize("n", [10, 57, 100])
def test_sieve_equals_fifo_on_scans(n):
    tr = synth_scan_churn([Phase("scan", n)])
    for cap in (1, 5, 17):
        sieve = simulate(tr, make_policy("sieve"), CacheConfig(cap))
        ref = reference_simulate(tr, "fifo", cap)
        assert sieve.object_misses == ref.object_misses == n
        assert sieve.evictions == ref.evictions


def test_s3fifo_resists_one_scan():
    hot = [A, B] * 20
    ids = hot + list(range(100, 140)) + hot
    assert run("s3fifo", ids, 8).object_misses < run("lru", ids, 8).object_misses


def test_policy_spec_parsing():
    assert parse_policy_spec("s3fifo:small=0.2,move_threshold=2") == ("s3fifo", {"small": 0.2, "move_threshold": 2})
    assert parse_policy_spec("CLOCK") == ("fifo-reinsertion", {})
    for bad in ("nope", "lru:x=1", "s3fifo:small=abc"):
        with pytest.raises(ValueError):
            parse_policy_spec(bad)


# -- comparisons --


def report(m, trace="t", cap=10, policy="p"):
    return MissReport(100, int(m * 100), int(m * 100), m, m, 0, policy, trace, cap)


def test_improvement_formula():
    assert improvement_over_fifo(report(0.30), report(0.40)) == pytest.approx(0.25)
    assert improvement_over_fifo(report(0.40), report(0.40)) == 0
    assert improvement_over_fifo(report(0.0), report(0.0)) == 0
    with pytest.raises(ValueError):
        improvement_over_fifo(report(0.3, trace="a"), report(0.4, trace="b"))


def test_oracle_fifo_only_pool_is_zero():
    reps = {"t1": {"fifo": report(0.4, "t1")}, "t2": {"fifo": report(0.2, "t2")}}
    assert oracle_improvement(reps).mean == 0


def test_oracle_picks_per_trace_best():
    reps = {
        "t1": {"fifo": report(0.5, "t1"), "lru": report(0.25, "t1"), "lfu": report(0.4, "t1")},
        "t2": {"fifo": report(0.5, "t2"), "lru": report(0.45, "t2"), "lfu": report(0.1, "t2")},
    }
    res = oracle_improvement(reps)
    assert res.per_trace["t1"][0] == "lru"
    assert res.per_trace["t2"][0] == "lfu"
    assert res.mean == pytest.approx((0.5 + 0.8) / 2)


def test_ps_oracle_dominates():
    reps = {
        "t1": {"fifo": report(0.5, "t1"), "lru": report(0.25, "t1"), "program:x": report(0.1, "t1")},
        "t2": {"fifo": report(0.5, "t2"), "lru": report(0.45, "t2"), "program:x": report(0.6, "t2")},
    }
    b = oracle_improvement(reps, "baselines")
    ps = oracle_improvement(reps, "baselines+synthesized")
    assert ps.mean > b.mean
    assert ps.per_trace["t2"] == b.per_trace["t2"]


def test_report_csv_roundtrip():
    reps = [report(0.25, "a", policy="lru"), report(0.5, "b", policy="fifo")]
    assert reports_from_csv(reports_to_csv(reps)) == reps
