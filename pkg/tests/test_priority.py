import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_percentile, naive_priority_simulate
from policyforge.cache import CacheConfig, simulate
from policyforge.dsl.library import LFU_SEED, EXAMPLE_SCORE, LRU_SEED
from policyforge.dsl.mutate import random_program
from policyforge.dsl.parser import parse
from policyforge.policies import make_policy
from policyforge.priority import AgeSeries, EvictionHistory, OrderStatMultiset, PriorityPolicy
from policyforge.trace import SizeDist, compute_stats, synth_zipf

PCTS = st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.75, 0.9, 0.99, 1.0])


# -- order-statistic multiset --


def test_percentile_examples():
    s = OrderStatMultiset([1, 2, 3, 4])
    assert s.percentile(0.5) == 2
    assert s.percentile(1.0) == 4
    assert s.percentile(0.0) == 1
    assert OrderStatMultiset().percentile(0.5) == 0


def test_age_examples():
    ages = AgeSeries(OrderStatMultiset([10, 20, 30]), now=50)
    assert ages.percentile(1.0) == 40
    assert ages.percentile(0.0) == 20
    assert AgeSeries(OrderStatMultiset(), 5).percentile(0.5) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), max_size=40), PCTS, st.integers(0, 100))
def test_age_percentile_is_nearest_rank_over_ages(lasts, p, extra):
    now = max(lasts, default=0) + extra
    assert AgeSeries(OrderStatMultiset(lasts), now).percentile(p) == naive_percentile([now - x for x in lasts], p)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("aria"), st.integers(0, 30)), max_size=300), PCTS)
def test_multiset_matches_list(ops, p):
    s = OrderStatMultiset()
    ref = []
    for op, v in ops:
        if op == "a":
            s.add(v)
            ref.append(v)
        elif op == "r" and v in ref:
            s.remove(v)
            ref.remove(v)
        elif op == "i" and v in ref:
            s.increment(v)
            ref[ref.index(v)] = v + 1
        assert len(s) == len(ref)
    assert s.percentile(p) == naive_percentile(ref, p)
    assert list(s) == sorted(ref)


def test_multiset_switches_storage_and_back():
    s = OrderStatMultiset()
    ref = []
    rng = random.Random(0)
    for i in range(OrderStatMultiset.SPLIT + 50):
        v = rng.randint(0, 999)
        s.add(v)
        ref.append(v)
    assert s.tree is not None
    s.increment(ref[0])
    ref[0] += 1
    s.advance(ref[1], 10_000)
    ref[1] = 10_000
    while len(ref) > OrderStatMultiset.MERGE - 10:
        v = ref.pop(rng.randrange(len(ref)))
        s.remove(v)
    assert s.tree is None
    assert list(s) == sorted(ref)
    for p in (0.0, 0.3, 0.5, 0.99, 1.0):
        assert s.percentile(p) == naive_percentile(ref, p)


def test_remove_missing_raises():
    with pytest.raises(ValueError):
        OrderStatMultiset([1]).remove(2)


# -- eviction history --


def test_history_record_and_lookup():
    h = EvictionHistory(3)
    h.record(42, 100, 5, 30)
    assert h.contains(42) and h.count(42) == 5 and h.age_at_eviction(42) == 30
    for i in range(3):
        h.record(i, 101 + i, 1, 0)
    assert not h.contains(42)
    assert (h.contains(7), h.count(7), h.age_at_eviction(7)) == (False, 0, 0)


def test_history_keeps_latest_record():
    h = EvictionHistory(4)
    h.record(1, 10, 2, 3)
    h.record(1, 20, 7, 9)
    h.record(2, 21, 1, 1)
    h.record(3, 22, 1, 1)
    h.record(4, 23, 1, 1)  # overwrites the older record of 1 only
    assert h.count(1) == 7 and h.age_at_eviction(1) == 9


# -- the policy --


def zipf(seed, n=1000, k=None, sized=False):
    rng = random.Random(seed)
    k = k or rng.randint(5, 200)
    size = SizeDist.uniform(1, 30) if sized else SizeDist.fixed(1)
    tr = synth_zipf(n, k, rng.choice([0.0, 0.6, 1.0, 1.4]), size, seed)
    cap = max(1, compute_stats(tr).footprint_bytes // rng.choice([2, 5, 10]))
    return tr, cap


@pytest.mark.parametrize("seed_src, baseline", [(LRU_SEED, "lru"), (LFU_SEED, "lfu")])
def test_seed_programs_match_baselines(seed_src, baseline):
    prog = parse(seed_src)
    for seed in range(100):
        tr, cap = zipf(seed, sized=seed % 2 == 1)
        a = simulate(tr, PriorityPolicy(prog), CacheConfig(cap))
        b = simulate(tr, make_policy(baseline), CacheConfig(cap))
        assert (a.object_misses, a.byte_misses, a.evictions) == (b.object_misses, b.byte_misses, b.evictions)


def test_matches_naive_oracle():
    for seed in range(60):
        tr, cap = zipf(seed, n=400, sized=seed % 3 == 0)
        prog = parse(EXAMPLE_SCORE) if seed % 4 == 0 else random_program(seed, "cache")
        hc = [2, 16, 1024][seed % 3]
        a = simulate(tr, PriorityPolicy(prog, hc), CacheConfig(cap, hc))
        b = naive_priority_simulate(tr, prog, cap, hc)
        assert (a.object_misses, a.byte_misses, a.evictions) == (b.object_misses, b.byte_misses, b.evictions)


def test_fast_replay_matches_hooks():
    for seed in range(80):
        tr, cap = zipf(seed, n=1500, sized=True)
        prog = random_program(seed + 77, "cache")
        a = simulate(tr, PriorityPolicy(prog), CacheConfig(cap), fast=True)
        b = simulate(tr, PriorityPolicy(prog), CacheConfig(cap), fast=False)
        assert a == b


def test_aggregates_track_residents():
    tr, cap = zipf(3, n=3000, sized=True)
    pol = PriorityPolicy(parse(EXAMPLE_SCORE), all_aggregates=True)
    simulate(tr, pol, CacheConfig(cap), fast=False)
    metas = [pol.object_meta(o) for o in pol.meta]
    agg = pol.aggregates
    assert list(agg.counts) == sorted(m.count for m in metas)
    assert list(agg.sizes) == sorted(m.size for m in metas)
    assert list(agg.last_access) == sorted(m.last_access_time for m in metas)


def test_stored_score_matches_context():
    tr, cap = zipf(4, n=500)
    pol = PriorityPolicy(parse("return count * 3 - size;"))
    simulate(tr, pol, CacheConfig(cap), fast=False)
    for oid in pol.meta:
        m = pol.object_meta(oid)
        assert pol.stored_score(oid) == m.count * 3 - m.size


def test_rejects_kernel_programs():
    with pytest.raises(ValueError):
        PriorityPolicy(parse("return cwnd;", "kernel"))


# miss count of the example score program on Zipf(1.0), 10^5 requests,
# 10^3 objects, seed 0, capacity 10% of the footprint; pinned by the naive
# simulator in tests/oracles.py
EXAMPLE_GOLDEN_MISSES = 33163


def _golden_context():
    tr = synth_zipf(100_000, 1000, 1.0, seed=0)
    return tr, compute_stats(tr).footprint_bytes // 10


def test_example_golden_miss_ratio():
    tr, cap = _golden_context()
    rep = simulate(tr, PriorityPolicy(parse(EXAMPLE_SCORE)), CacheConfig(cap))
    assert rep.object_misses == EXAMPLE_GOLDEN_MISSES
    assert rep.object_miss_ratio == pytest.approx(0.33163, abs=1e-12)


@pytest.mark.slow
def test_example_golden_by_naive_oracle():
    tr, cap = _golden_context()
    assert naive_priority_simulate(tr, parse(EXAMPLE_SCORE), cap).object_misses == EXAMPLE_GOLDEN_MISSES
