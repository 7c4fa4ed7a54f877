import collections

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi_square_uniform
from policyforge.cache import CacheConfig, simulate
from policyforge.policies import make_policy
from policyforge.trace import (
    EmptyTrace,
    ParseError,
    Phase,
    Request,
    SizeDist,
    compute_stats,
    format_trace,
    parse_trace,
    parse_trace_text,
    synth_scan_churn,
    synth_zipf,
    write_trace,
)


def test_parse_basic():
    assert parse_trace_text("0,1,100\n1,2,100\n2,1,100") == [
        Request(0, 1, 100),
        Request(1, 2, 100),
        Request(2, 1, 100),
    ]


def test_parse_header_and_trailing_newline():
    assert parse_trace_text("time,object_id,size\n0,7,3\n") == [Request(0, 7, 3)]


@pytest.mark.parametrize(
    "text, line, reason",
    [
        ("0,1,0", 1, "size must be ≥ 1"),
        ("5,1,100\n3,2,100", 2, "time decreased"),
        ("0,1", 1, "expected 3 fields, got 2"),
        ("0,x,1", 1, "non-integer field"),
        ("0,1,1\n\n1,1,1", 2, "empty line"),
        ("-1,1,1", 1, "time must be ≥ 0"),
    ],
)
def test_parse_errors(text, line, reason):
    with pytest.raises(ParseError) as exc:
        parse_trace_text(text)
    assert exc.value.line == line
    assert exc.value.reason == reason


def test_file_roundtrip(tmp_path):
    tr = synth_zipf(50, 7, 0.8, SizeDist.uniform(1, 9), seed=3)
    path = tmp_path / "t.csv"
    write_trace(tr, path, header=True)
    assert parse_trace(path) == tr


def test_stats_examples():
    A, B = 1, 2
    s = compute_stats([Request(0, A, 100), Request(1, B, 50), Request(2, A, 100)])
    assert (s.footprint_bytes, s.unique_objects, s.request_count) == (150, 2, 3)
    assert compute_stats([Request(0, A, 100)]).footprint_bytes == 100
    assert compute_stats([Request(0, A, 100), Request(1, A, 200)]).footprint_bytes == 200
    with pytest.raises(EmptyTrace):
        compute_stats([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 500)), min_size=1, max_size=60))
def test_stats_invariants(reqs):
    tr = [Request(i, o, s) for i, (o, s) in enumerate(reqs)]
    s = compute_stats(tr)
    assert s.footprint_bytes >= max(r.size for r in tr)
    assert s.unique_objects <= s.request_count
    assert parse_trace_text(format_trace(tr)) == tr


def test_zipf_deterministic():
    a = synth_zipf(1000, 50, 1.0, SizeDist.uniform(1, 10), seed=11)
    b = synth_zipf(1000, 50, 1.0, SizeDist.uniform(1, 10), seed=11)
    assert format_trace(a) == format_trace(b)
    assert format_trace(a) != format_trace(synth_zipf(1000, 50, 1.0, SizeDist.uniform(1, 10), seed=12))


def test_zipf_uniform_when_alpha_zero():
    tr = synth_zipf(100_000, 10, 0.0, seed=0)
    counts = collections.Counter(r.object_id for r in tr)
    obs = [counts[i] for i in range(10)]
    # each count is Binomial(n, 1/k): stay within 3 sigma of n/k
    sigma = (100_000 * 0.1 * 0.9) ** 0.5
    assert all(abs(c - 10_000) <= 3 * sigma for c in obs)
    # 9 degrees of freedom; 27.88 is the 0.999 quantile
    assert chi_square_uniform(obs) < 27.88


def test_zipf_skew_orders_popularity():
    tr = synth_zipf(20_000, 20, 1.2, seed=1)
    counts = collections.Counter(r.object_id for r in tr)
    assert counts[0] > counts[5] > counts[19]


def test_zipf_single_object():
    assert {r.object_id for r in synth_zipf(5, 1, 1.0)} == {0}


def test_zipf_stable_sizes():
    tr = synth_zipf(3000, 40, 0.5, SizeDist.uniform(1, 1000), seed=2)
    sizes = {}
    for r in tr:
        assert sizes.setdefault(r.object_id, r.size) == r.size


def test_scan_all_misses():
    tr = synth_scan_churn([Phase("scan", 5)], seed=0)
    assert len({r.object_id for r in tr}) == 5
    rep = simulate(tr, make_policy("lru"), CacheConfig(1000))
    assert rep.object_miss_ratio == 1.0


def test_churn_steady_state_hits():
    tr = synth_scan_churn([Phase("churn", 100, 4)], seed=5)
    rep = simulate(tr, make_policy("fifo"), CacheConfig(4))
    assert rep.object_misses == len({r.object_id for r in tr}) <= 4


def test_scan_churn_deterministic_and_disjoint():
    phases = [Phase.parse("churn:200:10"), Phase.parse("scan:50"), Phase.parse("churn:200:10")]
    a = synth_scan_churn(phases, seed=9)
    assert a == synth_scan_churn(phases, seed=9)
    churn_ids = {r.object_id for r in a[:200]} | {r.object_id for r in a[250:]}
    scan_ids = [r.object_id for r in a[200:250]]
    assert len(set(scan_ids)) == 50
    assert churn_ids.isdisjoint(scan_ids)
    assert churn_ids <= set(range(10))


@pytest.mark.parametrize("bad", ["scan", "churn:5", "burst:3", "scan:x"])
def test_phase_parse_rejects(bad):
    with pytest.raises(ValueError):
        Phase.parse(bad)


def test_size_dist_parse():
    assert SizeDist.parse("fixed:4096") == SizeDist.fixed(4096)
    assert SizeDist.parse("uniform:2:9") == SizeDist.uniform(2, 9)
    with pytest.raises(ValueError):
        SizeDist.parse("normal:1:2")
