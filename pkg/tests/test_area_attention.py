import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlcell.area_attention import (
    AttentionConfig,
    FeatureMap,
    area_attention,
    attention_probs,
    benchmark,
    count_flops,
    full_attention,
    segment_tokens,
)
from oracles import masked_full_attention


def rand_fm(rng, n, h, d, spatial=None):
    return FeatureMap(rng.standard_normal((n, h, d)), spatial)


def test_single_token_returns_v():
    rng = np.random.default_rng(0)
    q, k, v = (rand_fm(rng, 1, 3, 5) for _ in range(3))
    out, _ = full_attention(q, k, v)
    assert (out.values == v.values).all()


def test_identical_keys_average_values():
    rng = np.random.default_rng(1)
    q = rand_fm(rng, 6, 2, 4)
    k = FeatureMap(np.repeat(rng.standard_normal((1, 2, 4)), 6, axis=0))
    v = rand_fm(rng, 6, 2, 4)
    out, _ = full_attention(q, k, v)
    expected = np.broadcast_to(v.values.mean(axis=0), out.values.shape)
    assert np.allclose(out.values, expected, atol=1e-12)


def test_full_attention_macs():
    rng = np.random.default_rng(2)
    fm = rand_fm(rng, 64, 2, 8)
    _, flops = full_attention(fm, fm, fm)
    assert flops.macs == 131072 == 2 * 64 * 64 * 2 * 8


def test_shape_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        full_attention(rand_fm(rng, 4, 1, 2), rand_fm(rng, 4, 1, 3), rand_fm(rng, 4, 1, 2))


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((0, 1, 1)))
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((6, 1, 1)), spatial=(2, 2))


def test_segment_tokens_horizontal_default():
    fm = FeatureMap(np.zeros((32, 1, 1)), spatial=(8, 4))
    groups = segment_tokens(fm, AttentionConfig(l=4, axis="horizontal"))
    assert len(groups) == 4 and all(len(g) == 8 for g in groups)
    assert groups[0].tolist() == list(range(8))  # rows 0-1, all 4 columns
    assert sorted(np.concatenate(groups).tolist()) == list(range(32))


def test_segment_tokens_vertical():
    fm = FeatureMap(np.zeros((32, 1, 1)), spatial=(8, 4))
    groups = segment_tokens(fm, AttentionConfig(l=2, axis="vertical"))
    assert groups[0].tolist() == [r * 4 + c for r in range(8) for c in (0, 1)]


def test_segment_tokens_single_group_and_errors():
    fm = FeatureMap(np.zeros((24, 1, 1)), spatial=(6, 4))
    assert [g.tolist() for g in segment_tokens(fm, AttentionConfig(l=1, axis="token"))] == [list(range(24))]
    with pytest.raises(ValueError, match="horizontal.*remainder 2"):
        segment_tokens(fm, AttentionConfig(l=4, axis="horizontal"))
    with pytest.raises(ValueError, match="vertical"):
        segment_tokens(fm, AttentionConfig(l=3, axis="vertical"))
    with pytest.raises(ValueError, match="spatial"):
        segment_tokens(FeatureMap(np.zeros((24, 1, 1))), AttentionConfig(l=2, axis="horizontal"))
    with pytest.raises(ValueError):
        AttentionConfig(l=0)


def test_area_l1_bitwise_equal():
    rng = np.random.default_rng(4)
    q, k, v = (rand_fm(rng, 48, 3, 8) for _ in range(3))
    full, f_full = full_attention(q, k, v)
    area, f_area = area_attention(q, k, v, AttentionConfig(l=1))
    assert np.array_equal(full.values, area.values)
    assert f_full == f_area


def test_area_macs_quarter():
    rng = np.random.default_rng(5)
    fm = rand_fm(rng, 64, 2, 8)
    _, flops = area_attention(fm, fm, fm, AttentionConfig(l=4))
    assert flops.macs == 32768 == count_flops(64, 2, 8, 1).macs // 4
    assert flops.macs == 64 * 64 * 2 * 8 // 2  # (1/2) n^2 h d


@pytest.mark.parametrize("axis, spatial", [("token", None), ("horizontal", (8, 8)), ("vertical", (8, 8))])
def test_area_matches_masked_oracle(axis, spatial):
    rng = np.random.default_rng(6)
    q, k, v = (rand_fm(rng, 64, 2, 4, spatial) for _ in range(3))
    cfg = AttentionConfig(l=4, axis=axis)
    out, _ = area_attention(q, k, v, cfg)
    ref = masked_full_attention(q.values, k.values, v.values, segment_tokens(q, cfg), 1 / math.sqrt(4))
    assert np.max(np.abs(out.values - ref)) <= 1e-9


def test_count_flops():
    assert count_flops(64, 2, 8, 1).macs == 2 * 64**2 * 2 * 8
    assert count_flops(64, 2, 8, 4).macs == 64**2 * 2 * 8 // 2
    assert count_flops(64, 2, 8, 64).macs == 2 * 64 * 2 * 8
    with pytest.raises(ValueError):
        count_flops(10, 1, 1, 4)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 4, 8]), st.integers(1, 8), st.integers(1, 4), st.integers(1, 16), st.integers(0, 2**32))
def test_runtime_counter_matches_formula(l, m, h, d, seed):
    n = l * m
    rng = np.random.default_rng(seed)
    fm = rand_fm(rng, n, h, d)
    _, full = full_attention(fm, fm, fm)
    _, area = area_attention(fm, fm, fm, AttentionConfig(l=l))
    assert full.macs == count_flops(n, h, d, 1).macs
    assert area.macs == count_flops(n, h, d, l).macs
    assert full.macs == l * area.macs


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 2, 4]), st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32))
def test_softmax_rows_sum_to_one(l, m, h, seed):
    rng = np.random.default_rng(seed)
    fm = rand_fm(rng, l * m, h, 5)
    for idx in segment_tokens(fm, AttentionConfig(l=l)):
        sub = FeatureMap(fm.values[idx])
        p = attention_probs(sub, sub)
        assert np.all(np.abs(p.sum(axis=-1) - 1.0) <= 1e-12)


def test_block_locality():
    rng = np.random.default_rng(7)
    q, k, v = (rand_fm(rng, 32, 2, 4) for _ in range(3))
    cfg = AttentionConfig(l=4)
    base, _ = area_attention(q, k, v, cfg)
    groups = segment_tokens(q, cfg)
    for j, idx in enumerate(groups):
        vals = [x.values.copy() for x in (q, k, v)]
        for arr in vals:
            arr[idx[0]] += 10.0
        out, _ = area_attention(*(FeatureMap(a) for a in vals), cfg)
        changed = np.any(out.values != base.values, axis=(1, 2))
        assert changed[idx].any()
        outside = np.setdiff1d(np.arange(32), idx)
        assert not changed[outside].any()


def test_permutation_within_group():
    rng = np.random.default_rng(8)
    q, k, v = (rand_fm(rng, 16, 2, 3) for _ in range(3))
    cfg = AttentionConfig(l=2)
    base, _ = area_attention(q, k, v, cfg)
    idx = segment_tokens(q, cfg)[1]
    perm = idx[rng.permutation(len(idx))]
    kk, vv = k.values.copy(), v.values.copy()
    kk[idx], vv[idx] = k.values[perm], v.values[perm]
    out, _ = area_attention(q, FeatureMap(kk), FeatureMap(vv), cfg)
    assert np.allclose(out.values, base.values, atol=1e-12)


def test_custom_scale():
    rng = np.random.default_rng(9)
    q, k, v = (rand_fm(rng, 8, 1, 4) for _ in range(3))
    out, _ = area_attention(q, k, v, AttentionConfig(l=2, scale=0.3))
    ref = masked_full_attention(q.values, k.values, v.values, segment_tokens(q, AttentionConfig(l=2)), 0.3)
    assert np.allclose(out.values, ref, atol=1e-12)


def test_benchmark_rows(caplog):
    rows = list(benchmark([16, 64], [2], [4], [1, 3, 4], repeats=1))
    assert {(r["n"], r["l"]) for r in rows} == {(16, 1), (16, 4), (64, 1), (64, 4)}
    for r in rows:
        assert r["macs_full"] == 2 * r["n"] ** 2 * r["h"] * r["d"]
        assert r["macs_full"] == r["l"] * r["macs_area"]
        assert r["wall_ns_full"] > 0 and r["wall_ns_area"] > 0
    assert "l=3" in caplog.text
