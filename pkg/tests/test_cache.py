"""Cache behavior: streaming vs one-shot equivalence, residuals, growth."""

import numpy as np
import pytest

from kvcomp.cache import CacheMode, KVCache
from kvcomp.errors import ConfigError, ShapeError, StateError
from kvcomp.memory import scheme_side_bytes
from kvcomp.rng import SplitMix64
from kvcomp.schemes import SchemeConfig, quantize_kv_pair
from kvcomp.tensor import SyntheticSpec, Tensor2D, fp16_round, generate

TOKEN_ALIGNED = [
    SchemeConfig("group_t", 4, 4, g=16),
    SchemeConfig("group_c", 4, 4, g=32),
    SchemeConfig("hybrid_kcvt", 2, 4, g1=32, g2=16),
    SchemeConfig("hybrid_ktvc", 4, 2, g1=16, g2=32),
]

D = 64


def kv_pair(n: int, seed: int) -> tuple[Tensor2D, Tensor2D]:
    k = generate(SyntheticSpec("gaussian", n, D, seed=seed))
    v = generate(SyntheticSpec("gaussian", n, D, seed=seed + 5000))
    return k, v


def fill(cache: KVCache, k: Tensor2D, v: Tensor2D, n_prefill: int) -> None:
    cache.prefill(
        Tensor2D(k.data[:n_prefill].copy()), Tensor2D(v.data[:n_prefill].copy())
    )
    for i in range(n_prefill, k.rows):
        cache.append(k.data[i], v.data[i])


# ----- equivalence across ingest paths -------------------------------------------

@pytest.mark.parametrize("cfg", TOKEN_ALIGNED, ids=lambda c: c.kind.value)
def test_streaming_matches_one_shot(cfg):
    k, v = kv_pair(96, seed=60)
    ref_k, ref_v = quantize_kv_pair(Tensor2D(fp16_round(k.data)), Tensor2D(fp16_round(v.data)), cfg)
    rng = SplitMix64(61)
    for _ in range(12):
        n_prefill = int(rng.next_u64() % 97)
        cache = KVCache(cfg, D, mode=CacheMode.STREAMING)
        fill(cache, k, v, n_prefill)
        snap_k = cache._suffix_snapshot("k")
        snap_v = cache._suffix_snapshot("v")
        assert snap_k.payload_equal(ref_k), f"K diverged at prefill={n_prefill}"
        assert snap_v.payload_equal(ref_v), f"V diverged at prefill={n_prefill}"


@pytest.mark.parametrize("cfg", TOKEN_ALIGNED, ids=lambda c: c.kind.value)
def test_simulation_matches_streaming(cfg):
    k, v = kv_pair(80, seed=62)
    sim = KVCache(cfg, D, mode=CacheMode.SIMULATION)
    stream = KVCache(cfg, D, mode=CacheMode.STREAMING)
    fill(sim, k, v, 40)
    fill(stream, k, v, 40)
    for side in ("k", "v"):
        assert sim._suffix_snapshot(side).payload_equal(stream._suffix_snapshot(side))
    mk_sim, mv_sim = sim.materialize()
    mk_str, mv_str = stream.materialize()
    assert mk_sim.data.tobytes() == mk_str.data.tobytes()
    assert mv_sim.data.tobytes() == mv_str.data.tobytes()


def test_streaming_passthrough_materializes_all_rows():
    cache = KVCache(SchemeConfig("passthrough16"), D, mode=CacheMode.STREAMING)
    k, v = kv_pair(9, seed=59)
    fill(cache, k, v, 5)
    mk, mv = cache.materialize()
    assert np.array_equal(mk.data, fp16_round(k.data))
    assert np.array_equal(mv.data, fp16_round(v.data))
    snap = cache._suffix_snapshot("k")
    assert snap.rows == 9 and snap.residual_start == 0


def test_materialized_shape_tracks_token_count():
    cfg = SchemeConfig("group_t", 4, 4, g=16)
    cache = KVCache(cfg, D, mode=CacheMode.STREAMING)
    k, v = kv_pair(30, seed=63)
    fill(cache, k, v, 10)
    assert cache.n_tokens == 30
    mk, mv = cache.materialize()
    assert mk.shape == (30, D) and mv.shape == (30, D)
    rep = cache.footprint()
    assert rep.n_tokens == 30 and rep.d_model == D


# ----- residual rows (per-channel buffering) --------------------------------------

def test_channel_buffer_is_exact_residual():
    cfg = SchemeConfig("group_c", 4, 4, g=128)
    cache = KVCache(cfg, D, mode=CacheMode.STREAMING)
    k, v = kv_pair(300, seed=64)
    fill(cache, k, v, 200)
    snap = cache._suffix_snapshot("k")
    assert snap.residual_start == 256
    assert snap.residual.rows == 44
    mk, _ = cache.materialize()
    assert np.array_equal(mk.data[256:], fp16_round(k.data[256:]))
    assert cache._k_side.residual_rows == 44


def test_channel_buffer_never_reaches_group_size():
    cfg = SchemeConfig("group_c", 2, 2, g=7)
    cache = KVCache(cfg, 8, mode=CacheMode.STREAMING)
    rng = SplitMix64(65)
    cache.prefill(
        Tensor2D(rng.gaussian(3 * 8).reshape(3, 8).astype(np.float32)),
        Tensor2D(rng.gaussian(3 * 8).reshape(3, 8).astype(np.float32)),
    )
    for step in range(500):
        cache.append(
            rng.gaussian(8).astype(np.float32), rng.gaussian(8).astype(np.float32)
        )
        assert cache._k_side.residual_rows < 7
        assert cache._k_side.residual_rows == (3 + step + 1) % 7


# ----- adaptive (range-growing) schemes -------------------------------------------

def test_requantize_on_growth_flag():
    grows = [
        SchemeConfig("uniform", 4, 4),
        SchemeConfig("group_cn", 4, 4),
        SchemeConfig("outlier_reduced", 4, 4, s=0.01),
        SchemeConfig("hybrid_kcvt", 4, 4, g2=16),  # K side spans all rows
    ]
    for cfg in grows:
        assert KVCache(cfg, D, mode=CacheMode.STREAMING).requantize_on_growth
        assert not KVCache(cfg, D, mode=CacheMode.SIMULATION).requantize_on_growth
    for cfg in TOKEN_ALIGNED + [SchemeConfig("passthrough16")]:
        assert not KVCache(cfg, D, mode=CacheMode.STREAMING).requantize_on_growth


def test_uniform_streaming_requantizes_when_range_grows():
    cfg = SchemeConfig("uniform", 4, 4)
    cache = KVCache(cfg, 4, mode=CacheMode.STREAMING)
    small = np.full((2, 4), 0.5, dtype=np.float32)
    small[0, 0] = 0.0
    cache.prefill(Tensor2D(small), Tensor2D(small))
    delta_before = cache._k_side.delta
    cache.append(np.full(4, 50.0, dtype=np.float32), np.zeros(4, dtype=np.float32))
    assert cache._k_side.delta > delta_before
    mk, _ = cache.materialize()
    # the appended out-of-range value must now be representable
    assert abs(mk.data[2, 0] - 50.0) <= cache._k_side.delta
    assert mk.shape == (3, 4)


def test_uniform_streaming_in_range_append_keeps_grid():
    cfg = SchemeConfig("uniform", 4, 4)
    cache = KVCache(cfg, 4, mode=CacheMode.STREAMING)
    block = np.array([[0.0, 1.0, 2.0, 15.0]], dtype=np.float32)
    cache.prefill(Tensor2D(block), Tensor2D(block))
    delta_before = cache._k_side.delta
    before = cache.materialize()[0].data[0].copy()
    cache.append(np.full(4, 7.0, dtype=np.float32), np.full(4, 7.0, dtype=np.float32))
    assert cache._k_side.delta == delta_before
    assert np.array_equal(cache.materialize()[0].data[0], before)


def test_channel_full_requantizes_only_grown_channels():
    cfg = SchemeConfig("group_cn", 4, 4)
    cache = KVCache(cfg, 3, mode=CacheMode.STREAMING)
    block = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], dtype=np.float32)
    cache.prefill(Tensor2D(block), Tensor2D(block))
    deltas_before = cache._k_side.delta.copy()
    cache.append(
        np.array([0.5, 0.5, 30.0], dtype=np.float32), np.zeros(3, dtype=np.float32)
    )
    assert np.array_equal(cache._k_side.delta[:2], deltas_before[:2])
    assert cache._k_side.delta[2] > deltas_before[2]


# ----- outlier lifecycle -----------------------------------------------------------

def test_outliers_frozen_at_prefill():
    cfg = SchemeConfig("outlier_reduced", 4, 4, s=0.05)
    cache = KVCache(cfg, 8, mode=CacheMode.STREAMING)
    k = generate(SyntheticSpec("gaussian", 20, 8, seed=66))
    cache.prefill(k, k)
    ref = quantize_kv_pair(Tensor2D(fp16_round(k.data)), Tensor2D(fp16_round(k.data)), cfg)[0]
    n_before = len(cache._suffix_snapshot("k").outliers)
    assert cache._suffix_snapshot("k").outliers == ref.outliers
    # a huge appended value still goes through the dense grid
    cache.append(np.full(8, 1e4, dtype=np.float32), np.zeros(8, dtype=np.float32))
    snap = cache._suffix_snapshot("k")
    assert len(snap.outliers) == n_before
    assert all(i < 20 * 8 for i in snap.outliers.indices)


def test_append_only_outlier_cache_has_no_outliers():
    cfg = SchemeConfig("outlier_reduced", 4, 4, s=0.25)
    cache = KVCache(cfg, 8, mode=CacheMode.STREAMING)
    rng = SplitMix64(67)
    for _ in range(12):
        cache.append(rng.gaussian(8).astype(np.float32), rng.gaussian(8).astype(np.float32))
    assert len(cache._suffix_snapshot("k").outliers) == 0


# ----- prefill exemption -----------------------------------------------------------

def test_prefill_exempt_keeps_prefix_lossless():
    cfg = SchemeConfig("group_t", 2, 2, g=16)
    cache = KVCache(cfg, D, mode=CacheMode.STREAMING, prefill_exempt=True)
    k, v = kv_pair(48, seed=68)
    fill(cache, k, v, 32)
    mk, mv = cache.materialize()
    assert np.array_equal(mk.data[:32], fp16_round(k.data[:32]))
    assert np.array_equal(mv.data[:32], fp16_round(v.data[:32]))
    # decode-time rows quantize as if the cache started at the first append
    tail_k = Tensor2D(fp16_round(k.data[32:]))
    tail_v = Tensor2D(fp16_round(v.data[32:]))
    ref_k, ref_v = quantize_kv_pair(tail_k, tail_v, cfg)
    assert cache._suffix_snapshot("k").payload_equal(ref_k)
    assert cache._suffix_snapshot("v").payload_equal(ref_v)
    assert cache._suffix_snapshot("k").groups[0].row0 == 0


def test_prefill_exempt_footprint_counts_prefix_at_fp16():
    cfg = SchemeConfig("group_t", 4, 4, g=16)
    plain = KVCache(cfg, D, mode=CacheMode.STREAMING)
    exempt = KVCache(cfg, D, mode=CacheMode.STREAMING, prefill_exempt=True)
    k, v = kv_pair(32, seed=69)
    for cache in (plain, exempt):
        fill(cache, k, v, 32)
    assert exempt.footprint().k_bytes.residual_bytes == 2 * 32 * D
    assert exempt.footprint().bits_per_element_k == 16.0
    assert plain.footprint().bits_per_element_k == 4.0 + 32.0 / 16


# ----- footprint accounting ---------------------------------------------------------

@pytest.mark.parametrize(
    "cfg",
    [
        SchemeConfig("passthrough16"),
        SchemeConfig("uniform", 4, 4),
        SchemeConfig("group_t", 4, 4, g=16),
        SchemeConfig("group_c", 4, 4, g=32),
        SchemeConfig("group_cn", 2, 2),
        SchemeConfig("hybrid_kcvt", 2, 4, g1=32, g2=16),
    ],
    ids=lambda c: c.kind.value,
)
def test_footprint_matches_analytic_side_bytes(cfg):
    n = 96
    k, v = kv_pair(n, seed=70)
    cache = KVCache(cfg, D, mode=CacheMode.STREAMING)
    fill(cache, k, v, 50)
    rep = cache.footprint()
    assert rep.k_bytes.total == scheme_side_bytes(n, D, cfg, "k")
    assert rep.v_bytes.total == scheme_side_bytes(n, D, cfg, "v")


def test_outlier_footprint_counts_prefill_outliers():
    cfg = SchemeConfig("outlier_reduced", 4, 4, s=0.1)
    cache = KVCache(cfg, D, mode=CacheMode.STREAMING)
    k, v = kv_pair(50, seed=71)
    cache.prefill(k, v)
    rep = cache.footprint()
    # ceil(0.1 * 50 * 64) outliers at 6 bytes apiece, both sides
    assert rep.k_bytes.outlier_bytes == 6 * 320
    assert rep.k_bytes.total == scheme_side_bytes(50, D, cfg, "k")


# ----- state and validation ----------------------------------------------------------

class TestErrors:
    def test_double_prefill(self):
        cache = KVCache(SchemeConfig("uniform", 4, 4), D)
        k, v = kv_pair(4, seed=72)
        cache.prefill(k, v)
        with pytest.raises(StateError):
            cache.prefill(k, v)

    def test_prefill_after_append(self):
        cache = KVCache(SchemeConfig("uniform", 4, 4), D)
        cache.append(np.zeros(D, dtype=np.float32), np.zeros(D, dtype=np.float32))
        k, v = kv_pair(4, seed=73)
        with pytest.raises(StateError):
            cache.prefill(k, v)

    def test_prefill_shape_mismatches(self):
        cache = KVCache(SchemeConfig("uniform", 4, 4), D)
        k, _ = kv_pair(4, seed=74)
        v_short = generate(SyntheticSpec("gaussian", 3, D, seed=74))
        with pytest.raises(ShapeError):
            cache.prefill(k, v_short)
        narrow = generate(SyntheticSpec("gaussian", 4, 32, seed=74))
        with pytest.raises(ShapeError):
            cache.prefill(narrow, narrow)

    def test_append_wrong_width(self):
        cache = KVCache(SchemeConfig("uniform", 4, 4), D)
        with pytest.raises(ShapeError):
            cache.append(np.zeros(D - 1, dtype=np.float32), np.zeros(D, dtype=np.float32))

    def test_token_group_must_divide_d_model(self):
        with pytest.raises(ConfigError, match="does not divide"):
            KVCache(SchemeConfig("group_t", 4, 4, g=48), D)

    def test_bad_d_model(self):
        with pytest.raises(ConfigError):
            KVCache(SchemeConfig("uniform", 4, 4), 0)

    def test_empty_cache_materializes_empty(self):
        cache = KVCache(SchemeConfig("group_t", 4, 4, g=16), D)
        mk, mv = cache.materialize()
        assert mk.shape == (0, D) and mv.shape == (0, D)
        rep = cache.footprint()
        assert rep.bits_per_element_k == 0.0
        assert rep.k_bytes.total == 0

    def test_zero_row_prefill_is_noop(self):
        cache = KVCache(SchemeConfig("uniform", 4, 4), D)
        empty = Tensor2D(np.zeros((0, D), dtype=np.float32))
        cache.prefill(empty, empty)
        assert cache.n_tokens == 0
        k, v = kv_pair(4, seed=75)
        cache.prefill(k, v)  # still allowed: nothing was stored
        assert cache.n_tokens == 4
