"""Scale-search weight quantization: grid optimality, identities, the
built-in saliency case."""

import base64

import numpy as np
import pytest

from kvcomp.awq import (
    CalibrationBatch,
    apply_quantized_linear,
    awq_quantize,
    awq_result_to_json_dict,
    builtin_saliency_case,
    synthetic_calibration,
)
from kvcomp.errors import ConfigError, ShapeError
from kvcomp.rng import SplitMix64
from kvcomp.schemes import PerToken, dequantize, quantize_grouped
from kvcomp.tensor import Tensor2D


def toy_weights(d_out=8, d_in=16, seed=100) -> Tensor2D:
    rng = SplitMix64(seed)
    return Tensor2D((rng.gaussian(d_out * d_in).reshape(d_out, d_in) * d_in**-0.5))


def test_alpha_star_is_grid_minimum():
    W = toy_weights()
    calib = synthetic_calibration(64, 16, seed=101)
    res = awq_quantize(W, calib, b=4, g_w=16, n_alpha=11)
    objs = [o for _, o in res.objective_curve]
    alphas = [a for a, _ in res.objective_curve]
    assert len(res.objective_curve) == 11
    assert alphas == list(np.linspace(0.0, 1.0, 11))
    best = objs.index(min(objs))
    assert res.alpha_star == alphas[best]
    assert min(objs) <= objs[0]


def test_search_never_loses_to_plain_quantization():
    W = toy_weights(seed=102)
    calib = synthetic_calibration(64, 16, seed=103)
    res = awq_quantize(W, calib, b=3, g_w=8)
    assert res.objective_curve[0][0] == 0.0
    assert min(o for _, o in res.objective_curve) <= res.objective_curve[0][1]


def test_flat_importance_ties_resolve_to_alpha_zero():
    # all-equal activation magnitudes make every alpha produce unit scales,
    # so the whole curve is constant and the first grid point must win
    W = toy_weights(seed=104)
    X = np.ones((10, 16), dtype=np.float32)
    X[::2] *= -1.0
    res = awq_quantize(W, CalibrationBatch(Tensor2D(X)), b=4, g_w=16, n_alpha=9)
    objs = [o for _, o in res.objective_curve]
    assert all(o == objs[0] for o in objs)
    assert res.alpha_star == 0.0
    assert np.all(res.scales == 1.0)


def test_single_point_grid():
    W = toy_weights(seed=105)
    calib = synthetic_calibration(32, 16, seed=106)
    res = awq_quantize(W, calib, b=4, g_w=16, n_alpha=1)
    assert res.alpha_star == 0.0
    assert len(res.objective_curve) == 1


def test_alpha_zero_payload_matches_plain_grouped():
    W = toy_weights(seed=107)
    calib = synthetic_calibration(32, 16, seed=108)
    res = awq_quantize(W, calib, b=4, g_w=8, n_alpha=1)
    plain = quantize_grouped(W, PerToken(8), 4)
    assert res.q_weights.payload_equal(plain)


def test_b16_stores_passthrough_weights():
    W = toy_weights(seed=109)
    calib = synthetic_calibration(32, 16, seed=110)
    res = awq_quantize(W, calib, b=16, g_w=16, n_alpha=5)
    assert res.q_weights.groups == ()
    assert res.q_weights.residual_start == 0
    # only binary16 rounding error remains
    assert res.objective_curve[0][1] < 1e-4


def test_zero_channel_gets_unit_scale():
    W = toy_weights(seed=111)
    rng = SplitMix64(112)
    X = rng.gaussian(32 * 16).reshape(32, 16).astype(np.float32)
    X[:, 3] = 0.0
    res = awq_quantize(W, CalibrationBatch(Tensor2D(X)), b=4, g_w=16)
    assert res.scales[3] == 1.0
    assert np.isfinite([o for _, o in res.objective_curve]).all()


def test_builtin_saliency_case_improves_clearly():
    W, calib = builtin_saliency_case()
    res = awq_quantize(W, calib, b=3, g_w=16)
    obj0 = res.objective_curve[0][1]
    best = min(o for _, o in res.objective_curve)
    assert res.alpha_star > 0.0
    assert best < 0.9 * obj0


def test_builtin_case_is_deterministic():
    W1, c1 = builtin_saliency_case()
    W2, c2 = builtin_saliency_case()
    assert W1.data.tobytes() == W2.data.tobytes()
    assert c1.X.data.tobytes() == c2.X.data.tobytes()
    r1 = awq_quantize(W1, c1, b=3, g_w=16)
    r2 = awq_quantize(W2, c2, b=3, g_w=16)
    assert r1.objective_curve == r2.objective_curve
    assert r1.alpha_star == r2.alpha_star


def test_synthetic_calibration_shape_and_determinism():
    a = synthetic_calibration(16, 8, seed=113)
    b = synthetic_calibration(16, 8, seed=113)
    assert a.X.shape == (16, 8)
    assert a.X.data.tobytes() == b.X.data.tobytes()
    assert synthetic_calibration(16, 8, seed=114).X.data.tobytes() != a.X.data.tobytes()


def test_apply_quantized_linear_matches_manual_math():
    W = toy_weights(seed=115)
    calib = synthetic_calibration(32, 16, seed=116)
    res = awq_quantize(W, calib, b=8, g_w=16)
    x = calib.X.data[0]
    y = apply_quantized_linear(res, x)
    w_hat = dequantize(res.q_weights).data.astype(np.float64)
    expect = (w_hat @ (x.astype(np.float64) / res.scales)).astype(np.float32)
    assert np.array_equal(y, expect)
    assert y.shape == (8,)
    # 8-bit grouped weights track the reference layer closely
    ref = W.data.astype(np.float64) @ x.astype(np.float64)
    assert np.abs(y - ref).max() < 0.05 * max(1.0, np.abs(ref).max())


def test_apply_rejects_wrong_width():
    W = toy_weights(seed=117)
    res = awq_quantize(W, synthetic_calibration(8, 16, seed=118), b=4, g_w=16, n_alpha=1)
    with pytest.raises(ShapeError):
        apply_quantized_linear(res, np.ones(15, dtype=np.float32))


def test_validation_errors():
    W = toy_weights(seed=119)
    calib = synthetic_calibration(8, 16, seed=120)
    with pytest.raises(ConfigError, match="weight bits"):
        awq_quantize(W, calib, b=2, g_w=16)
    with pytest.raises(ConfigError, match="does not divide"):
        awq_quantize(W, calib, b=4, g_w=5)
    with pytest.raises(ConfigError, match="n_alpha"):
        awq_quantize(W, calib, b=4, g_w=16, n_alpha=0)
    with pytest.raises(ShapeError, match="channels"):
        awq_quantize(W, synthetic_calibration(8, 8, seed=121), b=4, g_w=16)
    with pytest.raises(ConfigError, match="sample"):
        CalibrationBatch(Tensor2D(np.zeros((0, 4), dtype=np.float32)))
    with pytest.raises(ConfigError):
        synthetic_calibration(0, 4, seed=1)


def test_json_dict_round_trips_scales():
    W, calib = builtin_saliency_case()
    res = awq_quantize(W, calib, b=3, g_w=16, n_alpha=5)
    doc = awq_result_to_json_dict(res)
    assert set(doc) == {"alpha_star", "b", "g_w", "objective_curve", "scales"}
    assert doc["b"] == 3 and doc["g_w"] == 16
    assert doc["objective_curve"] == [[a, o] for a, o in res.objective_curve]
    decoded = np.frombuffer(base64.b64decode(doc["scales"]), dtype=np.float16)
    assert decoded.size == 64
    np.testing.assert_array_equal(decoded, res.scales.astype(np.float16))
