import math

import numpy as np
import pytest

import oracles
from rotquant.qjl import make_sketch, qjl_dequantize, qjl_inner_estimate, qjl_quantize


def test_deterministic():
    a = make_sketch(9, 32, 16).matrix
    assert a.tobytes() == make_sketch(9, 32, 16).matrix.tobytes()
    assert a.dtype == np.float32 and a.shape == (16, 32)


def test_default_width_is_d():
    assert make_sketch(0, 40).m == 40


def test_entry_moments():
    s = make_sketch(1, 1024, 1024).matrix.astype(np.float64)
    assert abs(s.mean()) < 0.01
    assert s.var() == pytest.approx(1.0, rel=0.01)


def test_zero_residual():
    sk = make_sketch(1, 20, 13)
    code = qjl_quantize(sk, np.zeros(20))
    assert code.gamma == 0.0
    np.testing.assert_array_equal(sk.signs_pm1(code.signs)[0], np.ones(13))
    assert not np.any(qjl_dequantize(sk, code))


def test_scale_invariance(rng):
    sk = make_sketch(2, 30)
    r = rng.standard_normal(30)
    a, b = qjl_quantize(sk, r), qjl_quantize(sk, 2 * r)
    np.testing.assert_array_equal(a.signs, b.signs)
    assert b.gamma == pytest.approx(2 * a.gamma, rel=1e-15)
    y = rng.standard_normal(30)
    assert qjl_inner_estimate(sk, b, y) == pytest.approx(2 * qjl_inner_estimate(sk, a, y), rel=1e-12)


def test_e1_signs_follow_first_column():
    sk = make_sketch(4, 16, 100)
    e1 = np.zeros(16)
    e1[0] = 1.0
    z = sk.signs_pm1(qjl_quantize(sk, e1).signs)[0]
    expected = np.where(sk.matrix[:, 0] >= 0, 1.0, -1.0)
    assert np.mean(z == expected) == 1.0


def test_dequantize_scale():
    sk = make_sketch(4, 8, 24)
    r = np.arange(8.0) - 3.5
    code = qjl_quantize(sk, r)
    z = np.where(sk.matrix.astype(np.float64) @ r >= 0, 1.0, -1.0)
    expected = math.sqrt(math.pi / 2) / 24 * np.linalg.norm(r) * (sk.matrix.astype(np.float64).T @ z)
    np.testing.assert_allclose(qjl_dequantize(sk, code), expected, rtol=1e-12)


def test_zero_query():
    sk = make_sketch(5, 12)
    code = qjl_quantize(sk, np.ones(12))
    assert qjl_inner_estimate(sk, code, np.zeros(12)) == 0.0


def test_fast_path_matches_decode(rng):
    for i in range(100):
        d = int(rng.integers(2, 80))
        m = int(rng.integers(1, 120))
        sk = make_sketch(i, d, m)
        r, y = rng.standard_normal(d), rng.standard_normal(d)
        code = qjl_quantize(sk, r)
        fast = qjl_inner_estimate(sk, code, y)
        slow = float(np.dot(y, qjl_dequantize(sk, code)))
        assert fast == pytest.approx(slow, rel=1e-5, abs=1e-12)
        assert qjl_inner_estimate(sk, code, y, sk.project(y)) == fast


def test_dimension_checks():
    sk = make_sketch(5, 12, 7)
    with pytest.raises(ValueError):
        qjl_quantize(sk, np.ones(13))
    code = qjl_quantize(sk, np.ones(12))
    with pytest.raises(ValueError):
        qjl_inner_estimate(sk, code, np.ones(11))
    other = make_sketch(5, 12, 20)
    with pytest.raises(ValueError):
        qjl_dequantize(other, code)


def _estimates_over_seeds(r, y, m, seeds):
    out = np.empty(len(seeds))
    for i, s in enumerate(seeds):
        sk = make_sketch(s, len(r), m)
        out[i] = qjl_inner_estimate(sk, qjl_quantize(sk, r), y)
    return out


def test_unbiased_and_variance_over_fresh_seeds():
    rng = np.random.default_rng(11)
    d, m = 32, 32
    r, y = rng.standard_normal(d), rng.standard_normal(d)
    est = _estimates_over_seeds(r, y, m, range(10_000))
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - np.dot(y, r)) <= 4 * se
    bound = math.pi / (2 * m) * np.dot(y, y) * np.dot(r, r)
    assert est.var(ddof=1) <= 1.05 * bound
    assert est.var(ddof=1) == pytest.approx(oracles.qjl_variance(y, r, m), rel=0.05)


def test_e1_self_estimate_wide_sketch():
    e1 = np.zeros(16)
    e1[0] = 1.0
    est = _estimates_over_seeds(e1, e1, 4096, range(1000))
    assert est.mean() == pytest.approx(1.0, rel=0.05)
