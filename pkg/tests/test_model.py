import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcisac.model import (
    ArrayManifold,
    ConfigError,
    RandomSource,
    Rician,
    SystemConfig,
    TargetSet,
    db_to_linear,
    generate_channels,
    load_config,
    sample_aods,
)

angles = st.floats(min_value=-1.55, max_value=1.55, allow_nan=False)


def test_steering_broadside_is_all_ones():
    np.testing.assert_allclose(ArrayManifold(8).steering(0.0), np.ones(8))


def test_steering_endfire_rejected():
    with pytest.raises(ValueError):
        ArrayManifold(4).steering(np.pi / 2)
    with pytest.raises(ValueError):
        ArrayManifold(4).steering([0.1, -np.pi / 2])


@given(angles, st.integers(1, 16))
def test_steering_unit_modulus_and_norm(th, n):
    a = ArrayManifold(n).steering(th)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert abs(np.vdot(a, a).real - n) < 1e-9


@given(angles)
@settings(max_examples=50)
def test_steering_derivative_matches_finite_difference(th):
    m = ArrayManifold(10)
    h = 1e-6
    th = float(np.clip(th, -1.5, 1.5))
    fd = (m.steering(th + h) - m.steering(th - h)) / (2 * h)
    np.testing.assert_allclose(m.steering_derivative(th), fd, atol=1e-6)


def test_vectorized_steering_matches_columns():
    m = ArrayManifold(5)
    th = np.array([-0.4, 0.1, 0.9])
    A = m.steering(th)
    for i, t in enumerate(th):
        np.testing.assert_allclose(A[:, i], m.steering(t))
        np.testing.assert_allclose(m.steering_derivative(th)[:, i], m.steering_derivative(t))


def test_response_matrix_structure():
    tx, rx = ArrayManifold(4), ArrayManifold(3)
    tg = TargetSet([0.2, -0.5], [1 + 1j, 0.5])
    G = tg.response_matrix(tx, rx)
    ref = sum(b * np.outer(rx.steering(t).conj(), tx.steering(t).conj()) for t, b in zip(tg.angles, tg.coeffs))
    np.testing.assert_allclose(G, ref)


def test_target_params_roundtrip():
    tg = TargetSet([0.2, -0.5], [1 + 2j, -0.5j])
    back = TargetSet.from_params(tg.params())
    np.testing.assert_allclose(back.angles, tg.angles)
    np.testing.assert_allclose(back.coeffs, tg.coeffs)


@pytest.mark.parametrize("kw", [dict(n_tx=0), dict(power=0.0), dict(n_users=-1), dict(rate_threshold=-1.0),
                                dict(noise_radar=-1.0), dict(block_len=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SystemConfig(**kw)


def test_gamma_and_db():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(0.0) == 1.0
    cfg = SystemConfig(rate_threshold=1.0, noise_comm=2.0)
    assert cfg.gamma() == pytest.approx(2.0)


def test_random_source_streams_are_reproducible_and_distinct():
    a = RandomSource(5, 1).cn(4)
    b = RandomSource(5, 1).cn(4)
    c = RandomSource(5, 2).cn(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_cn_unit_variance():
    x = RandomSource(0).cn(200_000)
    assert abs(np.mean(np.abs(x) ** 2) - 1.0) < 0.01
    assert abs(np.mean(x**2)) < 0.01  # circular


def test_rician_weights_and_los_limit():
    w_los, w_nlos = Rician(0.0, [0.0]).weights()
    assert w_los == pytest.approx(np.sqrt(0.5))
    assert w_los**2 + w_nlos**2 == pytest.approx(1.0)
    cfg = SystemConfig(n_tx=6, n_users=2)
    ch = generate_channels(cfg, Rician(80.0, [0.3, -0.2]), RandomSource(1))
    m = ArrayManifold(6)
    np.testing.assert_allclose(ch.H[0], m.steering(0.3), atol=1e-3)


def test_rician_aod_count_checked():
    with pytest.raises(ConfigError):
        generate_channels(SystemConfig(n_users=3), Rician(3.0, [0.1]), RandomSource(0))


def test_sample_aods_within_spread():
    a = np.rad2deg(sample_aods([-60, 60], 2.0, 10, RandomSource(3)))
    centers = np.where(np.arange(10) % 2 == 0, -60, 60)
    assert np.all(np.abs(a - centers) <= 2.0)


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({
        "n_tx": 6, "n_rx": 4, "n_users": 2, "power_dbm": 20, "rate_threshold": 1.5,
        "targets": {"angles_deg": [-30, 30], "coeffs_re": [1, 2], "coeffs_im": [0, 1]},
        "channel": {"model": "rician", "k_factor_db": 5, "aod_deg": [10, 20]}, "seed": 9,
    }))
    sc = load_config(p)
    assert sc.cfg.power == pytest.approx(100.0)
    assert sc.cfg.n_targets == 2 and sc.seed == 9
    np.testing.assert_allclose(sc.targets.coeffs, [1, 2 + 1j])
    assert sc.channels.H.shape == (2, 6)
    again = load_config(p)
    np.testing.assert_array_equal(sc.channels.H, again.channels.H)
    assert not np.allclose(load_config(p, seed=10).channels.H, sc.channels.H)


def test_load_config_rejects_unknown_model():
    with pytest.raises(ConfigError):
        load_config({"channel": {"model": "nakagami"}})
