import json
import warnings

import numpy as np
import pytest

from mcisac.covariance import isotropic
from mcisac.estimation import (
    AngleGrid,
    RankError,
    caml_estimate,
    covariance_root,
    ls_estimate,
    match_targets,
    monte_carlo,
    simulate_echo,
    synthesize_block,
)
from mcisac.model import ArrayManifold, RandomSource, SystemConfig, TargetSet

TX = RX = ArrayManifold(10)


def _cfg(**kw):
    base = dict(n_tx=10, n_rx=10, n_users=0, power=10.0, block_len=64)
    base.update(kw)
    return SystemConfig(**base)


def test_covariance_root_handles_singular():
    v = np.array([1.0, 1j, 0.0])
    S = np.outer(v, v.conj())
    V = covariance_root(S)
    np.testing.assert_allclose(V @ V.conj().T, S, atol=1e-12)


def test_synthesized_sample_covariance_converges():
    rng = RandomSource(1)
    A = rng.cn(4, 4)
    S = A @ A.conj().T
    blk = synthesize_block(S, 200_000, RandomSource(2))
    assert np.linalg.norm(blk.sample_cov - S) / np.linalg.norm(S) < 0.02


def test_zero_covariance_gives_zero_signal():
    assert np.all(synthesize_block(np.zeros((3, 3)), 5, RandomSource(0)).X == 0)


def test_ls_noiseless_exact():
    cfg = _cfg()
    tg = TargetSet(np.deg2rad([-30.0, 30.0]), [1.0, 0.3 - 1j])
    X = synthesize_block(isotropic(cfg), 64, RandomSource(1)).X
    G = tg.response_matrix(TX, RX)
    np.testing.assert_allclose(ls_estimate(G @ X, X), G, atol=1e-10)


def test_ls_rank_error():
    X = np.zeros((3, 10), complex)
    X[0] = 1.0
    with pytest.raises(RankError):
        ls_estimate(np.zeros((2, 10)), X)


def test_simulated_noise_level():
    cfg = _cfg(noise_radar=2.0)
    tg = TargetSet([0.0], [0.0])
    X = np.zeros((10, 5000), complex)
    Y = simulate_echo(X, tg, TX, RX, cfg, RandomSource(3)).Y
    assert abs(np.mean(np.abs(Y) ** 2) - 2.0) < 0.05


def test_caml_noiseless_on_grid_two_targets():
    cfg = _cfg(n_targets=2)
    grid = AngleGrid.uniform(2001, TX, RX)
    tg = TargetSet(grid.angles[[650, 1400]], [1 + 0.5j, -0.3 + 1j])
    X = synthesize_block(isotropic(cfg), 64, RandomSource(1)).X
    res = caml_estimate(tg.response_matrix(TX, RX) @ X, X, cfg, grid, 2)
    assert res.coarse_index == (650, 1400)
    np.testing.assert_allclose(res.angles, tg.angles, atol=1e-8)
    np.testing.assert_allclose(res.coeffs, tg.coeffs, atol=1e-6)
    assert res.warning is None


def test_caml_single_target_off_grid_refines():
    cfg = _cfg()
    grid = AngleGrid.uniform(201, TX, RX)
    tg = TargetSet([0.1234], [0.8j])
    X = synthesize_block(isotropic(cfg), 64, RandomSource(1)).X
    res = caml_estimate(tg.response_matrix(TX, RX) @ X, X, cfg, grid, 1)
    assert abs(res.angles[0] - 0.1234) < 1e-8
    assert abs(res.coeffs[0] - 0.8j) < 1e-6


def test_caml_more_targets_not_supported():
    cfg = _cfg()
    grid = AngleGrid.uniform(11, TX, RX)
    with pytest.raises(NotImplementedError):
        caml_estimate(np.zeros((10, 4)), np.ones((10, 4)), cfg, grid, 3)


def test_match_targets():
    p = match_targets(np.array([0.5, -0.5]), np.array([-0.49, 0.52]))
    np.testing.assert_array_equal(p, [1, 0])


def test_monte_carlo_ls_mse_tracks_sample_crb():
    cfg = _cfg()
    tg = TargetSet(np.deg2rad([-30.0, 30.0]), [1.0, 1.0])
    run = monte_carlo(isotropic(cfg), 1, 300, cfg, RandomSource(5), tg)
    assert run.failed == 0
    assert run.mse["G"] == pytest.approx(run.crb_actual["G"], rel=0.1)
    # E[(XX^H)^-1] exceeds (L S)^-1 by L / (L - N_t)
    assert run.crb_actual["G"] / run.crb_theoretical["G"] == pytest.approx(64 / 54, rel=0.02)


def test_monte_carlo_reproducible_and_worker_independent():
    cfg = _cfg(n_tx=4, n_rx=4)
    tg = TargetSet([0.3], [1.0])
    m = ArrayManifold(4)
    a = monte_carlo(isotropic(cfg), 1, 20, cfg, RandomSource(9), tg, m, m)
    b = monte_carlo(isotropic(cfg), 1, 20, cfg, RandomSource(9), tg, m, m, workers=2)
    assert a.mse == b.mse and a.crb_actual == b.crb_actual
    d = json.loads(a.to_json())
    assert d["schema"] == 1 and d["seed"] == 9


def test_monte_carlo_aborts_when_trials_fail():
    cfg = _cfg(n_tx=4, n_rx=4)
    tg = TargetSet([0.3], [1.0])
    m = ArrayManifold(4)
    S = np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)  # XX^H singular in every trial
    with pytest.raises(RuntimeError):
        monte_carlo(S, 1, 10, cfg, RandomSource(0), tg, m, m)


def test_monte_carlo_caml_single_target_near_crb():
    cfg = _cfg(power=10**1.5)
    tg = TargetSet([0.3], [1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run = monte_carlo(isotropic(cfg), 2, 60, cfg, RandomSource(4), tg, grid_points=501)
    assert run.rmse("angle") == pytest.approx(run.root_crb("angle"), rel=0.3)
    assert run.rmse("amplitude") == pytest.approx(run.root_crb("amplitude"), rel=0.3)
