"""System configuration, array manifolds, targets and user channels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    pass


def db_to_linear(x_db: float) -> float:
    return float(10.0 ** (x_db / 10.0))


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the ISAC multicast link (powers in linear scale)."""

    n_tx: int = 10
    n_rx: int = 10
    n_users: int = 3
    n_targets: int = 1
    power: float = 10.0
    noise_comm: float = 1.0
    noise_radar: float = 1.0
    block_len: int = 64
    rate_threshold: float = 0.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_targets", "block_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.n_users < 0:
            raise ConfigError("n_users must be nonnegative")
        for name in ("power", "noise_comm", "noise_radar"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.rate_threshold < 0:
            raise ConfigError("rate_threshold must be nonnegative")

    def gamma(self) -> float:
        """SNR-times-noise level a user needs to reach the rate threshold."""
        return self.noise_comm * (2.0**self.rate_threshold - 1.0)

    def with_(self, **kw) -> "SystemConfig":
        return replace(self, **kw)


def _check_angle(theta) -> np.ndarray:
    th = np.asarray(theta, float)
    if np.any(~np.isfinite(th)) or np.any(np.abs(th) >= np.pi / 2):
        raise ValueError("steering angle must lie in the open interval (-pi/2, pi/2)")
    return th


@dataclass(frozen=True)
class ArrayManifold:
    """Half-wavelength uniform linear array, phase reference at element 0."""

    n_elements: int

    def steering(self, theta) -> np.ndarray:
        """Steering vector(s); a vector of angles gives one column per angle."""
        th = _check_angle(theta)
        n = np.arange(self.n_elements)
        if th.ndim == 0:
            return np.exp(1j * np.pi * n * np.sin(th))
        return np.exp(1j * np.pi * np.outer(n, np.sin(th)))

    def steering_derivative(self, theta) -> np.ndarray:
        th = _check_angle(theta)
        n = np.arange(self.n_elements)
        if th.ndim == 0:
            return 1j * np.pi * n * np.cos(th) * np.exp(1j * np.pi * n * np.sin(th))
        ph = np.pi * np.outer(n, np.sin(th))
        return 1j * np.pi * np.outer(n, np.cos(th)) * np.exp(1j * ph)


def steering(manifold: ArrayManifold, theta) -> np.ndarray:
    return manifold.steering(theta)


def steering_derivative(manifold: ArrayManifold, theta) -> np.ndarray:
    return manifold.steering_derivative(theta)


@dataclass(frozen=True)
class TargetSet:
    angles: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.angles, float))
        c = np.atleast_1d(np.asarray(self.coeffs, complex))
        if a.shape != c.shape or a.ndim != 1:
            raise ConfigError("angles and coeffs must be equal-length vectors")
        _check_angle(a)
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_targets(self) -> int:
        return self.angles.size

    @property
    def beta_re(self) -> np.ndarray:
        return self.coeffs.real

    @property
    def beta_im(self) -> np.ndarray:
        return self.coeffs.imag

    def params(self) -> np.ndarray:
        """Real parameter vector [angles, Re coeffs, Im coeffs]."""
        return np.concatenate([self.angles, self.beta_re, self.beta_im])

    @classmethod
    def from_params(cls, xi: np.ndarray) -> "TargetSet":
        xi = np.asarray(xi, float)
        m = xi.size // 3
        return cls(xi[:m], xi[m : 2 * m] + 1j * xi[2 * m :])

    def response_matrix(self, tx: ArrayManifold, rx: ArrayManifold) -> np.ndarray:
        """G = conj(A_r) diag(beta) A_t^H, shape (n_rx, n_tx)."""
        At = tx.steering(self.angles)
        Ar = rx.steering(self.angles)
        return (Ar.conj() * self.coeffs) @ At.conj().T


@dataclass(frozen=True)
class Rayleigh:
    pass


@dataclass(frozen=True)
class Rician:
    k_factor_db: float
    aod: np.ndarray

    def weights(self) -> tuple[float, float]:
        kr = db_to_linear(self.k_factor_db)
        return float(np.sqrt(kr / (kr + 1.0))), float(np.sqrt(1.0 / (kr + 1.0)))


@dataclass(frozen=True)
class ChannelSet:
    """User channels stacked as rows: ``H[k]`` is h_k."""

    H: np.ndarray
    model: Any = field(default_factory=Rayleigh)

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def vectors(self) -> list[np.ndarray]:
        return list(self.H)


class RandomSource:
    """Seeded generator factory; each (seed, stream) pair is an independent stream."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,))))

    def spawn(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)

    def cn(self, *shape) -> np.ndarray:
        """Standard circular complex Gaussian samples."""
        g = self.gen
        return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / np.sqrt(2.0)


def generate_channels(cfg: SystemConfig, model=None, rng: RandomSource | None = None) -> ChannelSet:
    model = Rayleigh() if model is None else model
    rng = RandomSource(0) if rng is None else rng
    K, n = cfg.n_users, cfg.n_tx
    nlos = rng.cn(K, n)
    if isinstance(model, Rayleigh):
        return ChannelSet(nlos, model)
    if isinstance(model, Rician):
        aod = np.atleast_1d(np.asarray(model.aod, float))
        if aod.size != K:
            raise ConfigError(f"rician model needs {K} AoDs, got {aod.size}")
        w_los, w_nlos = model.weights()
        los = ArrayManifold(n).steering(aod).T if K else np.zeros((0, n))
        return ChannelSet(w_los * los + w_nlos * nlos, model)
    raise ConfigError(f"unknown channel model {model!r}")


def sample_aods(centers_deg, spread_deg: float, count: int, rng: RandomSource) -> np.ndarray:
    """AoDs drawn uniformly in ``center +- spread`` cycling over the centers."""
    c = np.asarray(centers_deg, float)
    base = c[np.arange(count) % c.size]
    return np.deg2rad(base + rng.gen.uniform(-spread_deg, spread_deg, size=count))


# -- scenario files -----------------------------------------------------------

@dataclass
class Scenario:
    cfg: SystemConfig
    channels: ChannelSet
    targets: TargetSet
    tx: ArrayManifold
    rx: ArrayManifold
    seed: int
    raw: dict


def load_config(path: str | Path | dict, seed: int | None = None) -> Scenario:
    """Build a scenario from a JSON file (or an already parsed dict).

    Keys: n_tx, n_rx, n_users, power_dbm, noise_comm_dbm, noise_radar_dbm,
    block_len, rate_threshold, targets {angles_deg, coeffs_re, coeffs_im},
    channel {model: rayleigh | rician, k_factor_db, aod_deg | aod_centers_deg
    with aod_spread_deg}, seed.
    """
    raw = dict(path) if isinstance(path, dict) else json.loads(Path(path).read_text())
    seed = int(raw.get("seed", 0) if seed is None else seed)
    tg = raw.get("targets", {"angles_deg": [0.0]})
    angles = np.deg2rad(np.asarray(tg.get("angles_deg", [0.0]), float))
    re = np.asarray(tg.get("coeffs_re", np.ones(angles.size)), float)
    im = np.asarray(tg.get("coeffs_im", np.zeros(angles.size)), float)
    targets = TargetSet(angles, re + 1j * im)
    cfg = SystemConfig(
        n_tx=int(raw.get("n_tx", 10)),
        n_rx=int(raw.get("n_rx", 10)),
        n_users=int(raw.get("n_users", 3)),
        n_targets=targets.n_targets,
        power=db_to_linear(float(raw.get("power_dbm", 10.0))),
        noise_comm=db_to_linear(float(raw.get("noise_comm_dbm", 0.0))),
        noise_radar=db_to_linear(float(raw.get("noise_radar_dbm", 0.0))),
        block_len=int(raw.get("block_len", 64)),
        rate_threshold=float(raw.get("rate_threshold", 0.0)),
    )
    ch = raw.get("channel", {"model": "rayleigh"})
    kind = ch.get("model", "rayleigh")
    rng = RandomSource(seed, 0)
    if kind == "rayleigh":
        model = Rayleigh()
    elif kind == "rician":
        if "aod_deg" in ch:
            aod = np.deg2rad(np.asarray(ch["aod_deg"], float))
        else:
            aod = sample_aods(ch.get("aod_centers_deg", [-30.0, 30.0]), float(ch.get("aod_spread_deg", 2.0)),
                              cfg.n_users, RandomSource(seed, 1))
        model = Rician(float(ch.get("k_factor_db", 4.0)), aod)
    else:
        raise ConfigError(f"unknown channel model {kind!r}")
    channels = generate_channels(cfg, model, rng)
    return Scenario(cfg, channels, targets, ArrayManifold(cfg.n_tx), ArrayManifold(cfg.n_rx), seed, raw)
