"""Signal synthesis, echo simulation, LS / CAML estimators and Monte Carlo runs."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .metrics import crb_scenario1, fisher_information, hermitian, per_parameter_crb
from .model import ArrayManifold, RandomSource, SystemConfig, TargetSet


class RankError(np.linalg.LinAlgError):
    pass


@dataclass
class SignalBlock:
    X: np.ndarray
    Y: np.ndarray | None = None

    @property
    def sample_cov(self) -> np.ndarray:
        return hermitian(self.X @ self.X.conj().T / self.X.shape[1])


def covariance_root(S: np.ndarray) -> np.ndarray:
    """V with V V^H = S; Cholesky when possible, eigen square root otherwise."""
    S = hermitian(S)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(S)
        return U * np.sqrt(np.maximum(w, 0.0))


def synthesize_block(S: np.ndarray, L: int, rng: RandomSource) -> SignalBlock:
    V = covariance_root(S)
    return SignalBlock(V @ rng.cn(S.shape[0], L))


def simulate_echo(X: np.ndarray, targets: TargetSet, tx: ArrayManifold, rx: ArrayManifold,
                  cfg: SystemConfig, rng: RandomSource) -> SignalBlock:
    G = targets.response_matrix(tx, rx)
    Z = np.sqrt(cfg.noise_radar) * rng.cn(rx.n_elements, X.shape[1])
    return SignalBlock(X, G @ X + Z)


def ls_estimate(Y: np.ndarray, X: np.ndarray, cfg: SystemConfig | None = None) -> np.ndarray:
    """Least-squares response matrix Y X^H (X X^H)^-1."""
    R = X @ X.conj().T
    w = np.linalg.eigvalsh(hermitian(R))
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise RankError("X X^H is singular")
    return np.linalg.solve(R.T, (Y @ X.conj().T).T).T


# -- CAML ----------------------------------------------------------------------------

@dataclass
class AngleGrid:
    """Angle grid with its steering matrices cached."""

    angles: np.ndarray
    tx: ArrayManifold
    rx: ArrayManifold

    def __post_init__(self):
        self.At = self.tx.steering(self.angles)
        self.Ar = self.rx.steering(self.angles)
        self.rx_gram = self.Ar.T @ self.Ar.conj()  # [i, j] = a_r(i)^T a_r(j)^c

    @classmethod
    def uniform(cls, n_points: int, tx: ArrayManifold, rx: ArrayManifold) -> "AngleGrid":
        edge = np.pi / 2 * (1 - 1e-6)
        return cls(np.linspace(-edge, edge, n_points), tx, rx)


@dataclass
class CamlResult:
    angles: np.ndarray
    coeffs: np.ndarray
    coarse_index: tuple
    warning: str | None = None


def _caml_fit(angles, Y, X, tx, rx):
    """Coefficients and score c^H Q^-1 c for fixed angles."""
    At, Ar = tx.steering(angles), rx.steering(angles)
    R = X @ X.conj().T
    Q = (Ar.T @ Ar.conj()) * (At.conj().T @ R @ At).T
    c = np.einsum("ni,nl,ml,mi->i", Ar, Y, X.conj(), At)
    try:
        b = np.linalg.solve(Q, c)
    except np.linalg.LinAlgError:
        return None, -np.inf
    return b, float(np.real(np.vdot(c, b)))


def _golden_max(f, lo, hi, tol=1e-10, max_iter=200):
    g = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
    return (a + b) / 2


def caml_estimate(Y: np.ndarray, X: np.ndarray, cfg: SystemConfig, grid: AngleGrid, M: int,
                  refine: bool = True, sweeps: int = 3) -> CamlResult:
    """Concentrated least-squares fit of M point targets (angles and coefficients)."""
    R = X @ X.conj().T
    YX = Y @ X.conj().T
    c = np.einsum("ng,nm,mg->g", grid.Ar, YX, grid.At)
    tx_q = grid.At.conj().T @ R @ grid.At  # [i, j] = a_t(i)^H R a_t(j)
    warn = None
    if M == 1:
        d = np.real(np.diag(tx_q)) * np.real(np.diag(grid.rx_gram))
        s = np.abs(c) ** 2 / d
        idx = (int(np.argmax(s)),)
    elif M == 2:
        Q = grid.rx_gram * tx_q.T
        i, j, _ = kernels.pair_search(Q, c, 1)
        idx = (i, j)
        if j - i <= 1:
            warn = "adjacent grid winners; grid may be too coarse to separate targets"
    else:
        raise NotImplementedError("CAML search is implemented for one or two targets")
    th = grid.angles[list(idx)].astype(float)
    step = float(np.max(np.diff(grid.angles)))
    if refine:
        edge = np.pi / 2 * (1 - 1e-9)
        for _ in range(sweeps if M > 1 else 1):
            for m in range(M):
                def score(t, m=m):
                    tt = th.copy()
                    tt[m] = t
                    return _caml_fit(tt, Y, X, grid.tx, grid.rx)[1]
                lo, hi = max(th[m] - step, -edge), min(th[m] + step, edge)
                th[m] = _golden_max(score, lo, hi)
    b, _ = _caml_fit(th, Y, X, grid.tx, grid.rx)
    return CamlResult(th, b, idx, warn)


def match_targets(est_angles: np.ndarray, true_angles: np.ndarray) -> np.ndarray:
    """Permutation p so that est[p[m]] pairs with true[m] (minimum total angle error)."""
    from itertools import permutations

    M = true_angles.size
    best, bp = np.inf, None
    for p in permutations(range(M)):
        e = float(np.sum((est_angles[list(p)] - true_angles) ** 2))
        if e < best:
            best, bp = e, np.array(p)
    return bp


# -- Monte Carlo ---------------------------------------------------------------------

@dataclass
class EstimationRun:
    scenario: int
    trials: int
    failed: int
    L: int
    # summed over the parameters of a group, averaged over trials
    mse: dict = field(default_factory=dict)
    crb_theoretical: dict = field(default_factory=dict)
    crb_actual: dict = field(default_factory=dict)
    n_params: dict = field(default_factory=dict)
    crb_gap: list = field(default_factory=list)  # per-trial relative gap actual vs theoretical
    warnings: int = 0
    seed: int = 0

    def rmse(self, group: str) -> float:
        return float(np.sqrt(self.mse[group] / self.n_params[group]))

    def root_crb(self, group: str, actual: bool = False) -> float:
        d = self.crb_actual if actual else self.crb_theoretical
        return float(np.sqrt(d[group] / self.n_params[group]))

    def to_json(self) -> str:
        d = asdict(self)
        d["schema"] = 1
        d["rmse"] = {g: self.rmse(g) for g in self.mse}
        return json.dumps(d, indent=2, sort_keys=True, default=float)


def _trial(S, V, scenario, cfg, targets, tx, rx, grid, seed, index):
    rng = RandomSource(seed, 1000 + index)
    X = V @ rng.cn(cfg.n_tx, cfg.block_len)
    blk = simulate_echo(X, targets, tx, rx, cfg, rng)
    Rs = hermitian(X @ X.conj().T / cfg.block_len)
    out = {}
    if scenario == 1:
        G = targets.response_matrix(tx, rx)
        G_est = ls_estimate(blk.Y, X, cfg)
        out["G"] = (float(np.sum(np.abs(G_est - G) ** 2)), crb_scenario1(Rs, cfg))
        return out, False
    res = caml_estimate(blk.Y, X, cfg, grid, targets.n_targets)
    p = match_targets(res.angles, targets.angles)
    th_err = float(np.sum((res.angles[p] - targets.angles) ** 2))
    b_err = float(np.sum(np.abs(res.coeffs[p] - targets.coeffs) ** 2))
    pc = per_parameter_crb(fisher_information(Rs, targets, tx, rx, cfg))
    M = targets.n_targets
    out["angle"] = (th_err, float(np.sum(pc[:M])))
    out["amplitude"] = (b_err, float(np.sum(pc[M:])))
    return out, res.warning is not None


def monte_carlo(
    design,
    scenario: int,
    trials: int,
    cfg: SystemConfig,
    rng: RandomSource,
    targets: TargetSet,
    tx: ArrayManifold | None = None,
    rx: ArrayManifold | None = None,
    grid: AngleGrid | None = None,
    grid_points: int = 2001,
    workers: int = 1,
) -> EstimationRun:
    """Estimate with LS (scenario 1) or CAML (scenario 2) over independent trials.

    ``design`` is a covariance matrix or any object with a ``covariance``
    attribute.  Trial ``i`` draws from stream ``1000 + i`` of ``rng.seed`` so
    results do not depend on the number of workers.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    S = np.asarray(getattr(design, "covariance", design))
    S = hermitian(S)
    tx = tx or ArrayManifold(cfg.n_tx)
    rx = rx or ArrayManifold(cfg.n_rx)
    if scenario == 2 and grid is None:
        grid = AngleGrid.uniform(grid_points, tx, rx)
    V = covariance_root(S)
    args = (S, V, scenario, cfg, targets, tx, rx, grid, rng.seed)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial_safe, [args + (i,) for i in range(trials)]))
    else:
        results = [_trial_safe(args + (i,)) for i in range(trials)]

    groups = ["G"] if scenario == 1 else ["angle", "amplitude"]
    M = targets.n_targets
    n_params = {"G": cfg.n_rx * cfg.n_tx, "angle": M, "amplitude": M}
    if scenario == 1:
        theo = {"G": crb_scenario1(S, cfg)}
    else:
        pc = per_parameter_crb(fisher_information(S, targets, tx, rx, cfg))
        theo = {"angle": float(np.sum(pc[:M])), "amplitude": float(np.sum(pc[M:]))}
    ok = [r for r in results if r is not None]
    failed = trials - len(ok)
    if failed > 0.01 * trials:
        raise RuntimeError(f"{failed} of {trials} trials failed")
    mse, act, gaps = {}, {}, []
    nwarn = sum(1 for r in ok if r[1])
    for g in groups:
        # fixed summation order (trial index) keeps results reproducible
        mse[g] = float(np.mean([r[0][g][0] for r in ok]))
        act[g] = float(np.mean([r[0][g][1] for r in ok]))
    key = groups[0] if scenario == 1 else "amplitude"
    gaps = [abs(r[0][key][1] - theo[key]) / theo[key] for r in ok]
    if nwarn:
        warnings.warn(f"{nwarn} trials flagged a coarse angle grid")
    return EstimationRun(scenario, trials, failed, cfg.block_len, mse, theo, act,
                         {g: n_params[g] for g in groups}, gaps, nwarn, rng.seed)


def _trial_safe(args):
    try:
        return _trial(*args)
    except np.linalg.LinAlgError:
        return None
