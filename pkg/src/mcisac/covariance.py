"""Rate-constrained CRB minimization over the transmit covariance.

Scenario I is solved through its Lagrange dual: the dual function has the
closed form ``2 tr(A^{1/2}) + Gamma sum(mu) - lambda P`` with
``A = lambda I - sum_k mu_k h_k h_k^H``, which is maximized with the
ellipsoid method; the covariance is then ``A^{-1/2}``.  Scenario II, the
corner points and the beampattern benchmark are SDPs.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .metrics import crb_scenario1, crb_scenario2, fisher_information, hermitian, multicast_rate
from .model import ArrayManifold, ChannelSet, SystemConfig, TargetSet
from .solvers import Affine, EllipsoidState, SdpProblem, SolveReport, bmat, ellipsoid_minimize, solve_sdp, trace

RANK_TOL = 1e-7
FEAS_TOL = 1e-7


class DualInfeasibleError(ValueError):
    pass


@dataclass
class TradeoffPoint:
    rate_threshold: float
    achieved_rate: float
    crb: float
    covariance: np.ndarray | None
    scenario: int
    method: str
    status: str = "optimal"
    iterations: int = 0
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    CSV_COLUMNS = ("scenario", "method", "rate_threshold", "achieved_rate", "crb", "solver_status", "iterations", "wall_ms")

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "method": self.method,
            "rate_threshold": f"{self.rate_threshold:.6g}",
            "achieved_rate": f"{self.achieved_rate:.10g}",
            "crb": f"{self.crb:.10g}",
            "solver_status": self.status,
            "iterations": self.iterations,
            "wall_ms": f"{self.wall_ms:.1f}",
        }


def write_points_csv(points: Iterable[TradeoffPoint], path_or_file) -> None:
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(f, fieldnames=TradeoffPoint.CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in points:
            w.writerow(p.row())
    finally:
        if own:
            f.close()


def _rate(S, channels, cfg) -> float:
    return multicast_rate(S, channels, cfg) if channels.n_users else np.inf


def _psd_clip(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(hermitian(S))
    return hermitian((V * np.maximum(w, 0.0)) @ V.conj().T)


# -- dual machinery ---------------------------------------------------------------

@dataclass
class DualPoint:
    lam: float
    mu: np.ndarray
    H: np.ndarray  # users as rows

    def matrix(self) -> np.ndarray:
        n = self.H.shape[1]
        A = self.lam * np.eye(n, dtype=complex)
        if self.mu.size:
            A -= (self.H.T * self.mu) @ self.H.conj()
        return hermitian(A)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.mu, [self.lam]])

    @classmethod
    def from_vector(cls, x: np.ndarray, H: np.ndarray) -> "DualPoint":
        return cls(float(x[-1]), np.asarray(x[:-1], float), H)


@dataclass
class InnerSolution:
    covariance: np.ndarray  # finite part
    unbounded: np.ndarray  # orthonormal basis of directions with tau -> infinity
    eigvals: np.ndarray


def inner_minimizer(point: DualPoint, rank_tol: float = RANK_TOL) -> InnerSolution:
    """Minimizer of tr(S^-1) + tr(A S) over S > 0 for A = point.matrix()."""
    A = point.matrix()
    w, U = np.linalg.eigh(A)
    scale = max(abs(w[-1]), 1e-300)
    if w[0] < -rank_tol * scale:
        raise DualInfeasibleError("A(lambda, mu) is indefinite")
    pos = w > rank_tol * scale
    Up = U[:, pos]
    S = (Up / np.sqrt(w[pos])) @ Up.conj().T
    return InnerSolution(hermitian(S), U[:, ~pos], w)


def dual_value(point: DualPoint, gamma: float, power: float) -> float:
    """Closed-form dual function (-inf when A is indefinite)."""
    w = np.linalg.eigvalsh(point.matrix())
    if w[0] < -1e-12 * max(abs(w[-1]), 1e-300):
        return -np.inf
    return float(2.0 * np.sum(np.sqrt(np.maximum(w, 0.0))) + gamma * point.mu.sum() - point.lam * power)


@dataclass
class DualCuts:
    objective: np.ndarray
    psd: np.ndarray
    sign: list


def dual_subgradients(point: DualPoint, primal: np.ndarray, cfg: SystemConfig, channels: ChannelSet) -> DualCuts:
    """Cut vectors in the ordering (mu_1, ..., mu_K, lambda).

    ``objective`` is a subgradient of the negated dual function at the point
    (``primal`` must be the inner minimizer), ``psd`` the cut from the
    minimum eigenvector of A, and ``sign`` the nonnegativity cuts.
    """
    H = channels.H
    gam = cfg.gamma()
    K = H.shape[0]
    snr = np.real(np.einsum("ki,ij,kj->k", H.conj(), primal, H))
    obj = np.concatenate([snr - gam, [cfg.power - np.trace(primal).real]])
    w, V = np.linalg.eigh(point.matrix())
    v = V[:, 0]
    psd = np.concatenate([np.abs(H.conj() @ v) ** 2, [-1.0]])
    sign = []
    for k in range(K + 1):
        e = np.zeros(K + 1)
        e[k] = -1.0
        sign.append(e)
    return DualCuts(obj, psd, sign)


# -- corner problems ---------------------------------------------------------------

@dataclass
class CapacityResult:
    covariance: np.ndarray
    rate: float
    min_snr_power: float  # max over S of min_k h_k^H S h_k
    rank: int
    report: SolveReport


def covariance_rank(S: np.ndarray, rel: float = RANK_TOL) -> int:
    w = np.linalg.eigvalsh(hermitian(S))
    return int(np.sum(w > rel * max(w[-1], 1e-300)))


def solve_capacity(cfg: SystemConfig, channels: ChannelSet, tol: float = 1e-9) -> CapacityResult:
    """Max-min SNR covariance at full power (multicast capacity)."""
    if channels.n_users == 0:
        raise ValueError("capacity needs at least one user")
    H = channels.H
    n = cfg.n_tx
    if H.shape[0] == 1:
        h = H[0]
        S = cfg.power * np.outer(h, h.conj()) / np.vdot(h, h).real
        t = cfg.power * np.vdot(h, h).real
        rep = SolveReport("optimal", objective=t, primal_residual=0.0, dual_gap=0.0)
        return CapacityResult(S, float(np.log2(1 + t / cfg.noise_comm)), t, 1, rep)
    p = SdpProblem()
    Sn = p.hermitian(n)  # covariance normalized by the power budget
    t = p.real()
    p.add_psd(Sn)
    for h in H:
        p.add_nonneg((h.conj() @ Sn @ h).real - t)
    p.add_nonneg(1.0 - trace(Sn).real)
    p.minimize(-t)
    sol, rep = solve_sdp(p, tol=tol)
    S = _psd_clip(cfg.power * sol[Sn])
    # drop the interior-point residue in the null space
    w, V = np.linalg.eigh(S)
    keep = w > RANK_TOL * w[-1]
    S = hermitian((V[:, keep] * w[keep]) @ V[:, keep].conj().T)
    S *= cfg.power / np.trace(S).real
    tval = float(np.min(np.real(np.einsum("ki,ij,kj->k", H.conj(), S, H))))
    rep.objective = tval
    return CapacityResult(S, float(np.log2(1 + tval / cfg.noise_comm)), tval, int(keep.sum()), rep)


def isotropic(cfg: SystemConfig) -> np.ndarray:
    return (cfg.power / cfg.n_tx) * np.eye(cfg.n_tx, dtype=complex)


# -- Scenario I ----------------------------------------------------------------------

def _slater_box(cfg: SystemConfig, H: np.ndarray, S_com: np.ndarray | None) -> np.ndarray:
    """Upper bounds on optimal duals (mu_1..mu_K, lambda) from a strictly feasible point."""
    n, P, gam = cfg.n_tx, cfg.power, cfg.gamma()
    lower = n * n / P  # tr(S^-1) >= n^2/P for tr S <= P
    best, best_u = np.inf, None
    thetas = [1.0] if S_com is None else np.linspace(0.0, 1.0, 21)
    for th in thetas:
        base = isotropic(cfg) if S_com is None else (1 - th) * S_com + th * isotropic(cfg)
        for rho in (0.5, 0.8, 0.9, 0.95, 0.99, 0.999):
            S0 = rho * base
            if H.shape[0]:
                m = np.real(np.einsum("ki,ij,kj->k", H.conj(), S0, H)) - gam
                if np.any(m <= 0):
                    continue
            else:
                m = np.zeros(0)
            w = np.linalg.eigvalsh(S0)
            if w[0] <= 0:
                continue
            mp = P - np.trace(S0).real
            B = float(np.sum(1.0 / w)) - lower
            u = np.concatenate([B / m, [B / mp]]) if m.size else np.array([B / mp])
            score = float(np.sum(np.log(u)))
            if score < best:
                best, best_u = score, u
    return best_u


def _repair(S: np.ndarray, cfg: SystemConfig, H: np.ndarray, S_com: np.ndarray | None, feas_tol: float):
    """Restore feasibility by mixing towards the capacity covariance, then use the full power."""
    gam = cfg.gamma()
    S = _psd_clip(S)
    tr = np.trace(S).real
    if tr > cfg.power:
        S = S * (cfg.power / tr)
    if H.shape[0] and S_com is not None:
        snr = np.real(np.einsum("ki,ij,kj->k", H.conj(), S, H))
        if np.min(snr) < gam:
            snr_c = np.real(np.einsum("ki,ij,kj->k", H.conj(), S_com, H))
            # smallest theta with (1-theta) snr + theta snr_c >= gam for all users
            need = (gam - snr) / np.maximum(snr_c - snr, 1e-300)
            th = float(np.clip(np.max(need[snr < gam]), 0.0, 1.0))
            S = (1 - th) * S + th * S_com
    tr = np.trace(S).real
    if tr < cfg.power:
        S = S * (cfg.power / tr)
    return hermitian(S)


def solve_p1(
    cfg: SystemConfig,
    channels: ChannelSet,
    tol: float = 1e-10,
    x_tol: float = 1e-10,
    feas_tol: float = FEAS_TOL,
    capacity: CapacityResult | None = None,
) -> TradeoffPoint:
    """Optimal Scenario-I covariance via the ellipsoid method on the dual."""
    t0 = time.perf_counter()
    H = channels.H
    K = H.shape[0]
    gam = cfg.gamma()
    crb_scale = cfg.n_rx * cfg.noise_radar / cfg.block_len
    S_com = None
    if K:
        capacity = capacity or solve_capacity(cfg, channels)
        S_com = capacity.covariance
        t_max = capacity.min_snr_power
        if gam > t_max * (1 + 1e-9):
            return TradeoffPoint(cfg.rate_threshold, capacity.rate, np.inf, None, 1, "optimal_cov", "infeasible",
                                 wall_ms=1e3 * (time.perf_counter() - t0))
        if gam >= t_max * (1 - 1e-9):
            S = S_com
            return TradeoffPoint(cfg.rate_threshold, _rate(S, channels, cfg), crb_scenario1(S, cfg), S, 1,
                                 "optimal_cov", "optimal", wall_ms=1e3 * (time.perf_counter() - t0),
                                 extra={"corner": "capacity"})

    u = _slater_box(cfg, H, S_com)
    d = K + 1
    P = cfg.power
    psd_floor = 0.5 / P**2  # every optimal dual has A >= P^-2 I

    def psd_cut(x):
        A = DualPoint.from_vector(x, H).matrix()
        w, V = np.linalg.eigh(A)
        v = V[:, 0]
        return psd_floor - w[0], np.concatenate([np.abs(H.conj() @ v) ** 2, [-1.0]])

    def sign_cut(x):
        j = int(np.argmin(x))
        e = np.zeros(d)
        e[j] = -1.0
        return -x[j], e

    def objective(x):
        pt = DualPoint.from_vector(x, H)
        w, U = np.linalg.eigh(pt.matrix())
        S = (U / np.sqrt(w)) @ U.conj().T
        snr = np.real(np.einsum("ki,ij,kj->k", H.conj(), S, H))
        g = np.concatenate([snr - gam, [P - np.trace(S).real]])
        f = -(2.0 * np.sum(np.sqrt(w)) + gam * pt.mu.sum() - pt.lam * P)
        return f, g

    init = EllipsoidState(u / 2.0, np.diag((np.sqrt(d) * u / 2.0) ** 2))
    scale = float(np.max(u))
    x, rep = ellipsoid_minimize(objective, [sign_cut, psd_cut], init, tol=tol, x_tol=x_tol * scale, feas_tol=0.0)
    x = np.maximum(x, 0.0)
    pt = DualPoint.from_vector(x, H)
    inner = inner_minimizer(pt)
    raw = inner.covariance
    S = _repair(raw, cfg, H, S_com, feas_tol)
    dual = dual_value(pt, gam, P)
    obj = float(np.trace(np.linalg.inv(S)).real)
    status = rep.status
    if status == "optimal" and abs(obj - dual) > 1e-4 * (1 + abs(obj)):
        status = "max_iter"
    return TradeoffPoint(
        cfg.rate_threshold,
        _rate(S, channels, cfg),
        crb_scale * obj,
        S,
        1,
        "optimal_cov",
        status,
        iterations=rep.iterations,
        wall_ms=1e3 * (time.perf_counter() - t0),
        extra={
            "dual": pt,
            "dual_objective": dual,
            "primal_objective": obj,
            "raw_covariance": raw,
            "raw_crb": crb_scenario1(raw, cfg),
        },
    )


def solve_p1_sdp(cfg: SystemConfig, channels: ChannelSet, tol: float = 1e-9) -> TradeoffPoint:
    """Same problem through the Schur-complement SDP (independent route)."""
    t0 = time.perf_counter()
    n, P = cfg.n_tx, cfg.power
    p = SdpProblem()
    Sn = p.hermitian(n)  # S / P
    p.add_psd(Sn)
    obj, factor = add_crb_epigraph(p, Sn, 1, cfg)
    for h in channels.H:
        p.add_nonneg(P * (h.conj() @ Sn @ h).real - cfg.gamma())
    p.add_nonneg(1.0 - trace(Sn).real)
    p.minimize(obj)
    sol, rep = solve_sdp(p, tol=tol)
    S = P * sol[Sn]
    status = rep.status
    crb = factor * rep.objective if rep.optimal else np.inf
    return TradeoffPoint(cfg.rate_threshold, _rate(S, channels, cfg), crb, S, 1, "optimal_cov_sdp", status,
                         rep.iterations, 1e3 * (time.perf_counter() - t0))


# -- Scenario II ---------------------------------------------------------------------

@dataclass
class SubspaceReduction:
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def build(cls, targets: TargetSet, tx: ArrayManifold, channels: ChannelSet, rel_tol: float = 1e-10):
        cols = [tx.steering(targets.angles), tx.steering_derivative(targets.angles)]
        if channels.n_users:
            cols.append(channels.H.T)
        M = np.concatenate(cols, axis=1)
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        r = int(np.sum(s > rel_tol * s[0]))
        return cls(U[:, :r])


def _fim_scaling(cfg, targets, tx, rx) -> np.ndarray:
    F = fisher_information(isotropic(cfg), targets, tx, rx, cfg).matrix
    return 1.0 / np.sqrt(np.maximum(np.diag(F), 1e-300))


def add_crb_epigraph(p: SdpProblem, Sn, scenario: int, cfg: SystemConfig, targets=None, tx=None, rx=None):
    """Add Schur-complement LMIs bounding the CRB of ``P * Sn`` from above.

    Returns ``(objective, factor)``: minimizing ``objective`` minimizes the
    CRB and ``factor * objective`` equals it at the optimum.
    """
    n, P = cfg.n_tx, cfg.power
    if scenario == 1:
        T = p.hermitian(n)
        I = np.eye(n)
        p.add_psd(bmat([[T, I], [I, Sn]]))
        return trace(T).real, cfg.n_rx * cfg.noise_radar / cfg.block_len / P
    D = _fim_scaling(cfg, targets, tx, rx)
    F = fisher_information(Sn * P, targets, tx, rx, cfg)
    Fs = (F * D[:, None]) * D[None, :]
    m3 = Fs.shape[0]
    t = p.real(m3)
    for i in range(m3):
        e = np.zeros(m3)
        e[i] = 1.0
        p.add_psd(bmat([[Fs, e], [e[None, :], t[i]]]))
    return (t * D**2).sum(), 1.0


def solve_p2(
    cfg: SystemConfig,
    channels: ChannelSet,
    targets: TargetSet,
    tx: ArrayManifold,
    rx: ArrayManifold,
    use_reduction: bool = False,
    tol: float = 1e-9,
    rate_constraint: bool = True,
    capacity: CapacityResult | None = None,
) -> TradeoffPoint:
    """Optimal Scenario-II covariance (minimum trace of the inverse FIM)."""
    t0 = time.perf_counter()
    n, P = cfg.n_tx, cfg.power
    gam = cfg.gamma() if rate_constraint else 0.0
    cap = None
    corner = False
    if rate_constraint and channels.n_users and gam > 0:
        cap = capacity or solve_capacity(cfg, channels)
        if gam > cap.min_snr_power * (1 + 1e-9):
            return TradeoffPoint(cfg.rate_threshold, cap.rate, np.inf, None, 2, "optimal_cov", "infeasible",
                                 wall_ms=1e3 * (time.perf_counter() - t0))
        # at the capacity corner the feasible set has no interior and the
        # interior-point iterates are only approximately feasible
        corner = bool(gam >= cap.min_snr_power * (1 - 1e-9))
    p = SdpProblem()
    if use_reduction:
        U = SubspaceReduction.build(targets, tx, channels).basis
        Sb = p.hermitian(U.shape[1])
        Sn = U @ Sb @ U.conj().T
        p.add_psd(Sb)
        p.add_nonneg(1.0 - trace(Sb).real)
    else:
        Sn = p.hermitian(n)
        p.add_psd(Sn)
        p.add_nonneg(1.0 - trace(Sn).real)
    obj, _ = add_crb_epigraph(p, Sn, 2, cfg, targets, tx, rx)
    if rate_constraint and gam > 0:
        for h in channels.H:
            p.add_nonneg(P * (h.conj() @ Sn @ h).real - gam)
    p.minimize(obj)
    sol, rep = solve_sdp(p, tol=tol)
    S = _psd_clip(P * sol[Sn])
    status = rep.status
    if corner:
        # keep the better of two exactly feasible points: the repaired
        # SDP iterate and the capacity covariance itself
        S = _repair(S, cfg, channels.H, cap.covariance, FEAS_TOL)
        if crb_scenario2(fisher_information(cap.covariance, targets, tx, rx, cfg)) <= crb_scenario2(
                fisher_information(S, targets, tx, rx, cfg)):
            S = cap.covariance
        status = "optimal"
    crb = crb_scenario2(fisher_information(S, targets, tx, rx, cfg))
    return TradeoffPoint(cfg.rate_threshold, _rate(S, channels, cfg), crb, S, 2, "optimal_cov", status,
                         rep.iterations, 1e3 * (time.perf_counter() - t0),
                         extra={"sdp_objective": rep.objective, "corner": corner})


def solve_sensing_only(cfg: SystemConfig, scenario: int, targets=None, tx=None, rx=None) -> TradeoffPoint:
    """Minimum-CRB corner without any rate requirement."""
    t0 = time.perf_counter()
    if scenario == 1:
        S = isotropic(cfg)
        return TradeoffPoint(0.0, np.nan, crb_scenario1(S, cfg), S, 1, "sensing_only", "optimal",
                             wall_ms=1e3 * (time.perf_counter() - t0))
    empty = ChannelSet(np.zeros((0, cfg.n_tx), complex))
    pt = solve_p2(cfg.with_(rate_threshold=0.0), empty, targets, tx, rx, rate_constraint=False)
    pt.method = "sensing_only"
    pt.achieved_rate = np.nan
    return pt


# -- beampattern benchmark ----------------------------------------------------------

@dataclass
class BeampatternSpec:
    grid: np.ndarray
    desired: np.ndarray

    @classmethod
    def default_grid(cls, step: float = np.pi / 200) -> np.ndarray:
        g = np.arange(-np.pi / 2, np.pi / 2 + step / 2, step)
        # keep the grid strictly inside the open interval of valid angles
        return np.clip(g, -np.pi / 2 + 1e-9, np.pi / 2 - 1e-9)

    @classmethod
    def flat(cls, grid: np.ndarray | None = None) -> "BeampatternSpec":
        g = cls.default_grid() if grid is None else np.asarray(grid, float)
        return cls(g, np.ones(g.size))

    @classmethod
    def bands(cls, angles, width: float = np.deg2rad(5.0), grid: np.ndarray | None = None) -> "BeampatternSpec":
        g = cls.default_grid() if grid is None else np.asarray(grid, float)
        a = np.atleast_1d(np.asarray(angles, float))
        q = (np.min(np.abs(g[:, None] - a[None, :]), axis=1) <= width + 1e-12).astype(float)
        return cls(g, q)


def beampattern(S: np.ndarray, grid: np.ndarray, tx: ArrayManifold) -> np.ndarray:
    A = tx.steering(grid)
    return np.real(np.einsum("in,ij,jn->n", A.conj(), S, A))


def solve_beampattern(
    cfg: SystemConfig,
    channels: ChannelSet,
    spec: BeampatternSpec,
    full_power: bool = False,
    tol: float = 1e-9,
    scenario: int = 1,
) -> TradeoffPoint:
    """Least-squares beampattern matching under the rate and power constraints.

    With ``full_power`` the power constraint holds with equality.
    """
    t0 = time.perf_counter()
    n, P = cfg.n_tx, cfg.power
    tx = ArrayManifold(n)
    p = SdpProblem()
    Sn = p.hermitian(n)
    eta = p.real()
    p.add_psd(Sn)
    if full_power:
        p.add_eq(trace(Sn).real - 1.0)
    else:
        p.add_nonneg(1.0 - trace(Sn).real)
    gam = cfg.gamma()
    if channels.n_users and gam > 0:
        for h in channels.H:
            p.add_nonneg(P * (h.conj() @ Sn @ h).real - gam)
    A = tx.steering(spec.grid)
    # residual r = eta q - a^H S a is linear in (eta, S); compress it
    pattern = np.einsum("in,kij,jn->kn", A.conj(), Sn.terms[0], A).real  # (n^2, N)
    R = np.vstack([-pattern, spec.desired[None, :]])  # rows: parameters of Sn then eta
    off_eta = list(eta.terms)[0]
    assert off_eta == n * n
    _, s, Vt = np.linalg.svd(R.T, full_matrices=False)
    r = int(np.sum(s > 1e-12 * s[0]))
    C = s[:r, None] * Vt[:r]  # ||R^T x|| = ||C x||
    res = Affine(np.zeros(r), {0: C.T.copy()})
    sv = p.real()
    p.add_psd(bmat([[sv * np.eye(r), res.reshape(r, 1)], [res.reshape(1, r), sv]]))
    p.minimize(sv)
    sol, rep = solve_sdp(p, tol=tol)
    S = _psd_clip(P * sol[Sn])
    return TradeoffPoint(cfg.rate_threshold, _rate(S, channels, cfg), np.nan, S, scenario, "beampattern",
                         rep.status, rep.iterations, 1e3 * (time.perf_counter() - t0),
                         extra={"eta": float(sol[eta]), "mismatch": rep.objective})

