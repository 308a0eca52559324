"""Joint information and sensing beamforming by successive convex approximation.

The transmit covariance is ``S = S_sen + w w^H``.  The rate constraint
``|h_k^H w|^2 >= Gamma`` is non-convex in ``w``; each SCA step replaces the
quadratic by its tangent at the current beam, which is a global lower bound,
so every iterate stays feasible and the CRB never increases.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .covariance import add_crb_epigraph, solve_capacity, CapacityResult
from .metrics import crb_scenario1, crb_scenario2, fisher_information, hermitian
from .model import ChannelSet, RandomSource, SystemConfig
from .solvers import SdpProblem, bmat, solve_sdp, trace

SCA_TOL = 1e-4
MAX_SCA_ITER = 50
N_RAND = 1000


@dataclass
class BeamformingDesign:
    info_beam: np.ndarray
    sensing_cov: np.ndarray
    status: str = "optimal"
    method: str = "joint_bf_cancel"

    @property
    def covariance(self) -> np.ndarray:
        return self.sensing_cov + np.outer(self.info_beam, self.info_beam.conj())

    @property
    def sensing_rank(self) -> int:
        w = np.linalg.eigvalsh(self.sensing_cov)
        return int(np.sum(w > 1e-7 * max(w[-1], 1e-300)))


@dataclass
class ScaTrace:
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    status: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def is_monotone(self, slack: float = 1e-9) -> bool:
        o = np.asarray(self.objective)
        return bool(np.all(o[1:] <= o[:-1] + slack * np.maximum(1.0, np.abs(o[:-1]))))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iteration", "objective", "max_residual", "status"])
            for i, (o, r, s) in enumerate(zip(self.objective, self.residual, self.status)):
                w.writerow([i, f"{o:.12g}", f"{r:.3e}", s])


def _snr_power(w: np.ndarray, H: np.ndarray) -> np.ndarray:
    return np.abs(H.conj() @ w) ** 2


# -- initialization ------------------------------------------------------------------

@dataclass
class SdrInit:
    w: np.ndarray
    min_snr_power: float
    bound: float
    feasible: bool


def init_sdr_multicast(
    cfg: SystemConfig,
    channels: ChannelSet,
    rng: RandomSource,
    n_rand: int = N_RAND,
    capacity: CapacityResult | None = None,
) -> SdrInit:
    """Semidefinite relaxation of max-min SNR beamforming plus Gaussian randomization."""
    H = channels.H
    if H.shape[0] == 0:
        raise ValueError("initialization needs at least one user")
    P = cfg.power
    if H.shape[0] == 1:
        h = H[0]
        w = np.sqrt(P) * h / np.linalg.norm(h)
        t = float(_snr_power(w, H)[0])
        return SdrInit(w, t, t, t >= cfg.gamma())
    cap = capacity or solve_capacity(cfg, channels)
    lam, V = np.linalg.eigh(cap.covariance)
    if cap.rank == 1:
        w = np.sqrt(P) * V[:, -1]
        cands = w[None, :]
    else:
        root = V * np.sqrt(np.maximum(lam, 0.0))
        cands = rng.cn(n_rand, cfg.n_tx) @ root.T
        cands *= np.sqrt(P) / np.linalg.norm(cands, axis=1, keepdims=True)
    scores = np.min(np.abs(cands.conj() @ H.T) ** 2, axis=1)
    k = int(np.argmax(scores))
    return SdrInit(cands[k], float(scores[k]), cap.min_snr_power, bool(scores[k] >= cfg.gamma()))


def _rate_repair(cfg: SystemConfig, H: np.ndarray, w: np.ndarray, max_iter: int = MAX_SCA_ITER, tol: float = 1e-8):
    """Raise the minimum SNR of ``w`` by SCA until it meets Gamma (or stalls)."""
    P, n, gam = cfg.power, cfg.n_tx, cfg.gamma()
    cur = float(np.min(_snr_power(w, H)))
    for _ in range(max_iter):
        if cur >= gam:
            return w, True
        p = SdpProblem()
        wn = p.complex_vector(n)
        t = p.real()
        p.add_psd(bmat([[np.eye(n), wn.reshape(n, 1)], [wn.conj().reshape(1, n), 1.0]]))
        wi = w / np.sqrt(P)
        for h in H:
            c = np.vdot(h, wi)
            p.add_nonneg(2.0 * ((h.conj() @ wn).conj() * c).real - abs(c) ** 2 - t)
        p.minimize(-t)
        sol, rep = solve_sdp(p, tol=tol)
        if rep.status != "optimal":
            break
        w_new = np.sqrt(P) * sol[wn]
        new = float(np.min(_snr_power(w_new, H)))
        if new <= cur * (1 + 1e-9):
            break
        w, cur = w_new, new
    return w, cur >= gam


# -- SCA ----------------------------------------------------------------------------

def _true_crb(S, scenario, cfg, targets, tx, rx) -> float:
    if scenario == 1:
        return crb_scenario1(S, cfg)
    return crb_scenario2(fisher_information(S, targets, tx, rx, cfg))


def _sca(
    cfg: SystemConfig,
    channels: ChannelSet,
    init: np.ndarray,
    scenario: int,
    targets=None,
    tx=None,
    rx=None,
    cancel: bool = True,
    sca_tol: float = SCA_TOL,
    max_iter: int = MAX_SCA_ITER,
    sdp_tol: float = 1e-9,
    sdp_accept: float = 1e-6,
):
    H = channels.H
    n, P, gam = cfg.n_tx, cfg.power, cfg.gamma()
    gbar = 2.0**cfg.rate_threshold - 1.0
    trace_ = ScaTrace()
    method = "joint_bf_cancel" if cancel else "joint_bf_nocancel"
    w = np.asarray(init, complex).copy()
    nw = np.linalg.norm(w)
    if nw > np.sqrt(P):
        w *= np.sqrt(P) / nw
    if H.shape[0] and gam > 0:
        if gam > P * np.min(np.sum(np.abs(H) ** 2, axis=1)) * (1 + 1e-12):
            return BeamformingDesign(w, np.zeros((n, n), complex), "infeasible", method), trace_
        if np.min(_snr_power(w, H)) < gam:
            w, ok = _rate_repair(cfg, H, w)
            if not ok:
                return BeamformingDesign(w, np.zeros((n, n), complex), "infeasible", method), trace_

    best_S, best_w, best_obj = None, w, np.inf
    status = "max_iter"
    for it in range(max_iter):
        p = SdpProblem()
        Sn = p.hermitian(n)
        wn = p.complex_vector(n)
        p.add_psd(bmat([[Sn, wn.reshape(n, 1)], [wn.conj().reshape(1, n), 1.0]]))
        p.add_nonneg(1.0 - trace(Sn).real)
        wi = w / np.sqrt(P)
        for h in H:
            c = np.vdot(h, wi)  # h^H w_i
            lin = 2.0 * ((h.conj() @ wn).conj() * c).real - abs(c) ** 2
            if cancel:
                p.add_nonneg(P * lin - gam)
            else:
                p.add_nonneg(P * (1.0 + gbar) * lin - P * gbar * (h.conj() @ Sn @ h).real - gam)
        obj, factor = add_crb_epigraph(p, Sn, scenario, cfg, targets, tx, rx)
        p.minimize(obj)
        sol, rep = solve_sdp(p, tol=sdp_tol, accept=sdp_accept)
        # a feasible but uncertified subproblem point is still usable: the
        # true CRB below decides whether the step is taken
        usable = rep.optimal or (rep.primal_residual <= 1e-7 and rep.dual_gap <= 1e-3)
        if not usable:
            status = "numerical_failure" if it else "infeasible"
            trace_.status.append(rep.status)
            break
        S_new = hermitian(P * sol[Sn])
        w_new = np.sqrt(P) * sol[wn]
        val = _true_crb(S_new, scenario, cfg, targets, tx, rx)
        snr = _snr_power(w_new, H)
        if H.shape[0]:
            if cancel:
                res = max(0.0, float(np.max(gam - snr)))
            else:
                interf = np.real(np.einsum("ki,ij,kj->k", H.conj(), S_new, H)) - snr
                res = max(0.0, float(np.max(gbar * (interf + cfg.noise_comm) - snr)))
        else:
            res = 0.0
        if val > best_obj * (1 + 1e-6):
            trace_.status.append("non_monotone")
            status = "numerical_failure"
            break
        if val >= best_obj:
            # no progress within solver accuracy: keep the previous iterate
            status = "optimal"
            break
        prev = best_obj
        best_S, best_w, best_obj = S_new, w_new, val
        trace_.objective.append(val)
        trace_.residual.append(res)
        trace_.status.append(rep.status)
        w = w_new
        if np.isfinite(prev) and (prev - val) <= sca_tol * abs(val):
            status = "optimal"
            break
    if best_S is None:
        return BeamformingDesign(w, np.zeros((n, n), complex), status if status != "max_iter" else "infeasible", method), trace_
    S_sen = best_S - np.outer(best_w, best_w.conj())
    lam, V = np.linalg.eigh(hermitian(S_sen))
    S_sen = hermitian((V * np.maximum(lam, 0.0)) @ V.conj().T)
    return BeamformingDesign(best_w, S_sen, status, method), trace_


def sca_p3(cfg, channels, init, **kw):
    """Scenario I joint beamforming with sensing interference cancellation."""
    return _sca(cfg, channels, init, 1, cancel=True, **kw)


def sca_p4(cfg, channels, targets, tx, rx, init, **kw):
    """Scenario II joint beamforming with sensing interference cancellation."""
    return _sca(cfg, channels, init, 2, targets, tx, rx, cancel=True, **kw)


def sca_no_cancellation(cfg, channels, targets=None, tx=None, rx=None, scenario: int = 1, init=None, **kw):
    """Joint beamforming when users cannot remove the sensing signal.

    The SINR constraint is rearranged as
    ``(1 + g) |h^H w|^2 >= g h^H S h + Gamma`` with ``g = 2^R - 1`` and the
    left side is replaced by its tangent at the current beam.
    """
    return _sca(cfg, channels, init, scenario, targets, tx, rx, cancel=False, **kw)


def design_crb(design: BeamformingDesign, scenario, cfg, targets=None, tx=None, rx=None) -> float:
    if design.status == "infeasible":
        return np.inf
    return _true_crb(design.covariance, scenario, cfg, targets, tx, rx)


def joint_beamforming(
    cfg: SystemConfig,
    channels: ChannelSet,
    scenario: int,
    rng: RandomSource,
    targets=None,
    tx=None,
    rx=None,
    capacity: CapacityResult | None = None,
    **kw,
):
    """Both beamforming designs at one rate threshold.

    The cancellation design keeps the better of two SCA runs, one from the
    randomized SDR beam and one warm-started at the no-cancellation design
    (which is feasible for it), so it is never worse than the latter.
    Returns ``{"joint_bf_cancel": (design, trace), "joint_bf_nocancel": ...}``.
    """
    H = channels.H
    if H.shape[0]:
        init = init_sdr_multicast(cfg, channels, rng, capacity=capacity).w
    else:
        init = np.sqrt(cfg.power / cfg.n_tx) * np.ones(cfg.n_tx, complex)
    nc = _sca(cfg, channels, init, scenario, targets, tx, rx, cancel=False, **kw)
    c1 = _sca(cfg, channels, init, scenario, targets, tx, rx, cancel=True, **kw)
    best = c1
    if nc[0].status != "infeasible":
        c2 = _sca(cfg, channels, nc[0].info_beam, scenario, targets, tx, rx, cancel=True, **kw)
        if design_crb(c2[0], scenario, cfg, targets, tx, rx) < design_crb(c1[0], scenario, cfg, targets, tx, rx):
            best = c2
    return {"joint_bf_cancel": best, "joint_bf_nocancel": nc}
