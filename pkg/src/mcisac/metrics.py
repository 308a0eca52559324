"""Rate, CRB and Fisher-information metrics for a transmit covariance.

Functions taking a covariance accept either a numpy array or an affine
expression from :mod:`mcisac.solvers.sdp`; the latter lets the optimizers
reuse the exact same Fisher-information formulas as constraint data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArrayManifold, ChannelSet, SystemConfig, TargetSet
from .solvers.sdp import Affine, bmat

SINGULAR_FLOOR = 1e-9


class UndefinedRateError(ValueError):
    pass


def hermitian(S) -> np.ndarray:
    S = np.asarray(S)
    return 0.5 * (S + S.conj().T)


def _floor_inverse(A: np.ndarray, floor: float = SINGULAR_FLOOR):
    """Inverse via eigh, or None when the matrix is below the singularity floor."""
    A = hermitian(A)
    w, V = np.linalg.eigh(A)
    scale = max(np.trace(A).real / A.shape[0], 0.0)
    if scale <= 0 or w[0] <= floor * scale:
        return None
    return (V / w) @ V.conj().T


# -- communication -------------------------------------------------------------

def user_snrs(S, channels: ChannelSet, cfg: SystemConfig) -> np.ndarray:
    H = channels.H
    return np.real(np.einsum("ki,ij,kj->k", H.conj(), np.asarray(S), H)) / cfg.noise_comm


@dataclass
class RateReport:
    rate: float
    snrs: np.ndarray
    worst_user: int


def multicast_rate_report(S, channels: ChannelSet, cfg: SystemConfig) -> RateReport:
    if channels.n_users == 0:
        raise UndefinedRateError("multicast rate is undefined without users")
    snr = user_snrs(S, channels, cfg)
    k = int(np.argmin(snr))
    return RateReport(float(np.log2(1.0 + max(snr[k], -1 + 1e-300))), snr, k)


def multicast_rate(S, channels: ChannelSet, cfg: SystemConfig) -> float:
    return multicast_rate_report(S, channels, cfg).rate


# -- Scenario I ----------------------------------------------------------------

def crb_scenario1(S, cfg: SystemConfig) -> float:
    Si = _floor_inverse(np.asarray(S))
    if Si is None:
        return np.inf
    return float(cfg.n_rx * cfg.noise_radar / cfg.block_len * np.trace(Si).real)


# -- Scenario II ---------------------------------------------------------------

@dataclass
class FisherInformation:
    matrix: np.ndarray
    F11: np.ndarray
    F12: np.ndarray
    F22: np.ndarray


def fim_blocks(S, targets: TargetSet, tx: ArrayManifold, rx: ArrayManifold, L: int):
    """The complex M x M blocks F11, F12, F22 (without the 2/sigma^2 factor)."""
    th, b = targets.angles, targets.coeffs
    At, dAt = tx.steering(th), tx.steering_derivative(th)
    Ar, dAr = rx.steering(th), rx.steering_derivative(th)
    if S.shape != (tx.n_elements, tx.n_elements):
        raise ValueError(f"covariance shape {S.shape} does not match {tx.n_elements} transmit antennas")
    St = S.T
    X1 = At.T @ St @ At.conj()
    X2 = At.T @ St @ dAt.conj()
    X3 = dAt.T @ St @ At.conj()
    X4 = dAt.T @ St @ dAt.conj()
    bb = np.outer(b.conj(), b)
    bc = b.conj()[:, None]
    rdd = dAr.T @ dAr.conj()
    rd0 = dAr.T @ Ar.conj()
    r0d = Ar.T @ dAr.conj()
    r00 = Ar.T @ Ar.conj()
    F11 = L * (X1 * (rdd * bb) + X2 * (rd0 * bb) + X3 * (r0d * bb) + X4 * (r00 * bb))
    F12 = L * (X1 * (rd0 * bc) + X3 * (r00 * bc))
    F22 = L * (X1 * r00)
    return F11, F12, F22


def assemble_fim(F11, F12, F22, noise_radar: float):
    """Real 3M x 3M matrix from the complex blocks."""
    M = bmat([
        [F11.real, F12.real, -F12.imag],
        [F12.real.T, F22.real, -F22.imag],
        [-F12.imag.T, -F22.imag.T, F22.real],
    ])
    M = M * (2.0 / noise_radar)
    return 0.5 * (M + M.T)


def fisher_information(S, targets: TargetSet, tx: ArrayManifold, rx: ArrayManifold, cfg: SystemConfig):
    """Fisher information for [angles, Re coeffs, Im coeffs].

    Returns a :class:`FisherInformation` for an array covariance and an
    affine expression for an affine one.
    """
    if not isinstance(S, Affine):
        S = np.asarray(S)
    F11, F12, F22 = fim_blocks(S, targets, tx, rx, cfg.block_len)
    F = assemble_fim(F11, F12, F22, cfg.noise_radar)
    if isinstance(S, Affine):
        return F
    return FisherInformation(np.real(F), F11, F12, F22)


def crb_scenario2(fim) -> float:
    F = fim.matrix if isinstance(fim, FisherInformation) else np.asarray(fim)
    Fi = _floor_inverse(F)
    if Fi is None:
        return np.inf
    return float(np.trace(Fi).real)


def per_parameter_crb(fim) -> np.ndarray:
    F = fim.matrix if isinstance(fim, FisherInformation) else np.asarray(fim)
    Fi = _floor_inverse(F)
    if Fi is None:
        return np.full(F.shape[0], np.inf)
    return np.real(np.diag(Fi))


def crb(S, scenario: int, cfg: SystemConfig, targets=None, tx=None, rx=None) -> float:
    """CRB of either scenario for covariance ``S``."""
    if scenario == 1:
        return crb_scenario1(S, cfg)
    return crb_scenario2(fisher_information(S, targets, tx, rx, cfg))
