"""Primal-dual interior-point method for block-diagonal SDPs (HKM direction).

Works on the SDPA pair

    (P)  min <C, X>   s.t.  <A_i, X> = b_i,  X >= 0
    (D)  max b^T y    s.t.  sum_i y_i A_i + Z = C,  Z >= 0

where every block is either a real symmetric PSD block or a nonnegative
orthant ("lp") block.  Infeasible-start Mehrotra predictor-corrector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass
class PsdBlock:
    """Real symmetric block; A_i entries listed in COO form (both triangles)."""

    n: int
    C: np.ndarray
    var: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray


@dataclass
class LpBlock:
    c: np.ndarray
    A: np.ndarray  # (m, n)

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class IpmResult:
    status: str
    y: np.ndarray
    X: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    pobj: float = np.nan
    dobj: float = np.nan
    pinf: float = np.nan
    dinf: float = np.nan
    gap: float = np.nan
    iterations: int = 0


class _PsdOps:
    """Precomputed helpers for one PSD block."""

    def __init__(self, blk: PsdBlock, m: int):
        self.blk = blk
        self.m = m
        n = blk.n
        self.flat = blk.row * n + blk.col
        self.tflat = blk.col * n + blk.row
        nnz = blk.val.size
        self.nnz = nnz
        # choose the cheaper Schur-complement assembly
        used = np.unique(blk.var)
        self.used = used
        mu = used.size
        self.dense = nnz * nnz > 2 * mu * n**3 + mu * mu * n * n
        if self.dense:
            A = np.zeros((mu, n * n))
            loc = np.searchsorted(used, blk.var)
            np.add.at(A, (loc, self.flat), blk.val)
            self.A = A.reshape(mu, n, n)
        else:
            agg = np.zeros((nnz, m))
            agg[np.arange(nnz), blk.var] = blk.val
            self.agg = agg[:, used]
        self.normA = np.sqrt(np.bincount(blk.var, weights=blk.val**2, minlength=m))

    def op(self, K: np.ndarray) -> np.ndarray:
        """A(K)_i = tr(A_i K)."""
        blk = self.blk
        return np.bincount(blk.var, weights=blk.val * K.ravel()[self.tflat], minlength=self.m)

    def adj(self, y: np.ndarray) -> np.ndarray:
        blk = self.blk
        n = blk.n
        out = np.bincount(self.flat, weights=blk.val * y[blk.var], minlength=n * n)
        return out.reshape(n, n)

    def schur(self, X: np.ndarray, Zi: np.ndarray) -> np.ndarray:
        m = self.m
        out = np.zeros((m, m))
        u = self.used
        if self.dense:
            P = X @ self.A @ Zi  # (mu, n, n)
            mu = u.size
            Mb = self.A.reshape(mu, -1) @ np.transpose(P, (0, 2, 1)).reshape(mu, -1).T
        else:
            r, c = self.blk.row, self.blk.col
            W = X[np.ix_(c, r)] * Zi[np.ix_(c, r)].T
            Mb = self.agg.T @ W @ self.agg
        out[np.ix_(u, u)] = Mb
        return out


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    ev = np.linalg.eigvalsh(Li @ dX @ Li.T)
    lo = ev[0]
    return np.inf if lo >= 0 else -1.0 / lo


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def solve_hkm(
    b: np.ndarray,
    psd: list[PsdBlock],
    lp: LpBlock | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    log=None,
    accept: float = 1e-7,
) -> IpmResult:
    """Solve the SDPA pair; ``accept`` is the residual level at which a
    stalled run is still reported optimal."""
    m = b.size
    ops = [_PsdOps(blk, m) for blk in psd]
    n_total = sum(blk.n for blk in psd) + (lp.n if lp is not None else 0)
    normb = np.linalg.norm(b)
    normC = np.sqrt(
        sum(np.sum(blk.C**2) for blk in psd) + (np.sum(lp.c**2) if lp is not None else 0.0)
    )

    # starting point (SDPT3-style heuristics)
    X, Z = [], []
    for o in ops:
        n = o.blk.n
        nA = o.normA
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b)) / (1 + nA)))
        eta = max(10.0, np.sqrt(n), np.max(nA), np.linalg.norm(o.blk.C))
        X.append(xi * np.eye(n))
        Z.append(eta * np.eye(n))
    if lp is not None:
        nA = np.linalg.norm(lp.A, axis=1)
        n = lp.n
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b)) / (1 + nA)))
        eta = max(10.0, np.sqrt(n), np.max(nA), np.linalg.norm(lp.c))
        x = np.full(n, xi)
        z = np.full(n, eta)
    y = np.zeros(m)

    def A_of(Ks, k=None):
        out = np.zeros(m)
        for o, K in zip(ops, Ks):
            out += o.op(K)
        if k is not None:
            out += lp.A @ k
        return out

    res = IpmResult(status="max_iter", y=y)
    best, best_merit, stall = None, np.inf, 0
    prev = (np.inf, np.inf, np.inf)
    best_feas = None  # iterate with the best objective among those feasible for (D)
    for it in range(max_iter + 1):
        rp = b - A_of(X, x if lp is not None else None)
        Rd = [o.blk.C - Zb - o.adj(y) for o, Zb in zip(ops, Z)]
        rd_lp = lp.c - z - lp.A.T @ y if lp is not None else None
        gapv = sum(np.sum(Xb * Zb) for Xb, Zb in zip(X, Z)) + (x @ z if lp is not None else 0.0)
        mu = gapv / n_total
        pobj = sum(np.sum(o.blk.C * Xb) for o, Xb in zip(ops, X)) + (lp.c @ x if lp is not None else 0.0)
        dobj = b @ y
        pinf = np.linalg.norm(rp) / (1 + normb)
        dnorm = np.sqrt(sum(np.sum(R**2) for R in Rd) + (rd_lp @ rd_lp if lp is not None else 0.0))
        dinf = dnorm / (1 + normC)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        res = IpmResult("max_iter", y.copy(), [Xb.copy() for Xb in X] + ([x.copy()] if lp is not None else []),
                        [Zb.copy() for Zb in Z] + ([z.copy()] if lp is not None else []),
                        pobj, dobj, pinf, dinf, relgap, it)
        if log is not None:
            log.write(f"{it:3d} pobj={pobj:+.8e} dobj={dobj:+.8e} pinf={pinf:.1e} dinf={dinf:.1e} gap={relgap:.1e}\n")
        if pinf <= tol and dinf <= tol and relgap <= tol:
            res.status = "optimal"
            return res
        merit = max(pinf, dinf, relgap)
        progress = (
            (pinf > tol and pinf < 0.9 * prev[0])
            or (dinf > tol and dinf < 0.9 * prev[1])
            or (relgap > tol and mu < 0.5 * prev[2])
        )
        if merit < best_merit:
            best, best_merit = res, merit
        if dinf <= min(accept, 1e-8) and (best_feas is None or dobj > best_feas.dobj):
            best_feas = res
        stall = 0 if progress or merit <= best_merit else stall + 1
        prev = (pinf, dinf, mu)
        if stall >= 6 or (stall >= 2 and merit <= accept):
            break
        # infeasibility certificates
        trX = sum(np.trace(Xb) for Xb in X) + (x.sum() if lp is not None else 0.0)
        if pobj < 0 and np.linalg.norm(b - rp) / -pobj < 1e-9 and -pobj > 1e6 * (1 + normb):
            res.status = "infeasible"
            return res
        if dobj > 0 and (normC + dnorm) / dobj < 1e-9:
            res.status = "unbounded"
            return res
        if it == max_iter or not np.isfinite(trX):
            break

        Zi = []
        for Zb in Z:
            try:
                Li = sla.solve_triangular(np.linalg.cholesky(Zb), np.eye(Zb.shape[0]), lower=True)
                Zi.append(Li.T @ Li)
            except np.linalg.LinAlgError:
                Zi = None
                break
        if Zi is None:
            break
        M = np.zeros((m, m))
        for o, Xb, Zib in zip(ops, X, Zi):
            M += o.schur(Xb, Zib)
        if lp is not None:
            M += (lp.A * (x / z)) @ lp.A.T
        M = _sym(M)
        try:
            fac = sla.cho_factor(M + 1e-15 * np.max(np.abs(np.diag(M))) * np.eye(m))
            msolve = lambda r: sla.cho_solve(fac, r)  # noqa: E731
        except np.linalg.LinAlgError:
            lstsq = np.linalg.pinv(M, rcond=1e-14)
            msolve = lambda r: lstsq @ r  # noqa: E731

        XRdZi = [Xb @ R @ Zib for Xb, R, Zib in zip(X, Rd, Zi)]

        def direction(sigma, corr):
            RcZi = []
            for k, (Xb, Zib) in enumerate(zip(X, Zi)):
                T = sigma * mu * Zib - Xb
                if corr is not None:
                    T = T - corr[0][k] @ corr[1][k] @ Zib
                RcZi.append(T)
            rc_lp = None
            if lp is not None:
                rc_lp = sigma * mu - x * z
                if corr is not None:
                    rc_lp = rc_lp - corr[2] * corr[3]
                rhs = rp - A_of(RcZi, rc_lp / z) + A_of(XRdZi, x * rd_lp / z)
            else:
                rhs = rp - A_of(RcZi) + A_of(XRdZi)
            dy = msolve(rhs)
            dy = dy + msolve(rhs - M @ dy)  # one step of iterative refinement
            dZ = [R - o.adj(dy) for o, R in zip(ops, Rd)]
            dX = [_sym(T - Xb @ dZb @ Zib) for T, Xb, dZb, Zib in zip(RcZi, X, dZ, Zi)]
            dz = dx = None
            if lp is not None:
                dz = rd_lp - lp.A.T @ dy
                dx = (rc_lp - x * dz) / z
            return dX, dy, dZ, dx, dz

        def steps(dX, dZ, dx, dz):
            ap = min([_max_step(Xb, d) for Xb, d in zip(X, dX)] + ([_max_step_lp(x, dx)] if lp is not None else []) + [np.inf])
            ad = min([_max_step(Zb, d) for Zb, d in zip(Z, dZ)] + ([_max_step_lp(z, dz)] if lp is not None else []) + [np.inf])
            return ap, ad

        dXa, dya, dZa, dxa, dza = direction(0.0, None)
        ap, ad = steps(dXa, dZa, dxa, dza)
        ap1, ad1 = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(np.sum((Xb + ap1 * d1) * (Zb + ad1 * d2)) for Xb, d1, Zb, d2 in zip(X, dXa, Z, dZa))
        if lp is not None:
            mu_aff += (x + ap1 * dxa) @ (z + ad1 * dza)
        mu_aff /= n_total
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        dX, dy, dZ, dx, dz = direction(sigma, (dXa, dZa, dxa, dza))
        ap, ad = steps(dX, dZ, dx, dz)
        gamma = 0.9 + 0.09 * min(ap1, ad1)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        X = [Xb + ap * d for Xb, d in zip(X, dX)]
        Z = [Zb + ad * d for Zb, d in zip(Z, dZ)]
        y = y + ad * dy
        if lp is not None:
            x = x + ap * dx
            z = z + ad * dz
        if ap < 1e-12 and ad < 1e-12:
            break
    if best is not None and best_merit <= res.pinf + res.dinf + res.gap:
        res = best
    if max(res.pinf, res.dinf, res.gap) <= accept:
        res.status = "optimal"
        return res
    if best_feas is not None:
        # no certificate, but (D) is solved to feasibility; hand back the best such point
        best_feas.status = res.status
        res = best_feas
    if res.status == "max_iter" and it < max_iter:
        res.status = "numerical_failure"
    return res
