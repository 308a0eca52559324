"""Small modeling layer for SDPs over Hermitian matrices and real scalars.

Decision variables are real parameters ``y``; matrix variables are affine
maps of ``y`` (a Hermitian n x n matrix uses n**2 real parameters).
Expressions are :class:`Affine` objects that support the handful of
linear-algebra operations the optimizers need.  Complex PSD constraints
are passed to the solver through the real embedding [[Re, -Im], [Im, Re]].
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ipm import LpBlock, PsdBlock, solve_hkm


class Affine:
    """Affine function ``const + sum_k coef_k * y_k`` with array values.

    ``terms`` maps a variable offset to an array of shape ``(n_vars, *shape)``.
    """

    __array_ufunc__ = None

    def __init__(self, const: np.ndarray, terms: dict[int, np.ndarray]):
        self.const = np.asarray(const)
        self.terms = terms

    # -- structure -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.const.shape

    @property
    def ndim(self) -> int:
        return self.const.ndim

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Affine):
            shape = np.broadcast_shapes(self.shape, other.shape)
            terms = {k: np.broadcast_to(_expand(v, self.ndim, len(shape)), v.shape[:1] + shape)
                     for k, v in self.terms.items()}
            for k, v in other.terms.items():
                v = np.broadcast_to(_expand(v, other.ndim, len(shape)), v.shape[:1] + shape)
                terms[k] = terms[k] + v if k in terms else v
            return Affine(self.const + other.const, terms)
        other = np.asarray(other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        return Affine(
            self.const + other,
            {k: np.broadcast_to(_expand(v, self.ndim, len(shape)), v.shape[:1] + shape)
             for k, v in self.terms.items()},
        )

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        other = np.asarray(other)
        return Affine(self.const * other, {k: _expand(v, self.ndim, other.ndim) * other for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / np.asarray(other))

    def __matmul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        other = np.asarray(other)
        return Affine(self.const @ other, {k: v @ other for k, v in self.terms.items()})

    def __rmatmul__(self, other):
        other = np.asarray(other)
        if self.ndim == 1 and other.ndim == 2:
            return Affine(other @ self.const, {k: v @ other.T for k, v in self.terms.items()})
        if self.ndim == 1 and other.ndim == 1:
            return Affine(other @ self.const, {k: v @ other for k, v in self.terms.items()})
        return Affine(other @ self.const, {k: np.matmul(other, v) for k, v in self.terms.items()})

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Affine(self.const[idx], {k: v[(slice(None),) + idx] for k, v in self.terms.items()})

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {k: np.swapaxes(v, -1, -2) if v.ndim > 2 else v for k, v in self.terms.items()})

    def conj(self) -> "Affine":
        return Affine(np.conj(self.const), {k: np.conj(v) for k, v in self.terms.items()})

    @property
    def H(self) -> "Affine":
        return self.T.conj()

    @property
    def real(self) -> "Affine":
        return Affine(np.real(self.const), {k: np.real(v) for k, v in self.terms.items()})

    @property
    def imag(self) -> "Affine":
        return Affine(np.imag(self.const), {k: np.imag(v) for k, v in self.terms.items()})

    def sum(self) -> "Affine":
        return Affine(np.sum(self.const), {k: v.reshape(v.shape[0], -1).sum(axis=1) for k, v in self.terms.items()})

    def trace(self) -> "Affine":
        return Affine(np.trace(self.const), {k: np.trace(v, axis1=1, axis2=2) for k, v in self.terms.items()})

    def reshape(self, *shape) -> "Affine":
        return Affine(self.const.reshape(*shape), {k: v.reshape(v.shape[0], *shape) for k, v in self.terms.items()})

    def dense(self, nvar: int) -> tuple[np.ndarray, np.ndarray]:
        """(const, coef) with coef shaped ``(nvar, *shape)``."""
        coef = np.zeros((nvar,) + self.shape, dtype=np.result_type(self.const, *self.terms.values()) if self.terms else self.const.dtype)
        for k, v in self.terms.items():
            coef[k : k + v.shape[0]] += v
        return self.const, coef

    def value(self, y: np.ndarray) -> np.ndarray:
        out = np.array(self.const, dtype=np.result_type(self.const, *self.terms.values(), float) if self.terms else None)
        for k, v in self.terms.items():
            out = out + np.tensordot(y[k : k + v.shape[0]], v, axes=(0, 0))
        return out

    def __repr__(self) -> str:
        return f"Affine(shape={self.shape}, vars={sorted(self.terms)})"


def _expand(v: np.ndarray, inner_ndim: int, target_ndim: int) -> np.ndarray:
    # insert singleton axes after the variable axis so that a stack of
    # coefficients broadcasts like its (inner_ndim)-dimensional value
    extra = target_ndim - inner_ndim
    if extra <= 0:
        return v
    return v.reshape((v.shape[0],) + (1,) * extra + v.shape[1:])


def trace(x):
    return x.trace() if isinstance(x, Affine) else np.trace(x)


def _as_cell(c):
    # scalars become 1x1 blocks and vectors become columns
    if isinstance(c, Affine):
        if c.ndim == 0:
            return c.reshape(1, 1)
        if c.ndim == 1:
            return c.reshape(c.shape[0], 1)
        return c
    a = np.asarray(c)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    return a


def bmat(rows: Sequence[Sequence]) -> Affine | np.ndarray:
    """Block matrix from cells that may be arrays, scalars or Affine."""
    cells = [[_as_cell(c) for c in row] for row in rows]
    if not any(isinstance(c, Affine) for row in cells for c in row):
        return np.block(cells)
    nvars: dict[int, int] = {}
    for row in cells:
        for c in row:
            if isinstance(c, Affine):
                for k, v in c.terms.items():
                    nvars[k] = v.shape[0]
    const = np.block([[c.const if isinstance(c, Affine) else c for c in row] for row in cells])
    terms = {}
    for k, nv in nvars.items():
        blocks = []
        for row in cells:
            brow = []
            for c in row:
                if isinstance(c, Affine) and k in c.terms:
                    brow.append(c.terms[k])
                else:
                    brow.append(np.zeros((nv,) + c.shape))
            blocks.append(brow)
        terms[k] = np.block(blocks)
    return Affine(const, terms)


@dataclass
class SolveReport:
    status: str
    objective: float = np.nan
    primal_residual: float = np.nan
    dual_gap: float = np.nan
    iterations: int = 0
    wall_ms: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class Solution:
    y: np.ndarray
    duals: dict = field(default_factory=dict)

    def __getitem__(self, expr):
        return value(expr, self.y)


def value(expr, y: np.ndarray) -> np.ndarray:
    if isinstance(expr, Affine):
        v = expr.value(y)
        if v.ndim == 2 and v.shape[0] == v.shape[1] and np.iscomplexobj(v):
            v = 0.5 * (v + v.conj().T)
        return v
    return np.asarray(expr)


class SdpProblem:
    """Container for variables, constraints and a linear objective."""

    def __init__(self):
        self.nvar = 0
        self.psd: list[tuple[Affine, str]] = []
        self.nonneg: list[tuple[Affine, str]] = []
        self.eqs: list[Affine] = []
        self.objective: Affine | None = None

    def _alloc(self, count: int) -> int:
        off = self.nvar
        self.nvar += count
        return off

    def real(self, shape=()) -> Affine:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        size = int(np.prod(shape)) if shape else 1
        off = self._alloc(size)
        coef = np.eye(size).reshape((size,) + shape)
        return Affine(np.zeros(shape), {off: coef})

    def complex_vector(self, n: int) -> Affine:
        off = self._alloc(2 * n)
        coef = np.concatenate([np.eye(n), 1j * np.eye(n)]).astype(complex)
        return Affine(np.zeros(n, complex), {off: coef})

    def hermitian(self, n: int) -> Affine:
        off = self._alloc(n * n)
        coef = np.zeros((n * n, n, n), complex)
        k = 0
        for i in range(n):
            coef[k, i, i] = 1.0
            k += 1
        for i in range(n):
            for j in range(i + 1, n):
                coef[k, i, j] = coef[k, j, i] = 1.0
                coef[k + 1, i, j] = 1j
                coef[k + 1, j, i] = -1j
                k += 2
        return Affine(np.zeros((n, n), complex), {off: coef})

    def add_psd(self, expr: Affine, name: str = "") -> None:
        if expr.ndim != 2 or expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD block must be square, got {expr.shape}")
        self.psd.append((expr, name))

    def add_nonneg(self, expr: Affine, name: str = "") -> None:
        self.nonneg.append((expr, name))

    def add_eq(self, expr: Affine) -> None:
        self.eqs.append(expr)

    def minimize(self, expr: Affine) -> None:
        if expr.shape != ():
            raise ValueError("objective must be scalar")
        self.objective = expr


def _real_embed(const: np.ndarray, coef: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    const = 0.5 * (const + np.conj(const.T))
    coef = 0.5 * (coef + np.conj(np.swapaxes(coef, 1, 2)))
    if not (np.iscomplexobj(const) or np.iscomplexobj(coef)) or (
        not np.any(np.imag(const)) and not np.any(np.imag(coef))
    ):
        return np.real(const), np.real(coef)

    def emb(a):
        re, im = np.real(a), np.imag(a)
        top = np.concatenate([re, -im], axis=-1)
        bot = np.concatenate([im, re], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    return emb(const), emb(coef)


def solve_sdp(
    problem: SdpProblem,
    tol: float = 1e-8,
    max_iter: int = 100,
    log=None,
    method: str = "ipm",
    radius: float = 1e2,
    center: np.ndarray | None = None,
    accept: float = 1e-7,
) -> tuple[Solution, SolveReport]:
    """Solve ``problem``.

    ``method="ipm"`` (default) runs the HKM interior-point method.
    ``method="ellipsoid"`` runs a central-cut ellipsoid method with
    minimum-eigenvector cuts inside the ball of ``radius`` around ``center``
    (in the space of free parameters); it is slow and meant for
    cross-checking small problems.
    """

    t0 = time.perf_counter()
    if problem.objective is None:
        raise ValueError("no objective set")
    nvar = problem.nvar
    c0, c = problem.objective.real.dense(nvar)
    c = np.real(c).astype(float)
    c0 = float(np.real(c0))

    # equality constraints are eliminated: y = y0 + N z
    y0 = np.zeros(nvar)
    N = None
    if problem.eqs:
        rows, rhs = [], []
        for e in problem.eqs:
            k0, k = e.real.dense(nvar)
            rows.append(np.real(k).reshape(nvar, -1).T)
            rhs.append(-np.real(k0).ravel())
        E = np.vstack(rows)
        e = np.concatenate(rhs)
        y0 = np.linalg.lstsq(E, e, rcond=None)[0]
        _, s, vt = np.linalg.svd(E)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)))
        N = vt[rank:].T
        if np.linalg.norm(E @ y0 - e) > 1e-9 * (1 + np.linalg.norm(e)):
            return Solution(y0), SolveReport("infeasible", wall_ms=1e3 * (time.perf_counter() - t0))

    def reduce(const, coef):
        # coef: (nvar, ...) -> (const', coef') in z-space
        const = const + np.tensordot(y0, coef, axes=(0, 0))
        if N is not None:
            coef = np.tensordot(N.T, coef, axes=(1, 0))
        return const, coef

    m = nvar if N is None else N.shape[1]
    obj_const = c0 + c @ y0
    cz = c if N is None else N.T @ c
    cscale = max(np.max(np.abs(cz)), 1e-300) if cz.size else 1.0

    psd_blocks = []
    for expr, _ in problem.psd:
        k0, k = expr.dense(nvar)
        F0, F = _real_embed(k0, k)
        F0, F = reduce(F0, F)
        scale = max(np.max(np.abs(F)), np.max(np.abs(F0)), 1e-300)
        F0, F = F0 / scale, F / scale
        nb = F0.shape[0]
        mask = np.abs(F) > 1e-14
        var, row, col = np.nonzero(mask)
        # SDPA form uses A_i = -F_i, C = F0
        psd_blocks.append(PsdBlock(nb, F0, var, row, col, -F[var, row, col]))

    lp = None
    if problem.nonneg:
        g0s, gs = [], []
        for expr, _ in problem.nonneg:
            k0, k = expr.real.dense(nvar)
            g0s.append(np.real(k0).ravel())
            gs.append(np.real(k).reshape(nvar, -1))
        g0 = np.concatenate(g0s)
        G = np.concatenate(gs, axis=1)
        g0, G = reduce(g0, G)
        rs = np.maximum(np.max(np.abs(G), axis=0), np.abs(g0))
        rs[rs == 0] = 1.0
        lp = LpBlock(g0 / rs, -G / rs)

    if method == "ellipsoid":
        return _solve_by_ellipsoid(problem, psd_blocks, lp, cz, obj_const, y0, N, m, tol, radius, center, t0)
    if method != "ipm":
        raise ValueError(f"unknown method {method!r}")
    res = solve_hkm(-cz / cscale, psd_blocks, lp, tol=tol, max_iter=max_iter, log=log, accept=accept)
    z = res.y
    y = y0 + (z if N is None else N @ z)
    obj = float(c @ y + c0)
    report = SolveReport(
        status=res.status,
        objective=obj,
        primal_residual=float(res.dinf),
        dual_gap=float(res.gap),
        iterations=res.iterations,
        wall_ms=1e3 * (time.perf_counter() - t0),
    )
    sol = Solution(y, duals={"psd": res.X[: len(psd_blocks)], "lp": res.X[len(psd_blocks):]})
    return sol, report


def _solve_by_ellipsoid(problem, psd_blocks, lp, cz, obj_const, y0, N, m, tol, radius, center, t0):
    from .ellipsoid import EllipsoidState, ellipsoid_minimize

    dense = []
    for blk in psd_blocks:
        F = np.zeros((m, blk.n, blk.n))
        F[blk.var, blk.row, blk.col] = -blk.val
        dense.append((blk.C, F))

    def psd_cut(F0, F):
        def oracle(z):
            w, V = np.linalg.eigh(F0 + np.tensordot(z, F, axes=(0, 0)))
            v = V[:, 0]
            return -w[0], -np.einsum("i,kij,j->k", v, F, v)
        return oracle

    cuts = [psd_cut(F0, F) for F0, F in dense]
    if lp is not None:
        def lp_cut(z):
            g = lp.c - lp.A.T @ z
            j = int(np.argmin(g))
            return -g[j], lp.A[:, j]
        cuts.append(lp_cut)
    z0 = np.zeros(m) if center is None else np.asarray(center, float)
    z, rep = ellipsoid_minimize(
        lambda z: (float(cz @ z), cz), cuts, EllipsoidState.ball(z0, radius), tol=tol, feas_tol=tol
    )
    y = y0 + (z if N is None else N @ z)
    rep.objective = float(rep.objective + obj_const) if np.isfinite(rep.objective) else rep.objective
    rep.wall_ms = 1e3 * (time.perf_counter() - t0)
    return Solution(y), rep
