"""Central-cut ellipsoid method.

``objective(x) -> (f, g)`` returns the value and a subgradient.  Each
constraint oracle ``cut(x) -> (v, g)`` returns a violation ``v`` (feasible
when ``v <= feas_tol``) and a vector ``g`` such that the feasible set lies
in ``{z : g^T (z - x) <= 0}`` whenever ``v > 0``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sdp import SolveReport


@dataclass
class EllipsoidState:
    """Ellipsoid ``{x : (x - center)^T shape^{-1} (x - center) <= 1}``."""

    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0

    @classmethod
    def ball(cls, center, radius) -> "EllipsoidState":
        c = np.atleast_1d(np.asarray(center, float)).copy()
        r = np.broadcast_to(np.asarray(radius, float), c.shape)
        return cls(c, np.diag(r**2))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def max_semi_axis(self) -> float:
        if self.dim == 1:
            return float(np.sqrt(self.shape[0, 0]))
        return float(np.sqrt(max(np.linalg.eigvalsh(self.shape)[-1], 0.0)))

    def log_volume(self) -> float:
        return 0.5 * float(np.linalg.slogdet(self.shape)[1])

    def cut(self, g: np.ndarray) -> bool:
        """Central cut keeping ``{z : g^T (z - center) <= 0}``; False if degenerate."""
        d = self.dim
        Pg = self.shape @ g
        gPg = float(g @ Pg)
        if not np.isfinite(gPg) or gPg <= 0:
            return False
        self.iteration += 1
        if d == 1:
            # bisection
            r = np.sqrt(self.shape[0, 0])
            self.center = self.center - 0.5 * r * np.sign(g)
            self.shape = 0.25 * self.shape
            return True
        b = Pg / np.sqrt(gPg)
        self.center = self.center - b / (d + 1)
        P = (d * d / (d * d - 1.0)) * (self.shape - (2.0 / (d + 1)) * np.outer(b, b))
        self.shape = 0.5 * (P + P.T)
        return True


def default_max_iter(dim: int, radius: float, x_tol: float) -> int:
    # each step multiplies the volume by at most exp(-1/(2(d+1))); budget
    # enough steps to shrink every semi-axis from radius to x_tol, with slack
    ratio = max(radius / max(x_tol, 1e-300), 2.0)
    return int(np.ceil(4 * dim * (dim + 1) * np.log(ratio))) + 50


def ellipsoid_minimize(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    cuts: Sequence[Callable[[np.ndarray], tuple[float, np.ndarray]]],
    init: EllipsoidState,
    tol: float = 1e-6,
    max_iter: int | None = None,
    x_tol: float | None = None,
    feas_tol: float = 1e-7,
) -> tuple[np.ndarray, SolveReport]:
    """Minimize a convex function over the intersection of convex constraints.

    Stops when the certified gap ``sqrt(g^T P g)`` falls below
    ``tol * (1 + |f|)`` at a feasible center and, if ``x_tol`` is given, the
    largest semi-axis is below ``x_tol``.  The best feasible center seen is
    returned.
    """
    t0 = time.perf_counter()
    state = EllipsoidState(init.center.astype(float).copy(), init.shape.astype(float).copy())
    d = state.dim
    if max_iter is None:
        r0 = state.max_semi_axis
        max_iter = default_max_iter(d, r0, min(x_tol or np.inf, tol * max(r0, 1.0)))

    best_x, best_f = None, np.inf
    gap = np.inf
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        x = state.center
        g = None
        for c in cuts:
            v, gc = c(x)
            if v > feas_tol:
                g = np.asarray(gc, float)
                break
        if g is None:
            f, g = objective(x)
            g = np.asarray(g, float)
            if f < best_f:
                best_f, best_x = float(f), x.copy()
            gPg = float(g @ state.shape @ g)
            gap = float(np.sqrt(max(gPg, 0.0)))
            if gPg <= 0:
                # zero subgradient at a feasible point
                best_f, best_x, gap = float(f), x.copy(), 0.0
                status = "optimal"
                break
            if gap <= tol * (1 + abs(f)) and (x_tol is None or state.max_semi_axis <= x_tol):
                status = "optimal"
                break
        if not state.cut(g):
            status = "numerical_failure"
            break
    if best_x is None:
        status = "infeasible"
        best_x = state.center.copy()
    report = SolveReport(
        status=status,
        objective=best_f,
        primal_residual=0.0,
        dual_gap=gap,
        iterations=it,
        wall_ms=1e3 * (time.perf_counter() - t0),
    )
    return best_x, report
