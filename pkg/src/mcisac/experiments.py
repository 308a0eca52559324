"""Sweep drivers behind the command-line interface.

Every driver returns plain rows in grid order.  Grid points are independent
and can be dispatched to a process pool; results are collected with ``map``
so the output order never depends on completion order.

CSV layouts (column order is fixed):

* tradeoff, capacity, sensing-only: ``TradeoffPoint.CSV_COLUMNS``
* power-sweep: ``POWER_COLUMNS``
* rmse: ``RMSE_COLUMNS`` plus a JSON file with ``"schema": 1``
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamforming import design_crb, joint_beamforming
from .covariance import (
    BeampatternSpec,
    TradeoffPoint,
    isotropic,
    solve_beampattern,
    solve_capacity,
    solve_p1,
    solve_p2,
    solve_sensing_only,
)
from .estimation import monte_carlo
from .metrics import UndefinedRateError, crb, multicast_rate
from .model import RandomSource, Scenario, db_to_linear, load_config

log = logging.getLogger(__name__)

METHODS = ("optimal_cov", "joint_bf_cancel", "joint_bf_nocancel", "isotropic", "beampattern")
KINDS = ("tradeoff", "power_sweep", "rmse_vs_power", "rmse_vs_length")
DEFAULT_METHODS = {
    "tradeoff": METHODS,
    "power_sweep": ("optimal_cov", "joint_bf_cancel", "joint_bf_nocancel"),
    "rmse_vs_power": ("optimal_cov", "beampattern"),
    "rmse_vs_length": ("optimal_cov", "beampattern"),
}
POWER_COLUMNS = ("scenario", "method", "power_dbm", "rate_threshold", "achieved_rate", "crb", "crb_db",
                 "solver_status", "iterations", "wall_ms")
RMSE_COLUMNS = ("sweep_var", "method", "parameter", "rmse_db", "root_crb_theoretical_db", "root_crb_actual_db",
                "rmse", "root_crb_theoretical", "root_crb_actual", "trials", "failed", "design_status")
DOMINANCE_SLACK = 1e-6

DEFAULT_CONFIG = {
    "n_tx": 10,
    "n_rx": 10,
    "n_users": 3,
    "power_dbm": 10.0,
    "noise_comm_dbm": 0.0,
    "noise_radar_dbm": 0.0,
    "block_len": 64,
    "rate_threshold": 0.0,
    "targets": {"angles_deg": [0.0], "coeffs_re": [1.0], "coeffs_im": [0.0]},
    "channel": {"model": "rayleigh"},
}


class SpecError(ValueError):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``start:step:stop`` with the stop value included when it lies on the grid."""
    try:
        start, step, stop = (float(t) for t in text.split(":"))
    except ValueError:
        raise SpecError(f"grid must look like start:step:stop, got {text!r}") from None
    if step <= 0:
        raise SpecError("grid step must be positive")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise SpecError("grid is empty")
    return start + step * np.arange(n)


@dataclass
class ExperimentSpec:
    kind: str
    scenario: int
    methods: tuple
    grid: np.ndarray
    config: str | dict | None = None
    seed: int = 0
    out: str | None = None
    trials: int = 200
    workers: int = 1
    timing: bool = False
    beam_width_deg: float = 5.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}")
        if self.scenario not in (1, 2):
            raise SpecError("scenario must be 1 or 2")
        self.methods = tuple(self.methods) or DEFAULT_METHODS[self.kind]
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise SpecError(f"unknown methods {bad}")
        g = np.atleast_1d(np.asarray(self.grid, float))
        if g.size == 0 or np.any(np.diff(g) <= 0):
            raise SpecError("grid must be non-empty and strictly increasing")
        self.grid = g

    def scenario_data(self) -> Scenario:
        return load_config(self.config if self.config is not None else DEFAULT_CONFIG, self.seed)


def _pool_map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _safe_rate(S, channels, cfg) -> float:
    try:
        return multicast_rate(S, channels, cfg)
    except UndefinedRateError:
        return float("nan")


def _bf_rate(design, channels, cfg, cancel: bool) -> float:
    H = channels.H
    if H.shape[0] == 0:
        return float("nan")
    sig = np.abs(H.conj() @ design.info_beam) ** 2
    den = cfg.noise_comm
    if not cancel:
        den = den + np.real(np.einsum("ki,ij,kj->k", H.conj(), design.sensing_cov, H))
    return float(np.log2(1.0 + np.min(sig / den)))


def _beampattern_spec(sc: Scenario, scenario: int, width_deg: float) -> BeampatternSpec:
    if scenario == 1:
        return BeampatternSpec.flat()
    return BeampatternSpec.bands(sc.targets.angles, np.deg2rad(width_deg))


def _design_points(sc: Scenario, cfg, scenario: int, methods, rng: RandomSource, width_deg: float,
                   capacity=None) -> list[TradeoffPoint]:
    """Every requested rate-constrained design at one configuration (isotropic excluded)."""
    ch, tg, tx, rx = sc.channels, sc.targets, sc.tx, sc.rx
    out = []
    if "optimal_cov" in methods:
        if scenario == 1:
            out.append(solve_p1(cfg, ch, capacity=capacity))
        else:
            out.append(solve_p2(cfg, ch, tg, tx, rx, capacity=capacity))
    if "joint_bf_cancel" in methods or "joint_bf_nocancel" in methods:
        res = joint_beamforming(cfg, ch, scenario, rng, tg, tx, rx, capacity=capacity)
        for name in ("joint_bf_cancel", "joint_bf_nocancel"):
            if name not in methods:
                continue
            design, tr = res[name]
            status = design.status
            c = design_crb(design, scenario, cfg, tg, tx, rx)
            rate = _bf_rate(design, ch, cfg, name == "joint_bf_cancel") if status != "infeasible" else float("nan")
            out.append(TradeoffPoint(cfg.rate_threshold, rate, c, design.covariance, scenario, name, status,
                                     tr.iterations))
    if "beampattern" in methods:
        cap = capacity or (solve_capacity(cfg, ch) if ch.n_users else None)
        if cap is not None and cfg.gamma() > cap.min_snr_power * (1 + 1e-9):
            pt = TradeoffPoint(cfg.rate_threshold, cap.rate, np.inf, None, scenario, "beampattern", "infeasible")
        else:
            pt = solve_beampattern(cfg, ch, _beampattern_spec(sc, scenario, width_deg), full_power=True,
                                   scenario=scenario)
            pt.crb = crb(pt.covariance, scenario, cfg, tg, tx, rx)
        out.append(pt)
    for p in out:
        p.scenario = scenario
    return out


# -- tradeoff ------------------------------------------------------------------------

def _tradeoff_point(args):
    spec, index, R = args
    sc = spec.scenario_data()
    cfg = sc.cfg.with_(rate_threshold=float(R))
    cap = solve_capacity(cfg, sc.channels) if sc.channels.n_users else None
    methods = [m for m in spec.methods if m != "isotropic"]
    return _design_points(sc, cfg, spec.scenario, methods, RandomSource(spec.seed, 100 + index),
                          spec.beam_width_deg, cap)


def corner_points(sc: Scenario, scenario: int) -> list[TradeoffPoint]:
    """The two ends of the boundary: maximum rate and minimum CRB."""
    cfg, ch = sc.cfg, sc.channels
    rows = []
    if ch.n_users:
        cap = solve_capacity(cfg, ch)
        c = crb(cap.covariance, scenario, cfg, sc.targets, sc.tx, sc.rx)
        rows.append(TradeoffPoint(cap.rate, cap.rate, c, cap.covariance, scenario, "corner_capacity",
                                  cap.report.status if cap.report is not None else "optimal",
                                  extra={"rank": cap.rank}))
    s = solve_sensing_only(cfg, scenario, sc.targets, sc.tx, sc.rx)
    s.method = "corner_sensing"
    s.achieved_rate = _safe_rate(s.covariance, ch, cfg)
    rows.append(s)
    return rows


def run_tradeoff(spec: ExperimentSpec) -> list[TradeoffPoint]:
    """Rate-CRB boundary: corner rows first, then (grid index, method) rows."""
    sc = spec.scenario_data()
    rows = corner_points(sc, spec.scenario)
    if "isotropic" in spec.methods:
        S = isotropic(sc.cfg)
        r = _safe_rate(S, sc.channels, sc.cfg)
        c = crb(S, spec.scenario, sc.cfg, sc.targets, sc.tx, sc.rx)
        rows.append(TradeoffPoint(r, r, c, S, spec.scenario, "isotropic", "optimal"))
    items = [(spec, i, R) for i, R in enumerate(spec.grid)]
    for pts in _pool_map(_tradeoff_point, items, spec.workers):
        rows.extend(pts)
    return _finish(rows, spec)


def _finish(rows, spec):
    if not spec.timing:
        # timings would break byte-identical reruns; they are opt-in
        for r in rows:
            r.wall_ms = 0.0
    return rows


# -- power sweep ---------------------------------------------------------------------

@dataclass
class PowerRow:
    power_dbm: float
    point: TradeoffPoint

    def row(self) -> dict:
        d = self.point.row()
        c = self.point.crb
        d["power_dbm"] = f"{self.power_dbm:.6g}"
        d["crb_db"] = f"{10 * np.log10(c):.6f}" if np.isfinite(c) and c > 0 else "inf"
        return {k: d[k] for k in POWER_COLUMNS}


def _power_point(args):
    spec, index, p_dbm = args
    sc = spec.scenario_data()
    cfg = sc.cfg.with_(power=db_to_linear(p_dbm))
    cap = solve_capacity(cfg, sc.channels) if sc.channels.n_users else None
    pts = _design_points(sc, cfg, spec.scenario, [m for m in spec.methods if m != "isotropic"],
                         RandomSource(spec.seed, 100 + index), spec.beam_width_deg, cap)
    if "isotropic" in spec.methods:
        S = isotropic(cfg)
        pts.append(TradeoffPoint(cfg.rate_threshold, _safe_rate(S, sc.channels, cfg),
                                 crb(S, spec.scenario, cfg, sc.targets, sc.tx, sc.rx), S, spec.scenario,
                                 "isotropic", "optimal"))
    return [PowerRow(float(p_dbm), p) for p in pts]


def dominance_violations(rows, slack: float = DOMINANCE_SLACK) -> list[str]:
    """Points where optimal <= bf_cancel <= bf_nocancel fails (feasible points only)."""
    chain = ("optimal_cov", "joint_bf_cancel", "joint_bf_nocancel")
    by_key: dict = {}
    for r in rows:
        key = r.power_dbm if isinstance(r, PowerRow) else r.rate_threshold
        p = r.point if isinstance(r, PowerRow) else r
        if p.method in chain and p.status != "infeasible" and np.isfinite(p.crb):
            by_key.setdefault(key, {})[p.method] = p.crb
    bad = []
    for key, d in by_key.items():
        for a, b in zip(chain, chain[1:]):
            if a in d and b in d and d[a] > d[b] * (1 + slack):
                bad.append(f"{key}: {a} {d[a]:.6g} > {b} {d[b]:.6g}")
    return bad


def run_power_sweep(spec: ExperimentSpec) -> list[PowerRow]:
    items = [(spec, i, p) for i, p in enumerate(spec.grid)]
    rows = [r for pts in _pool_map(_power_point, items, spec.workers) for r in pts]
    _finish([r.point for r in rows], spec)
    for msg in dominance_violations(rows):
        log.warning("dominance chain violated at P = %s", msg)
    return rows


# -- RMSE studies --------------------------------------------------------------------

def _db(x: float) -> str:
    return f"{10 * np.log10(x):.6f}" if np.isfinite(x) and x > 0 else "inf"


def _rmse_point(args):
    spec, index, value = args
    sc = spec.scenario_data()
    if spec.kind == "rmse_vs_power":
        cfg = sc.cfg.with_(power=db_to_linear(value))
    else:
        cfg = sc.cfg.with_(block_len=int(round(value)))
    cap = solve_capacity(cfg, sc.channels) if sc.channels.n_users else None
    out = []
    designs = _design_points(sc, cfg, spec.scenario, [m for m in spec.methods if m != "isotropic"],
                             RandomSource(spec.seed, 100 + index), spec.beam_width_deg, cap)
    if "isotropic" in spec.methods:
        designs.append(TradeoffPoint(cfg.rate_threshold, np.nan, np.nan, isotropic(cfg), spec.scenario,
                                     "isotropic", "optimal"))
    for d in designs:
        entry = {"sweep_var": float(value), "method": d.method, "design_status": d.status}
        if d.covariance is None or d.status == "infeasible":
            entry["run"] = None
        else:
            run = monte_carlo(d.covariance, spec.scenario, spec.trials, cfg,
                              RandomSource(spec.seed, 10_000 + index), sc.targets, sc.tx, sc.rx,
                              grid_points=int(spec.extra.get("caml_grid", 2001)))
            entry["run"] = run
        out.append(entry)
    return out


@dataclass
class RmseStudy:
    spec: ExperimentSpec
    points: list

    def csv_rows(self) -> list[dict]:
        rows = []
        for e in self.points:
            run = e["run"]
            groups = ["G"] if self.spec.scenario == 1 else ["angle", "amplitude"]
            for g in groups:
                if run is None:
                    vals = dict(rmse=np.inf, rt=np.inf, ra=np.inf, failed=self.spec.trials)
                else:
                    vals = dict(rmse=run.rmse(g), rt=run.root_crb(g), ra=run.root_crb(g, actual=True),
                                failed=run.failed)
                rows.append({
                    "sweep_var": f"{e['sweep_var']:.6g}",
                    "method": e["method"],
                    "parameter": g,
                    "rmse_db": _db(vals["rmse"]),
                    "root_crb_theoretical_db": _db(vals["rt"]),
                    "root_crb_actual_db": _db(vals["ra"]),
                    "rmse": f"{vals['rmse']:.10g}",
                    "root_crb_theoretical": f"{vals['rt']:.10g}",
                    "root_crb_actual": f"{vals['ra']:.10g}",
                    "trials": self.spec.trials,
                    "failed": vals["failed"],
                    "design_status": e["design_status"],
                })
        return rows

    def to_json(self) -> str:
        sc = self.spec.scenario_data()
        pts = []
        for e in self.points:
            run = e["run"]
            d = {"sweep_var": e["sweep_var"], "method": e["method"], "design_status": e["design_status"]}
            if run is not None:
                d.update({
                    "rmse": {g: run.rmse(g) for g in run.mse},
                    "root_crb_theoretical": {g: run.root_crb(g) for g in run.mse},
                    "root_crb_actual": {g: run.root_crb(g, actual=True) for g in run.mse},
                    "failed": run.failed,
                    "coarse_grid_warnings": run.warnings,
                })
            pts.append(d)
        doc = {
            "schema": 1,
            "kind": self.spec.kind,
            "scenario": self.spec.scenario,
            "seed": self.spec.seed,
            "trials": self.spec.trials,
            "config": sc.raw,
            "points": pts,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def run_rmse_study(spec: ExperimentSpec) -> RmseStudy:
    items = [(spec, i, v) for i, v in enumerate(spec.grid)]
    pts = [e for es in _pool_map(_rmse_point, items, spec.workers) for e in es]
    return RmseStudy(spec, pts)


# -- output --------------------------------------------------------------------------

def write_rows(rows: list[dict], columns, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def any_infeasible(rows) -> bool:
    for r in rows:
        p = r.point if isinstance(r, PowerRow) else r
        status = p["design_status"] if isinstance(p, dict) else p.status
        if status == "infeasible":
            return True
    return False
