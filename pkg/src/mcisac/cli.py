"""mcisac command line.

    mcisac tradeoff     --config cfg.json --scenario 1 --grid 0:0.25:3 --out tradeoff.csv
    mcisac power-sweep  --grid 0:5:30 --out power.csv
    mcisac rmse         --sweep power --grid 0:5:20 --trials 200 --out rmse.csv
    mcisac capacity     --out capacity.csv
    mcisac sensing-only --scenario 2 --out sensing.csv

Exit status: 0 on success, 2 when any grid point is infeasible, 1 on error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .covariance import TradeoffPoint, write_points_csv

log = logging.getLogger("mcisac")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file (defaults to a built-in 10x10, K=3 setup)")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--out", help="output CSV path (stdout when omitted)")
    common.add_argument("--scenario", type=int, choices=(1, 2), default=1)
    common.add_argument("--methods", default="", help="comma separated subset of " + ",".join(ex.METHODS))
    common.add_argument("--grid", help="start:step:stop sweep grid")
    common.add_argument("--trials", type=int, default=200)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--beam-width", type=float, default=5.0, help="beampattern band half-width in degrees")
    common.add_argument("--caml-grid", type=int, default=2001)
    common.add_argument("--timing", action="store_true", help="record wall-clock times (output no longer reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mcisac", description="Rate / CRB tradeoff experiments for multicast ISAC.")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("tradeoff", parents=[common], help="sweep the rate threshold")
    sub.add_parser("power-sweep", parents=[common], help="CRB versus transmit power (dBm grid)")
    r = sub.add_parser("rmse", parents=[common], help="Monte Carlo estimation RMSE")
    r.add_argument("--sweep", choices=("power", "length"), default="power")
    r.add_argument("--json", help="JSON output path (defaults to the CSV path with .json)")
    sub.add_parser("capacity", parents=[common], help="maximum multicast rate corner")
    sub.add_parser("sensing-only", parents=[common], help="minimum CRB corner")
    return p


def _spec(args, kind: str, default_grid: str) -> ex.ExperimentSpec:
    seed = args.seed
    if seed is None:
        seed = 0
        if args.config:
            import json

            seed = int(json.loads(Path(args.config).read_text()).get("seed", 0))
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    return ex.ExperimentSpec(
        kind=kind,
        scenario=args.scenario,
        methods=methods,
        grid=ex.parse_grid(args.grid or default_grid),
        config=args.config,
        seed=seed,
        out=args.out,
        trials=args.trials,
        workers=args.workers,
        timing=args.timing,
        beam_width_deg=args.beam_width,
        extra={"caml_grid": args.caml_grid},
    )


def _emit_points(points: list[TradeoffPoint], out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_points_csv(points, str(out))
    else:
        write_points_csv(points, sys.stdout)


def _emit_rows(rows: list[dict], columns, out) -> None:
    if out:
        ex.write_rows(rows, columns, out)
    else:
        import csv

        w = csv.DictWriter(sys.stdout, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    v = args.verb
    if v == "tradeoff":
        spec = _spec(args, "tradeoff", "0.5:0.5:3")
        rows = ex.run_tradeoff(spec)
        _emit_points(rows, args.out)
    elif v == "power-sweep":
        spec = _spec(args, "power_sweep", "0:5:30")
        prs = ex.run_power_sweep(spec)
        _emit_rows([r.row() for r in prs], ex.POWER_COLUMNS, args.out)
        rows = prs
    elif v == "rmse":
        kind = "rmse_vs_power" if args.sweep == "power" else "rmse_vs_length"
        spec = _spec(args, kind, "0:5:20" if args.sweep == "power" else "16:16:128")
        if spec.kind == "rmse_vs_length" and np.any(spec.grid < 1):
            raise ex.SpecError("sequence lengths must be positive")
        study = ex.run_rmse_study(spec)
        _emit_rows(study.csv_rows(), ex.RMSE_COLUMNS, args.out)
        jpath = args.json or (str(Path(args.out).with_suffix(".json")) if args.out else None)
        if jpath:
            Path(jpath).write_text(study.to_json() + "\n")
        rows = study.points
    elif v in ("capacity", "sensing-only"):
        spec = _spec(args, "tradeoff", "0:1:0")
        sc = spec.scenario_data()
        corners = ex.corner_points(sc, spec.scenario)
        if v == "capacity":
            if not sc.channels.n_users:
                raise ex.SpecError("capacity needs at least one user")
            rows = [corners[0]]
            log.info("capacity covariance rank %d", rows[0].extra.get("rank", -1))
        else:
            rows = [corners[-1]]
        _emit_points(ex._finish(rows, spec), args.out)
    else:  # pragma: no cover - argparse enforces the choices
        raise ex.SpecError(v)
    return 2 if ex.any_infeasible(rows) else 0


def main(argv=None) -> int:
    try:
        code = run(argv)
    except SystemExit as e:  # argparse errors
        code = 0 if e.code in (0, None) else 1
    except Exception as e:  # noqa: BLE001 - the CLI reports and maps to exit code 1
        print(f"mcisac: error: {e}", file=sys.stderr)
        code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
