"""Command-line interface.

Subcommands: simulate (SE experiment), mse (estimation-error experiment),
train-dl (train + save the learned initializer), pn-stats (dump closed-form
phase-noise statistics), complexity (operation/fronthaul counts), channels
(dump a geometry draw). Exit codes: 0 ok, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .channel import gen_large_scale
from .config import (
    CP_LAG_MODES,
    ConfigError,
    LO_SEPARATE,
    LO_SHARED,
    PATTERN_PACKED,
    PATTERN_STAIRCASE,
    PRESETS,
    read_config,
    scenario_hash,
)
from .dl import DlHyperparams, dl_train, gen_training_set, save_params
from .estimators import ESTIMATOR_NAMES, NumericalError
from .harness import (
    SWEEP_AXES,
    ExperimentGrid,
    mse_experiment,
    run_experiment,
    write_gnuplot_stub,
)
from .phase_noise import PnStatistics
from .receiver import DccAssignment, complexity_report, fronthaul_report

__all__ = ["main", "build_parser"]


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="base scenario preset")
    g.add_argument("--config", help="scenario INI file (overrides --preset)")
    g.add_argument("--full", action="store_true", help="use the full-size profile (scenario1/scenario2 scale) instead of the desk profile")
    g.add_argument("--gamma-ap", type=float, help="AP oscillator quality constant [s]")
    g.add_argument("--gamma-ue", type=float, help="UE oscillator quality constant [s]")
    g.add_argument("--gamma", type=float, help="set both oscillator constants [s]")
    g.add_argument("--aps", type=int, help="number of APs")
    g.add_argument("--ues", type=int, help="number of UEs")
    g.add_argument("--lo-mode", choices=(LO_SEPARATE, LO_SHARED), help="AP oscillator sharing")
    g.add_argument("--pattern", choices=(PATTERN_STAIRCASE, PATTERN_PACKED), help="pilot pattern")
    g.add_argument("--tx-power", type=float, help="per-UE transmit power [W]")
    g.add_argument("--cp-in-lag", choices=CP_LAG_MODES, help="cyclic-prefix handling in statistic lags")
    g.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point")
    g.add_argument("--seed", type=int, help="master seed")


def _scenario_from_args(args) -> "ScenarioConfig":
    if args.config:
        cfg = read_config(args.config)
    else:
        preset = args.preset
        if args.full and preset == "desk":
            preset = "scenario2" if args.lo_mode == LO_SHARED else "scenario1"
        cfg = PRESETS[preset]()
    updates = {}
    if args.gamma is not None:
        updates["gamma_ap"] = updates["gamma_ue"] = args.gamma
    for flag, field in (
        ("gamma_ap", "gamma_ap"),
        ("gamma_ue", "gamma_ue"),
        ("aps", "n_aps"),
        ("ues", "n_ues"),
        ("lo_mode", "lo_mode"),
        ("pattern", "pilot_pattern"),
        ("tx_power", "tx_power"),
        ("cp_in_lag", "cp_in_lag"),
        ("trials", "n_trials"),
        ("seed", "seed"),
    ):
        val = getattr(args, flag)
        if val is not None:
            updates[field] = val
    return replace(cfg, **updates) if updates else cfg


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment grid")
    g.add_argument(
        "--estimators",
        default="proposed-distributed,mismatched,unaware",
        help=f"comma-separated estimator names (from: {', '.join(ESTIMATOR_NAMES)})",
    )
    g.add_argument("--sweep", choices=SWEEP_AXES, default="none", help="sweep axis")
    g.add_argument("--values", help="comma-separated sweep values")
    g.add_argument("--patterns", help="comma-separated pilot patterns (defaults to the scenario's)")
    g.add_argument("--workers", type=int, help="worker processes (default: serial)")
    g.add_argument("--dcc-serving", type=int, help="serve each UE by its m strongest APs (default: all)")
    g.add_argument("--iterations", type=int, default=3, help="alternating-estimator iterations")
    g.add_argument("--kappa-min", default="0.98", help="CPE amplitude floor, or 'none' to disable the constraint")
    g.add_argument("--kappa-max", type=float, default=1.0, help="CPE amplitude cap")
    g.add_argument("--dl-params", help="trained parameter blob (.npz) for the learned initializer")
    g.add_argument("--out", help="output CSV path (JSON sidecar written alongside)")
    g.add_argument("--gnuplot", action="store_true", help="emit a gnuplot script stub next to the CSV")


def _grid_from_args(args) -> ExperimentGrid:
    scenario = _scenario_from_args(args)
    estimators = tuple(name.strip() for name in args.estimators.split(",") if name.strip())
    if args.sweep == "none":
        values = (None,)
    else:
        if not args.values:
            raise ConfigError(f"--sweep {args.sweep} needs --values")
        cast = int if args.sweep in ("aps", "ues") else float
        values = tuple(cast(v) for v in args.values.split(","))
    patterns = (
        tuple(p.strip() for p in args.patterns.split(",")) if args.patterns else (scenario.pilot_pattern,)
    )
    kappa_min = None if str(args.kappa_min).lower() == "none" else float(args.kappa_min)
    dl_params = None
    if args.dl_params:
        from .dl import load_params

        dl_params = load_params(args.dl_params)
    label = args.config or args.preset
    return ExperimentGrid(
        scenario=scenario,
        estimators=estimators,
        sweep=args.sweep,
        values=values,
        patterns=patterns,
        n_trials=scenario.n_trials,
        seed=scenario.seed,
        label=label,
        n_workers=args.workers,
        dcc_serving=args.dcc_serving,
        n_iter=args.iterations,
        kappa_min=kappa_min,
        kappa_max=args.kappa_max,
        dl_params=dl_params,
    )


def _cmd_simulate(args) -> int:
    grid = _grid_from_args(args)
    results = run_experiment(grid, out_csv=args.out)
    for point in results:
        print(f"[{point['label']}] pattern={point['pattern']}")
        for name, rep in point["reports"].items():
            for k in range(len(rep.se)):
                print(
                    f"  {name:28s} ue={k}  SE = {rep.se[k]:.4f}  "
                    f"95% CI [{rep.ci_low[k]:.4f}, {rep.ci_high[k]:.4f}]  (T={rep.n_trials})"
                )
    if args.out and args.gnuplot:
        write_gnuplot_stub(args.out, str(args.out) + ".gp")
    return 0


def _cmd_mse(args) -> int:
    grid = _grid_from_args(args)
    results = mse_experiment(grid, out_csv=args.out)
    for point in results:
        print(f"[{point['label']}] pattern={point['pattern']}")
        for key, mean in sorted(point["summary"].items()):
            arr = np.atleast_1d(np.asarray(mean))
            vals = ", ".join(f"{v:.5g}" for v in arr.ravel())
            print(f"  {key:32s} {vals}")
    return 0


def _cmd_train_dl(args) -> int:
    scenario = _scenario_from_args(args)
    hyper = DlHyperparams(
        m1=args.m1,
        m2=args.m2,
        batch=args.batch,
        n_train=args.n_train,
        lr0=args.lr0,
        epochs=args.epochs,
    )
    root = np.random.SeedSequence(scenario.seed).spawn(2)
    ls = gen_large_scale(np.random.default_rng(root[0]), scenario)
    train_rng = np.random.default_rng(root[1])
    dataset = gen_training_set(train_rng, scenario, ls.beta, hyper.n_train)
    params, losses = dl_train(dataset, hyper, train_rng, scenario)
    save_params(params, args.out)
    print(f"trained {len(losses)} epochs: loss {losses[0]:.5g} -> {losses[-1]:.5g}")
    print(f"saved to {args.out} (scenario hash {params.config_hash})")
    return 0


def _cmd_pn_stats(args) -> int:
    scenario = _scenario_from_args(args)
    stats = PnStatistics.from_scenario(scenario).precompute(scenario.pilot_plan())
    rows = list(stats.dump_rows())
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["table", "index", "value"])
            w.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        for table, idx, val in rows:
            print(f"{table:10s} {idx:5d} {val!r}")
    if args.save:
        stats.save(args.save)
        print(f"cached tables in {args.save} (hash {stats.config_hash()})")
    return 0


def _cmd_complexity(args) -> int:
    scenario = _scenario_from_args(args)
    dcc = None
    if args.dcc_serving is not None:
        ls = gen_large_scale(np.random.default_rng(np.random.SeedSequence(scenario.seed)), scenario)
        dcc = DccAssignment.nearest(ls.beta, args.dcc_serving)
    comp = complexity_report(scenario, dcc, m1=args.m1, m2=args.m2, n_iter=args.iterations)
    fh_rep = fronthaul_report(scenario, dcc, n_iter=args.iterations)
    print("# complex multiplications per coherence block (stage rows)")
    for name, row in comp["rows"].items():
        print(f"  {name:20s} {row['count']:>14.6g}   {row['formula']}")
    print("# per-estimator totals")
    for name, total in comp["estimators"].items():
        print(f"  {name:28s} {total:>14.6g}")
    print("# fronthaul complex scalars per AP per coherence block")
    for name, parts in fh_rep["rows"].items():
        opts = "  ".join(f"{key}={part['count']:.6g}" for key, part in parts.items())
        print(f"  {name:20s} {opts}")
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["table", "row", "option", "formula", "count"])
            for name, row in comp["rows"].items():
                w.writerow(["complexity", name, "", row["formula"], repr(row["count"])])
            for name, total in comp["estimators"].items():
                w.writerow(["complexity-total", name, "", "", repr(total)])
            for name, parts in fh_rep["rows"].items():
                for key, part in parts.items():
                    w.writerow(["fronthaul", name, key, part["formula"], repr(part["count"])])
        print(f"wrote {args.out}")
    return 0


def _cmd_channels(args) -> int:
    scenario = _scenario_from_args(args)
    ls = gen_large_scale(np.random.default_rng(np.random.SeedSequence(scenario.seed)), scenario)
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["kind", "ue", "ap", "x", "y", "beta"])
            for l, (x, y) in enumerate(ls.ap_pos):
                w.writerow(["ap", "", l, repr(float(x)), repr(float(y)), ""])
            for k, (x, y) in enumerate(ls.ue_pos):
                w.writerow(["ue", k, "", repr(float(x)), repr(float(y)), ""])
            for k in range(ls.beta.shape[0]):
                for l in range(ls.beta.shape[1]):
                    w.writerow(["beta", k, l, "", "", repr(float(ls.beta[k, l]))])
        print(f"wrote {args.out}")
    else:
        print(f"scenario hash {scenario_hash(scenario)}")
        with np.printoptions(precision=3):
            print("beta [linear]:")
            print(ls.beta)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfofdm",
        description="Uplink cell-free MIMO-OFDM simulation under oscillator phase noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the SE experiment")
    _add_scenario_args(p)
    _add_grid_args(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("mse", help="run the estimation-error experiment")
    _add_scenario_args(p)
    _add_grid_args(p)
    p.set_defaults(func=_cmd_mse)

    p = sub.add_parser("train-dl", help="train and save the learned channel initializer")
    _add_scenario_args(p)
    p.add_argument("--out", required=True, help="output parameter blob (.npz)")
    p.add_argument("--m1", type=int, default=100)
    p.add_argument("--m2", type=int, default=100)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--n-train", type=int, default=3000)
    p.add_argument("--lr0", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.set_defaults(func=_cmd_train_dl)

    p = sub.add_parser("pn-stats", help="dump closed-form phase-noise statistics")
    _add_scenario_args(p)
    p.add_argument("--out", help="CSV output path (default: print)")
    p.add_argument("--save", help="also cache the tables to this .npz")
    p.set_defaults(func=_cmd_pn_stats)

    p = sub.add_parser("complexity", help="operation and fronthaul counts")
    _add_scenario_args(p)
    p.add_argument("--dcc-serving", type=int, help="nearest-m serving sets for the counts")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--m1", type=int, default=100)
    p.add_argument("--m2", type=int, default=100)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("channels", help="dump one large-scale geometry draw")
    _add_scenario_args(p)
    p.add_argument("--out", help="CSV output path (default: print)")
    p.set_defaults(func=_cmd_channels)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
