"""Command-line entry point: `bess <command>`"""

from datetime import date, timedelta
from pathlib import Path
from typing import List, Optional
import argparse
import json
import logging
import sys

from app.config import Settings, load_settings
from app.exceptions import BessError
from app.models.tables import SNAPSHOT_FILE
from app.services.observability import log_context, setup_logging

logger = logging.getLogger("app.cli")


def _parse_day(value: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {value!r}") from e


def _with_dump_dir(ri, directory: Optional[str]):
    return ri.model_copy(update={"dump_instance_dir": directory}) if directory else ri


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_backtest(args, settings: Settings) -> int:
    from app.services.backtest import run_backtest
    from app.services.reports import emit_reports

    config = settings.backtest_config(args.start, args.end)
    config = config.model_copy(update={"ri": _with_dump_dir(config.ri, args.dump_instance)})
    out_dir = args.out or str(Path(settings.OUTPUT_DIR) / f"backtest_{config.start}_{config.end}")
    with log_context(run_id=f"backtest-{config.seed}"):
        run = run_backtest(config)
        written = emit_reports(run, out_dir)
    for name, total in run.report.totals().items():
        print(f"{name:10s} {total:14.2f} EUR")
    print(f"reports: {Path(written['run_manifest.json']).parent}")
    return 0


def cmd_simulate(args, settings: Settings) -> int:
    from app.services.backtest import ResultCache, compute_results
    from app.services.data_processor import DataProcessor
    from app.services.market_synthesizer import MarketSynthesizer
    from app.services.strategy_pool import ProfitMatrix, default_catalogue

    synthesizer = MarketSynthesizer.from_settings(settings)
    snapshots, exogenous = synthesizer.synthesize(args.seed, args.days, args.regime, args.start)
    days = [args.start + timedelta(days=k) for k in range(args.days)]
    spec = settings.bess_spec()
    ri = _with_dump_dir(settings.ri_config(), args.dump_instance)
    catalogue = default_catalogue(spec)

    out = Path(args.out or Path(settings.DATA_DIR) / f"synthetic_{args.regime}_{args.seed}")
    DataProcessor.write_exogenous(exogenous, str(out))
    DataProcessor.write_snapshots(snapshots, str(out / SNAPSHOT_FILE))
    if args.no_trade:
        print(f"market data: {out}")
        return 0

    with log_context(run_id=f"simulate-{args.seed}"):
        results = compute_results(
            snapshots,
            exogenous,
            {d: list(catalogue) for d in days},
            spec,
            ri,
            settings.MAX_WORKERS,
            ResultCache(None, ""),
        )
    profits = ProfitMatrix.from_results(results, catalogue)
    profits.to_csv(str(out / "profit_matrix.csv"))
    if args.trades:
        for result in results:
            DataProcessor.write_trade_log(
                result.trades, str(out / "trades" / f"{result.day}_{result.strategy.strategy_id}.csv")
            )
    totals = profits.total.sum(axis=0)
    print(f"market data and profit matrix: {out}")
    print(f"best strategy over {len(days)} day(s): {totals.idxmax()} ({totals.max():.2f} EUR)")
    return 0


def cmd_train(args, settings: Settings) -> int:
    from app.services.backtest import train_as_of

    window = settings.WINDOW_DAYS
    lag = settings.LABEL_LAG_DAYS
    start = args.asof - timedelta(days=window + lag - 1)
    overrides = {}
    if args.data:
        overrides = {"EXOGENOUS_DIR": args.data, "SNAPSHOTS_PATH": str(Path(args.data) / SNAPSHOT_FILE)}
    config = settings.model_copy(update=overrides).backtest_config(start, args.asof)
    model, decision, _ = train_as_of(config, args.asof)
    out_dir = Path(args.out or settings.OUTPUT_DIR)
    path = model.save(str(out_dir / f"model_{args.asof}.json"))
    print(f"pool: {' '.join(model.pool)}")
    print(f"decision for {args.asof}: {decision.strategy_id}")
    print(f"model: {path}")
    return 0


def cmd_select_pool(args, settings: Settings) -> int:
    from app.services.milp_solver import MilpSolver
    from app.services.strategy_pool import ProfitMatrix, pool_size_curve, pool_value, select_pool

    source = args.profits or str(Path(settings.OUTPUT_DIR) / "profit_matrix.csv")
    profits = ProfitMatrix.from_csv(source).complete()
    solver = MilpSolver(settings.POOL_MILP_BACKEND)
    if args.sweep:
        curve = pool_size_curve(profits, solver=solver)
        if args.out:
            curve.to_csv(args.out, index=False, float_format="%.6f", lineterminator="\n")
        print(curve.to_string(index=False))
        return 0
    pool = select_pool(profits, args.s, solver)
    ids = [p.strategy_id for p in pool]
    print(f"pool: {' '.join(ids)}")
    print(f"training value: {pool_value(profits, ids):.2f} EUR over {len(profits.days)} day(s)")
    return 0


def cmd_report(args, settings: Settings) -> int:
    from app.services.reports import rerender

    written = rerender(args.source, args.out)
    for name in sorted(written):
        print(written[name])
    return 0


def cmd_duration_study(args, settings: Settings) -> int:
    from app.services.duration_study import capacity_sweep, fcr_duration_curve
    from app.services.market_synthesizer import MarketSynthesizer

    spec = settings.bess_spec()
    synthesizer = MarketSynthesizer.from_settings(settings)
    snapshots, exogenous = synthesizer.synthesize(args.seed, args.days, args.regime, args.start)
    days = [args.start + timedelta(days=k) for k in range(args.days)]
    sweep = capacity_sweep(snapshots, exogenous, days, spec, settings.ri_config())
    curve = fcr_duration_curve(spec)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        sweep.to_csv(out / "capacity_sweep.csv", index=False, float_format="%.6f", lineterminator="\n")
        curve.to_csv(out / "fcr_duration.csv", index=False, float_format="%.6f", lineterminator="\n")
    print(sweep.to_string(index=False))
    print()
    print(curve.to_string(index=False))
    return 0


def cmd_solve(args, settings: Settings) -> int:
    from app.services.intrinsic import load_instance, solve
    from app.services.milp_solver import MilpSolver

    inst = load_instance(args.instance)
    plan = solve(inst, MilpSolver(args.backend or settings.MILP_BACKEND, settings.MILP_GAP, settings.MILP_MAX_NODES))
    print(json.dumps(plan.model_dump(), indent=2))
    return 0 if plan.feasible else 3


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value settings file (KEY=value); BESS_* environment variables override it")
    common.add_argument("--log-level", help="override LOG_LEVEL")

    parser = argparse.ArgumentParser(prog="bess", description="Joint FCR / intraday bidding engine for a battery")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("backtest", parents=[common], help="rolling out-of-sample backtest with benchmarks and reports")
    p.add_argument("--start", type=_parse_day, help="first simulated day (default BACKTEST_START)")
    p.add_argument("--end", type=_parse_day, help="last out-of-sample day (default BACKTEST_END)")
    p.add_argument("--out", help="report directory")
    p.add_argument("--dump-instance", metavar="DIR", help="write infeasible intrinsic instances here")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("simulate", parents=[common], help="synthesize a market and trade every catalogue strategy on it")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--regime", default="mixed")
    p.add_argument("--start", type=_parse_day, default=date(2024, 1, 1))
    p.add_argument("--out", help="directory for market data and profit_matrix.csv")
    p.add_argument("--no-trade", action="store_true", help="only write the market data")
    p.add_argument("--trades", action="store_true", help="also write one trade log per (day, strategy)")
    p.add_argument("--dump-instance", metavar="DIR", help="write infeasible intrinsic instances here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="select a pool and train the classifier for one delivery day")
    p.add_argument("--asof", type=_parse_day, required=True, help="delivery day to predict")
    p.add_argument("--data", help="market data directory (synthetic market when omitted)")
    p.add_argument("--out", help="directory for the model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-pool", parents=[common], help="optimal strategy pool over a profit matrix")
    p.add_argument("--s", type=int, default=3, help="pool size")
    p.add_argument("--profits", help="profit_matrix.csv")
    p.add_argument("--sweep", action="store_true", help="loss curve over every pool size")
    p.add_argument("--out", help="CSV target for --sweep")
    p.set_defaults(func=cmd_select_pool)

    p = sub.add_parser("report", parents=[common], help="re-render report tables from a backtest directory")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("duration-study", parents=[common], help="intraday profit per MW against storage duration")
    p.add_argument("--regime", default="mixed")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--days", type=int, default=3)
    p.add_argument("--start", type=_parse_day, default=date(2024, 1, 1))
    p.add_argument("--out")
    p.set_defaults(func=cmd_duration_study)

    p = sub.add_parser("solve", parents=[common], help="replay a dumped intrinsic instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--backend", choices=["branch_and_bound", "highs"])
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args.config)
        setup_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_FORMAT)
        return args.func(args, settings)
    except (BessError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
