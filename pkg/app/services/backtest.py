"""Rolling-horizon backtest: daily pool selection, retraining, prediction and benchmarks"""

from concurrent.futures import ProcessPoolExecutor
from datetime import date, timedelta
from hashlib import sha256
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import bisect
import json
import logging
import time

import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.exceptions import DataError, IngestionError, StreamGapError
from app.models.schemas import (
    BacktestConfig,
    BessSpec,
    DayResult,
    ExogenousSeries,
    FcrStrategy,
    Hyperparameters,
    OrderBookSnapshot,
    RiConfig,
)
from app.models.tables import SNAPSHOT_FILE
from app.services.benchmarks import BenchmarkReport, benchmark_decisions, evaluate_policies
from app.services.classifier import predict, tune_and_train
from app.services.data_processor import DataProcessor
from app.services.fcr_physics import day_start
from app.services.features import feature_matrix
from app.services.market_synthesizer import MarketSynthesizer
from app.services.milp_solver import MilpSolver
from app.services.observability import log_context
from app.services.rolling_intrinsic import run_day
from app.services.strategy_pool import (
    ProfitMatrix,
    best_strategy,
    default_catalogue,
    label_days,
    only_fcr,
    only_idm,
    select_pool,
)

logger = logging.getLogger(__name__)


class DailyDecision(BaseModel):
    day: date
    pool: List[str]
    decision: str
    dynamic: str
    hyperparameters: Optional[Hyperparameters] = None
    validation_profit: Optional[float] = None


class BacktestRun(BaseModel):
    """Everything a backtest produced"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: BacktestConfig
    profits: ProfitMatrix
    catalogue: List[str]
    decisions: List[DailyDecision]
    report: BenchmarkReport
    fingerprint: str


# ---------------------------------------------------------------------------
# Market data
# ---------------------------------------------------------------------------

def load_market(
    config: BacktestConfig, synthesizer: Optional[MarketSynthesizer] = None
) -> Tuple[List[OrderBookSnapshot], ExogenousSeries]:
    """Recorded data when paths are configured, otherwise a synthetic market over the data span"""
    if config.exogenous_dir:
        exogenous = DataProcessor.load_exogenous(config.exogenous_dir)
        snap_path = config.snapshots_path or str(Path(config.exogenous_dir) / SNAPSHOT_FILE)
        snapshots = DataProcessor.load_snapshots(
            snap_path, depth=config.ri.book_depth, lead_minutes=config.ri.gate_closure_minutes
        )
        return snapshots, exogenous
    days = config.data_days()
    synthesizer = synthesizer or MarketSynthesizer(
        product_duration_h=config.ri.product_duration_h,
        depth=config.ri.book_depth,
        lead_minutes=config.ri.gate_closure_minutes,
        trading_start_hour=config.ri.trading_start_hour,
        zones=list(config.classifier.daa_zones),
    )
    return synthesizer.synthesize(config.seed, len(days), config.synthetic_regime or "mixed", days[0])


def day_stream(snapshots: Sequence[OrderBookSnapshot], day: date, ri: RiConfig) -> List[OrderBookSnapshot]:
    """Snapshots that can matter to delivery day `day`"""
    stamps = [s.timestamp for s in snapshots]
    lo = bisect.bisect_left(stamps, day_start(day) - timedelta(days=1) + timedelta(hours=ri.trading_start_hour))
    hi = bisect.bisect_left(stamps, day_start(day + timedelta(days=1)))
    return list(snapshots[lo:hi])


def fingerprint(config: BacktestConfig) -> str:
    """Key of everything that determines a (day, strategy) result"""
    payload = {
        "spec": config.spec.model_dump(),
        "ri": config.ri.model_dump(exclude={"dump_instance_dir"}),
        "seed": config.seed,
        "regime": config.synthetic_regime,
        "snapshots": config.snapshots_path,
        "exogenous": config.exogenous_dir,
        "first_day": config.data_days()[0].isoformat(),
    }
    return sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Profit matrix
# ---------------------------------------------------------------------------

def _run_day_batch(task) -> List[DayResult]:
    day, snapshots, exogenous, strategies, spec, ri = task
    solver = MilpSolver(ri.milp_backend, ri.milp_gap, ri.milp_max_nodes)
    results = []
    for strategy in strategies:
        try:
            results.append(run_day(snapshots, exogenous, strategy, spec, ri, day, solver))
        except StreamGapError as e:
            raise DataError(f"snapshot stream for {day}: {e}", day=day, series="snapshots") from e
        except IngestionError as e:
            raise DataError(f"frequency series for {day}: {e}", day=day, series="frequency") from e
    return results


class ResultCache:
    """One JSON file per (day, strategy) under a fingerprinted directory"""

    def __init__(self, directory: Optional[str], key: str):
        self.base = Path(directory) / key if directory else None
        if self.base is not None:
            self.base.mkdir(parents=True, exist_ok=True)

    def _path(self, day: date, strategy: FcrStrategy) -> Optional[Path]:
        return self.base / f"{day.isoformat()}_{strategy.strategy_id}.json" if self.base else None

    def get(self, day: date, strategy: FcrStrategy) -> Optional[DayResult]:
        path = self._path(day, strategy)
        if path is None or not path.exists():
            return None
        return DayResult.model_validate_json(path.read_text())

    def put(self, result: DayResult) -> None:
        path = self._path(result.day, result.strategy)
        if path is not None:
            path.write_text(result.model_dump_json())


def compute_results(
    snapshots: Sequence[OrderBookSnapshot],
    exogenous: ExogenousSeries,
    grid: Dict[date, List[FcrStrategy]],
    spec: BessSpec,
    ri: RiConfig,
    max_workers: int = 1,
    cache: Optional[ResultCache] = None,
) -> List[DayResult]:
    """Run the rolling intrinsic for every (day, strategy) in `grid`"""
    cache = cache or ResultCache(None, "")
    results: List[DayResult] = []
    tasks = []
    for day in sorted(grid):
        todo = []
        for strategy in grid[day]:
            hit = cache.get(day, strategy)
            if hit is not None:
                results.append(hit)
            else:
                todo.append(strategy)
        if todo:
            tasks.append((day, day_stream(snapshots, day, ri), exogenous, todo, spec, ri))

    if not tasks:
        return results
    n_runs = sum(len(t[3]) for t in tasks)
    logger.info(f"Backtesting {n_runs} (day, strategy) runs over {len(tasks)} days with {max_workers} worker(s)")
    started = time.perf_counter()
    if max_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            batches = list(pool.map(_run_day_batch, tasks))
    else:
        batches = []
        for task in tasks:
            with log_context(day=task[0]):
                batches.append(_run_day_batch(task))
    for batch in batches:
        for result in batch:
            cache.put(result)
            results.append(result)
    logger.info(f"Backtested {n_runs} runs in {time.perf_counter() - started:.1f}s")
    return results


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_backtest(
    config: BacktestConfig,
    snapshots: Optional[Sequence[OrderBookSnapshot]] = None,
    exogenous: Optional[ExogenousSeries] = None,
) -> BacktestRun:
    """Walk the out-of-sample span one day at a time

    Each day selects a pool on the trailing window, retrains the classifier,
    predicts the day's FCR strategy and books that strategy's realized profit.
    """
    if snapshots is None or exogenous is None:
        snapshots, exogenous = load_market(config)
    key = fingerprint(config)
    spec = config.spec
    catalogue = default_catalogue(spec)
    catalogue_ids = [s.strategy_id for s in catalogue]
    fcr_only, idm_only = only_fcr(spec), only_idm()
    extras = [s for s in (fcr_only, idm_only) if s.strategy_id not in catalogue_ids]
    oos_days = config.oos_days()
    simulated = config.simulated_days()

    logger.info(
        f"🚀 Backtest {config.start}..{config.end}: {len(oos_days)} out-of-sample days, "
        f"{len(catalogue)} strategies, window {config.classifier.window_days}"
    )
    grid = {d: list(catalogue) + (extras if d in set(oos_days) else []) for d in simulated}
    cache = ResultCache(config.cache_dir, key)
    results = compute_results(snapshots, exogenous, grid, spec, config.ri, config.max_workers, cache)
    profits = ProfitMatrix.from_results(results, list(catalogue) + extras)
    catalogue_profits = profits.restrict(strategy_ids=catalogue_ids)

    features = feature_matrix(exogenous, simulated, config.classifier.daa_zones, origin=config.data_days()[0])
    pool_solver = MilpSolver("highs")

    decisions: List[DailyDecision] = []
    incumbent: Optional[Hyperparameters] = None
    for day in oos_days:
        with log_context(day=day):
            train_days = [d for d in config.training_days(day) if d in catalogue_profits.total.index]
            window = catalogue_profits.restrict(train_days).complete()
            pool = select_pool(window, config.classifier.pool_size, pool_solver)
            pool_ids = [s.strategy_id for s in pool]
            labels = label_days(window, pool)
            model = tune_and_train(
                features,
                labels,
                window.restrict(strategy_ids=pool_ids),
                config.classifier,
                seed=config.seed,
                incumbent=incumbent,
                pool=pool,
            )
            incumbent = model.hyperparameters
            decision = predict(model, features.loc[day])
            dynamic = best_strategy(window)
            decisions.append(DailyDecision(
                day=day,
                pool=pool_ids,
                decision=decision.strategy_id,
                dynamic=dynamic.strategy_id,
                hyperparameters=model.hyperparameters,
                validation_profit=model.validation_profit,
            ))
            logger.info(
                f"Day {day}: pool {pool_ids} -> {decision.strategy_id} "
                f"(profit {profits.total.at[day, decision.strategy_id]:.2f} EUR)"
            )

    static = best_strategy(catalogue_profits.complete())
    policy_decisions = benchmark_decisions(
        oos_days,
        profits,
        catalogue_ids,
        pools={d.day: d.pool for d in decisions},
        lcs={d.day: d.decision for d in decisions},
        dynamic={d.day: d.dynamic for d in decisions},
        static=static.strategy_id,
        only_fcr=fcr_only.strategy_id,
        only_idm=idm_only.strategy_id,
    )
    report = evaluate_policies(policy_decisions, profits)
    totals = report.totals()
    logger.info("✅ Backtest finished: " + ", ".join(f"{k}={v:.0f}" for k, v in totals.items()))
    return BacktestRun(
        config=config,
        profits=profits,
        catalogue=catalogue_ids,
        decisions=decisions,
        report=report,
        fingerprint=key,
    )


def train_as_of(
    config: BacktestConfig,
    as_of: date,
    snapshots: Optional[Sequence[OrderBookSnapshot]] = None,
    exogenous: Optional[ExogenousSeries] = None,
):
    """Pool and model for delivery day `as_of`, trained on the window before it"""
    if snapshots is None or exogenous is None:
        snapshots, exogenous = load_market(config)
    catalogue = default_catalogue(config.spec)
    train_days = config.training_days(as_of)
    cache = ResultCache(config.cache_dir, fingerprint(config))
    results = compute_results(
        snapshots, exogenous, {d: list(catalogue) for d in train_days}, config.spec, config.ri, config.max_workers, cache
    )
    window = ProfitMatrix.from_results(results, catalogue).complete()
    pool = select_pool(window, config.classifier.pool_size, MilpSolver("highs"))
    features = feature_matrix(exogenous, train_days + [as_of], config.classifier.daa_zones, origin=config.data_days()[0])
    model = tune_and_train(
        features,
        label_days(window, pool),
        window.restrict(strategy_ids=[s.strategy_id for s in pool]),
        config.classifier,
        seed=config.seed,
        pool=pool,
    )
    return model, predict(model, features.loc[as_of]), window


def decisions_frame(decisions: Iterable[DailyDecision]) -> pd.DataFrame:
    rows = [
        {
            "date": d.day.isoformat(),
            "pool": " ".join(d.pool),
            "decision": d.decision,
            "dynamic": d.dynamic,
            "validation_profit": d.validation_profit,
            "hyperparameters": json.dumps(d.hyperparameters.model_dump(), sort_keys=True) if d.hyperparameters else "",
        }
        for d in decisions
    ]
    return pd.DataFrame(rows, columns=["date", "pool", "decision", "dynamic", "validation_profit", "hyperparameters"])
