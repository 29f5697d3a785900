"""Rolling intrinsic: the per-day re-solve loop over a snapshot stream"""

from datetime import date, datetime, timedelta
from typing import Dict, List, Optional, Sequence, Tuple
import bisect
import logging
import time

import numpy as np
from pydantic import BaseModel

from app.exceptions import StreamGapError
from app.models.schemas import (
    BessSpec,
    DayResult,
    ExogenousSeries,
    FcrStrategy,
    OrderBookSnapshot,
    RiConfig,
    TradeRecord,
    Violation,
)
from app.services.data_processor import restrict_to_day
from app.services.fcr_physics import (
    day_start,
    drift_between,
    efa_block_index,
    fcr_revenue,
    soc_envelope,
)
from app.services.intrinsic import (
    GRID_EPS,
    CalendarContext,
    build_instance,
    dump_instance,
    evaluate,
    solve,
    solve_on_grid,
    tradeable_periods,
)
from app.services.milp_solver import MilpSolver
from app.services.monitoring import metrics_collector
from app.services.observability import log_context
from app.services.order_book import deplete

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-7


class RiState(BaseModel):
    """Mutable state of one (day, strategy) run"""

    positions: Dict[datetime, float] = {}
    c0: float
    pi: float = 0.0
    cash: float = 0.0
    degradation: float = 0.0
    cycles_left: float
    tradeable: List[datetime] = []
    prior: List[datetime] = []
    trades: List[TradeRecord] = []
    rebalance_values: List[float] = []


def round_trades(q: Sequence[float], delta: float, q_max: Optional[Sequence[float]] = None) -> np.ndarray:
    """Round matched quantities to the nearest multiple of delta, halves up, clamped to [0, Q_i]"""
    values = np.asarray(q, dtype=float)
    rounded = np.floor(values / delta + 0.5 + GRID_EPS) * delta
    upper = np.asarray(q_max, dtype=float) if q_max is not None else np.full(values.shape, np.inf)
    return np.round(np.clip(rounded, 0.0, upper), 10)


def _round_toward_zero(q: np.ndarray, delta: float, q_max: Sequence[float]) -> np.ndarray:
    rounded = np.floor(q / delta + GRID_EPS) * delta
    return np.round(np.clip(rounded, 0.0, np.asarray(q_max, dtype=float)), 10)


def apply_drift(
    state: RiState,
    exogenous: ExogenousSeries,
    start: datetime,
    end: datetime,
    strategy: FcrStrategy,
    spec: BessSpec,
    delivery_day: date,
) -> RiState:
    """State with c0 moved by the FCR drift accumulated over [start, end)"""
    drift = drift_between(exogenous, start, end, strategy, spec, delivery_day)
    if drift == 0.0:
        return state
    return state.model_copy(update={"c0": state.c0 + drift})


def _check_stream(
    snapshots: List[OrderBookSnapshot], open_at: datetime, close_at: datetime, max_gap: timedelta
) -> None:
    if not snapshots:
        return
    stamps = [open_at] + [s.timestamp for s in snapshots] + [close_at]
    for prev, nxt in zip(stamps, stamps[1:]):
        if nxt - prev > max_gap:
            raise StreamGapError(
                f"snapshot stream gap of {nxt - prev} between {prev.isoformat()} and {nxt.isoformat()}"
            )


def _retire(
    state: RiState,
    periods: List[datetime],
    strategy: FcrStrategy,
    spec: BessSpec,
    delta_h: float,
    terminal_tol: float,
    violations: List[Violation],
    now: datetime,
) -> None:
    """Fold the schedule of periods leaving the tradeable set into c0 and charge degradation"""
    for start in sorted(periods):
        b = state.positions.get(start, 0.0)
        if b > 0:
            state.c0 += delta_h * spec.eta_ch * b
        else:
            state.c0 += delta_h * b / spec.eta_dis
        charge = spec.degradation_eur_mwh * delta_h * abs(b)
        state.degradation += charge
        state.pi -= charge
        state.cycles_left -= delta_h * abs(b) / (2.0 * spec.energy_mwh)

        lo, hi = soc_envelope(spec, strategy.block_bid(efa_block_index(start)))
        excess = max(state.c0 - hi, lo - state.c0)
        if excess > terminal_tol:
            violations.append(Violation(
                timestamp=now,
                kind="envelope",
                detail=f"SoC {state.c0:.4f} MWh after period {start.isoformat()} outside [{lo}, {hi}]",
                magnitude=excess,
            ))
            logger.warning(
                f"Envelope violation after {start.isoformat()}: SoC {state.c0:.4f} MWh not in [{lo}, {hi}]"
            )


def run_day(
    snapshots: Sequence[OrderBookSnapshot],
    exogenous: ExogenousSeries,
    strategy: FcrStrategy,
    spec: BessSpec,
    config: RiConfig,
    delivery_day: date,
    solver: Optional[MilpSolver] = None,
) -> DayResult:
    """Trade one delivery day under one FCR strategy

    Trading opens at trading_start_hour on the previous day and re-solves
    every resolve_minutes until the last product's gate closure.
    """
    started = time.perf_counter()
    strategy.check_admissible(spec)
    for x_i in set(strategy.x):
        soc_envelope(spec, x_i)
    solver = solver or MilpSolver(config.milp_backend, config.milp_gap, config.milp_max_nodes)

    delta_h = config.product_duration_h
    lead = config.gate_closure_minutes
    open_at = day_start(delivery_day) - timedelta(days=1) + timedelta(hours=config.trading_start_hour)
    last_start = day_start(delivery_day) + timedelta(hours=24 - delta_h)
    close_at = last_start - timedelta(minutes=lead)
    step = timedelta(minutes=config.resolve_minutes)
    terminal_tol = spec.min_trade_mw * delta_h / spec.eta_dis + FEASIBILITY_TOL

    day_snaps = [
        s for s in snapshots
        if open_at <= s.timestamp < close_at and any(p.start.date() == delivery_day for p in s.books)
    ]
    _check_stream(day_snaps, open_at, close_at, timedelta(minutes=config.max_snapshot_gap_minutes))
    snap_times = [s.timestamp for s in day_snaps]
    restricted: Dict[datetime, OrderBookSnapshot] = {}

    state = RiState(c0=config.initial_soc_mwh, cycles_left=spec.cycles_per_day)
    violations: List[Violation] = []
    trajectory: List[Tuple[datetime, float]] = []
    infeasible = 0
    solves = 0
    filled: Dict[str, float] = {}
    filled_at: Optional[datetime] = None
    last_key = None
    last_time = open_at
    first = True

    with log_context(day=delivery_day, strategy=strategy.strategy_id):
        now = open_at
        while True:
            tradeable = tradeable_periods(delivery_day, now, delta_h, lead)
            if not tradeable:
                break

            # retire periods that left the tradeable set, then apply drift
            retired = [p for p in state.tradeable if p not in set(tradeable)]
            _retire(state, retired, strategy, spec, delta_h, terminal_tol, violations, now)
            state = apply_drift(state, exogenous, last_time, now, strategy, spec, delivery_day)
            if first:
                state.cycles_left = spec.cycles_per_day
                first = False
            state.prior = state.tradeable
            state.tradeable = tradeable
            for p in tradeable:
                state.positions.setdefault(p, 0.0)

            # as-of snapshot, depleted by fills already taken from it
            pos = bisect.bisect_right(snap_times, now) - 1
            snap_ts = snap_times[pos] if pos >= 0 else None
            if snap_ts is None:
                snapshot = OrderBookSnapshot.model_construct(timestamp=now, books={})
            else:
                if snap_ts not in restricted:
                    restricted[snap_ts] = restrict_to_day(day_snaps[pos], delivery_day)
                snapshot = restricted[snap_ts]
                if filled_at != snap_ts:
                    filled, filled_at = {}, snap_ts
                snapshot = deplete(snapshot, filled)

            key = (
                snap_ts,
                len(filled),
                len(tradeable),
                round(state.c0, 12),
                tuple(round(state.positions[p], 12) for p in tradeable),
                round(state.cycles_left, 12),
            )
            if key != last_key:
                last_key = key
                context = CalendarContext(
                    now=now,
                    delivery_day=delivery_day,
                    product_duration_h=delta_h,
                    gate_closure_minutes=lead,
                    terminal_soc_mwh=config.terminal_soc_mwh,
                    cycles_left=state.cycles_left,
                )
                inst = build_instance(snapshot, state.positions, state.c0, strategy, spec, context)
                plan = solve(inst, solver)
                solves += 1
                if not plan.feasible:
                    infeasible += 1
                    violations.append(Violation(
                        timestamp=now,
                        kind="infeasible_solve",
                        detail=f"no feasible schedule with c0={state.c0:.4f} MWh",
                    ))
                    logger.warning(f"Intrinsic infeasible at {now.isoformat()} (c0={state.c0:.4f} MWh)")
                    if config.dump_instance_dir:
                        dump_instance(
                            inst,
                            config.dump_instance_dir,
                            f"{delivery_day}-{strategy.strategy_id}-{now:%Y%m%dT%H%M}",
                        )
                else:
                    executed = _execute(inst, plan, state, spec, now, terminal_tol, solver)
                    if executed:
                        for order_id, qty in executed.items():
                            filled[order_id] = filled.get(order_id, 0.0) + qty

            trajectory.append((now, state.c0))
            last_time = now
            now = now + step

        # periods still scheduled at the end of the loop
        _retire(state, state.tradeable, strategy, spec, delta_h, terminal_tol, violations, now)
        state.prior, state.tradeable = state.tradeable, []
        state = apply_drift(
            state, exogenous, last_time, day_start(delivery_day + timedelta(days=1)), strategy, spec, delivery_day
        )
        trajectory.append((day_start(delivery_day + timedelta(days=1)), state.c0))

    pi_fcr = fcr_revenue(strategy, exogenous.fcr_prices(delivery_day))
    pi_idm = state.pi
    throughput = delta_h * sum(abs(b) for b in state.positions.values())
    elapsed = time.perf_counter() - started
    metrics_collector.record_day_run(strategy.strategy_id, elapsed, infeasible)
    logger.debug(
        f"Day {delivery_day} strategy {strategy.strategy_id}: pi_idm={pi_idm:.2f} pi_fcr={pi_fcr:.2f} "
        f"solves={solves} infeasible={infeasible} in {elapsed:.2f}s"
    )
    return DayResult(
        day=delivery_day,
        strategy=strategy,
        pi_idm=pi_idm,
        pi_fcr=pi_fcr,
        pi_total=pi_fcr + pi_idm,
        degradation_eur=state.degradation,
        soc_trajectory=trajectory,
        infeasible_count=infeasible,
        solve_count=solves,
        violations=violations,
        trades=state.trades,
        throughput_mwh=throughput,
        rebalance_values=state.rebalance_values,
    )


def _execute(
    inst, plan, state: RiState, spec: BessSpec, now: datetime, terminal_tol: float, solver: MilpSolver
) -> Dict[str, float]:
    """Book an implementable version of the plan

    Candidates come in order: nearest rounding, rounding toward zero, then a
    re-solve on the trade grid over the orders the plan touches. The first
    candidate that keeps every bound and adds non-negative value is booked.
    When the current schedule is already out of bounds the first candidate
    that restores it, or failing that the least violating one, is booked
    regardless of value.
    """
    if not inst.n_orders:
        return {}
    raw = np.asarray(plan.q, dtype=float)
    q_max = inst.order_qty
    step = spec.min_trade_mw

    def candidates():
        yield round_trades(raw, step, q_max)
        yield _round_toward_zero(raw, step, q_max)
        support = np.flatnonzero(raw > FEASIBILITY_TOL)
        if support.size:
            grid = solve_on_grid(inst, step, solver, terminal_tol + 0.5 * FEASIBILITY_TOL, orders=support)
            if grid.feasible:
                yield np.asarray(grid.q, dtype=float)

    def excess(check) -> float:
        return max(check.violation, check.terminal_gap - terminal_tol)

    current = evaluate(inst, np.zeros(inst.n_orders))
    chosen = None
    chosen_check = None
    if excess(current) <= FEASIBILITY_TOL:
        for cand in candidates():
            check = evaluate(inst, cand)
            if excess(check) <= FEASIBILITY_TOL and check.value >= -1e-9:
                chosen, chosen_check = cand, check
                break
    else:
        tried = []
        for cand in candidates():
            check = evaluate(inst, cand)
            if excess(check) <= FEASIBILITY_TOL:
                chosen, chosen_check = cand, check
                break
            tried.append((cand, check))
        if chosen is None and tried:
            cand, check = min(tried, key=lambda item: excess(item[1]))
            if excess(check) < excess(current):
                chosen, chosen_check = cand, check

    if chosen is None or not np.any(chosen > 0):
        return {}

    executed: Dict[str, float] = {}
    d = inst.delta_h
    for i in np.flatnonzero(chosen > 0):
        qty = float(chosen[i])
        sigma = inst.order_side[i]
        price = inst.order_price[i]
        period = inst.period_starts[inst.order_period[i]]
        cash = -d * price * sigma * qty
        state.positions[period] = state.positions.get(period, 0.0) + sigma * qty
        state.cash += cash
        state.pi += cash
        state.trades.append(TradeRecord(
            solve_time=now,
            product_start=period,
            side="buy" if sigma > 0 else "sell",
            price=price,
            mw=qty,
            cash_eur=cash,
            order_id=inst.order_ids[i],
        ))
        executed[inst.order_ids[i]] = qty
    state.rebalance_values.append(chosen_check.value)
    logger.debug(
        f"Booked {len(executed)} fills at {now.isoformat()}: cash {chosen_check.cash:.2f} EUR, "
        f"value {chosen_check.value:.2f} EUR"
    )
    return executed


def replay_trade_log(trades: Sequence[TradeRecord], spec: BessSpec, delta_h: float) -> float:
    """Realized intraday profit recomputed from fills alone"""
    cash = sum(-delta_h * t.price * (1 if t.side == "buy" else -1) * t.mw for t in trades)
    net: Dict[datetime, float] = {}
    for t in trades:
        net[t.product_start] = net.get(t.product_start, 0.0) + (t.mw if t.side == "buy" else -t.mw)
    degradation = spec.degradation_eur_mwh * delta_h * sum(abs(v) for v in net.values())
    return cash - degradation
