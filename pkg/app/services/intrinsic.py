"""Order-book intrinsic problem: instance construction and exact solve"""

from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence
import logging
import time

import numpy as np
from pydantic import BaseModel
from scipy import sparse

from app.exceptions import StrategyInfeasibleError
from app.models.schemas import (
    BessSpec,
    FcrStrategy,
    IntrinsicInstance,
    OrderBookSnapshot,
    TradePlan,
)
from app.services.fcr_physics import day_start, efa_block_index, power_bounds, soc_envelope
from app.services.milp_solver import MilpProblem, MilpSolver
from app.services.monitoring import metrics_collector

logger = logging.getLogger(__name__)

COMPLEMENTARITY_TOL = 1e-8
TIE_BREAK_TOL = 1e-7
GRID_EPS = 1e-9
GRID_NODE_LIMIT = 5_000


class CalendarContext(BaseModel):
    """Where in the trading day an instance is built"""

    now: datetime
    delivery_day: date
    product_duration_h: float = 0.25
    gate_closure_minutes: int = 30
    terminal_soc_mwh: Optional[float] = 2.0
    cycles_left: float = 2.0


def tradeable_periods(delivery_day: date, now: datetime, duration_h: float, lead_minutes: int) -> List[datetime]:
    """Delivery starts of the day still open for trading at `now`"""
    first = day_start(delivery_day)
    count = int(round(24 / duration_h))
    cutoff = now + timedelta(minutes=lead_minutes)
    starts = [first + timedelta(hours=k * duration_h) for k in range(count)]
    return [s for s in starts if s > cutoff]


def build_instance(
    snapshot: OrderBookSnapshot,
    positions: Dict[datetime, float],
    soc: float,
    strategy: FcrStrategy,
    spec: BessSpec,
    context: CalendarContext,
) -> IntrinsicInstance:
    """Assemble the intrinsic problem for the products still tradeable at context.now

    Per-period bounds come from the EFA block containing each delivery start.
    """
    starts = tradeable_periods(
        context.delivery_day, context.now, context.product_duration_h, context.gate_closure_minutes
    )
    index = {s: k for k, s in enumerate(starts)}

    b_lo, b_hi, c_lo, c_hi = [], [], [], []
    for s in starts:
        x_i = strategy.block_bid(efa_block_index(s))
        lo, hi = power_bounds(spec, x_i)
        b_lo.append(lo)
        b_hi.append(hi)
        e_lo, e_hi = soc_envelope(spec, x_i)
        c_lo.append(e_lo)
        c_hi.append(e_hi)

    if starts and context.terminal_soc_mwh is not None:
        if not (c_lo[-1] - 1e-9 <= context.terminal_soc_mwh <= c_hi[-1] + 1e-9):
            raise StrategyInfeasibleError(
                f"terminal SoC {context.terminal_soc_mwh} MWh outside the final envelope [{c_lo[-1]}, {c_hi[-1]}] "
                f"for strategy {strategy.strategy_id}"
            )

    order_ids, order_period, order_side, order_price, order_qty = [], [], [], [], []
    for product in snapshot.products():
        k = index.get(product.start)
        if k is None or product.duration_h != context.product_duration_h:
            continue
        book = snapshot.books[product]
        for order in (*book.bids, *book.asks):
            order_ids.append(order.order_id)
            order_period.append(k)
            order_side.append(int(order.side))
            order_price.append(float(order.limit_price))
            order_qty.append(float(order.quantity))

    return IntrinsicInstance(
        delta_h=context.product_duration_h,
        period_starts=starts,
        order_ids=order_ids,
        order_period=order_period,
        order_side=order_side,
        order_price=order_price,
        order_qty=order_qty,
        b0=[float(positions.get(s, 0.0)) for s in starts],
        b_lo=b_lo,
        b_hi=b_hi,
        c_lo=c_lo,
        c_hi=c_hi,
        c0=float(soc),
        c_terminal=context.terminal_soc_mwh,
        cycles_left=max(float(context.cycles_left), 0.0),
        energy_mwh=spec.energy_mwh,
        eta_ch=spec.eta_ch,
        eta_dis=spec.eta_dis,
        kappa=spec.degradation_eur_mwh,
    )


# ---------------------------------------------------------------------------
# Formulation
# ---------------------------------------------------------------------------

def _formulate(inst: IntrinsicInstance, with_binaries: bool, terminal_tol: Optional[float] = None) -> MilpProblem:
    """Columns: q (orders), b+ (periods), b- (periods)[, delta (periods)]

    The terminal SoC is an equality, or a band of half-width terminal_tol when given.
    """
    n, t = inst.n_orders, inst.n_periods
    d = inst.delta_h
    cols = n + 2 * t + (t if with_binaries else 0)
    sigma = np.asarray(inst.order_side, dtype=float)
    price = np.asarray(inst.order_price, dtype=float)
    period = np.asarray(inst.order_period, dtype=int)
    b_lo = np.asarray(inst.b_lo)
    b_hi = np.asarray(inst.b_hi)
    up_cap = np.maximum(b_hi, 0.0)
    down_cap = np.maximum(-b_lo, 0.0)

    c = np.zeros(cols)
    c[:n] = d * price * sigma
    c[n:n + 2 * t] = inst.kappa * d

    # position balance: b+ - b- - sum(sigma q) = b0
    eye = sparse.identity(t, format="csr")
    q_map = sparse.csr_matrix((-sigma, (period, np.arange(n))), shape=(t, n))
    blocks = [q_map, eye, -eye]
    if with_binaries:
        blocks.append(sparse.csr_matrix((t, t)))
    A_eq = sparse.hstack(blocks).tocsr()
    b_eq = np.asarray(inst.b0, dtype=float)

    # cumulative energy rows
    lower = sparse.csr_matrix(np.tril(np.ones((t, t))))
    energy = [sparse.csr_matrix((t, n)), d * inst.eta_ch * lower, -(d / inst.eta_dis) * lower]
    if with_binaries:
        energy.append(sparse.csr_matrix((t, t)))
    energy = sparse.hstack(energy).tocsr()

    c0 = inst.c0
    rows = [energy, -energy]
    rhs = [np.asarray(inst.c_hi) - c0, c0 - np.asarray(inst.c_lo)]

    cycle = np.zeros((1, cols))
    cycle[0, n:n + 2 * t] = d
    rows.append(sparse.csr_matrix(cycle))
    rhs.append(np.array([2.0 * inst.energy_mwh * inst.cycles_left]))

    if with_binaries:
        zeros_q = sparse.csr_matrix((t, n))
        zeros_t = sparse.csr_matrix((t, t))
        # b+ <= delta * cap_up ; b- <= (1 - delta) * cap_down
        rows.append(sparse.hstack([zeros_q, eye, zeros_t, -sparse.diags(up_cap)]).tocsr())
        rhs.append(np.zeros(t))
        rows.append(sparse.hstack([zeros_q, zeros_t, eye, sparse.diags(down_cap)]).tocsr())
        rhs.append(down_cap)

    if inst.c_terminal is not None and t:
        target = inst.c_terminal - c0
        if terminal_tol is None:
            A_eq = sparse.vstack([A_eq, energy[t - 1]]).tocsr()
            b_eq = np.concatenate([b_eq, [target]])
        else:
            rows += [energy[t - 1], -energy[t - 1]]
            rhs += [np.array([target + terminal_tol]), np.array([terminal_tol - target])]

    A_ub = sparse.vstack(rows).tocsr()
    b_ub = np.concatenate(rhs)

    lb = np.zeros(cols)
    ub = np.concatenate([np.asarray(inst.order_qty, dtype=float), up_cap, down_cap])
    integrality = np.zeros(cols, dtype=bool)
    if with_binaries:
        ub = np.concatenate([ub, np.ones(t)])
        integrality[n + 2 * t:] = True
    return MilpProblem(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub, integrality=integrality)


class ScheduleCheck(NamedTuple):
    b: np.ndarray
    c: np.ndarray
    cash: float
    degradation_delta: float
    violation: float  # worst bound, envelope or cycle excess
    terminal_gap: float  # |c_T - C_T|

    @property
    def value(self) -> float:
        return self.cash - self.degradation_delta


def evaluate(inst: IntrinsicInstance, q) -> ScheduleCheck:
    """Schedule, cash flow and worst constraint violation implied by matched quantities"""
    q = np.asarray(q, dtype=float)
    t = inst.n_periods
    d = inst.delta_h
    sigma = np.asarray(inst.order_side, dtype=float)
    b0 = np.asarray(inst.b0, dtype=float)
    b = b0.copy()
    if q.size:
        np.add.at(b, np.asarray(inst.order_period, dtype=int), sigma * q)
    charge = np.maximum(b, 0.0)
    discharge = np.maximum(-b, 0.0)
    c = inst.c0 + np.cumsum(d * (inst.eta_ch * charge - discharge / inst.eta_dis))
    cash = float(-d * np.dot(np.asarray(inst.order_price, dtype=float) * sigma, q)) if q.size else 0.0
    degradation_delta = inst.kappa * d * float(np.abs(b).sum() - np.abs(b0).sum())

    violation = 0.0
    if t:
        violation = max(
            violation,
            float(np.max(b - np.asarray(inst.b_hi))),
            float(np.max(np.asarray(inst.b_lo) - b)),
            float(np.max(c - np.asarray(inst.c_hi))),
            float(np.max(np.asarray(inst.c_lo) - c)),
            d * float(np.abs(b).sum()) - 2.0 * inst.energy_mwh * inst.cycles_left,
        )
    terminal_gap = 0.0
    if t and inst.c_terminal is not None:
        terminal_gap = abs(float(c[-1]) - inst.c_terminal)
    if q.size:
        violation = max(violation, float(np.max(-q)), float(np.max(q - np.asarray(inst.order_qty))))
    return ScheduleCheck(b, c, cash, degradation_delta, max(violation, 0.0), terminal_gap)


def _plan_from(inst: IntrinsicInstance, q: np.ndarray, status: str, path: str, nodes: int) -> TradePlan:
    q = np.clip(q, 0.0, np.asarray(inst.order_qty, dtype=float)) if q.size else q
    check = evaluate(inst, q)
    planned = inst.kappa * inst.delta_h * float(np.abs(check.b).sum())
    return TradePlan(
        status=status,
        q=[float(v) for v in q],
        b=[float(v) for v in check.b],
        c=[float(v) for v in check.c],
        objective=check.value,
        cash=check.cash,
        degradation=planned,
        path=path,
        nodes=nodes,
    )


def _tie_break(solver: MilpSolver, problem: MilpProblem, x: np.ndarray, inst: IntrinsicInstance) -> np.ndarray:
    """Among optima, prefer the smallest total position change sum|b - b0|"""
    n, t = inst.n_orders, inst.n_periods
    cols = problem.size
    opt = float(problem.c @ x)

    lb = problem.lb.copy()
    ub = problem.ub.copy()
    fixed = problem.integrality
    lb[fixed] = np.round(x[fixed])
    ub[fixed] = np.round(x[fixed])

    # extend with u (one per period), minimize sum(u)
    pad = sparse.csr_matrix((problem.A_ub.shape[0], t))
    A_ub = sparse.hstack([problem.A_ub, pad]).tocsr()
    A_eq = sparse.hstack([problem.A_eq, sparse.csr_matrix((problem.A_eq.shape[0], t))]).tocsr()
    net = sparse.hstack([
        sparse.csr_matrix((t, n)),
        sparse.identity(t),
        -sparse.identity(t),
        sparse.csr_matrix((t, cols - n - 2 * t)),
    ]).tocsr()
    minus_u = -sparse.identity(t, format="csr")
    b0 = np.asarray(inst.b0, dtype=float)
    objective_row = sparse.csr_matrix(np.concatenate([problem.c, np.zeros(t)])[None, :])
    A_ub = sparse.vstack([
        A_ub,
        sparse.hstack([net, minus_u]),
        sparse.hstack([-net, minus_u]),
        objective_row,
    ]).tocsr()
    b_ub = np.concatenate([problem.b_ub, b0, -b0, [opt + TIE_BREAK_TOL * max(1.0, abs(opt))]])

    second = MilpProblem(
        np.concatenate([np.zeros(cols), np.ones(t)]),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=problem.b_eq,
        lb=np.concatenate([lb, np.zeros(t)]),
        ub=np.concatenate([ub, np.full(t, np.inf)]),
    )
    res = solver.solve_lp(second)
    if res.status != "optimal":
        logger.debug(f"Tie-break pass returned {res.status}; keeping first-pass plan")
        return x
    bp = res.x[n:n + t]
    bm = res.x[n + t:n + 2 * t]
    if np.any(np.minimum(bp, bm) > COMPLEMENTARITY_TOL):
        return x
    return res.x[:cols]


def solve(inst: IntrinsicInstance, solver: Optional[MilpSolver] = None) -> TradePlan:
    """Optimal trades for one instance; infeasibility is returned, never raised"""
    solver = solver or MilpSolver()
    started = time.perf_counter()
    n, t = inst.n_orders, inst.n_periods

    if t == 0:
        return TradePlan(status="optimal", path="empty")

    x = None
    path = ""
    nodes = 0
    status = "optimal"
    problem = None

    fast = inst.kappa >= 0 and all(p >= 0 for p in inst.order_price)
    if fast:
        relaxed = _formulate(inst, with_binaries=False)
        res = solver.solve_lp(relaxed)
        nodes += res.nodes
        if res.status == "infeasible":
            metrics_collector.record_solve("lp_fast_path", "infeasible", time.perf_counter() - started)
            logger.debug(f"Intrinsic infeasible on LP relaxation ({t} periods, {n} orders)")
            return TradePlan.infeasible(path="lp_fast_path", nodes=nodes)
        if res.status == "optimal":
            bp = res.x[n:n + t]
            bm = res.x[n + t:n + 2 * t]
            if np.all(np.minimum(bp, bm) <= COMPLEMENTARITY_TOL):
                x, path, problem = res.x, "lp_fast_path", relaxed

    if x is None:
        problem = _formulate(inst, with_binaries=True)
        res = solver.solve(problem)
        nodes += res.nodes
        if res.x is None:
            metrics_collector.record_solve(res.path, res.status, time.perf_counter() - started)
            logger.debug(f"Intrinsic {res.status} on {res.path} ({t} periods, {n} orders)")
            return TradePlan.infeasible(path=res.path, nodes=nodes)
        x, path, status = res.x, res.path, res.status

    if n and np.any(x[:n] > TIE_BREAK_TOL):
        x = _tie_break(solver, problem, x, inst)

    plan = _plan_from(inst, x[:n], status, path, nodes)
    metrics_collector.record_solve(path, status, time.perf_counter() - started)
    logger.debug(f"Intrinsic {status} via {path}: objective {plan.objective:.4f} EUR, {nodes} LPs")
    return plan


def solve_on_grid(
    inst: IntrinsicInstance,
    step: float,
    solver: Optional[MilpSolver] = None,
    terminal_tol: float = 0.0,
    orders: Optional[Sequence[int]] = None,
) -> TradePlan:
    """Best trades with every matched quantity a multiple of `step`

    Quantities become integer lot counts. Only `orders` may trade (all when
    None) and the terminal SoC may miss its target by terminal_tol. The
    search stops after GRID_NODE_LIMIT nodes with the incumbent, if any.
    """
    solver = solver or MilpSolver()
    started = time.perf_counter()
    n, t = inst.n_orders, inst.n_periods
    if t == 0 or n == 0:
        return TradePlan(status="optimal", q=[0.0] * n, path="empty")

    problem = _formulate(inst, with_binaries=True, terminal_tol=terminal_tol)
    scale = np.ones(problem.size)
    scale[:n] = step
    to_lots = sparse.diags(scale)

    lots = np.floor(np.asarray(inst.order_qty, dtype=float) / step + GRID_EPS)
    if orders is not None:
        allowed = np.zeros(n, dtype=bool)
        allowed[np.asarray(orders, dtype=int)] = True
        lots[~allowed] = 0.0
    ub = problem.ub.copy()
    ub[:n] = lots
    integrality = problem.integrality.copy()
    integrality[:n] = True

    grid = MilpProblem(
        problem.c * scale,
        A_ub=problem.A_ub @ to_lots,
        b_ub=problem.b_ub,
        A_eq=problem.A_eq @ to_lots,
        b_eq=problem.b_eq,
        lb=problem.lb,
        ub=ub,
        integrality=integrality,
    )
    capped = MilpSolver(solver.backend, solver.gap, min(solver.max_nodes, GRID_NODE_LIMIT))
    res = capped.solve(grid)
    path = f"grid_{res.path}"
    metrics_collector.record_solve(path, res.status, time.perf_counter() - started)
    if res.x is None:
        logger.debug(f"Grid intrinsic {res.status} after {res.nodes} nodes ({t} periods, {n} orders)")
        return TradePlan.infeasible(path=path, nodes=res.nodes)

    q = np.round(np.round(res.x[:n]) * step, 10)
    plan = _plan_from(inst, q, res.status, path, res.nodes)
    logger.debug(f"Grid intrinsic {res.status}: objective {plan.objective:.4f} EUR, {res.nodes} nodes")
    return plan


# ---------------------------------------------------------------------------
# Reproduction files
# ---------------------------------------------------------------------------

def dump_instance(inst: IntrinsicInstance, directory: str, name: str) -> str:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    target = path / f"{name}.json"
    target.write_text(inst.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Dumped intrinsic instance to {target}")
    return str(target)


def load_instance(path: str) -> IntrinsicInstance:
    return IntrinsicInstance.model_validate_json(Path(path).read_text(encoding="utf-8"))
