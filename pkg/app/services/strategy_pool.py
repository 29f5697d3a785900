"""FCR strategy catalogue, profit matrix and pool selection"""

from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
from scipy import sparse

from app.exceptions import DataError, DomainError
from app.models.schemas import BessSpec, DayResult, FcrStrategy
from app.models.tables import PROFIT_MATRIX_COLUMNS
from app.services.milp_solver import MilpProblem, MilpSolver

logger = logging.getLogger(__name__)

# Catalogue at a 10 MW battery, in reporting order
BASE_CATALOGUE: Tuple[Tuple[int, ...], ...] = (
    (5, 5, 5, 8, 8, 8),
    (8, 8, 8, 5, 5, 5),
    (8, 8, 8, 0, 0, 0),
    (8, 8, 8, 0, 0, 5),
    (8, 8, 8, 0, 0, 8),
    (8, 8, 8, 0, 5, 0),
    (8, 8, 8, 0, 5, 5),
    (8, 8, 8, 0, 5, 8),
    (8, 8, 8, 0, 8, 0),
    (8, 8, 8, 0, 8, 5),
    (8, 8, 8, 0, 8, 8),
    (8, 8, 8, 5, 0, 0),
    (8, 8, 8, 5, 0, 5),
    (8, 8, 8, 5, 0, 8),
    (8, 8, 8, 5, 5, 0),
    (8, 8, 8, 5, 5, 8),
    (8, 8, 8, 5, 8, 0),
    (8, 8, 8, 5, 8, 5),
    (8, 8, 8, 5, 8, 8),
    (8, 8, 8, 8, 0, 0),
    (8, 8, 8, 8, 0, 5),
    (8, 8, 8, 8, 0, 8),
    (8, 8, 8, 8, 5, 0),
    (8, 8, 8, 8, 5, 5),
    (8, 8, 8, 8, 5, 8),
    (8, 8, 8, 8, 8, 0),
    (8, 8, 8, 8, 8, 5),
    (8, 8, 8, 8, 8, 8),
)
BASE_CAP = 8


def default_catalogue(spec: BessSpec) -> List[FcrStrategy]:
    """The 28-strategy catalogue, scaled to the battery's FCR cap when it is below 8 MW"""
    cap = spec.max_fcr_bid
    if cap >= BASE_CAP:
        return [FcrStrategy(x=x) for x in BASE_CATALOGUE]

    seen = set()
    catalogue = []
    for x in BASE_CATALOGUE:
        scaled = tuple(int(round(v / BASE_CAP * cap)) for v in x)
        if scaled in seen:
            continue
        seen.add(scaled)
        catalogue.append(FcrStrategy(x=scaled))
    logger.info(f"Catalogue scaled to a {cap} MW FCR cap: {len(catalogue)} distinct strategies")
    return catalogue


def only_fcr(spec: BessSpec) -> FcrStrategy:
    cap = spec.max_fcr_bid
    return FcrStrategy.of(cap, cap, cap, cap, cap, cap)


def only_idm() -> FcrStrategy:
    return FcrStrategy.of(0, 0, 0, 0, 0, 0)


class ProfitMatrix:
    """Per-day, per-strategy backtest profits

    Three frames share one index (days, ascending) and one column order
    (strategy ids, catalogue order): total, fcr and idm profit in EUR.
    """

    def __init__(self, total: pd.DataFrame, fcr: Optional[pd.DataFrame] = None, idm: Optional[pd.DataFrame] = None):
        self.total = total.sort_index()
        self.fcr = (fcr if fcr is not None else pd.DataFrame(0.0, index=total.index, columns=total.columns)).reindex(
            index=self.total.index, columns=self.total.columns
        )
        self.idm = (idm if idm is not None else self.total - self.fcr).reindex(
            index=self.total.index, columns=self.total.columns
        )

    @classmethod
    def from_results(cls, results: Iterable[DayResult], strategies: Optional[Sequence[FcrStrategy]] = None) -> "ProfitMatrix":
        rows = [
            {
                "date": r.day,
                "strategy_id": r.strategy.strategy_id,
                "pi_fcr": r.pi_fcr,
                "pi_idm": r.pi_idm,
                "pi_total": r.pi_total,
            }
            for r in results
        ]
        order = [s.strategy_id for s in strategies] if strategies is not None else None
        return cls.from_long(pd.DataFrame(rows, columns=PROFIT_MATRIX_COLUMNS), order)

    @classmethod
    def from_array(cls, values, days: Sequence[date], strategy_ids: Sequence[str]) -> "ProfitMatrix":
        total = pd.DataFrame(np.asarray(values, dtype=float), index=list(days), columns=list(strategy_ids))
        return cls(total)

    @classmethod
    def from_long(cls, frame: pd.DataFrame, order: Optional[List[str]] = None) -> "ProfitMatrix":
        if frame.duplicated(["date", "strategy_id"]).any():
            dup = frame[frame.duplicated(["date", "strategy_id"])].iloc[0]
            raise DataError(
                f"duplicate profit entry for strategy {dup['strategy_id']}", day=dup["date"], series="profit_matrix"
            )
        if order is None:
            order = list(dict.fromkeys(frame["strategy_id"]))
        frames = {
            col: frame.pivot(index="date", columns="strategy_id", values=col).reindex(columns=order)
            for col in ("pi_total", "pi_fcr", "pi_idm")
        }
        return cls(frames["pi_total"], frames["pi_fcr"], frames["pi_idm"])

    # ------------------------------------------------------------------

    @property
    def days(self) -> List[date]:
        return list(self.total.index)

    @property
    def strategy_ids(self) -> List[str]:
        return list(self.total.columns)

    @property
    def strategies(self) -> List[FcrStrategy]:
        return [FcrStrategy.parse(s) for s in self.strategy_ids]

    def is_dense(self) -> bool:
        return not self.total.isna().any().any()

    def missing_days(self) -> List[date]:
        return [d for d, row in self.total.iterrows() if row.isna().any()]

    def restrict(self, days: Optional[Iterable[date]] = None, strategy_ids: Optional[Iterable[str]] = None) -> "ProfitMatrix":
        rows = list(days) if days is not None else self.days
        cols = list(strategy_ids) if strategy_ids is not None else self.strategy_ids
        return ProfitMatrix(
            self.total.reindex(index=rows, columns=cols),
            self.fcr.reindex(index=rows, columns=cols),
            self.idm.reindex(index=rows, columns=cols),
        )

    def complete(self) -> "ProfitMatrix":
        """Days with a missing backtest dropped"""
        keep = ~self.total.isna().any(axis=1)
        return self.restrict(self.total.index[keep])

    # ------------------------------------------------------------------

    def to_long(self) -> pd.DataFrame:
        frames = []
        for col, frame in (("pi_total", self.total), ("pi_fcr", self.fcr), ("pi_idm", self.idm)):
            stacked = frame.stack(future_stack=True).rename(col)
            frames.append(stacked)
        long = pd.concat(frames, axis=1).dropna(subset=["pi_total"]).reset_index()
        long.columns = ["date", "strategy_id", "pi_total", "pi_fcr", "pi_idm"]
        return long[PROFIT_MATRIX_COLUMNS]

    def to_csv(self, target: str) -> str:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        long = self.to_long()
        long["date"] = [d.isoformat() for d in long["date"]]
        long.to_csv(path, index=False, float_format="%.6f")
        return str(path)

    @classmethod
    def from_csv(cls, source: str) -> "ProfitMatrix":
        path = Path(source)
        if not path.exists():
            raise DataError(f"profit matrix not found: {path}", series="profit_matrix")
        frame = pd.read_csv(path, dtype={"strategy_id": str})
        missing = [c for c in PROFIT_MATRIX_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"profit matrix {path} is missing columns {missing}", series="profit_matrix")
        frame["date"] = pd.to_datetime(frame["date"]).dt.date
        return cls.from_long(frame)


# ---------------------------------------------------------------------------
# Pool selection
# ---------------------------------------------------------------------------

def _check_dense(profits: ProfitMatrix) -> np.ndarray:
    if not profits.is_dense():
        days = profits.missing_days()
        raise DataError(
            f"profit matrix has missing backtests on {len(days)} day(s); drop them before pool selection",
            day=days[0] if days else None,
            series="profit_matrix",
        )
    return profits.total.to_numpy(dtype=float)


def pool_value(profits: ProfitMatrix, pool: Sequence[str]) -> float:
    """Training profit of a pool under perfect classification"""
    values = profits.total[list(pool)].to_numpy(dtype=float)
    return float(values.max(axis=1).sum()) if values.size else 0.0


def _pool_problem(values: np.ndarray, size: int) -> MilpProblem:
    """Variables [z_X (M), w_Xd (D x M row-major)]; maximize sum of pi * w"""
    n_days, m = values.shape
    n_w = n_days * m
    c = np.concatenate([np.zeros(m), -values.reshape(-1)])

    # each day is served by exactly one strategy; plus the pool size
    day_rows = sparse.hstack([
        sparse.csr_matrix((n_days, m)),
        sparse.kron(sparse.identity(n_days), np.ones((1, m))),
    ])
    size_row = sparse.hstack([sparse.csr_matrix(np.ones((1, m))), sparse.csr_matrix((1, n_w))])
    A_eq = sparse.vstack([day_rows, size_row]).tocsr()
    b_eq = np.concatenate([np.ones(n_days), [float(size)]])

    # w_Xd <= z_X
    link = sparse.hstack([
        -sparse.kron(np.ones((n_days, 1)), sparse.identity(m)),
        sparse.identity(n_w),
    ]).tocsr()
    b_ub = np.zeros(n_w)

    lb = np.zeros(m + n_w)
    ub = np.ones(m + n_w)
    integrality = np.concatenate([np.ones(m, dtype=bool), np.zeros(n_w, dtype=bool)])
    return MilpProblem(c, link, b_ub, A_eq, b_eq, lb, ub, integrality)


def select_pool(profits: ProfitMatrix, size: int, solver: Optional[MilpSolver] = None) -> List[FcrStrategy]:
    """The size-S subset of strategies maximizing summed daily best profit

    Returned in the matrix's column order.
    """
    m = len(profits.strategy_ids)
    if not 1 <= size <= m:
        raise DomainError(f"pool size must lie in [1, {m}], got {size}")
    values = _check_dense(profits)
    if not len(values):
        raise DataError("profit matrix has no days", series="profit_matrix")

    ids = profits.strategy_ids
    if size == m:
        return [FcrStrategy.parse(s) for s in ids]
    if size == 1:
        return [FcrStrategy.parse(ids[int(np.argmax(values.sum(axis=0)))])]

    solver = solver or MilpSolver("highs")
    result = solver.solve(_pool_problem(values, size))
    if result.x is None:
        raise DomainError(f"pool selection failed with solver status {result.status}")
    z = np.round(result.x[:m]).astype(int)
    chosen = [ids[j] for j in np.flatnonzero(z)]
    logger.debug(f"Selected pool {chosen} with training value {-result.fun:.2f} EUR ({result.path})")
    return [FcrStrategy.parse(s) for s in chosen]


def label_days(profits: ProfitMatrix, pool: Sequence[FcrStrategy]) -> pd.Series:
    """Best pool strategy per day; ties go to the first in catalogue order"""
    pool_ids = {s.strategy_id for s in pool}
    ordered = [s for s in profits.strategy_ids if s in pool_ids]
    unknown = pool_ids.difference(ordered)
    if unknown:
        raise DomainError(f"pool strategies {sorted(unknown)} are not in the profit matrix")
    frame = profits.total[ordered]
    return frame.idxmax(axis=1).rename("label")


def pool_size_curve(
    profits: ProfitMatrix, sizes: Optional[Iterable[int]] = None, solver: Optional[MilpSolver] = None
) -> pd.DataFrame:
    """Loss in percent of the optimal S-pool against choosing from every strategy"""
    values = _check_dense(profits)
    full = float(values.max(axis=1).sum())
    sizes = list(sizes) if sizes is not None else list(range(1, len(profits.strategy_ids) + 1))
    rows = []
    for s in sizes:
        pool = select_pool(profits, s, solver)
        value = pool_value(profits, [p.strategy_id for p in pool])
        loss = 0.0 if full == 0 else (full - value) / abs(full) * 100.0
        rows.append({
            "pool_size": s,
            "value_eur": value,
            "loss_pct": loss,
            "pool": " ".join(p.strategy_id for p in pool),
        })
    return pd.DataFrame(rows)


def best_strategy(profits: ProfitMatrix, days: Optional[Iterable[date]] = None) -> FcrStrategy:
    """The strategy with the highest total over the given days (first wins on ties)"""
    frame = profits.total if days is None else profits.total.loc[list(days)]
    totals = frame.sum(axis=0)
    return FcrStrategy.parse(str(totals.idxmax()))


def best_counts(profits: ProfitMatrix) -> Dict[str, int]:
    """Days on which each strategy is the best of the whole catalogue"""
    labels = profits.total.idxmax(axis=1)
    counts = labels.value_counts()
    return {s: int(counts.get(s, 0)) for s in profits.strategy_ids}
