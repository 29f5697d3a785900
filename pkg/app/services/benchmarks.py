"""Benchmark policies and their comparison against the learned strategy choice"""

from datetime import date, timedelta
from typing import Dict, List, Sequence
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.exceptions import DataError
from app.services.strategy_pool import ProfitMatrix

logger = logging.getLogger(__name__)

LCS = "LCS"
CV_ALL = "CV-28"
CV_POOL = "CV-3"
DYNAMIC = "DB"
STATIC = "SB"
ONLY_FCR = "Only FCR"
ONLY_IDM = "Only IDM"
POLICY_ORDER = (CV_ALL, CV_POOL, LCS, DYNAMIC, STATIC, ONLY_FCR, ONLY_IDM)
AGREEMENT_EUR = 0.01


class BenchmarkRow(BaseModel):
    name: str
    fcr: float
    idm: float
    overall: float
    pct_of_cv28: float
    equals_cv3_pct: float
    equals_cv28_pct: float
    beats_lcs_pct: float


class BenchmarkReport(BaseModel):
    """Per-policy totals plus the daily series behind them"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[BenchmarkRow]
    decisions: pd.DataFrame  # day x policy -> strategy id
    daily: pd.DataFrame  # day x policy -> total EUR

    def row(self, name: str) -> BenchmarkRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def totals(self) -> Dict[str, float]:
        return {r.name: r.overall for r in self.rows}

    def cumulative(self) -> pd.DataFrame:
        return self.daily.cumsum()

    def weekly_normalized(self) -> pd.DataFrame:
        """Weekly profit per policy scaled by the min and max of the whole matrix"""
        return weekly_normalized(self.daily)


def weekly_normalized(daily: pd.DataFrame) -> pd.DataFrame:
    weeks = [d - timedelta(days=d.weekday()) for d in daily.index]
    weekly = daily.groupby(weeks).sum()
    weekly.index.name = "week"
    lo = float(np.nanmin(weekly.to_numpy())) if weekly.size else 0.0
    hi = float(np.nanmax(weekly.to_numpy())) if weekly.size else 0.0
    if hi - lo <= 0:
        return weekly * 0.0
    return (weekly - lo) / (hi - lo)


def benchmark_decisions(
    oos_days: Sequence[date],
    profits: ProfitMatrix,
    catalogue_ids: Sequence[str],
    pools: Dict[date, List[str]],
    lcs: Dict[date, str],
    dynamic: Dict[date, str],
    static: str,
    only_fcr: str,
    only_idm: str,
) -> pd.DataFrame:
    """Strategy chosen by every policy on every out-of-sample day"""
    days = list(oos_days)
    catalogue = profits.total.loc[days, list(catalogue_ids)]
    if catalogue.isna().any().any():
        bad = catalogue.index[catalogue.isna().any(axis=1)][0]
        raise DataError("incomplete catalogue backtest on an out-of-sample day", day=bad, series="profit_matrix")
    rows = []
    for d in days:
        pool = [s for s in catalogue_ids if s in set(pools[d])]
        rows.append({
            CV_ALL: str(catalogue.loc[d].idxmax()),
            CV_POOL: str(catalogue.loc[d, pool].idxmax()),
            LCS: lcs[d],
            DYNAMIC: dynamic[d],
            STATIC: static,
            ONLY_FCR: only_fcr,
            ONLY_IDM: only_idm,
        })
    return pd.DataFrame(rows, index=days, columns=list(POLICY_ORDER))


def _agreement(daily: pd.DataFrame, name: str, reference: str, n: int) -> float:
    """Share of days, in percent, on which a policy earns what the reference earns, to the cent"""
    if reference not in daily:
        return 0.0
    same = (daily[name] - daily[reference]).abs() < AGREEMENT_EUR
    return float(same.sum()) / n * 100.0


def evaluate_policies(decisions: pd.DataFrame, profits: ProfitMatrix) -> BenchmarkReport:
    """Totals, shortfalls and day-wise agreement for each policy column of `decisions`"""
    days = list(decisions.index)
    daily_total, daily_fcr, daily_idm = {}, {}, {}
    for name in decisions.columns:
        chosen = decisions[name]
        missing = [d for d in days if pd.isna(profits.total.at[d, chosen[d]])]
        if missing:
            raise DataError(
                f"no backtest for {name} decision {chosen[missing[0]]}", day=missing[0], series="profit_matrix"
            )
        daily_total[name] = [float(profits.total.at[d, chosen[d]]) for d in days]
        daily_fcr[name] = [float(profits.fcr.at[d, chosen[d]]) for d in days]
        daily_idm[name] = [float(profits.idm.at[d, chosen[d]]) for d in days]
    daily = pd.DataFrame(daily_total, index=days)
    daily.index.name = "date"

    n = max(len(days), 1)
    cv_total = float(daily[CV_ALL].sum()) if CV_ALL in daily else None
    rows = []
    for name in decisions.columns:
        overall = float(daily[name].sum())
        if cv_total is None or cv_total == 0:
            pct = 0.0
        else:
            pct = (overall - cv_total) / abs(cv_total) * 100.0
        eq_pool = _agreement(daily, name, CV_POOL, n)
        eq_all = _agreement(daily, name, CV_ALL, n)
        beats = float((daily[name] > daily[LCS]).sum()) / n * 100.0 if LCS in daily else 0.0
        rows.append(BenchmarkRow(
            name=name,
            fcr=float(np.sum(daily_fcr[name])),
            idm=float(np.sum(daily_idm[name])),
            overall=overall,
            pct_of_cv28=pct,
            equals_cv3_pct=eq_pool,
            equals_cv28_pct=eq_all,
            beats_lcs_pct=beats,
        ))
    return BenchmarkReport(rows=rows, decisions=decisions, daily=daily)
