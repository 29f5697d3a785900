"""Strategy pool selection endpoints"""

from typing import List

from fastapi import APIRouter
import pandas as pd

from app.config import settings
from app.models.api import PoolRequest, PoolResponse, SweepRow
from app.services.milp_solver import MilpSolver
from app.services.strategy_pool import ProfitMatrix, label_days, pool_size_curve, pool_value, select_pool

router = APIRouter()


def _matrix(request: PoolRequest) -> ProfitMatrix:
    frame = pd.DataFrame([
        {
            "date": e.date,
            "strategy_id": e.strategy_id,
            "pi_fcr": e.pi_fcr,
            "pi_idm": e.pi_idm if e.pi_idm is not None else e.pi_total - e.pi_fcr,
            "pi_total": e.pi_total,
        }
        for e in request.entries
    ])
    return ProfitMatrix.from_long(frame)


@router.post("/select", response_model=PoolResponse)
async def select(request: PoolRequest):
    """Best pool of the requested size under perfect classification"""
    profits = _matrix(request)
    pool = select_pool(profits, request.size, MilpSolver(settings.POOL_MILP_BACKEND))
    labels = label_days(profits, pool)
    return PoolResponse(
        pool=[s.strategy_id for s in pool],
        training_value_eur=pool_value(profits, [s.strategy_id for s in pool]),
        labels={d.isoformat(): s for d, s in labels.items()},
    )


@router.post("/sweep", response_model=List[SweepRow])
async def sweep(request: PoolRequest):
    """Loss of the optimal pool against the full catalogue for every pool size"""
    curve = pool_size_curve(_matrix(request), solver=MilpSolver(settings.POOL_MILP_BACKEND))
    return [SweepRow(**row) for row in curve.to_dict(orient="records")]
