"""Request and response bodies of the HTTP API"""

from datetime import date, datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.schemas import BessSpec


class SimulateRequest(BaseModel):
    seed: int = 7
    days: int = Field(1, ge=1, le=31)
    regime: str = "mixed"
    start_day: date = date(2024, 1, 1)
    product_duration_h: float = 0.25


class MarketSummary(BaseModel):
    days: int
    regime: str
    snapshots: int
    resting_orders: int
    first_snapshot: Optional[datetime] = None
    last_snapshot: Optional[datetime] = None
    fcr_mean_eur_mw: float
    daa_mean_eur_mwh: Dict[str, float]


class OrderRow(BaseModel):
    order_id: str
    product_start: datetime
    duration_h: float = 0.25
    side: str  # bid | ask
    price: float
    quantity: float


class ClearRequest(BaseModel):
    timestamp: datetime
    orders: List[OrderRow]
    product_start: datetime
    duration_h: float = 0.25
    direction: str  # buy | sell
    quantity: float
    limit_price: Optional[float] = None


class FillOut(BaseModel):
    order_id: str
    quantity: float
    price: float


class ClearResponse(BaseModel):
    fills: List[FillOut]
    filled_mw: float
    cash_eur_per_h: float


class ActivationRequest(BaseModel):
    delta_f_hz: List[float]
    p_bid_mw: float


class EnvelopeRequest(BaseModel):
    spec: BessSpec = BessSpec()
    fcr_bid_mw: float


class EnvelopeResponse(BaseModel):
    soc_lo_mwh: float
    soc_hi_mwh: float
    power_lo_mw: float
    power_hi_mw: float
    duration_h: float


class DriftRequest(BaseModel):
    spec: BessSpec = BessSpec()
    samples_hz: List[float]
    p_bid_mw: float
    duration_h: float


class ProfitEntry(BaseModel):
    date: date
    strategy_id: str
    pi_total: float
    pi_fcr: float = 0.0
    pi_idm: Optional[float] = None


class PoolRequest(BaseModel):
    entries: List[ProfitEntry]
    size: int = 3


class PoolResponse(BaseModel):
    pool: List[str]
    training_value_eur: float
    labels: Dict[str, str]


class SweepRow(BaseModel):
    pool_size: int
    value_eur: float
    loss_pct: float
    pool: str


class BacktestRequest(BaseModel):
    start: date
    end: date
    seed: int = 7
    regime: str = "mixed"
    window_days: Optional[int] = None
    pool_size: Optional[int] = None
    resolve_minutes: Optional[int] = None
    product_duration_h: Optional[float] = None


class BacktestStatus(BaseModel):
    job_id: str
    status: str  # queued | running | completed | failed
    message: str = ""
    oos_days: int = 0
