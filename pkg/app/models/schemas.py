"""Domain models for the joint FCR / intraday engine"""

import math
from datetime import date, datetime, timedelta, timezone
from enum import IntEnum
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import BookValidationError, DataError, DomainError

PRICE_FLOOR = -9999.0
PRICE_CAP = 9999.0
MIN_BID_VOLUME = 0.1
ALLOWED_DURATIONS = (0.25, 0.5, 1.0)
EFA_BLOCKS = 6
EFA_BLOCK_HOURS = 4
_GRID_TOL = 1e-9


def on_grid(value: float, step: float) -> bool:
    """True when value is an integer multiple of step"""
    ratio = value / step
    return abs(ratio - round(ratio)) < 1e-6


class Side(IntEnum):
    """Resting order direction"""
    BID = -1
    ASK = 1


# ---------------------------------------------------------------------------
# Market data
# ---------------------------------------------------------------------------

class DeliveryPeriod(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: datetime
    duration_h: float = 0.25

    @field_validator("start")
    @classmethod
    def _utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)

    @model_validator(mode="after")
    def _aligned(self):
        if self.duration_h not in ALLOWED_DURATIONS:
            raise ValueError(f"product duration must be one of {ALLOWED_DURATIONS}, got {self.duration_h}")
        minutes = self.start.hour * 60 + self.start.minute
        if self.start.second or self.start.microsecond or minutes % int(self.duration_h * 60):
            raise ValueError(f"product start {self.start.isoformat()} not aligned to {self.duration_h}h grid")
        return self

    @property
    def end(self) -> datetime:
        return self.start + timedelta(hours=self.duration_h)

    def gate_closure(self, lead_minutes: int) -> datetime:
        return self.start - timedelta(minutes=lead_minutes)


class Order(BaseModel):
    model_config = ConfigDict(frozen=True)

    order_id: str
    product: DeliveryPeriod
    side: Side
    limit_price: float = Field(..., ge=PRICE_FLOOR, le=PRICE_CAP)
    quantity: float
    qualifier: Optional[str] = None  # IOC/FOK/iceberg, parsed but not executed

    @field_validator("quantity")
    @classmethod
    def _volume(cls, value: float) -> float:
        if value < MIN_BID_VOLUME - _GRID_TOL or not on_grid(value, MIN_BID_VOLUME):
            raise ValueError(f"quantity {value} must be a multiple of {MIN_BID_VOLUME} MW and at least {MIN_BID_VOLUME} MW")
        return round(value, 6)


def check_ladders(bids, asks) -> None:
    """Raise BookValidationError unless the ladders form a valid, uncrossed book"""
    bid_prices = [o.limit_price for o in bids]
    ask_prices = [o.limit_price for o in asks]
    if any(a < b for a, b in zip(bid_prices, bid_prices[1:])):
        raise BookValidationError("bid ladder must be sorted by descending price")
    if any(a > b for a, b in zip(ask_prices, ask_prices[1:])):
        raise BookValidationError("ask ladder must be sorted by ascending price")
    if bid_prices and ask_prices and bid_prices[0] >= ask_prices[0]:
        raise BookValidationError(f"crossed book: best bid {bid_prices[0]} >= best ask {ask_prices[0]}")
    if any(o.side != Side.BID for o in bids) or any(o.side != Side.ASK for o in asks):
        raise BookValidationError("order side does not match its ladder")


class OrderBook(BaseModel):
    """Bid and ask ladders for one product"""
    model_config = ConfigDict(frozen=True)

    bids: Tuple[Order, ...] = ()
    asks: Tuple[Order, ...] = ()

    @model_validator(mode="after")
    def _ladders(self):
        check_ladders(self.bids, self.asks)
        return self

    def ladder(self, side: Side) -> Tuple[Order, ...]:
        return self.bids if side == Side.BID else self.asks


class OrderBookSnapshot(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: datetime
    books: Dict[DeliveryPeriod, OrderBook] = Field(default_factory=dict)

    @field_validator("timestamp")
    @classmethod
    def _utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)

    def validate_gate_closure(self, lead_minutes: int) -> None:
        for product in self.books:
            if not product.start > self.timestamp + timedelta(minutes=lead_minutes):
                raise BookValidationError(
                    f"snapshot {self.timestamp.isoformat()} contains product {product.start.isoformat()} "
                    f"past its gate closure"
                )

    def products(self) -> List[DeliveryPeriod]:
        return sorted(self.books, key=lambda p: p.start)

    def order_count(self) -> int:
        return sum(len(b.bids) + len(b.asks) for b in self.books.values())


class ExogenousSeries(BaseModel):
    """Time-indexed exogenous inputs

    daa_prices: hourly UTC index, one column per zone (EUR/MWh)
    forecasts: hourly UTC index, columns solar, wind_on, wind_off, load (MW)
    fcr_clearing: date index, columns 1..6 (EUR/MW per EFA block)
    frequency: UTC index at a fixed sampling interval, frequency deviation in Hz
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    daa_prices: pd.DataFrame
    forecasts: pd.DataFrame
    fcr_clearing: pd.DataFrame
    frequency: pd.Series

    FORECAST_KINDS: ClassVar[Tuple[str, ...]] = ("solar", "wind_on", "wind_off", "load")

    def fcr_prices(self, day: date) -> List[float]:
        if day not in self.fcr_clearing.index:
            raise DataError(f"FCR clearing prices missing for {day}", day=day, series="fcr_clearing")
        row = self.fcr_clearing.loc[day]
        prices = [row.get(k) for k in range(1, EFA_BLOCKS + 1)]
        if any(p is None or pd.isna(p) for p in prices):
            raise DataError(f"FCR clearing price missing for a block on {day}", day=day, series="fcr_clearing")
        return [float(p) for p in prices]

    def frequency_step_seconds(self) -> float:
        if len(self.frequency) < 2:
            return 10.0
        return float((self.frequency.index[1] - self.frequency.index[0]).total_seconds())

    def frequency_segment(self, start: datetime, end: datetime) -> np.ndarray:
        """Samples stamped in [start, end)"""
        if end <= start:
            return np.zeros(0)
        idx = self.frequency.index
        lo = idx.searchsorted(pd.Timestamp(start), side="left")
        hi = idx.searchsorted(pd.Timestamp(end), side="left")
        return self.frequency.to_numpy()[lo:hi]

    def days(self) -> List[date]:
        return sorted(self.fcr_clearing.index)


# ---------------------------------------------------------------------------
# Physical asset and FCR commitment
# ---------------------------------------------------------------------------

class BessSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    power_mw: float = 10.0
    energy_mwh: float = 10.0
    eta_ch: float = 0.95
    eta_dis: float = 0.95
    alpha_lo: float = 0.01
    alpha_hi: float = 0.985
    degradation_eur_mwh: float = 3.0
    cycles_per_day: float = 2.0
    min_trade_mw: float = 0.1
    fcr_max_share: float = 0.8

    @model_validator(mode="after")
    def _check(self):
        if self.power_mw <= 0 or self.energy_mwh <= 0:
            raise ValueError("power and energy capacity must be positive")
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dis <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if not (0 <= self.alpha_lo < self.alpha_hi <= 1):
            raise ValueError("SoC fractions must satisfy 0 <= alpha_lo < alpha_hi <= 1")
        if self.degradation_eur_mwh < 0:
            raise ValueError("degradation cost must be non-negative")
        if self.min_trade_mw <= 0 or self.cycles_per_day <= 0:
            raise ValueError("minimum trade size and cycle budget must be positive")
        return self

    @property
    def max_fcr_bid(self) -> int:
        return int(math.floor(self.fcr_max_share * self.power_mw + 1e-9))


class FcrStrategy(BaseModel):
    """Capacity bid X in MW for each of the six EFA blocks"""
    model_config = ConfigDict(frozen=True)

    x: Tuple[int, int, int, int, int, int]

    @field_validator("x")
    @classmethod
    def _non_negative(cls, value):
        if any(v < 0 for v in value):
            raise ValueError(f"FCR bids must be non-negative, got {value}")
        return value

    @classmethod
    def of(cls, *values: int) -> "FcrStrategy":
        return cls(x=tuple(int(v) for v in values))

    @classmethod
    def parse(cls, strategy_id: str) -> "FcrStrategy":
        parts = strategy_id.replace("(", "").replace(")", "").replace(",", "-").split("-")
        if len(parts) != EFA_BLOCKS:
            raise DomainError(f"strategy id must have six components, got {strategy_id!r}")
        return cls.of(*(int(p) for p in parts))

    @property
    def strategy_id(self) -> str:
        return "-".join(str(v) for v in self.x)

    def check_admissible(self, spec: BessSpec) -> None:
        cap = spec.max_fcr_bid
        if any(v > cap for v in self.x):
            raise DomainError(f"strategy {self.strategy_id} exceeds the FCR cap of {cap} MW")

    def block_bid(self, block_index: int) -> int:
        return self.x[block_index - 1]

    def __str__(self) -> str:
        return self.strategy_id


class EfaBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1, le=EFA_BLOCKS)
    start: datetime
    end: datetime


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

class RiConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    resolve_minutes: int = 1
    trading_start_hour: int = 19
    initial_soc_mwh: float = 2.0
    terminal_soc_mwh: float = 2.0
    product_duration_h: float = 0.25
    gate_closure_minutes: int = 30
    book_depth: int = 4
    max_snapshot_gap_minutes: int = 120
    milp_backend: str = "branch_and_bound"
    milp_gap: float = 0.0
    milp_max_nodes: int = 100_000
    dump_instance_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.resolve_minutes <= 0:
            raise ValueError("re-solve cadence must be positive")
        if self.product_duration_h not in ALLOWED_DURATIONS:
            raise ValueError(f"product duration must be one of {ALLOWED_DURATIONS}")
        if self.book_depth < 1:
            raise ValueError("book depth must be at least one order per side")
        return self


class HyperparameterGrid(BaseModel):
    learning_rate: List[float] = [0.01, 0.05, 0.1]
    min_split_loss: List[float] = [0.0, 0.5, 1.0, 2.0]
    subsample: List[float] = [0.8, 1.0]
    colsample: List[float] = [0.8, 1.0]
    max_depth: List[int] = [3, 4, 5]
    n_estimators: List[int] = [200, 400]


class Hyperparameters(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = 0.1
    min_split_loss: float = 0.0
    subsample: float = 1.0
    colsample: float = 1.0
    max_depth: int = 3
    n_estimators: int = 200
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0


class ClassifierConfig(BaseModel):
    window_days: int = 240
    pool_size: int = 3
    cv_folds: int = 5
    cv_validation_days: int = 15
    cv_candidates: int = 20
    correlation_threshold: float = 0.94
    max_features: int = 299
    label_lag_days: int = 1
    daa_zones: List[str] = ["DE-LU", "IT-North", "NO2", "SE4"]
    histogram_bins: int = 32
    grid: HyperparameterGrid = HyperparameterGrid()

    @model_validator(mode="after")
    def _check(self):
        if self.label_lag_days < 1:
            raise ValueError("label lag must be at least one day")
        if self.pool_size < 1:
            raise ValueError("pool size must be at least 1")
        return self


class BacktestConfig(BaseModel):
    start: date
    end: date
    spec: BessSpec = BessSpec()
    ri: RiConfig = RiConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    seed: int = 7
    max_workers: int = 1
    snapshots_path: Optional[str] = None
    exogenous_dir: Optional[str] = None
    synthetic_regime: Optional[str] = "mixed"
    benchmarks: List[str] = ["SB", "DB", "CV-3", "CV-28", "Only FCR", "Only IDM"]
    cache_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.end < self.start:
            raise ValueError("backtest end precedes start")
        if not self.oos_days():
            raise ValueError(
                f"span {self.start}..{self.end} leaves no out-of-sample day after a "
                f"{self.classifier.window_days}-day window"
            )
        return self

    def oos_days(self) -> List[date]:
        first = self.start + timedelta(days=self.classifier.window_days + self.classifier.label_lag_days - 1)
        days = []
        d = first
        while d <= self.end:
            days.append(d)
            d += timedelta(days=1)
        return days

    def training_days(self, day: date) -> List[date]:
        last = day - timedelta(days=self.classifier.label_lag_days)
        n = self.classifier.window_days
        return [last - timedelta(days=n - 1 - k) for k in range(n)]

    def data_days(self) -> List[date]:
        """Every day whose market data the run touches, including the lag day"""
        first = self.start - timedelta(days=1)
        return [first + timedelta(days=k) for k in range((self.end - first).days + 1)]

    def simulated_days(self) -> List[date]:
        return [self.start + timedelta(days=k) for k in range((self.end - self.start).days + 1)]


# ---------------------------------------------------------------------------
# Trading results
# ---------------------------------------------------------------------------

class TradeRecord(BaseModel):
    solve_time: datetime
    product_start: datetime
    side: str  # buy | sell
    price: float
    mw: float
    cash_eur: float
    order_id: str = ""


class Violation(BaseModel):
    timestamp: datetime
    kind: str  # infeasible_solve | envelope | power
    detail: str
    magnitude: float = 0.0


class DayResult(BaseModel):
    day: date
    strategy: FcrStrategy
    pi_idm: float
    pi_fcr: float
    pi_total: float
    degradation_eur: float = 0.0
    soc_trajectory: List[Tuple[datetime, float]] = []
    infeasible_count: int = 0
    solve_count: int = 0
    violations: List[Violation] = []
    trades: List[TradeRecord] = []
    throughput_mwh: float = 0.0
    rebalance_values: List[float] = []

    @model_validator(mode="after")
    def _identity(self):
        if abs(self.pi_total - (self.pi_fcr + self.pi_idm)) > 1e-6:
            raise ValueError("pi_total must equal pi_fcr + pi_idm")
        return self


# ---------------------------------------------------------------------------
# Intrinsic problem
# ---------------------------------------------------------------------------

class IntrinsicInstance(BaseModel):
    """One intrinsic solve, in a JSON-serializable form

    Orders are stored column-wise; order_period indexes period_starts.
    Positions are signed MW (positive = charging).
    """

    delta_h: float
    period_starts: List[datetime] = []
    order_ids: List[str] = []
    order_period: List[int] = []
    order_side: List[int] = []
    order_price: List[float] = []
    order_qty: List[float] = []
    b0: List[float] = []
    b_lo: List[float] = []
    b_hi: List[float] = []
    c_lo: List[float] = []
    c_hi: List[float] = []
    c0: float
    c_terminal: Optional[float] = None
    cycles_left: float
    energy_mwh: float
    eta_ch: float = 1.0
    eta_dis: float = 1.0
    kappa: float = 0.0

    @model_validator(mode="after")
    def _shapes(self):
        t = len(self.period_starts)
        for name in ("b0", "b_lo", "b_hi", "c_lo", "c_hi"):
            if len(getattr(self, name)) != t:
                raise ValueError(f"{name} must have one entry per period")
        n = len(self.order_ids)
        for name in ("order_period", "order_side", "order_price", "order_qty"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per order")
        if any(p < 0 or p >= t for p in self.order_period):
            raise ValueError("order_period out of range")
        if any(s not in (-1, 1) for s in self.order_side):
            raise ValueError("order_side must be -1 (bid) or +1 (ask)")
        if any(lo > hi + 1e-12 for lo, hi in zip(self.b_lo, self.b_hi)):
            raise ValueError("empty power bounds")
        if any(lo > hi + 1e-12 for lo, hi in zip(self.c_lo, self.c_hi)):
            raise ValueError("empty SoC bounds")
        if self.cycles_left < -1e-12:
            raise ValueError("remaining cycle budget must be non-negative")
        return self

    @property
    def n_periods(self) -> int:
        return len(self.period_starts)

    @property
    def n_orders(self) -> int:
        return len(self.order_ids)


class TradePlan(BaseModel):
    """Result of one intrinsic solve

    objective is the incremental value of the solve: cash from the matched
    quantities minus the change in planned degradation against b0.
    """

    status: str  # optimal | infeasible | node_limit | error
    q: List[float] = []
    b: List[float] = []
    c: List[float] = []
    objective: float = 0.0
    cash: float = 0.0
    degradation: float = 0.0
    path: str = ""
    nodes: int = 0

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "node_limit")

    @classmethod
    def infeasible(cls, path: str = "", nodes: int = 0) -> "TradePlan":
        return cls(status="infeasible", path=path, nodes=nodes)
