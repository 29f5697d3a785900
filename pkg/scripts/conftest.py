"""Shared fixtures: small batteries, hand-built books and flat exogenous series"""

from datetime import date, datetime, timedelta, timezone

import numpy as np
import pandas as pd
import pytest

from app.models.schemas import (
    BessSpec,
    DeliveryPeriod,
    ExogenousSeries,
    Order,
    OrderBook,
    OrderBookSnapshot,
    RiConfig,
    Side,
)
from app.services.fcr_physics import day_start
from app.services.monitoring import metrics_collector

ZONES = ["DE-LU", "IT-North", "NO2", "SE4"]
DELIVERY_DAY = date(2024, 3, 5)


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


@pytest.fixture(autouse=True)
def reset_metrics():
    metrics_collector.reset()
    yield


@pytest.fixture
def spec():
    """The 10 MW / 10 MWh reference battery"""
    return BessSpec()


@pytest.fixture
def toy_spec():
    """2 MW / 2 MWh, lossless, full SoC range, no degradation"""
    return BessSpec(
        power_mw=2.0,
        energy_mwh=2.0,
        eta_ch=1.0,
        eta_dis=1.0,
        alpha_lo=0.0,
        alpha_hi=1.0,
        degradation_eur_mwh=0.0,
        cycles_per_day=2.0,
    )


@pytest.fixture
def hourly_ri():
    """Hourly products, quarter-hour re-solves, a stream that may go quiet for a day"""
    return RiConfig(
        resolve_minutes=15,
        product_duration_h=1.0,
        initial_soc_mwh=0.0,
        terminal_soc_mwh=0.0,
        max_snapshot_gap_minutes=48 * 60,
    )


@pytest.fixture
def make_book():
    """Build an OrderBook for one product from (price, MW) pairs"""

    def _make(product: DeliveryPeriod, bids=(), asks=(), prefix="o"):
        bid_orders = tuple(
            Order(order_id=f"{prefix}b{k}", product=product, side=Side.BID, limit_price=p, quantity=q)
            for k, (p, q) in enumerate(bids)
        )
        ask_orders = tuple(
            Order(order_id=f"{prefix}a{k}", product=product, side=Side.ASK, limit_price=p, quantity=q)
            for k, (p, q) in enumerate(asks)
        )
        return OrderBook(bids=bid_orders, asks=ask_orders)

    return _make


@pytest.fixture
def make_snapshot(make_book):
    """Build a snapshot from {product: (bids, asks)}"""

    def _make(timestamp: datetime, ladders):
        books = {}
        for k, (product, (bids, asks)) in enumerate(ladders.items()):
            books[product] = make_book(product, bids, asks, prefix=f"p{k}")
        return OrderBookSnapshot(timestamp=timestamp, books=books)

    return _make


@pytest.fixture
def flat_exogenous():
    """Constant exogenous series over a span of days"""

    def _make(first: date, n_days: int, daa=50.0, fcr=10.0, delta_f=0.0, sampling_s=10):
        hours = pd.date_range(day_start(first), periods=24 * n_days, freq="h")
        daa_prices = pd.DataFrame({z: np.full(len(hours), daa) for z in ZONES}, index=hours)
        forecasts = pd.DataFrame(
            {k: np.full(len(hours), 100.0) for k in ExogenousSeries.FORECAST_KINDS}, index=hours
        )
        days = [first + timedelta(days=k) for k in range(n_days)]
        fcr_clearing = pd.DataFrame({b: [fcr] * n_days for b in range(1, 7)}, index=days)
        samples = pd.date_range(day_start(first), periods=n_days * 86400 // sampling_s, freq=f"{sampling_s}s")
        frequency = pd.Series(np.full(len(samples), delta_f), index=samples, name="delta_f_hz")
        return ExogenousSeries(
            daa_prices=daa_prices, forecasts=forecasts, fcr_clearing=fcr_clearing, frequency=frequency
        )

    return _make


@pytest.fixture
def hour_product():
    """Hourly delivery product `h` hours into the test delivery day"""

    def _make(h: int, day: date = DELIVERY_DAY):
        return DeliveryPeriod(start=day_start(day) + timedelta(hours=h), duration_h=1.0)

    return _make
