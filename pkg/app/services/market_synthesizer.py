"""Deterministic synthetic intraday books and exogenous series"""

from datetime import date, datetime, timedelta
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from app.exceptions import DomainError
from app.models.schemas import (
    ALLOWED_DURATIONS,
    PRICE_CAP,
    PRICE_FLOOR,
    DeliveryPeriod,
    ExogenousSeries,
    Order,
    OrderBook,
    OrderBookSnapshot,
    Side,
)
from app.services.fcr_physics import day_start

logger = logging.getLogger(__name__)

REGIMES = ("block-spread", "alternating", "mixed")

BASE_PRICE = 50.0
FREQ_AR_COEF = 0.995
FREQ_STD_HZ = 0.02


class MarketSynthesizer:
    """Desk-scale market generator

    Every delivery day draws from its own RNG stream keyed on (seed, day
    offset), so a longer run reproduces the days of a shorter one.
    """

    def __init__(
        self,
        product_duration_h: float = 0.25,
        depth: int = 4,
        interval_minutes: int = 15,
        lead_minutes: int = 30,
        trading_start_hour: int = 19,
        sampling_s: int = 10,
        zones: Optional[List[str]] = None,
        amplitude: Tuple[float, float] = (15.0, 45.0),
    ):
        if product_duration_h not in ALLOWED_DURATIONS:
            raise DomainError(f"product duration must be one of {ALLOWED_DURATIONS}")
        if interval_minutes <= 0 or depth < 1:
            raise DomainError("snapshot interval and depth must be positive")
        self.product_duration_h = product_duration_h
        self.depth = depth
        self.interval_minutes = interval_minutes
        self.lead_minutes = lead_minutes
        self.trading_start_hour = trading_start_hour
        self.sampling_s = sampling_s
        self.zones = zones or ["DE-LU", "IT-North", "NO2", "SE4"]
        self.amplitude = amplitude

    @classmethod
    def from_settings(cls, settings, **overrides) -> "MarketSynthesizer":
        params = dict(
            product_duration_h=settings.PRODUCT_DURATION_H,
            depth=settings.BOOK_DEPTH,
            interval_minutes=settings.SNAPSHOT_INTERVAL_MINUTES,
            lead_minutes=settings.GATE_CLOSURE_MINUTES,
            trading_start_hour=settings.TRADING_START_HOUR,
            sampling_s=settings.FREQUENCY_SAMPLING_S,
            zones=list(settings.DAA_ZONES),
        )
        params.update(overrides)
        return cls(**params)

    # ------------------------------------------------------------------

    def _shape(self, regime: str, hours: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
        """Unit price shape over the day for a regime, plus the blend weight used"""
        block = np.where(hours < 12, -1.0, 1.0)
        alternating = np.where(np.floor(hours).astype(int) % 2 == 0, -1.0, 1.0)
        if regime == "block-spread":
            return block, 1.0
        if regime == "alternating":
            return alternating, 0.0
        weight = float(rng.random())
        return weight * block + (1.0 - weight) * alternating, weight

    def _day(self, seed: int, offset: int, day: date, regime: str, fcr_level: float):
        rng = np.random.default_rng([seed, offset])
        n_products = int(round(24 / self.product_duration_h))
        hours = np.arange(n_products) * self.product_duration_h
        shape, weight = self._shape(regime, hours, rng)
        amplitude = float(rng.uniform(*self.amplitude))
        fundamental = BASE_PRICE + amplitude * shape + rng.normal(0.0, 1.0, n_products)

        starts = [day_start(day) + timedelta(hours=float(h)) for h in hours]
        products = [DeliveryPeriod.model_construct(start=s, duration_h=self.product_duration_h) for s in starts]

        # snapshot times for this day's products
        open_at = day_start(day) - timedelta(days=1) + timedelta(hours=self.trading_start_hour)
        last_close = starts[-1] - timedelta(minutes=self.lead_minutes)
        times = []
        t = open_at
        while t < last_close:
            times.append(t)
            t += timedelta(minutes=self.interval_minutes)
        n_snap = len(times)

        step_scale = np.sqrt(self.interval_minutes / 60.0)
        walk = rng.normal(0.0, 2.0, (1, n_products)) + np.cumsum(
            rng.normal(0.0, step_scale, (n_snap, n_products)), axis=0
        )
        mids = fundamental[None, :] + walk
        half_spread = 0.3 + 0.7 * rng.random((n_snap, n_products))
        gaps = np.cumsum(0.2 + 0.8 * rng.random((n_snap, n_products, 2, self.depth)), axis=3)
        volumes = 0.1 * rng.integers(5, 51, size=(n_snap, n_products, 2, self.depth))

        bid_px = np.clip(np.round(mids[..., None] - half_spread[..., None] - gaps[:, :, 0, :], 2), PRICE_FLOOR, PRICE_CAP)
        ask_px = np.clip(np.round(mids[..., None] + half_spread[..., None] + gaps[:, :, 1, :], 2), PRICE_FLOOR, PRICE_CAP)

        books_by_time: Dict[datetime, Dict[DeliveryPeriod, OrderBook]] = {}
        for s, ts in enumerate(times):
            books = {}
            stamp = ts.strftime("%m%d%H%M")
            for p, product in enumerate(products):
                if not product.start > ts + timedelta(minutes=self.lead_minutes):
                    continue
                tag = f"{stamp}-{product.start:%m%d%H%M}"
                bids = tuple(
                    Order.model_construct(
                        order_id=f"{tag}-b{k}", product=product, side=Side.BID,
                        limit_price=float(bid_px[s, p, k]), quantity=round(float(volumes[s, p, 0, k]), 1), qualifier=None,
                    )
                    for k in range(self.depth)
                )
                asks = tuple(
                    Order.model_construct(
                        order_id=f"{tag}-a{k}", product=product, side=Side.ASK,
                        limit_price=float(ask_px[s, p, k]), quantity=round(float(volumes[s, p, 1, k]), 1), qualifier=None,
                    )
                    for k in range(self.depth)
                )
                books[product] = OrderBook.model_construct(bids=bids, asks=asks)
            books_by_time[ts] = books

        # exogenous: hourly DAA, forecasts, FCR clearing, frequency
        hourly = fundamental.reshape(24, -1).mean(axis=1)
        hour_index = pd.date_range(day_start(day), periods=24, freq="h")
        daa = {}
        for z, zone in enumerate(self.zones):
            daa[zone] = hourly * (1.0 + 0.08 * z) + 3.0 * z + rng.normal(0.0, 1.5, 24)
        h = np.arange(24)
        solar = 40_000.0 * float(rng.uniform(0.2, 1.0)) * np.clip(np.sin(np.pi * (h - 6) / 12.0), 0.0, None)
        wind_on = np.clip(20_000.0 + 8_000.0 * weight + rng.normal(0.0, 2_000.0, 24).cumsum() / 3.0, 0.0, None)
        wind_off = np.clip(4_000.0 + rng.normal(0.0, 500.0, 24).cumsum() / 3.0, 0.0, None)
        load = 55_000.0 + 8_000.0 * np.sin(np.pi * (h - 8) / 12.0) + rng.normal(0.0, 800.0, 24)
        forecasts = {"solar": solar, "wind_on": wind_on, "wind_off": wind_off, "load": load}

        block_prices = np.clip(fcr_level * (1.0 + 0.1 * rng.normal(0.0, 1.0, 6)), 1.0, None).round(2)

        n_samples = int(86_400 / self.sampling_s)
        noise = rng.normal(0.0, FREQ_STD_HZ * np.sqrt(1.0 - FREQ_AR_COEF ** 2), n_samples)
        freq = lfilter([1.0], [1.0, -FREQ_AR_COEF], noise)
        freq = freq - freq.mean()

        return books_by_time, hour_index, daa, forecasts, block_prices, freq

    def synthesize(
        self,
        seed: int,
        day_count: int,
        regime: str = "mixed",
        start_day: date = date(2024, 1, 1),
    ) -> Tuple[List[OrderBookSnapshot], ExogenousSeries]:
        if day_count < 1:
            raise DomainError(f"day_count must be at least 1, got {day_count}")
        if regime not in REGIMES:
            raise DomainError(f"unknown regime {regime!r}, expected one of {REGIMES}")

        level_rng = np.random.default_rng([seed, 1_000_003])
        levels = np.empty(day_count)
        level = 35.0
        for i in range(day_count):
            level = 35.0 + 0.8 * (level - 35.0) + level_rng.normal(0.0, 6.0)
            levels[i] = max(level, 5.0)

        merged: Dict[datetime, Dict[DeliveryPeriod, OrderBook]] = {}
        daa_frames, forecast_frames, fcr_rows, freq_parts = [], [], {}, []
        for offset in range(day_count):
            day = start_day + timedelta(days=offset)
            books_by_time, hour_index, daa, forecasts, block_prices, freq = self._day(
                seed, offset, day, regime, float(levels[offset])
            )
            for ts, books in books_by_time.items():
                merged.setdefault(ts, {}).update(books)
            daa_frames.append(pd.DataFrame(daa, index=hour_index))
            forecast_frames.append(pd.DataFrame(forecasts, index=hour_index))
            fcr_rows[day] = {k + 1: float(block_prices[k]) for k in range(6)}
            freq_parts.append(
                pd.Series(freq, index=pd.date_range(day_start(day), periods=len(freq), freq=f"{self.sampling_s}s"))
            )

        snapshots = [
            OrderBookSnapshot.model_construct(timestamp=ts, books=merged[ts]) for ts in sorted(merged)
        ]
        daa_prices = pd.concat(daa_frames)
        forecasts = pd.concat(forecast_frames)
        for frame in (daa_prices, forecasts):
            frame.index.name = "timestamp"
        fcr = pd.DataFrame.from_dict(fcr_rows, orient="index")
        fcr.index.name = "date"
        frequency = pd.concat(freq_parts).rename("delta_f_hz")

        exogenous = ExogenousSeries(daa_prices=daa_prices, forecasts=forecasts, fcr_clearing=fcr, frequency=frequency)
        logger.info(
            f"Synthesized {day_count} days ({regime}, seed={seed}): {len(snapshots)} snapshots, "
            f"{sum(s.order_count() for s in snapshots)} resting orders"
        )
        return snapshots, exogenous


def synthesize_market(
    seed: int,
    day_count: int,
    regime: str = "mixed",
    start_day: date = date(2024, 1, 1),
    **params,
) -> Tuple[List[OrderBookSnapshot], ExogenousSeries]:
    """Synthetic snapshot stream and exogenous series, a pure function of its arguments"""
    return MarketSynthesizer(**params).synthesize(seed, day_count, regime, start_day)
