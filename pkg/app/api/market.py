"""Synthetic market and order-book clearing endpoints"""

from collections import defaultdict
from typing import Dict, List

from fastapi import APIRouter
import logging

from app.config import settings
from app.models.api import ClearRequest, ClearResponse, FillOut, MarketSummary, SimulateRequest
from app.models.schemas import DeliveryPeriod, Order, OrderBook, OrderBookSnapshot, Side
from app.models.tables import SIDE_LABELS
from app.services.market_synthesizer import MarketSynthesizer
from app.services.order_book import Direction, clear_against_snapshot

router = APIRouter()
logger = logging.getLogger(__name__)


@router.post("/simulate", response_model=MarketSummary)
async def simulate_market(request: SimulateRequest):
    """Generate a synthetic market and summarize it"""
    synthesizer = MarketSynthesizer.from_settings(settings, product_duration_h=request.product_duration_h)
    snapshots, exogenous = synthesizer.synthesize(request.seed, request.days, request.regime, request.start_day)
    logger.info(f"[SIMULATE] seed={request.seed} days={request.days} regime={request.regime}")
    return MarketSummary(
        days=request.days,
        regime=request.regime,
        snapshots=len(snapshots),
        resting_orders=sum(s.order_count() for s in snapshots),
        first_snapshot=snapshots[0].timestamp if snapshots else None,
        last_snapshot=snapshots[-1].timestamp if snapshots else None,
        fcr_mean_eur_mw=float(exogenous.fcr_clearing.to_numpy().mean()),
        daa_mean_eur_mwh={zone: float(exogenous.daa_prices[zone].mean()) for zone in exogenous.daa_prices.columns},
    )


def _snapshot(request: ClearRequest) -> OrderBookSnapshot:
    ladders: Dict[DeliveryPeriod, Dict[Side, List[Order]]] = defaultdict(lambda: {Side.BID: [], Side.ASK: []})
    for row in request.orders:
        if row.side not in SIDE_LABELS:
            raise ValueError(f"side must be 'bid' or 'ask', got {row.side!r}")
        product = DeliveryPeriod(start=row.product_start, duration_h=row.duration_h)
        side = Side(SIDE_LABELS[row.side])
        ladders[product][side].append(
            Order(order_id=row.order_id, product=product, side=side, limit_price=row.price, quantity=row.quantity)
        )
    books = {
        product: OrderBook(
            bids=tuple(sorted(sides[Side.BID], key=lambda o: -o.limit_price)),
            asks=tuple(sorted(sides[Side.ASK], key=lambda o: o.limit_price)),
        )
        for product, sides in ladders.items()
    }
    return OrderBookSnapshot(timestamp=request.timestamp, books=books)


@router.post("/clear", response_model=ClearResponse)
async def clear(request: ClearRequest):
    """Match an aggressor quantity against a posted snapshot"""
    snapshot = _snapshot(request)
    product = DeliveryPeriod(start=request.product_start, duration_h=request.duration_h)
    direction = Direction(request.direction)
    fills = clear_against_snapshot(snapshot, product, direction, request.quantity, request.limit_price)
    sign = 1.0 if direction == Direction.SELL else -1.0
    return ClearResponse(
        fills=[FillOut(order_id=f.order_id, quantity=f.quantity, price=f.price) for f in fills],
        filled_mw=sum(f.quantity for f in fills),
        cash_eur_per_h=sign * sum(f.quantity * f.price for f in fills),
    )
