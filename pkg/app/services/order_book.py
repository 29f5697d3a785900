"""Continuous-market clearing against recorded order-book snapshots"""

from enum import Enum
from typing import Dict, List, NamedTuple, Optional
import logging

from app.exceptions import DomainError
from app.models.schemas import DeliveryPeriod, OrderBook, OrderBookSnapshot, Side

logger = logging.getLogger(__name__)

_QTY_TOL = 1e-9


class Direction(str, Enum):
    """Aggressor direction"""
    BUY = "buy"
    SELL = "sell"


class Fill(NamedTuple):
    order_id: str
    quantity: float
    price: float


def clear_against_snapshot(
    snapshot: OrderBookSnapshot,
    product: DeliveryPeriod,
    side: Direction,
    quantity: float,
    limit_price: Optional[float] = None,
) -> List[Fill]:
    """Walk the opposing ladder in price priority

    A buy consumes asks from the cheapest up, a sell consumes bids from the
    dearest down. Orders priced worse than limit_price are not touched.
    """
    side = Direction(side)
    if quantity < 0:
        raise DomainError(f"quantity must be non-negative, got {quantity}")
    book = snapshot.books.get(product)
    if book is None:
        raise DomainError(f"product {product.start.isoformat()} not in snapshot {snapshot.timestamp.isoformat()}")

    ladder = book.asks if side == Direction.BUY else book.bids
    fills: List[Fill] = []
    remaining = quantity
    for order in ladder:
        if remaining <= _QTY_TOL:
            break
        if limit_price is not None:
            if side == Direction.BUY and order.limit_price > limit_price:
                break
            if side == Direction.SELL and order.limit_price < limit_price:
                break
        take = min(remaining, order.quantity)
        fills.append(Fill(order.order_id, take, order.limit_price))
        remaining -= take

    logger.debug(
        f"Cleared {side.value} {quantity - max(remaining, 0.0):.3f}/{quantity:.3f} MW "
        f"for {product.start.isoformat()} in {len(fills)} fills"
    )
    return fills


def deplete(snapshot: OrderBookSnapshot, filled: Dict[str, float]) -> OrderBookSnapshot:
    """Copy of snapshot with filled quantities removed from their orders

    Partially consumed orders keep their remainder; exhausted orders leave
    the ladder.
    """
    if not filled:
        return snapshot
    books: Dict[DeliveryPeriod, OrderBook] = {}
    for product, book in snapshot.books.items():
        ladders = {}
        for side in (Side.BID, Side.ASK):
            kept = []
            for order in book.ladder(side):
                used = filled.get(order.order_id, 0.0)
                if used <= _QTY_TOL:
                    kept.append(order)
                    continue
                rest = order.quantity - used
                if rest > _QTY_TOL:
                    kept.append(order.model_copy(update={"quantity": rest}))
            ladders[side] = tuple(kept)
        books[product] = OrderBook.model_construct(bids=ladders[Side.BID], asks=ladders[Side.ASK])
    return OrderBookSnapshot.model_construct(timestamp=snapshot.timestamp, books=books)


def ladder_volume(book: OrderBook, side: Direction, limit_price: Optional[float] = None) -> float:
    """Opposing volume reachable by an aggressor at limit_price"""
    ladder = book.asks if Direction(side) == Direction.BUY else book.bids
    total = 0.0
    for order in ladder:
        if limit_price is not None:
            if side == Direction.BUY and order.limit_price > limit_price:
                continue
            if side == Direction.SELL and order.limit_price < limit_price:
                continue
        total += order.quantity
    return total
