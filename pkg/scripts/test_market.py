"""Order books, clearing, CSV ingestion and the synthetic market"""

from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from app.exceptions import BookValidationError, DomainError, IngestionError, StreamGapError
from app.models.schemas import DeliveryPeriod, Order, OrderBook, OrderBookSnapshot, Side
from app.services.data_processor import DataProcessor, snapshots_by_day
from app.services.fcr_physics import day_start
from app.services.market_synthesizer import MarketSynthesizer, synthesize_market
from app.services.order_book import Direction, clear_against_snapshot, deplete, ladder_volume

from conftest import DELIVERY_DAY, utc


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def test_delivery_period_alignment():
    DeliveryPeriod(start=utc(2024, 3, 5, 10, 45), duration_h=0.25)
    with pytest.raises(ValueError):
        DeliveryPeriod(start=utc(2024, 3, 5, 10, 45), duration_h=1.0)
    with pytest.raises(ValueError):
        DeliveryPeriod(start=utc(2024, 3, 5, 10, 0), duration_h=2.0)


def test_order_volume_grid(hour_product):
    product = hour_product(3)
    with pytest.raises(ValueError):
        Order(order_id="x", product=product, side=Side.BID, limit_price=40.0, quantity=0.05)
    with pytest.raises(ValueError):
        Order(order_id="x", product=product, side=Side.BID, limit_price=40.0, quantity=1.25)
    assert Order(order_id="x", product=product, side=Side.ASK, limit_price=40.0, quantity=1.2).quantity == 1.2


def test_crossed_book_rejected(make_book, hour_product):
    with pytest.raises(BookValidationError):
        make_book(hour_product(0), bids=[(50.0, 1.0)], asks=[(49.0, 1.0)])


def test_unsorted_ladder_rejected(make_book, hour_product):
    with pytest.raises(BookValidationError):
        make_book(hour_product(0), asks=[(45.0, 1.0), (37.0, 1.0)])


# ---------------------------------------------------------------------------
# Clearing
# ---------------------------------------------------------------------------

def test_buy_walks_asks_up_to_limit(make_snapshot, hour_product):
    """Buying 29 MW against 22 MW at 37 and 12 MW at 45 takes 7 MW of the second order"""
    product = hour_product(8)
    snap = make_snapshot(utc(2024, 3, 4, 20), {product: ([], [(37.0, 22.0), (45.0, 12.0)])})
    fills = clear_against_snapshot(snap, product, Direction.BUY, 29.0, limit_price=50.0)
    assert [(f.price, f.quantity) for f in fills] == [(37.0, 22.0), (45.0, 7.0)]

    rest = deplete(snap, {f.order_id: f.quantity for f in fills})
    asks = rest.books[product].asks
    assert len(asks) == 1
    assert asks[0].limit_price == 45.0
    assert asks[0].quantity == pytest.approx(5.0)


def test_sell_leaves_remainder_unfilled(make_snapshot, hour_product):
    product = hour_product(8)
    snap = make_snapshot(utc(2024, 3, 4, 20), {product: ([(40.0, 4.0), (35.0, 4.0)], [])})
    fills = clear_against_snapshot(snap, product, "sell", 10.0)
    assert [(f.price, f.quantity) for f in fills] == [(40.0, 4.0), (35.0, 4.0)]


def test_limit_price_stops_the_walk(make_snapshot, hour_product):
    product = hour_product(8)
    snap = make_snapshot(utc(2024, 3, 4, 20), {product: ([], [(37.0, 2.0), (45.0, 2.0)])})
    fills = clear_against_snapshot(snap, product, Direction.BUY, 4.0, limit_price=40.0)
    assert sum(f.quantity for f in fills) == pytest.approx(2.0)


def test_zero_quantity_and_bad_arguments(make_snapshot, hour_product):
    product = hour_product(8)
    snap = make_snapshot(utc(2024, 3, 4, 20), {product: ([(40.0, 4.0)], [(45.0, 1.0)])})
    assert clear_against_snapshot(snap, product, Direction.BUY, 0.0) == []
    with pytest.raises(DomainError):
        clear_against_snapshot(snap, product, Direction.BUY, -1.0)
    with pytest.raises(DomainError):
        clear_against_snapshot(snap, hour_product(9), Direction.BUY, 1.0)


@hyp_settings(max_examples=60, deadline=None)
@given(
    asks=st.lists(st.tuples(st.integers(1, 200), st.integers(1, 50)), min_size=0, max_size=6, unique_by=lambda t: t[0]),
    quantity=st.integers(0, 400),
    limit=st.one_of(st.none(), st.integers(1, 200)),
)
def test_matching_conservation_and_priority(asks, quantity, limit):
    """Fills equal min(requested, admissible volume) and get weakly worse for the buyer"""
    product = DeliveryPeriod(start=day_start(DELIVERY_DAY) + timedelta(hours=6), duration_h=1.0)
    ladder = sorted(asks)
    book = OrderBook(asks=tuple(
        Order(order_id=f"a{k}", product=product, side=Side.ASK, limit_price=float(p), quantity=q / 10)
        for k, (p, q) in enumerate(ladder)
    ))
    snap = OrderBookSnapshot(timestamp=utc(2024, 3, 4, 20), books={product: book})
    requested = quantity / 10
    lim = float(limit) if limit is not None else None
    fills = clear_against_snapshot(snap, product, Direction.BUY, requested, limit_price=lim)

    available = ladder_volume(book, Direction.BUY, lim)
    assert sum(f.quantity for f in fills) == pytest.approx(min(requested, available), abs=1e-9)
    prices = [f.price for f in fills]
    assert prices == sorted(prices)
    by_id = {o.order_id: o.quantity for o in book.asks}
    assert all(f.quantity <= by_id[f.order_id] + 1e-12 for f in fills)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

SNAPSHOT_CSV = """timestamp,product_start,duration_h,side,price,quantity,order_id
2024-03-04T19:00:00Z,2024-03-05T06:00:00Z,1.0,bid,40.0,1.0,b1
2024-03-04T19:00:00Z,2024-03-05T06:00:00Z,1.0,bid,42.0,2.0,b2
2024-03-04T19:00:00Z,2024-03-05T06:00:00Z,1.0,ask,45.0,1.5,a1
2024-03-04T19:15:00Z,2024-03-05T06:00:00Z,1.0,ask,44.0,1.0,a2
"""


def test_load_snapshots_sorts_ladders(tmp_path):
    path = tmp_path / "snapshots.csv"
    path.write_text(SNAPSHOT_CSV)
    snapshots = DataProcessor.load_snapshots(str(path))
    assert [s.timestamp for s in snapshots] == [utc(2024, 3, 4, 19), utc(2024, 3, 4, 19, 15)]
    book = next(iter(snapshots[0].books.values()))
    assert [o.limit_price for o in book.bids] == [42.0, 40.0]
    assert book.asks[0].order_id == "a1"


def test_load_snapshots_truncates_depth(tmp_path):
    path = tmp_path / "snapshots.csv"
    path.write_text(SNAPSHOT_CSV)
    book = next(iter(DataProcessor.load_snapshots(str(path), depth=1)[0].books.values()))
    assert [o.order_id for o in book.bids] == ["b2"]


def test_malformed_row_reports_row_number(tmp_path):
    path = tmp_path / "snapshots.csv"
    path.write_text(SNAPSHOT_CSV.replace("45.0,1.5,a1", "cheap,1.5,a1"))
    with pytest.raises(IngestionError) as err:
        DataProcessor.load_snapshots(str(path))
    assert err.value.row == 4


def test_crossed_snapshot_rejected_on_load(tmp_path):
    path = tmp_path / "snapshots.csv"
    path.write_text(SNAPSHOT_CSV.replace("45.0,1.5,a1", "41.0,1.5,a1"))
    with pytest.raises(BookValidationError):
        DataProcessor.load_snapshots(str(path))


def test_decreasing_timestamps_rejected(tmp_path):
    path = tmp_path / "snapshots.csv"
    path.write_text(SNAPSHOT_CSV.replace("2024-03-04T19:15:00Z", "2024-03-04T18:45:00Z"))
    with pytest.raises(IngestionError):
        DataProcessor.load_snapshots(str(path))


def test_snapshot_write_then_read(tmp_path, make_snapshot, hour_product):
    """A written stream reads back field for field"""
    p0, p1 = hour_product(0), hour_product(1)
    stream = [
        make_snapshot(utc(2024, 3, 4, 19), {p0: ([(40.0, 1.0)], [(45.0, 2.0)]), p1: ([], [(20.0, 0.5)])}),
        make_snapshot(utc(2024, 3, 4, 19, 15), {p1: ([(90.0, 1.5), (80.0, 0.3)], [])}),
    ]
    target = tmp_path / "snapshots.csv"
    DataProcessor.write_snapshots(stream, str(target))
    loaded = DataProcessor.load_snapshots(str(target))
    assert len(loaded) == 2
    for original, restored in zip(stream, loaded):
        assert restored.timestamp == original.timestamp
        assert set(restored.books) == set(original.books)
        for product, book in original.books.items():
            assert restored.books[product].bids == book.bids
            assert restored.books[product].asks == book.asks


def test_exogenous_write_then_read(tmp_path, flat_exogenous):
    series = flat_exogenous(date(2024, 3, 4), 2, fcr=12.5)
    DataProcessor.write_exogenous(series, str(tmp_path))
    loaded = DataProcessor.load_exogenous(str(tmp_path))
    assert loaded.fcr_prices(date(2024, 3, 5)) == [12.5] * 6
    assert list(loaded.daa_prices.columns) == sorted(series.daa_prices.columns)
    assert len(loaded.frequency) == len(series.frequency)


def test_gap_inside_a_day_is_an_ingestion_error(tmp_path, flat_exogenous):
    DataProcessor.write_exogenous(flat_exogenous(date(2024, 3, 4), 1), str(tmp_path))
    path = tmp_path / "daa_prices.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(l for l in lines if "T05:00:00Z" not in l) + "\n")
    with pytest.raises(StreamGapError):
        DataProcessor.load_exogenous(str(tmp_path))


# ---------------------------------------------------------------------------
# Synthetic market
# ---------------------------------------------------------------------------

def _small_synthesizer():
    return MarketSynthesizer(product_duration_h=1.0, depth=2, interval_minutes=60)


def test_synthesis_is_deterministic():
    first = _small_synthesizer().synthesize(7, 2, "block-spread")
    second = _small_synthesizer().synthesize(7, 2, "block-spread")
    assert [s.timestamp for s in first[0]] == [s.timestamp for s in second[0]]
    assert all(a.books == b.books for a, b in zip(first[0], second[0]))
    assert first[1].frequency.equals(second[1].frequency)
    assert first[1].daa_prices.equals(second[1].daa_prices)


def test_longer_run_reproduces_its_prefix():
    short = _small_synthesizer().synthesize(3, 1, "mixed")[1]
    long = _small_synthesizer().synthesize(3, 2, "mixed")[1]
    assert short.fcr_clearing.iloc[0].equals(long.fcr_clearing.iloc[0])


def test_synthetic_books_are_valid():
    snapshots, _ = _small_synthesizer().synthesize(11, 1, "alternating")
    for snap in snapshots[:10]:
        snap.validate_gate_closure(30)
        for book in snap.books.values():
            OrderBook(bids=book.bids, asks=book.asks)


def test_block_spread_prices_rise_in_second_half():
    _, exogenous = _small_synthesizer().synthesize(5, 1, "block-spread")
    prices = exogenous.daa_prices["DE-LU"].to_numpy()
    assert prices[12:].mean() > prices[:12].mean() + 10


def test_alternating_prices_oscillate_hourly():
    snapshots, _ = _small_synthesizer().synthesize(5, 1, "alternating")
    first = snapshots[0]
    mids = [
        (b.bids[0].limit_price + b.asks[0].limit_price) / 2
        for _, b in sorted(first.books.items(), key=lambda kv: kv[0].start)
    ]
    swings = np.sign(np.diff(mids))
    assert (swings[:-1] != swings[1:]).mean() > 0.7


def test_frequency_is_mean_zero_with_excursions():
    _, exogenous = _small_synthesizer().synthesize(9, 1, "mixed")
    values = exogenous.frequency.to_numpy()
    assert abs(values.mean()) < 1e-9
    assert (np.abs(values) > 0.01).any()


def test_unknown_regime_and_empty_span():
    with pytest.raises(DomainError):
        synthesize_market(1, 1, "sideways")
    with pytest.raises(DomainError):
        synthesize_market(1, 0, "mixed")


def test_snapshots_grouped_by_delivery_day():
    snapshots, _ = _small_synthesizer().synthesize(2, 2, "mixed")
    grouped = snapshots_by_day(snapshots)
    assert set(grouped) == {date(2024, 1, 1), date(2024, 1, 2)}
