"""CSV ingestion and export for order-book snapshots and exogenous series"""

import csv
from collections import defaultdict
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional
import logging

import pandas as pd

from app.exceptions import BookValidationError, IngestionError, StreamGapError
from app.models.schemas import (
    DeliveryPeriod,
    ExogenousSeries,
    Order,
    OrderBook,
    OrderBookSnapshot,
    Side,
    TradeRecord,
    check_ladders,
)
from app.models.tables import (
    EXOGENOUS_COLUMNS,
    EXOGENOUS_FILES,
    FCR_CLEARING_COLUMNS,
    FREQUENCY_COLUMNS,
    SIDE_LABELS,
    SNAPSHOT_COLUMNS,
    TRADE_LOG_COLUMNS,
)

logger = logging.getLogger(__name__)


def parse_instant(value: str) -> datetime:
    """Parse an ISO-8601 instant; naive values are taken as UTC"""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        return parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_instant(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class DataProcessor:
    """Read and write the engine's CSV inputs"""

    # ------------------------------------------------------------------
    # Snapshots
    # ------------------------------------------------------------------

    @staticmethod
    def load_snapshots(
        source: str,
        depth: int = 4,
        lead_minutes: Optional[int] = None,
    ) -> List[OrderBookSnapshot]:
        """Load a snapshot CSV into a time-ordered stream

        Rows sharing a timestamp form one snapshot. Ladders are sorted by price
        priority and truncated to `depth` orders per side.
        """
        path = Path(source)
        if not path.exists():
            raise IngestionError("snapshot file not found", path=str(path))

        snapshots: List[OrderBookSnapshot] = []
        duration: Optional[float] = None

        with path.open(newline="", encoding="utf-8-sig") as handle:
            reader = csv.DictReader(handle)
            headers = reader.fieldnames or []
            missing = [c for c in SNAPSHOT_COLUMNS if c not in headers]
            if missing:
                raise IngestionError(f"missing columns {missing}", row=1, path=str(path))

            current_ts: Optional[datetime] = None
            pending: Dict[DeliveryPeriod, Dict[Side, List[Order]]] = {}
            seen_ids: set = set()
            first_row = 2

            for row_num, row in enumerate(reader, start=2):
                try:
                    ts = parse_instant(row["timestamp"])
                    side_label = row["side"].strip().lower()
                    if side_label not in SIDE_LABELS:
                        raise ValueError(f"side must be 'bid' or 'ask', got {row['side']!r}")
                    product = DeliveryPeriod(
                        start=parse_instant(row["product_start"]),
                        duration_h=float(row["duration_h"]),
                    )
                    order = Order(
                        order_id=row["order_id"].strip(),
                        product=product,
                        side=Side(SIDE_LABELS[side_label]),
                        limit_price=float(row["price"]),
                        quantity=float(row["quantity"]),
                        qualifier=(row.get("qualifier") or None),
                    )
                except (ValueError, TypeError, KeyError) as e:
                    raise IngestionError(f"malformed row: {e}", row=row_num, path=str(path)) from e

                if duration is None:
                    duration = product.duration_h
                elif product.duration_h != duration:
                    raise IngestionError(
                        f"mixed product durations ({duration}h and {product.duration_h}h) in one stream",
                        row=row_num,
                        path=str(path),
                    )

                if current_ts is None or ts != current_ts:
                    if current_ts is not None:
                        if ts < current_ts:
                            raise IngestionError(
                                f"snapshot timestamps not increasing: {format_instant(ts)} after {format_instant(current_ts)}",
                                row=row_num,
                                path=str(path),
                            )
                        snapshots.append(
                            DataProcessor._assemble(current_ts, pending, depth, lead_minutes, first_row, str(path))
                        )
                    current_ts = ts
                    pending = {}
                    seen_ids = set()
                    first_row = row_num

                if order.order_id in seen_ids:
                    raise IngestionError(f"duplicate order_id {order.order_id!r} in snapshot", row=row_num, path=str(path))
                seen_ids.add(order.order_id)
                pending.setdefault(product, {Side.BID: [], Side.ASK: []})[order.side].append(order)

            if current_ts is not None:
                snapshots.append(DataProcessor._assemble(current_ts, pending, depth, lead_minutes, first_row, str(path)))

        logger.info(f"Loaded {len(snapshots)} snapshots from {path}")
        return snapshots

    @staticmethod
    def _assemble(
        timestamp: datetime,
        pending: Dict[DeliveryPeriod, Dict[Side, List[Order]]],
        depth: int,
        lead_minutes: Optional[int],
        row: int,
        path: str,
    ) -> OrderBookSnapshot:
        books = {}
        for product, ladders in pending.items():
            bids = sorted(ladders[Side.BID], key=lambda o: -o.limit_price)[:depth]
            asks = sorted(ladders[Side.ASK], key=lambda o: o.limit_price)[:depth]
            try:
                check_ladders(bids, asks)
            except BookValidationError as e:
                raise BookValidationError(
                    f"{e} (product {format_instant(product.start)}, snapshot {format_instant(timestamp)})",
                    row=row,
                    path=path,
                ) from e
            books[product] = OrderBook.model_construct(bids=tuple(bids), asks=tuple(asks))
        snapshot = OrderBookSnapshot.model_construct(timestamp=timestamp, books=books)
        if lead_minutes is not None:
            try:
                snapshot.validate_gate_closure(lead_minutes)
            except BookValidationError as e:
                raise BookValidationError(str(e), row=row, path=path) from e
        return snapshot

    @staticmethod
    def write_snapshots(snapshots: Iterable[OrderBookSnapshot], target: str) -> int:
        """Write a snapshot stream in the loader's CSV layout; returns the row count"""
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = 0
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(SNAPSHOT_COLUMNS)
            for snapshot in snapshots:
                ts = format_instant(snapshot.timestamp)
                for product in snapshot.products():
                    book = snapshot.books[product]
                    for label, ladder in (("bid", book.bids), ("ask", book.asks)):
                        for order in ladder:
                            writer.writerow([
                                ts,
                                format_instant(product.start),
                                repr(product.duration_h),
                                label,
                                repr(order.limit_price),
                                repr(order.quantity),
                                order.order_id,
                            ])
                            rows += 1
        logger.info(f"Wrote {rows} order rows to {path}")
        return rows

    # ------------------------------------------------------------------
    # Exogenous series
    # ------------------------------------------------------------------

    @staticmethod
    def _read_frame(path: Path, columns: List[str]) -> pd.DataFrame:
        if not path.exists():
            raise IngestionError("file not found", path=str(path))
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise IngestionError(f"missing columns {missing}", row=1, path=str(path))
        return frame

    @staticmethod
    def _parse_column(frame: pd.DataFrame, column: str, path: Path, kind: str) -> pd.Series:
        if kind == "instant":
            parsed = pd.to_datetime(frame[column], utc=True, errors="coerce", format="ISO8601")
        elif kind == "date":
            parsed = pd.to_datetime(frame[column], errors="coerce", format="%Y-%m-%d")
        else:
            parsed = pd.to_numeric(frame[column], errors="coerce")
        bad = parsed.isna()
        if bad.any():
            idx = int(bad.to_numpy().nonzero()[0][0])
            raise IngestionError(
                f"malformed {column} value {frame[column].iloc[idx]!r}", row=idx + 2, path=str(path)
            )
        return parsed

    @staticmethod
    def _load_hourly(path: Path) -> pd.DataFrame:
        frame = DataProcessor._read_frame(path, EXOGENOUS_COLUMNS)
        ts = DataProcessor._parse_column(frame, "timestamp", path, "instant")
        values = DataProcessor._parse_column(frame, "value", path, "number")
        long = pd.DataFrame({"timestamp": ts, "key": frame["key"].str.strip(), "value": values})
        dup = long.duplicated(subset=["timestamp", "key"])
        if dup.any():
            idx = int(dup.to_numpy().nonzero()[0][0])
            raise IngestionError("duplicate (timestamp, key) entry", row=idx + 2, path=str(path))
        wide = long.pivot(index="timestamp", columns="key", values="value").sort_index()
        wide.columns.name = None
        wide.index.name = "timestamp"
        DataProcessor.check_grid(wide, timedelta(hours=1), path.stem)
        return wide

    @staticmethod
    def check_grid(frame, step: timedelta, name: str) -> None:
        """Reject gaps inside any calendar day of a time-indexed series"""
        if len(frame) == 0:
            return
        if isinstance(frame, pd.DataFrame) and frame.isna().any().any():
            bad_ts = frame.index[frame.isna().any(axis=1)][0]
            raise StreamGapError(f"{name}: missing value at {bad_ts.isoformat()}")
        index = frame.index
        expected = int(round(timedelta(days=1) / step))
        for day, positions in pd.Series(range(len(index)), index=index).groupby(index.date):
            stamps = index[positions.to_numpy()]
            diffs = stamps[1:] - stamps[:-1]
            if len(diffs) and (diffs != pd.Timedelta(step)).any():
                raise StreamGapError(f"{name}: non-uniform sampling on {day}")
            if len(stamps) != expected:
                raise StreamGapError(f"{name}: {len(stamps)} of {expected} samples on {day}")

    @staticmethod
    def load_exogenous(directory: str) -> ExogenousSeries:
        """Load the four exogenous series files from a data directory"""
        base = Path(directory)
        daa = DataProcessor._load_hourly(base / EXOGENOUS_FILES["daa_prices"])
        forecasts = DataProcessor._load_hourly(base / EXOGENOUS_FILES["forecasts"])

        fcr_path = base / EXOGENOUS_FILES["fcr_clearing"]
        frame = DataProcessor._read_frame(fcr_path, FCR_CLEARING_COLUMNS)
        days = DataProcessor._parse_column(frame, "date", fcr_path, "date")
        blocks = DataProcessor._parse_column(frame, "efa_block", fcr_path, "number")
        prices = DataProcessor._parse_column(frame, "price_eur_mw", fcr_path, "number")
        if ((blocks < 1) | (blocks > 6) | (blocks != blocks.round())).any():
            idx = int(((blocks < 1) | (blocks > 6) | (blocks != blocks.round())).to_numpy().nonzero()[0][0])
            raise IngestionError("efa_block must be an integer 1..6", row=idx + 2, path=str(fcr_path))
        long = pd.DataFrame({"date": days.dt.date, "block": blocks.astype(int), "price": prices})
        if long.duplicated(subset=["date", "block"]).any():
            idx = int(long.duplicated(subset=["date", "block"]).to_numpy().nonzero()[0][0])
            raise IngestionError("duplicate (date, efa_block) entry", row=idx + 2, path=str(fcr_path))
        fcr = long.pivot(index="date", columns="block", values="price").sort_index()
        fcr.columns.name = None
        if fcr.isna().any().any():
            bad_day = fcr.index[fcr.isna().any(axis=1)][0]
            raise StreamGapError(f"fcr_clearing: missing block price on {bad_day}")

        freq_path = base / EXOGENOUS_FILES["frequency"]
        frame = DataProcessor._read_frame(freq_path, FREQUENCY_COLUMNS)
        ts = DataProcessor._parse_column(frame, "timestamp", freq_path, "instant")
        values = DataProcessor._parse_column(frame, "delta_f_hz", freq_path, "number")
        frequency = pd.Series(values.to_numpy(dtype=float), index=pd.DatetimeIndex(ts), name="delta_f_hz").sort_index()
        if len(frequency) > 1:
            step = (frequency.index[1] - frequency.index[0]).to_pytimedelta()
            DataProcessor.check_grid(frequency, step, "frequency")

        logger.info(
            f"Loaded exogenous series from {base}: {len(daa)} DAA hours, {len(forecasts)} forecast hours, "
            f"{len(fcr)} FCR days, {len(frequency)} frequency samples"
        )
        return ExogenousSeries(daa_prices=daa, forecasts=forecasts, fcr_clearing=fcr, frequency=frequency)

    @staticmethod
    def write_exogenous(series: ExogenousSeries, directory: str) -> List[str]:
        """Write the exogenous series in the loader's layout"""
        base = Path(directory)
        base.mkdir(parents=True, exist_ok=True)
        written = []

        for name, frame in (("daa_prices", series.daa_prices), ("forecasts", series.forecasts)):
            path = base / EXOGENOUS_FILES[name]
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(EXOGENOUS_COLUMNS)
                for ts, row in frame.iterrows():
                    for key in frame.columns:
                        writer.writerow([format_instant(ts.to_pydatetime()), key, repr(float(row[key]))])
            written.append(str(path))

        path = base / EXOGENOUS_FILES["fcr_clearing"]
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(FCR_CLEARING_COLUMNS)
            for day, row in series.fcr_clearing.iterrows():
                for block in series.fcr_clearing.columns:
                    writer.writerow([day.isoformat(), int(block), repr(float(row[block]))])
        written.append(str(path))

        path = base / EXOGENOUS_FILES["frequency"]
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(FREQUENCY_COLUMNS)
            for ts, value in series.frequency.items():
                writer.writerow([format_instant(ts.to_pydatetime()), repr(float(value))])
        written.append(str(path))

        logger.info(f"Wrote exogenous series to {base}")
        return written

    # ------------------------------------------------------------------
    # Trade log
    # ------------------------------------------------------------------

    @staticmethod
    def write_trade_log(trades: Iterable[TradeRecord], target: str) -> int:
        """Write rolling-intrinsic fills, one row per fill"""
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = 0
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRADE_LOG_COLUMNS)
            for trade in trades:
                writer.writerow([
                    format_instant(trade.solve_time),
                    format_instant(trade.product_start),
                    trade.side,
                    repr(float(trade.price)),
                    repr(float(trade.mw)),
                    repr(float(trade.cash_eur)),
                ])
                rows += 1
        return rows


def snapshots_by_day(snapshots: List[OrderBookSnapshot]) -> Dict[date, List[OrderBookSnapshot]]:
    """Group a stream by the delivery day of the products it carries"""
    grouped: Dict[date, List[OrderBookSnapshot]] = defaultdict(list)
    for snapshot in snapshots:
        days = {p.start.date() for p in snapshot.books}
        for day in days:
            grouped[day].append(snapshot)
    return dict(grouped)


def restrict_to_day(snapshot: OrderBookSnapshot, day: date) -> OrderBookSnapshot:
    books = {p: b for p, b in snapshot.books.items() if p.start.date() == day}
    return OrderBookSnapshot.model_construct(timestamp=snapshot.timestamp, books=books)
