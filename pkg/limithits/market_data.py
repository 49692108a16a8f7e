"""Tick-data model, CSV codec and trade aggressor classification.

All prices are integer cents and all volumes integer shares. The tick CSV has
one row per quote record::

    stock_id,date,time,trade_price,trade_volume,
    ask_price_1,ask_volume_1,...,ask_price_J,ask_volume_J,
    bid_price_1,bid_volume_1,...,bid_price_J,bid_volume_J

with J in {3, 5} inferred from the header. Prices are decimal yuan with
exactly two fraction digits; "0.00" marks an absent book level or no trade.
"""
import csv
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from limithits.config import SessionWindows, format_clock


logger = logging.getLogger(__name__)

SUPPORTED_LEVELS = (3, 5)
BASE_COLUMNS = ("stock_id", "date", "time", "trade_price", "trade_volume")
SESSION_COLUMNS = (
    "stock_id", "date", "prev_close", "shares_outstanding",
    "is_ipo_day", "is_ex_dividend_day", "next_day_open",
)

_STOCK_RE = re.compile(r"^\d{6}$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_TIME_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2})$")
_PRICE_RE = re.compile(r"^(0|[1-9]\d*)\.(\d{2})$")
_VOLUME_RE = re.compile(r"^(0|[1-9]\d*)$")

_TICK_WINDOW = SessionWindows()


class TickFormatError(ValueError):
    """Raised for fatal, file-level problems with tick or session files."""


class TradeDirection(str, Enum):
    BUYER_INITIATED = "buyer_initiated"
    SELLER_INITIATED = "seller_initiated"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class LobSnapshot:
    """Best J levels of both book sides; a zero price means the level is absent."""

    ask_prices: Tuple[int, ...]
    ask_volumes: Tuple[int, ...]
    bid_prices: Tuple[int, ...]
    bid_volumes: Tuple[int, ...]

    @property
    def levels(self) -> int:
        return len(self.ask_prices)

    @property
    def best_ask(self) -> Optional[int]:
        return self.ask_prices[0] or None

    @property
    def best_bid(self) -> Optional[int]:
        return self.bid_prices[0] or None

    def problem(self) -> Optional[str]:
        """Describe the first invariant violation, or None for a valid book."""
        if self.levels not in SUPPORTED_LEVELS:
            return f"unsupported book depth {self.levels}"
        if not (len(self.ask_volumes) == len(self.bid_prices) == len(self.bid_volumes) == self.levels):
            return "book sides have different depths"
        for side, prices, volumes in (("ask", self.ask_prices, self.ask_volumes),
                                      ("bid", self.bid_prices, self.bid_volumes)):
            if any(p < 0 for p in prices) or any(v < 0 for v in volumes):
                return f"negative {side} price or volume"
            present = [p for p in prices if p]
            ordered = zip(present, present[1:])
            if side == "ask" and any(a >= b for a, b in ordered):
                return "ask prices not strictly increasing"
            if side == "bid" and any(a <= b for a, b in ordered):
                return "bid prices not strictly decreasing"
        if self.best_ask is not None and self.best_bid is not None and self.best_ask < self.best_bid:
            return f"crossed book: ask {format_cents(self.best_ask)} < bid {format_cents(self.best_bid)}"
        return None


@dataclass(frozen=True)
class TickRecord:
    stock_id: str
    timestamp: int
    trade_price: int
    trade_volume: int
    lob: LobSnapshot

    @property
    def has_trade(self) -> bool:
        return self.trade_price > 0

    def problem(self) -> Optional[str]:
        if not _TICK_WINDOW.auction_start <= self.timestamp <= _TICK_WINDOW.close:
            return f"timestamp {format_clock(self.timestamp)} outside 09:15:00-15:00:00"
        if self.trade_price < 0 or self.trade_volume < 0:
            return "negative trade price or volume"
        if (self.trade_price > 0) != (self.trade_volume > 0):
            return "trade price and trade volume must both be zero or both be positive"
        return self.lob.problem()


@dataclass(frozen=True)
class StockDayMeta:
    """Per stock-day facts supplied by the session sidecar file."""

    prev_close: int
    shares_outstanding: int
    is_ipo_day: bool = False
    is_ex_dividend_day: bool = False
    next_day_open: Optional[int] = None


@dataclass(frozen=True)
class StockDaySession:
    stock_id: str
    date: date
    prev_close: int
    capitalization: int
    is_ipo_day: bool
    is_ex_dividend_day: bool
    next_day_open: Optional[int]
    ticks: Tuple[TickRecord, ...]

    @property
    def excluded(self) -> bool:
        """IPO days and ex-dividend days are kept out of every statistic."""
        return self.is_ipo_day or self.is_ex_dividend_day

    @property
    def close_price(self) -> Optional[int]:
        """Last trade price of the day."""
        for tick in reversed(self.ticks):
            if tick.has_trade:
                return tick.trade_price
        return None


@dataclass(frozen=True)
class ClassifiedTrade:
    """A trade with its aggressor side and the best quotes standing right before it."""

    index: int
    timestamp: int
    price: int
    volume: int
    direction: TradeDirection
    ask_before: Optional[int]
    bid_before: Optional[int]


@dataclass(frozen=True)
class TickFileFormat:
    levels: int

    @cached_property
    def header(self) -> Tuple[str, ...]:
        return tick_file_header(self.levels)

    @cached_property
    def width(self) -> int:
        return len(self.header)

    @property
    def price_columns(self) -> List[str]:
        """trade_price, then the book prices in header order."""
        return ["trade_price"] + list(self.header[len(BASE_COLUMNS)::2])

    @property
    def volume_columns(self) -> List[str]:
        return ["trade_volume"] + list(self.header[len(BASE_COLUMNS) + 1::2])

    @classmethod
    def from_header(cls, header: Sequence[str]) -> "TickFileFormat":
        """Infer the book depth from a header row.

        Raises:
            TickFormatError: If the header does not match the canonical layout
        """
        header = tuple(column.strip() for column in header)
        extra = len(header) - len(BASE_COLUMNS)
        if extra <= 0 or extra % 4:
            raise TickFormatError(f"Header has {len(header)} columns; expected 5 + 4*J")
        fmt = cls(levels=extra // 4)
        if fmt.levels not in SUPPORTED_LEVELS:
            raise TickFormatError(f"Unsupported book depth J={fmt.levels}; expected 3 or 5")
        if header != fmt.header:
            raise TickFormatError(f"Unexpected header columns: {','.join(header)}")
        return fmt


@dataclass(frozen=True)
class RecordError:
    path: str
    row: int
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.row}: {self.message}"


@dataclass
class ParseReport:
    """Row, session and error tallies gathered while parsing."""

    rows_total: int = 0
    rows_valid: int = 0
    sessions: int = 0
    excluded_sessions: int = 0
    files: int = 0
    errors: List[RecordError] = field(default_factory=list)
    skipped_sessions: List[str] = field(default_factory=list)

    def add_error(self, path: str, row: int, message: str) -> None:
        error = RecordError(str(path), row, message)
        self.errors.append(error)
        logger.warning("Record error %s", error)

    def skip_session(self, message: str) -> None:
        self.skipped_sessions.append(message)
        logger.warning("Skipping session: %s", message)

    def merge(self, other: "ParseReport") -> "ParseReport":
        self.rows_total += other.rows_total
        self.rows_valid += other.rows_valid
        self.sessions += other.sessions
        self.excluded_sessions += other.excluded_sessions
        self.files += other.files
        self.errors.extend(other.errors)
        self.skipped_sessions.extend(other.skipped_sessions)
        return self

    def to_dict(self) -> dict:
        return {
            "files": self.files,
            "rows_total": self.rows_total,
            "rows_valid": self.rows_valid,
            "record_errors": len(self.errors),
            "sessions": self.sessions,
            "excluded_sessions": self.excluded_sessions,
            "skipped_sessions": list(self.skipped_sessions),
            "errors": [str(e) for e in self.errors],
        }


def tick_file_header(levels: int) -> Tuple[str, ...]:
    columns = list(BASE_COLUMNS)
    for side in ("ask", "bid"):
        for j in range(1, levels + 1):
            columns += [f"{side}_price_{j}", f"{side}_volume_{j}"]
    return tuple(columns)


def parse_cents(text: str) -> int:
    """Parse decimal yuan with exactly two fraction digits into integer cents."""
    match = _PRICE_RE.match(text)
    if not match:
        raise ValueError(f"bad price {text!r}")
    return int(match.group(1)) * 100 + int(match.group(2))


def format_cents(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def _parse_volume(text: str) -> int:
    if not _VOLUME_RE.match(text):
        raise ValueError(f"bad volume {text!r}")
    return int(text)


def _parse_time(text: str) -> int:
    match = _TIME_RE.match(text)
    if not match:
        raise ValueError(f"bad time {text!r}")
    hours, minutes, seconds = (int(g) for g in match.groups())
    if hours > 23 or minutes > 59 or seconds > 59:
        raise ValueError(f"bad time {text!r}")
    return hours * 3600 + minutes * 60 + seconds


def _parse_stock_id(text: str) -> str:
    if not _STOCK_RE.match(text):
        raise ValueError(f"bad stock_id {text!r}")
    return text


def _parse_date(text: str) -> date:
    if not _DATE_RE.match(text):
        raise ValueError(f"bad date {text!r}")
    return date.fromisoformat(text)


def _parse_flag(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"bad flag {text!r}; expected 0 or 1")
    return text == "1"


def parse_tick_row(row: Sequence[str], fmt: TickFileFormat) -> Tuple[str, date, TickRecord]:
    """Parse and validate one CSV row.

    Returns:
        Tuple of (stock_id, date, TickRecord)

    Raises:
        ValueError: Describing the first problem found in the row
    """
    if len(row) != fmt.width:
        raise ValueError(f"expected {fmt.width} fields, got {len(row)}")
    stock_id = _parse_stock_id(row[0])
    day = _parse_date(row[1])
    timestamp = _parse_time(row[2])
    trade_price = parse_cents(row[3])
    trade_volume = _parse_volume(row[4])

    levels = fmt.levels
    book = row[5:]
    ask_prices = tuple(parse_cents(book[2 * j]) for j in range(levels))
    ask_volumes = tuple(_parse_volume(book[2 * j + 1]) for j in range(levels))
    bid_book = book[2 * levels:]
    bid_prices = tuple(parse_cents(bid_book[2 * j]) for j in range(levels))
    bid_volumes = tuple(_parse_volume(bid_book[2 * j + 1]) for j in range(levels))

    tick = TickRecord(
        stock_id=stock_id,
        timestamp=timestamp,
        trade_price=trade_price,
        trade_volume=trade_volume,
        lob=LobSnapshot(ask_prices, ask_volumes, bid_prices, bid_volumes),
    )
    problem = tick.problem()
    if problem:
        raise ValueError(problem)
    return stock_id, day, tick


def format_tick_row(day: date, tick: TickRecord) -> List[str]:
    """Canonical CSV fields of one tick; the inverse of parse_tick_row."""
    row = [
        tick.stock_id,
        day.isoformat(),
        format_clock(tick.timestamp),
        format_cents(tick.trade_price),
        str(tick.trade_volume),
    ]
    lob = tick.lob
    for price, volume in zip(lob.ask_prices, lob.ask_volumes):
        row += [format_cents(price), str(volume)]
    for price, volume in zip(lob.bid_prices, lob.bid_volumes):
        row += [format_cents(price), str(volume)]
    return row


def write_tick_file(path: Path, sessions: Iterable[StockDaySession], levels: int) -> Path:
    """Write sessions in the canonical tick CSV format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(tick_file_header(levels))
        for session in sessions:
            for tick in session.ticks:
                writer.writerow(format_tick_row(session.date, tick))
    return path


def load_session_metadata(path: Path) -> Dict[Tuple[str, date], StockDayMeta]:
    """Load the per stock-day sidecar file.

    Args:
        path: CSV with columns stock_id, date, prev_close, shares_outstanding,
              is_ipo_day, is_ex_dividend_day, next_day_open (empty = absent)

    Returns:
        dict keyed by (stock_id, date)

    Raises:
        TickFormatError: If the file is unreadable or any row is malformed
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TickFormatError(f"Cannot read session file {path}: {e}") from e

    missing = [c for c in SESSION_COLUMNS if c not in frame.columns]
    if missing:
        raise TickFormatError(f"{path}: missing columns {', '.join(missing)}")

    metadata = {}
    for offset, row in enumerate(frame[list(SESSION_COLUMNS)].itertuples(index=False, name=None)):
        line = offset + 2
        stock_id, day_text, prev_close, shares, ipo, ex_div, next_open = (v.strip() for v in row)
        try:
            key = (_parse_stock_id(stock_id), _parse_date(day_text))
            meta = StockDayMeta(
                prev_close=parse_cents(prev_close),
                shares_outstanding=_parse_volume(shares),
                is_ipo_day=_parse_flag(ipo),
                is_ex_dividend_day=_parse_flag(ex_div),
                next_day_open=parse_cents(next_open) if next_open else None,
            )
            if meta.prev_close <= 0:
                raise ValueError("prev_close must be positive")
        except ValueError as e:
            raise TickFormatError(f"{path}:{line}: {e}") from e
        if key in metadata:
            raise TickFormatError(f"{path}:{line}: duplicate stock-day {stock_id} {day_text}")
        metadata[key] = meta
    return metadata


def write_session_metadata(path: Path, rows: Iterable[Tuple[str, date, StockDayMeta]]) -> Path:
    """Write the sidecar file read by load_session_metadata."""
    records = [
        {
            "stock_id": stock_id,
            "date": day.isoformat(),
            "prev_close": format_cents(meta.prev_close),
            "shares_outstanding": str(meta.shares_outstanding),
            "is_ipo_day": "1" if meta.is_ipo_day else "0",
            "is_ex_dividend_day": "1" if meta.is_ex_dividend_day else "0",
            "next_day_open": "" if meta.next_day_open is None else format_cents(meta.next_day_open),
        }
        for stock_id, day, meta in rows
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(records, columns=list(SESSION_COLUMNS)).to_csv(path, index=False, lineterminator="\n")
    return path


def build_session(stock_id: str, day: date, meta: StockDayMeta,
                  ticks: Iterable[TickRecord]) -> StockDaySession:
    """Assemble an immutable session; ticks are stably sorted by timestamp."""
    return StockDaySession(
        stock_id=stock_id,
        date=day,
        prev_close=meta.prev_close,
        capitalization=meta.shares_outstanding * meta.prev_close,
        is_ipo_day=meta.is_ipo_day,
        is_ex_dividend_day=meta.is_ex_dividend_day,
        next_day_open=meta.next_day_open,
        ticks=tuple(sorted(ticks, key=lambda t: t.timestamp)),
    )


def _parse_distinct(values: np.ndarray, parse: Callable[[str], object]) -> Tuple[np.ndarray, np.ndarray, list]:
    """Parse a text array through its distinct values.

    Returns:
        (codes into the distinct values, per-value validity, parsed distinct values)
    """
    codes, uniques = pd.factorize(values)
    parsed, ok = [], np.ones(len(uniques), dtype=bool)
    for i, text in enumerate(uniques):
        try:
            parsed.append(parse(text))
        except ValueError:
            parsed.append(None)
            ok[i] = False
    return codes, ok[codes], parsed


def _parse_numeric(frame: pd.DataFrame, columns: List[str],
                   parse: Callable[[str], int]) -> Tuple[np.ndarray, np.ndarray]:
    block = frame[columns].to_numpy()
    codes, ok, parsed = _parse_distinct(block.ravel(), parse)
    values = np.array([-1 if v is None else v for v in parsed], dtype=np.int64)[codes]
    return values.reshape(block.shape), ok.reshape(block.shape).all(axis=1)


def _misordered(prices: np.ndarray, ascending: bool) -> np.ndarray:
    """Rows whose non-zero levels are not strictly monotone."""
    bad = np.zeros(len(prices), dtype=bool)
    last = prices[:, 0].copy()
    for j in range(1, prices.shape[1]):
        current = prices[:, j]
        present = current > 0
        both = present & (last > 0)
        bad |= both & ((current <= last) if ascending else (current >= last))
        last = np.where(present, current, last)
    return bad


@dataclass
class _TickColumns:
    """Parsed columns of the valid rows of one tick file, in file order."""

    lines: np.ndarray
    stock_codes: np.ndarray
    date_codes: np.ndarray
    stocks: list
    dates: list
    timestamps: List[int]
    trade_prices: List[int]
    trade_volumes: List[int]
    books: List[List[int]]


def _read_tick_columns(
    fmt: TickFileFormat,
    rows: List[List[str]],
    lines: List[int],
) -> Tuple[_TickColumns, List[Tuple[int, str]]]:
    """Validate well-sized rows column by column.

    Rows failing a check are re-parsed one by one with parse_tick_row to
    word the error exactly as a single-row parse would.
    """
    frame = pd.DataFrame(rows, columns=list(fmt.header), index=pd.Index(lines, name="line"))
    stock_codes, stock_ok, stocks = _parse_distinct(frame["stock_id"].to_numpy(), _parse_stock_id)
    date_codes, date_ok, dates = _parse_distinct(frame["date"].to_numpy(), _parse_date)
    time_codes, time_ok, times = _parse_distinct(frame["time"].to_numpy(), _parse_time)
    timestamps = np.array([-1 if t is None else t for t in times], dtype=np.int64)[time_codes]
    prices, prices_ok = _parse_numeric(frame, fmt.price_columns, parse_cents)
    volumes, volumes_ok = _parse_numeric(frame, fmt.volume_columns, _parse_volume)

    books = np.empty((len(frame), 4 * fmt.levels), dtype=np.int64)
    books[:, 0::2] = prices[:, 1:]
    books[:, 1::2] = volumes[:, 1:]
    asks, bids = prices[:, 1:fmt.levels + 1], prices[:, fmt.levels + 1:]
    trade_price, trade_volume = prices[:, 0], volumes[:, 0]

    valid = stock_ok & date_ok & time_ok & prices_ok & volumes_ok
    valid &= (timestamps >= _TICK_WINDOW.auction_start) & (timestamps <= _TICK_WINDOW.close)
    valid &= (trade_price > 0) == (trade_volume > 0)
    valid &= ~_misordered(asks, ascending=True) & ~_misordered(bids, ascending=False)
    valid &= ~((asks[:, 0] > 0) & (bids[:, 0] > 0) & (asks[:, 0] < bids[:, 0]))

    errors = []
    for position in np.flatnonzero(~valid):
        try:
            parse_tick_row(rows[position], fmt)
            message = "row failed validation"
        except ValueError as e:
            message = str(e)
        errors.append((lines[position], message))

    keep = np.flatnonzero(valid)
    columns = _TickColumns(
        lines=frame.index.to_numpy()[keep],
        stock_codes=stock_codes[keep],
        date_codes=date_codes[keep],
        stocks=stocks,
        dates=dates,
        timestamps=timestamps[keep].tolist(),
        trade_prices=trade_price[keep].tolist(),
        trade_volumes=trade_volume[keep].tolist(),
        books=books[keep].tolist(),
    )
    return columns, errors


def parse_tick_file(
    path: Path,
    metadata: Dict[Tuple[str, date], StockDayMeta],
    format_spec: Optional[TickFileFormat] = None,
    report: Optional[ParseReport] = None,
) -> Iterator[StockDaySession]:
    """Read the stock-day sessions of one tick file.

    Rows must be grouped by (stock_id, date); within a group they are sorted
    in memory. Malformed rows are reported with their line number and left
    out; the rest of their session is kept. Record errors are reported in
    line order.

    Args:
        path: Tick CSV file
        metadata: Sidecar facts keyed by (stock_id, date)
        format_spec: Expected layout (inferred from the header when None)
        report: ParseReport to accumulate into

    Yields:
        StockDaySession objects in file order

    Raises:
        TickFormatError: If the file is unreadable, the header is wrong or a
            stock-day reappears after another one started
    """
    report = report if report is not None else ParseReport()
    path = Path(path)
    try:
        handle = open(path, "r", newline="")
    except OSError as e:
        raise TickFormatError(f"Cannot read tick file {path}: {e}") from e

    errors: List[Tuple[int, str]] = []
    rows: List[List[str]] = []
    lines: List[int] = []
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise TickFormatError(f"{path}: empty file, header row is mandatory")
        except csv.Error as e:
            raise TickFormatError(f"{path}: {e}") from e
        fmt = TickFileFormat.from_header(header)
        if format_spec is not None and format_spec != fmt:
            raise TickFormatError(f"{path}: expected J={format_spec.levels}, header has J={fmt.levels}")
        width = fmt.width
        try:
            for row in reader:
                if len(row) != width:
                    errors.append((reader.line_num, f"expected {width} fields, got {len(row)}"))
                else:
                    rows.append(row)
                    lines.append(reader.line_num)
        except csv.Error as e:
            raise TickFormatError(f"{path}:{reader.line_num}: {e}") from e
    report.files += 1
    report.rows_total += len(rows) + len(errors)

    sessions = []
    if rows:
        columns, row_errors = _read_tick_columns(fmt, rows, lines)
        errors.extend(row_errors)
        sessions = _group_sessions(path, fmt, columns, metadata, report, errors)

    for line, message in sorted(errors):
        report.add_error(path, line, message)
    yield from sessions


def _group_sessions(
    path: Path,
    fmt: TickFileFormat,
    columns: _TickColumns,
    metadata: Dict[Tuple[str, date], StockDayMeta],
    report: ParseReport,
    errors: List[Tuple[int, str]],
) -> List[StockDaySession]:
    """Cut the valid rows into contiguous stock-day runs and build their sessions."""
    keys = columns.stock_codes * len(columns.dates) + columns.date_codes
    if not len(keys):
        return []
    starts = np.concatenate(([0], np.flatnonzero(np.diff(keys)) + 1))
    ends = np.append(starts[1:], len(keys))
    levels = fmt.levels

    seen = set()
    sessions = []
    for start, end in zip(starts.tolist(), ends.tolist()):
        stock_id = columns.stocks[columns.stock_codes[start]]
        day = columns.dates[columns.date_codes[start]]
        line = int(columns.lines[start])
        if (stock_id, day) in seen:
            raise TickFormatError(f"{path}:{line}: rows of {stock_id} {day.isoformat()} are not contiguous")
        seen.add((stock_id, day))

        meta = metadata.get((stock_id, day))
        if meta is None:
            errors.append((line, f"no session metadata for {stock_id} {day.isoformat()}"))
            continue
        ticks = [
            TickRecord(
                stock_id,
                columns.timestamps[i],
                columns.trade_prices[i],
                columns.trade_volumes[i],
                LobSnapshot(
                    tuple(book[0:2 * levels:2]),
                    tuple(book[1:2 * levels:2]),
                    tuple(book[2 * levels::2]),
                    tuple(book[2 * levels + 1::2]),
                ),
            )
            for i, book in zip(range(start, end), columns.books[start:end])
        ]
        session = build_session(stock_id, day, meta, ticks)
        report.rows_valid += len(session.ticks)
        report.sessions += 1
        if session.excluded:
            report.excluded_sessions += 1
        sessions.append(session)
    return sessions


def classify_trade_direction(
    tick: TickRecord,
    prev_lob: Optional[LobSnapshot],
    prev_trade_price: Optional[int],
) -> TradeDirection:
    """Infer the aggressor side of a trade.

    Quote rule first against the book standing before the trade, then the
    tick test against the previous trade price.
    """
    price = tick.trade_price
    if prev_lob is not None:
        if prev_lob.best_ask is not None and price >= prev_lob.best_ask:
            return TradeDirection.BUYER_INITIATED
        if prev_lob.best_bid is not None and price <= prev_lob.best_bid:
            return TradeDirection.SELLER_INITIATED
    if not prev_trade_price:
        return TradeDirection.UNKNOWN
    if price > prev_trade_price:
        return TradeDirection.BUYER_INITIATED
    if price < prev_trade_price:
        return TradeDirection.SELLER_INITIATED
    return TradeDirection.UNKNOWN


def classify_session_trades(session: StockDaySession) -> List[ClassifiedTrade]:
    """Every trade of a session with its aggressor side and preceding best quotes."""
    trades = []
    prev_lob = None
    prev_trade_price = None
    for index, tick in enumerate(session.ticks):
        if tick.has_trade:
            trades.append(ClassifiedTrade(
                index=index,
                timestamp=tick.timestamp,
                price=tick.trade_price,
                volume=tick.trade_volume,
                direction=classify_trade_direction(tick, prev_lob, prev_trade_price),
                ask_before=prev_lob.best_ask if prev_lob is not None else None,
                bid_before=prev_lob.best_bid if prev_lob is not None else None,
            ))
            prev_trade_price = tick.trade_price
        prev_lob = tick.lob
    return trades
