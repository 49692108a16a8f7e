"""Daily limit prices, limit-hit segmentation and limit-day classification."""
import logging
from dataclasses import dataclass, replace
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Tuple

from limithits.config import SessionWindows, format_clock
from limithits.market_data import StockDaySession


logger = logging.getLogger(__name__)

HIT_CSV_COLUMNS = (
    "stock_id", "date", "direction", "M_up", "M_down", "dt_up_s", "dt_down_s",
    "span_up_s", "span_down_s", "first_window", "closed_at_limit",
    "close_direction", "next_day_class",
)


class SessionError(ValueError):
    """Raised when a session cannot be segmented; the session is skipped."""


class HitDirection(str, Enum):
    UP = "up"
    DOWN = "down"


class HitWindow(str, Enum):
    OPEN = "open"
    AM = "am"
    PM = "pm"


class NextDayClass(str, Enum):
    CONTINUATION = "continuation"
    REVERSAL = "reversal"
    FLAT = "flat"
    UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class LimitPrices:
    up_limit: int
    down_limit: int
    prev_close: int

    @property
    def degenerate(self) -> bool:
        """True for sub-6-cent closes where rounding collapses a limit onto the close."""
        return not self.down_limit < self.prev_close < self.up_limit

    def limit_for(self, direction: HitDirection) -> int:
        return self.up_limit if direction is HitDirection.UP else self.down_limit

    def direction_at(self, price: int) -> Optional[HitDirection]:
        """Which limit a price sits on, or None when strictly inside."""
        if price == self.up_limit:
            return HitDirection.UP
        if price == self.down_limit:
            return HitDirection.DOWN
        return None


class DurationClock:
    """Elapsed seconds between two timestamps of one trading day.

    ``wall`` is the plain timestamp difference. ``trading`` counts only
    continuous-auction seconds, so the lunch break is skipped and anything
    before the end of the opening window counts from that point.
    """

    def __init__(self, mode: str = "wall", windows: SessionWindows = SessionWindows()):
        if mode not in ("wall", "trading"):
            raise ValueError(f"Unknown duration clock {mode!r}")
        self.mode = mode
        self.windows = windows

    def _position(self, timestamp: int) -> int:
        w = self.windows
        morning = w.am_end - w.open_end
        if timestamp <= w.open_end:
            return 0
        if timestamp <= w.am_end:
            return timestamp - w.open_end
        if timestamp <= w.pm_start:
            return morning
        return morning + min(timestamp, w.close) - w.pm_start

    def elapsed(self, start: int, end: int) -> int:
        if self.mode == "wall":
            return end - start
        return self._position(end) - self._position(start)


@dataclass(frozen=True)
class HitSegment:
    direction: HitDirection
    start_time: int
    duration: int
    ends_at_close: bool
    end_time: int


@dataclass(frozen=True)
class DayHitRecord:
    stock_id: str
    date: date
    direction: HitDirection
    segments_up: Tuple[HitSegment, ...]
    segments_down: Tuple[HitSegment, ...]
    span_up: int
    span_down: int
    first_hit_window: HitWindow
    closed_at_limit: bool
    close_direction: Optional[HitDirection]
    next_day_class: NextDayClass
    prev_close: int
    close_price: int
    capitalization: int

    @property
    def M_up(self) -> int:
        return len(self.segments_up)

    @property
    def M_down(self) -> int:
        return len(self.segments_down)

    @property
    def total_duration_up(self) -> int:
        return sum(s.duration for s in self.segments_up)

    @property
    def total_duration_down(self) -> int:
        return sum(s.duration for s in self.segments_down)

    def segments(self, direction: HitDirection) -> Tuple[HitSegment, ...]:
        return self.segments_up if direction is HitDirection.UP else self.segments_down

    def hit_count(self, direction: HitDirection) -> int:
        return len(self.segments(direction))

    def total_duration(self, direction: HitDirection) -> int:
        return sum(s.duration for s in self.segments(direction))

    def span(self, direction: HitDirection) -> int:
        return self.span_up if direction is HitDirection.UP else self.span_down

    def has(self, direction: HitDirection) -> bool:
        return bool(self.segments(direction))

    def first_hit_time(self, direction: Optional[HitDirection] = None) -> int:
        """Start of the first segment in a direction (the headline one by default)."""
        return self.segments(direction or self.direction)[0].start_time

    def directions(self) -> List[HitDirection]:
        return [d for d in HitDirection if self.has(d)]


def compute_limit_prices(prev_close: int, limit_bps: int = 1000, tick_size: int = 1) -> LimitPrices:
    """Daily up/down limits, rounded half-up to the tick in integer arithmetic.

    Args:
        prev_close: Previous close in cents (> 0)
        limit_bps: Limit fraction in basis points (1000 = 10%)
        tick_size: Tick in cents

    Returns:
        LimitPrices
    """
    if prev_close <= 0:
        raise ValueError(f"prev_close must be positive, got {prev_close}")
    scale = 10000 * tick_size
    half = scale // 2
    up = (prev_close * (10000 + limit_bps) + half) // scale * tick_size
    down = (prev_close * (10000 - limit_bps) + half) // scale * tick_size
    return LimitPrices(up_limit=up, down_limit=down, prev_close=prev_close)


def classify_window(timestamp: int, windows: SessionWindows = SessionWindows()) -> HitWindow:
    """Opening auction (<= open_end), morning (open_end, am_end] or afternoon [pm_start, close]."""
    if timestamp <= windows.open_end:
        return HitWindow.OPEN
    if timestamp <= windows.am_end:
        return HitWindow.AM
    if windows.pm_start <= timestamp <= windows.close:
        return HitWindow.PM
    raise SessionError(f"hit at {format_clock(timestamp)} falls in the trading halt")


def classify_next_day(
    record: DayHitRecord,
    today_close: int,
    next_day_open: Optional[int],
) -> NextDayClass:
    """Continuation/reversal of the next open relative to today's close."""
    if next_day_open is None:
        return NextDayClass.UNAVAILABLE
    if next_day_open == today_close:
        return NextDayClass.FLAT
    moved_up = next_day_open > today_close
    if moved_up == (record.direction is HitDirection.UP):
        return NextDayClass.CONTINUATION
    return NextDayClass.REVERSAL


def segment_hits(
    session: StockDaySession,
    limits: LimitPrices,
    windows: SessionWindows = SessionWindows(),
    clock: Optional[DurationClock] = None,
) -> Optional[DayHitRecord]:
    """Split a session into at-limit segments and summarise the day.

    Quote-only records carry the last trade price forward. A segment opens at
    the first record at a limit and closes at the first later record strictly
    inside the limits (or at the other limit); one still open at the end of
    the day runs to the close.

    Returns:
        DayHitRecord, or None when the price never touched a limit

    Raises:
        SessionError: For records outside the session windows or trades beyond the limits
    """
    clock = clock or DurationClock("wall", windows)
    segments: Dict[HitDirection, List[HitSegment]] = {HitDirection.UP: [], HitDirection.DOWN: []}
    open_direction: Optional[HitDirection] = None
    open_start = 0
    last_price: Optional[int] = None

    def close_segment(end: int, ends_at_close: bool) -> None:
        if end <= open_start:
            logger.debug("Dropping zero-length %s segment of %s %s at %s",
                         open_direction.value, session.stock_id, session.date, format_clock(end))
            return
        segments[open_direction].append(HitSegment(
            direction=open_direction,
            start_time=open_start,
            duration=clock.elapsed(open_start, end),
            ends_at_close=ends_at_close or end == windows.close,
            end_time=end,
        ))

    for tick in session.ticks:
        timestamp = tick.timestamp
        if not windows.in_session(timestamp):
            raise SessionError(
                f"{session.stock_id} {session.date}: record at {format_clock(timestamp)} outside session windows"
            )
        if tick.has_trade:
            if not limits.down_limit <= tick.trade_price <= limits.up_limit:
                raise SessionError(
                    f"{session.stock_id} {session.date}: trade at {tick.trade_price} beyond limits "
                    f"[{limits.down_limit}, {limits.up_limit}]"
                )
            last_price = tick.trade_price
        if last_price is None:
            continue

        at_limit = limits.direction_at(last_price)
        if open_direction is not None and at_limit is not open_direction:
            close_segment(timestamp, ends_at_close=False)
            open_direction = None
        if at_limit is not None and open_direction is None:
            classify_window(timestamp, windows)
            open_direction, open_start = at_limit, timestamp

    if open_direction is not None:
        close_segment(windows.close, ends_at_close=True)

    up, down = segments[HitDirection.UP], segments[HitDirection.DOWN]
    if not up and not down:
        return None

    if up and (not down or up[0].start_time < down[0].start_time):
        headline = HitDirection.UP
    else:
        headline = HitDirection.DOWN
    first = (up if headline is HitDirection.UP else down)[0]

    def span(items: List[HitSegment]) -> int:
        if not items:
            return 0
        return clock.elapsed(items[0].start_time, items[-1].end_time)

    close_price = session.close_price
    close_direction = limits.direction_at(close_price)
    record = DayHitRecord(
        stock_id=session.stock_id,
        date=session.date,
        direction=headline,
        segments_up=tuple(up),
        segments_down=tuple(down),
        span_up=span(up),
        span_down=span(down),
        first_hit_window=classify_window(first.start_time, windows),
        closed_at_limit=close_direction is not None,
        close_direction=close_direction,
        next_day_class=NextDayClass.UNAVAILABLE,
        prev_close=session.prev_close,
        close_price=close_price,
        capitalization=session.capitalization,
    )
    return replace(record, next_day_class=classify_next_day(record, close_price, session.next_day_open))


def hit_row(record: DayHitRecord) -> Dict[str, str]:
    """One row of the per-day hit CSV."""
    return {
        "stock_id": record.stock_id,
        "date": record.date.isoformat(),
        "direction": record.direction.value,
        "M_up": str(record.M_up),
        "M_down": str(record.M_down),
        "dt_up_s": str(record.total_duration_up),
        "dt_down_s": str(record.total_duration_down),
        "span_up_s": str(record.span_up),
        "span_down_s": str(record.span_down),
        "first_window": record.first_hit_window.value,
        "closed_at_limit": "1" if record.closed_at_limit else "0",
        "close_direction": record.close_direction.value if record.close_direction else "",
        "next_day_class": record.next_day_class.value,
    }
