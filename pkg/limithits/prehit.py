"""Price dynamics leading up to a limit hit.

Two families of measures per event class (direction x regime):

- velocity profile: the approach from the start level (5% by default) to the
  limit is cut into equal sub-levels; V_m is the reciprocal of the mean share
  of the approach time spent crossing sub-level m.
- event study over the last trades before the hit (100 by default, the hit
  trade being the last): mean log trade sizes of same- and opposite-direction
  trades, trade-by-trade log return and its absolute value, and the relative
  spread just before each trade.

Accumulators keep exact or per-event contributions and finalize with
``math.fsum`` so merged results do not depend on merge order.
"""
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from limithits.aggregation import Regime
from limithits.config import SessionWindows
from limithits.limit_engine import (
    DayHitRecord,
    DurationClock,
    HitDirection,
    HitWindow,
    classify_window,
)
from limithits.market_data import ClassifiedTrade, StockDaySession, TradeDirection, classify_session_trades


logger = logging.getLogger(__name__)

EXCLUSION_REASONS = (
    "opening_hit", "gap_open", "zero_duration", "short_history", "missing_quotes", "unknown_direction",
)


class EventClass(str, Enum):
    UP_BULL = "up_bull"
    UP_BEAR = "up_bear"
    DOWN_BULL = "down_bull"
    DOWN_BEAR = "down_bear"

    @classmethod
    def of(cls, direction: HitDirection, regime: Regime) -> "EventClass":
        return cls(f"{direction.value}_{regime.value}")


@dataclass(frozen=True)
class PrehitEvent:
    """The first hit of one direction on one day, with every trade up to and including the hit trade."""

    stock_id: str
    date: date
    direction: HitDirection
    event_class: EventClass
    hit_window: HitWindow
    prev_close: int
    limit_price: int
    trades: Tuple[ClassifiedTrade, ...]

    @property
    def key(self) -> Tuple[str, date, str]:
        return (self.stock_id, self.date, self.direction.value)

    @property
    def hit_trade(self) -> ClassifiedTrade:
        return self.trades[-1]

    def is_same_direction(self, trade: ClassifiedTrade) -> Optional[bool]:
        """True for trades pushing toward the limit, False for trades pushing away, None if unknown."""
        if trade.direction is TradeDirection.UNKNOWN:
            return None
        toward = (TradeDirection.BUYER_INITIATED if self.direction is HitDirection.UP
                  else TradeDirection.SELLER_INITIATED)
        return trade.direction is toward


def extract_events(
    session: StockDaySession,
    record: DayHitRecord,
    regime: Regime,
    limit_prices: Dict[HitDirection, int],
    windows: SessionWindows = SessionWindows(),
) -> List[PrehitEvent]:
    """One event per hit direction of the day, anchored at the trade that opened its first segment."""
    trades = classify_session_trades(session)
    events = []
    for direction in record.directions():
        start = record.first_hit_time(direction)
        limit = limit_prices[direction]
        hit_index = next(
            (i for i, t in enumerate(trades) if t.timestamp >= start and t.price == limit), None
        )
        if hit_index is None:
            logger.warning("%s %s: no %s hit trade at %s", session.stock_id, session.date, direction.value, start)
            continue
        events.append(PrehitEvent(
            stock_id=session.stock_id,
            date=session.date,
            direction=direction,
            event_class=EventClass.of(direction, regime),
            hit_window=classify_window(start, windows),
            prev_close=session.prev_close,
            limit_price=limit,
            trades=tuple(trades[:hit_index + 1]),
        ))
    return events


def velocity_thresholds(
    prev_close: int,
    direction: HitDirection,
    limit_price: int,
    start_bps: int = 500,
    limit_bps: int = 1000,
    subintervals: int = 10,
) -> List[int]:
    """Integer-cent sub-level prices 0..subintervals; the last one is the limit price.

    Up: smallest cent price with price/prev_close >= 1 + level. Down: largest
    cent price with price/prev_close <= 1 - level. Below one yuan cent rounding
    can push a sub-level past the rounded limit; such levels sit at the limit.
    """
    step = (limit_bps - start_bps) // subintervals
    thresholds = []
    for m in range(subintervals):
        bps = start_bps + m * step
        if direction is HitDirection.UP:
            thresholds.append(min(-(-prev_close * (10000 + bps) // 10000), limit_price))
        else:
            thresholds.append(max(prev_close * (10000 - bps) // 10000, limit_price))
    thresholds.append(limit_price)
    return thresholds


def subinterval_durations(
    event: PrehitEvent,
    thresholds: Sequence[int],
    clock: DurationClock,
) -> Tuple[Optional[List[int]], Optional[str]]:
    """Seconds spent between consecutive first crossings of the thresholds.

    Returns:
        (durations, None) or (None, exclusion reason)
    """
    if event.hit_window is HitWindow.OPEN:
        return None, "opening_hit"
    up = event.direction is HitDirection.UP

    def crossed(price: int, level: int) -> bool:
        return price >= level if up else price <= level

    if crossed(event.trades[0].price, thresholds[0]):
        return None, "gap_open"

    crossings = []
    position = 0
    for level in thresholds:
        while not crossed(event.trades[position].price, level):
            position += 1
        crossings.append(event.trades[position].timestamp)

    durations = [clock.elapsed(a, b) for a, b in zip(crossings, crossings[1:])]
    if sum(durations) <= 0:
        return None, "zero_duration"
    return durations, None


@dataclass(frozen=True)
class VelocityProfile:
    event_class: EventClass
    events: int
    V: Tuple[float, ...]
    mean_shares: Tuple[Fraction, ...]


@dataclass
class VelocityAccumulator:
    """Exact per-class sums of normalized subinterval shares."""

    subintervals: int = 10
    share_sums: Dict[EventClass, List[Fraction]] = field(default_factory=dict)
    events: Counter = field(default_factory=Counter)
    exclusions: Dict[EventClass, Counter] = field(default_factory=lambda: defaultdict(Counter))

    def add_durations(self, event_class: EventClass, durations: Sequence[int]) -> None:
        total = sum(durations)
        sums = self.share_sums.setdefault(event_class, [Fraction(0)] * self.subintervals)
        for m, duration in enumerate(durations):
            sums[m] += Fraction(duration, total)
        self.events[event_class] += 1

    def add(self, event: PrehitEvent, thresholds: Sequence[int], clock: DurationClock) -> None:
        durations, reason = subinterval_durations(event, thresholds, clock)
        if reason is not None:
            self.exclusions[event.event_class][reason] += 1
            logger.debug("Velocity excludes %s %s %s: %s", *event.key, reason)
            return
        self.add_durations(event.event_class, durations)

    def merge(self, other: "VelocityAccumulator") -> "VelocityAccumulator":
        for event_class, sums in other.share_sums.items():
            mine = self.share_sums.setdefault(event_class, [Fraction(0)] * self.subintervals)
            for m, value in enumerate(sums):
                mine[m] += value
        self.events.update(other.events)
        for event_class, reasons in other.exclusions.items():
            self.exclusions[event_class].update(reasons)
        return self

    def profile(self, event_class: EventClass) -> Optional[VelocityProfile]:
        count = self.events[event_class]
        if not count:
            return None
        means = tuple(s / count for s in self.share_sums[event_class])
        velocity = tuple(float(1 / share) if share else math.inf for share in means)
        return VelocityProfile(event_class, count, velocity, means)


def velocity_profile(
    events: Sequence[PrehitEvent],
    start_bps: int = 500,
    limit_bps: int = 1000,
    subintervals: int = 10,
    clock: Optional[DurationClock] = None,
) -> Dict[EventClass, VelocityProfile]:
    """V_m per event class; classes without usable events are left out."""
    clock = clock or DurationClock()
    accumulator = VelocityAccumulator(subintervals)
    for event in events:
        thresholds = velocity_thresholds(
            event.prev_close, event.direction, event.limit_price, start_bps, limit_bps, subintervals
        )
        accumulator.add(event, thresholds, clock)
    profiles = {}
    for event_class in EventClass:
        profile = accumulator.profile(event_class)
        if profile is not None:
            profiles[event_class] = profile
    return profiles


@dataclass(frozen=True)
class EventContribution:
    """One event's per-position values; None where the event does not contribute."""

    key: Tuple[str, date, str]
    log_size_plus: Tuple[Optional[float], ...]
    log_size_minus: Tuple[Optional[float], ...]
    log_return: Tuple[float, ...]
    spread: Tuple[Optional[float], ...]
    unknown_direction: int
    missing_quotes: int

    @property
    def hit_log_size(self) -> float:
        return self.log_size_plus[-1]


def event_contribution(event: PrehitEvent, window: int = 100) -> Tuple[Optional[EventContribution], Optional[str]]:
    """Per-position contributions of the last ``window`` trades.

    Position k = window is the hit trade and always counts as same-direction.
    The reference price for k = 1 is the trade just before the window.
    """
    if event.hit_window is HitWindow.OPEN:
        return None, "opening_hit"
    if len(event.trades) < window + 1:
        return None, "short_history"
    trades = event.trades[-(window + 1):]
    plus, minus, returns, spreads = [], [], [], []
    unknown = missing = 0
    for k in range(1, window + 1):
        trade = trades[k]
        same = True if k == window else event.is_same_direction(trade)
        log_size = math.log(trade.volume)
        if same is None:
            unknown += 1
        plus.append(log_size if same is True else None)
        minus.append(log_size if same is False else None)
        returns.append(math.log(trade.price) - math.log(trades[k - 1].price))
        if trade.ask_before is None or trade.bid_before is None:
            missing += 1
            spreads.append(None)
        else:
            mid = (trade.ask_before + trade.bid_before) / 2
            spreads.append((trade.ask_before - trade.bid_before) / mid)
    return EventContribution(
        key=event.key,
        log_size_plus=tuple(plus),
        log_size_minus=tuple(minus),
        log_return=tuple(returns),
        spread=tuple(spreads),
        unknown_direction=unknown,
        missing_quotes=missing,
    ), None


@dataclass(frozen=True)
class EventStudySeries:
    """Per-position averages for k = 1..window (index k-1); None where nothing contributed."""

    event_class: EventClass
    events: int
    s_plus: Tuple[Optional[float], ...]
    s_minus: Tuple[Optional[float], ...]
    R: Tuple[float, ...]
    v: Tuple[float, ...]
    S: Tuple[Optional[float], ...]
    n_plus: Tuple[int, ...]
    n_minus: Tuple[int, ...]
    n_spread: Tuple[int, ...]

    @property
    def window(self) -> int:
        return len(self.R)


def _mean(values: List[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


@dataclass
class EventStudyAccumulator:
    window: int = 100
    contributions: Dict[EventClass, List[EventContribution]] = field(default_factory=lambda: defaultdict(list))
    exclusions: Dict[EventClass, Counter] = field(default_factory=lambda: defaultdict(Counter))

    def add(self, event: PrehitEvent) -> None:
        contribution, reason = event_contribution(event, self.window)
        if reason is not None:
            self.exclusions[event.event_class][reason] += 1
            logger.debug("Event study excludes %s %s %s: %s", *event.key, reason)
            return
        self.contributions[event.event_class].append(contribution)
        if contribution.unknown_direction:
            self.exclusions[event.event_class]["unknown_direction"] += contribution.unknown_direction
        if contribution.missing_quotes:
            self.exclusions[event.event_class]["missing_quotes"] += contribution.missing_quotes

    def merge(self, other: "EventStudyAccumulator") -> "EventStudyAccumulator":
        for event_class, items in other.contributions.items():
            self.contributions[event_class].extend(items)
        for event_class, reasons in other.exclusions.items():
            self.exclusions[event_class].update(reasons)
        return self

    def hit_log_sizes(self, event_class: EventClass) -> List[float]:
        """ln(size) of every hit trade, ordered by event key."""
        items = sorted(self.contributions.get(event_class, ()), key=lambda c: c.key)
        return [c.hit_log_size for c in items]

    def series(self, event_class: EventClass) -> Optional[EventStudySeries]:
        items = self.contributions.get(event_class)
        if not items:
            return None
        s_plus, s_minus, R, v, S = [], [], [], [], []
        n_plus, n_minus, n_spread = [], [], []
        for k in range(self.window):
            plus = [c.log_size_plus[k] for c in items if c.log_size_plus[k] is not None]
            minus = [c.log_size_minus[k] for c in items if c.log_size_minus[k] is not None]
            spreads = [c.spread[k] for c in items if c.spread[k] is not None]
            returns = [c.log_return[k] for c in items]
            s_plus.append(_mean(plus))
            s_minus.append(_mean(minus))
            R.append(math.fsum(returns) / len(items))
            v.append(math.fsum(abs(r) for r in returns) / len(items))
            S.append(_mean(spreads))
            n_plus.append(len(plus))
            n_minus.append(len(minus))
            n_spread.append(len(spreads))
        # the hit trade has no opposite-direction side
        s_minus[-1] = 0.0
        return EventStudySeries(
            event_class=event_class,
            events=len(items),
            s_plus=tuple(s_plus),
            s_minus=tuple(s_minus),
            R=tuple(R),
            v=tuple(v),
            S=tuple(S),
            n_plus=tuple(n_plus),
            n_minus=tuple(n_minus),
            n_spread=tuple(n_spread),
        )


def event_study(events: Sequence[PrehitEvent], window: int = 100) -> Dict[EventClass, EventStudySeries]:
    """Event-study series per class; classes without usable events are left out."""
    accumulator = EventStudyAccumulator(window)
    for event in events:
        accumulator.add(event)
    result = {}
    for event_class in EventClass:
        series = accumulator.series(event_class)
        if series is not None:
            result[event_class] = series
    return result


def exclusion_report(velocity: VelocityAccumulator, study: EventStudyAccumulator) -> dict:
    """Reason -> count per class for both measures; trade-level reasons count trade positions."""
    def block(exclusions: Dict[EventClass, Counter]) -> dict:
        return {
            event_class.value: {reason: exclusions.get(event_class, Counter())[reason] for reason in EXCLUSION_REASONS}
            for event_class in EventClass
        }

    return {
        "velocity": block(velocity.exclusions),
        "velocity_events": {c.value: velocity.events[c] for c in EventClass},
        "event_study": block(study.exclusions),
        "event_study_events": {c.value: len(study.contributions.get(c, ())) for c in EventClass},
    }
