"""Roll per-day hit records up into counters, per-stock statistics, hit statistics and intraday patterns.

Every accumulator here is a partial aggregate with a ``merge`` method: integer
counts and integer-second sums only, with means computed once at the end, so
results do not depend on how stock-days were split across workers.
"""
import bisect
import logging
from collections import defaultdict
from dataclasses import dataclass, field, fields
from datetime import date, timedelta
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from limithits.config import ConfigError, RunConfig, SessionWindows, format_clock
from limithits.limit_engine import DayHitRecord, HitDirection, HitWindow, NextDayClass


logger = logging.getLogger(__name__)


class Regime(str, Enum):
    BULL = "bull"
    BEAR = "bear"


@dataclass(frozen=True)
class RegimeInterval:
    start: date
    end: date
    regime: Regime


class RegimeCalendar:
    """Contiguous, gap-free mapping of sample dates to bull/bear."""

    def __init__(self, intervals: Sequence[RegimeInterval]):
        if not intervals:
            raise ConfigError("Regime calendar is empty")
        intervals = list(intervals)
        for interval in intervals:
            if interval.start > interval.end:
                raise ConfigError(f"Regime interval {interval.start}..{interval.end} is reversed")
        for previous, current in zip(intervals, intervals[1:]):
            if current.start != previous.end + timedelta(days=1):
                raise ConfigError(
                    f"Regime calendar has a gap or overlap between {previous.end} and {current.start}"
                )
        self.intervals = tuple(intervals)
        self._starts = [i.start for i in self.intervals]

    @classmethod
    def from_bull_windows(
        cls,
        bull_windows: Iterable[Tuple[date, date]],
        sample_start: date,
        sample_end: date,
    ) -> "RegimeCalendar":
        """Bull windows as given, bear everywhere else in [sample_start, sample_end]."""
        intervals = []
        cursor = sample_start
        for start, end in sorted(bull_windows):
            start, end = max(start, sample_start), min(end, sample_end)
            if start > end:
                continue
            if start < cursor:
                raise ConfigError(f"Bull window starting {start} overlaps the previous one")
            if start > cursor:
                intervals.append(RegimeInterval(cursor, start - timedelta(days=1), Regime.BEAR))
            intervals.append(RegimeInterval(start, end, Regime.BULL))
            cursor = end + timedelta(days=1)
        if cursor <= sample_end:
            intervals.append(RegimeInterval(cursor, sample_end, Regime.BEAR))
        return cls(intervals)

    @classmethod
    def from_config(cls, config: RunConfig) -> "RegimeCalendar":
        return cls.from_bull_windows(config.bull_windows, config.sample_start, config.sample_end)

    def regime_for(self, day: date) -> Regime:
        """Regime of a date.

        Raises:
            ConfigError: If the date lies outside the calendar
        """
        position = bisect.bisect_right(self._starts, day) - 1
        if position < 0 or day > self.intervals[position].end:
            raise ConfigError(f"Date {day} is outside the regime calendar "
                              f"{self.intervals[0].start}..{self.intervals[-1].end}")
        return self.intervals[position].regime


@dataclass(frozen=True)
class PortfolioAssignment:
    date: date
    members: Mapping[str, int]
    count: int = 6

    def sizes(self) -> Tuple[int, ...]:
        sizes = [0] * self.count
        for index in self.members.values():
            sizes[index - 1] += 1
        return tuple(sizes)


def assign_portfolios(
    day: date,
    stocks_with_hits: Sequence[Tuple[str, int]],
    count: int = 6,
) -> PortfolioAssignment:
    """Split the day's limit-hitting stocks into capitalization groups.

    Ascending capitalization (ties by stock_id); with n = count*q + s members,
    the s largest-cap groups take q + 1 members.
    """
    ordered = sorted(stocks_with_hits, key=lambda item: (item[1], item[0]))
    q, s = divmod(len(ordered), count)
    members = {}
    position = 0
    for index in range(1, count + 1):
        size = q + (1 if index > count - s else 0)
        for stock_id, _ in ordered[position:position + size]:
            members[stock_id] = index
        position += size
    return PortfolioAssignment(date=day, members=members, count=count)


def build_portfolios(records: Iterable[DayHitRecord], count: int = 6) -> Dict[date, PortfolioAssignment]:
    by_date: Dict[date, List[Tuple[str, int]]] = defaultdict(list)
    for record in records:
        by_date[record.date].append((record.stock_id, record.capitalization))
    return {day: assign_portfolios(day, stocks, count) for day, stocks in sorted(by_date.items())}


@dataclass(frozen=True)
class Scope:
    """Regime filter (None = whole period) times portfolio filter (None = all stocks)."""

    regime: Optional[Regime] = None
    portfolio: Optional[int] = None

    @property
    def label(self) -> str:
        regime = self.regime.value if self.regime else "whole"
        portfolio = f"p{self.portfolio}" if self.portfolio else "all"
        return f"{regime}_{portfolio}"

    def admits_day(self, regime: Regime) -> bool:
        return self.regime is None or self.regime is regime

    def admits(self, record: DayHitRecord, regime: Regime,
               portfolios: Mapping[date, PortfolioAssignment]) -> bool:
        if not self.admits_day(regime):
            return False
        if self.portfolio is None:
            return True
        return portfolios[record.date].members.get(record.stock_id) == self.portfolio


def period_scopes() -> List[Scope]:
    """Whole period, bull and bear over all stocks."""
    return [Scope(regime, None) for regime in (None, Regime.BULL, Regime.BEAR)]


def all_scopes(portfolio_count: int = 6) -> List[Scope]:
    scopes = []
    for regime in (None, Regime.BULL, Regime.BEAR):
        scopes.append(Scope(regime, None))
        scopes.extend(Scope(regime, j) for j in range(1, portfolio_count + 1))
    return scopes


class SampleUniverse:
    """Which stock traded (non-excluded) on which dates; supplies T_i and the <N> denominator."""

    def __init__(self):
        self.dates: Dict[str, set] = defaultdict(set)

    def add(self, stock_id: str, day: date) -> None:
        self.dates[stock_id].add(day)

    def merge(self, other: "SampleUniverse") -> "SampleUniverse":
        for stock_id, days in other.dates.items():
            self.dates[stock_id] |= days
        return self

    def trading_days(self, stock_id: str) -> int:
        return len(self.dates.get(stock_id, ()))

    def stocks(self) -> List[str]:
        return sorted(self.dates)

    def stocks_in(self, calendar: RegimeCalendar, scope: Scope) -> FrozenSet[str]:
        return frozenset(
            stock_id for stock_id, days in self.dates.items()
            if any(scope.admits_day(calendar.regime_for(d)) for d in days)
        )


COUNTER_NAMES = ("N", "N_con", "N_rev", "N_open", "N_am", "N_pm", "N_close", "N_close_con", "N_close_rev")


@dataclass
class DirectionCounters:
    N: int = 0
    N_con: int = 0
    N_rev: int = 0
    N_open: int = 0
    N_am: int = 0
    N_pm: int = 0
    N_close: int = 0
    N_close_con: int = 0
    N_close_rev: int = 0

    def add(self, record: DayHitRecord) -> None:
        self.N += 1
        if record.first_hit_window is HitWindow.OPEN:
            self.N_open += 1
        elif record.first_hit_window is HitWindow.AM:
            self.N_am += 1
        else:
            self.N_pm += 1
        continuation = record.next_day_class is NextDayClass.CONTINUATION
        reversal = record.next_day_class is NextDayClass.REVERSAL
        self.N_con += continuation
        self.N_rev += reversal
        if record.closed_at_limit:
            self.N_close += 1
            self.N_close_con += continuation
            self.N_close_rev += reversal

    def merge(self, other: "DirectionCounters") -> "DirectionCounters":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> Dict[str, int]:
        return {name: getattr(self, name) for name in COUNTER_NAMES}


@dataclass
class HitCounters:
    up: DirectionCounters = field(default_factory=DirectionCounters)
    down: DirectionCounters = field(default_factory=DirectionCounters)
    stocks: FrozenSet[str] = frozenset()

    def family(self, direction: HitDirection) -> DirectionCounters:
        return self.up if direction is HitDirection.UP else self.down

    def add(self, record: DayHitRecord) -> None:
        self.family(record.direction).add(record)

    def merge(self, other: "HitCounters") -> "HitCounters":
        self.up.merge(other.up)
        self.down.merge(other.down)
        self.stocks = self.stocks | other.stocks
        return self

    def mean_N(self, direction: HitDirection) -> Optional[float]:
        """<N>: limit days per distinct stock in scope."""
        if not self.stocks:
            return None
        return self.family(direction).N / len(self.stocks)

    def ratio(self, direction: HitDirection, numerator: str, denominator: str = "N") -> Optional[float]:
        family = self.family(direction)
        base = getattr(family, denominator)
        return getattr(family, numerator) / base if base else None


def tabulate_counters(
    day_records: Iterable[DayHitRecord],
    calendar: RegimeCalendar,
    portfolios: Mapping[date, PortfolioAssignment],
    scope: Scope,
    universe: SampleUniverse,
) -> HitCounters:
    """Hit counters of one scope.

    A day counts in the family of its first-hit direction. The <N> denominator
    is the number of distinct stocks with a session in the scope (for a
    portfolio scope, the stocks placed in that portfolio on an in-scope date).
    """
    counters = HitCounters()
    portfolio_stocks = set()
    for record in day_records:
        regime = calendar.regime_for(record.date)
        if scope.admits(record, regime, portfolios):
            counters.add(record)
            portfolio_stocks.add(record.stock_id)

    if scope.portfolio is None:
        counters.stocks = universe.stocks_in(calendar, scope)
    else:
        counters.stocks = frozenset(portfolio_stocks)
    return counters


def tabulate_all_scopes(
    day_records: Sequence[DayHitRecord],
    calendar: RegimeCalendar,
    portfolios: Mapping[date, PortfolioAssignment],
    universe: SampleUniverse,
    portfolio_count: int = 6,
    partials: Optional[Mapping[Scope, HitCounters]] = None,
) -> Dict[Scope, HitCounters]:
    """Counters of every scope.

    ``partials`` holds already merged counters (per-file partials of the
    period scopes); scopes missing from it are tabulated from the records.
    """
    partials = partials or {}
    return {
        scope: partials[scope] if scope in partials
        else tabulate_counters(day_records, calendar, portfolios, scope, universe)
        for scope in all_scopes(portfolio_count)
    }


@dataclass
class StockHitStats:
    stock_id: str
    T: int
    K: int = 0
    K_up: int = 0
    K_down: int = 0
    hits_up: int = 0
    hits_down: int = 0
    duration_up: int = 0
    duration_down: int = 0
    span_up_total: int = 0
    span_down_total: int = 0

    @staticmethod
    def _mean(total: int, days: int) -> Optional[float]:
        return total / days if days else None

    @property
    def n(self) -> float:
        return self.K / self.T if self.T else 0.0

    @property
    def n_up(self) -> float:
        return self.K_up / self.T if self.T else 0.0

    @property
    def n_down(self) -> float:
        return self.K_down / self.T if self.T else 0.0

    @property
    def M_up(self) -> Optional[float]:
        return self._mean(self.hits_up, self.K_up)

    @property
    def M_down(self) -> Optional[float]:
        return self._mean(self.hits_down, self.K_down)

    @property
    def dt_up(self) -> Optional[float]:
        return self._mean(self.duration_up, self.K_up)

    @property
    def dt_down(self) -> Optional[float]:
        return self._mean(self.duration_down, self.K_down)

    @property
    def span_up(self) -> Optional[float]:
        return self._mean(self.span_up_total, self.K_up)

    @property
    def span_down(self) -> Optional[float]:
        return self._mean(self.span_down_total, self.K_down)

    def mean(self, quantity: str, direction: HitDirection) -> Optional[float]:
        return getattr(self, f"{quantity}_{direction.value}")

    def add(self, record: DayHitRecord) -> None:
        self.K += 1
        if record.has(HitDirection.UP):
            self.K_up += 1
            self.hits_up += record.M_up
            self.duration_up += record.total_duration_up
            self.span_up_total += record.span_up
        if record.has(HitDirection.DOWN):
            self.K_down += 1
            self.hits_down += record.M_down
            self.duration_down += record.total_duration_down
            self.span_down_total += record.span_down


def per_stock_stats(day_records: Iterable[DayHitRecord], universe: SampleUniverse) -> List[StockHitStats]:
    """Per-stock probabilities and means; means run over limit days only."""
    stats = {stock_id: StockHitStats(stock_id, universe.trading_days(stock_id)) for stock_id in universe.stocks()}
    for record in day_records:
        if record.stock_id not in stats:
            stats[record.stock_id] = StockHitStats(record.stock_id, universe.trading_days(record.stock_id))
        stats[record.stock_id].add(record)
    return [stats[stock_id] for stock_id in sorted(stats)]


@dataclass(frozen=True)
class SummaryStats:
    max: Optional[float]
    mean: Optional[float]
    median: Optional[float]

    @classmethod
    def of(cls, values: Iterable[float]) -> "SummaryStats":
        """Max, mean and median; the median of an even set is its central-pair midpoint."""
        data = np.sort(np.asarray(list(values), dtype=float))
        if data.size == 0:
            return cls(None, None, None)
        return cls(float(data[-1]), float(np.mean(data)), float(np.median(data)))


HIT_STAT_MEASURES = ("M", "dt", "span", "span_day")


@dataclass(frozen=True)
class HitStatsSummary:
    """Per direction: daily counts M, daily durations dt, per-stock mean spans and day-level spans."""

    stats: Mapping[Tuple[str, HitDirection], SummaryStats]

    def get(self, measure: str, direction: HitDirection) -> SummaryStats:
        return self.stats[(measure, direction)]


def summarize_hit_stats(
    day_records: Sequence[DayHitRecord],
    calendar: RegimeCalendar,
    portfolios: Mapping[date, PortfolioAssignment],
    scopes: Optional[Sequence[Scope]] = None,
) -> Dict[Scope, HitStatsSummary]:
    """Max/mean/median of M_{i,k}, dt_{i,k} and span (per-stock average and per-day) for each scope."""
    scopes = scopes if scopes is not None else all_scopes()
    summaries = {}
    for scope in scopes:
        pooled: Dict[Tuple[str, HitDirection], List[int]] = defaultdict(list)
        spans_by_stock: Dict[Tuple[HitDirection, str], List[int]] = defaultdict(list)
        for record in day_records:
            if not scope.admits(record, calendar.regime_for(record.date), portfolios):
                continue
            for direction in record.directions():
                pooled[("M", direction)].append(record.hit_count(direction))
                pooled[("dt", direction)].append(record.total_duration(direction))
                pooled[("span_day", direction)].append(record.span(direction))
                spans_by_stock[(direction, record.stock_id)].append(record.span(direction))
        for (direction, _), spans in sorted(spans_by_stock.items()):
            pooled[("span", direction)].append(sum(spans) / len(spans))
        summaries[scope] = HitStatsSummary({
            (measure, direction): SummaryStats.of(pooled.get((measure, direction), ()))
            for measure in HIT_STAT_MEASURES
            for direction in HitDirection
        })
    return summaries


def bin_index(timestamp: int, bin_minutes: int, windows: SessionWindows = SessionWindows()) -> int:
    """Right-closed intraday bin of a hit time; opening-window hits land in the first bin."""
    width = bin_minutes * 60
    morning_bins = (windows.am_end - windows.open_end) // width
    if timestamp <= windows.open_end:
        return 0
    if timestamp <= windows.am_end:
        return (timestamp - windows.open_end - 1) // width
    if windows.pm_start <= timestamp <= windows.close:
        return morning_bins + max(timestamp - windows.pm_start - 1, 0) // width
    raise ValueError(f"{format_clock(timestamp)} is not inside a continuous session")


@dataclass
class IntradayPattern:
    bin_minutes: int
    bin_starts: Tuple[int, ...]
    counts: Dict[Tuple[HitDirection, Regime], np.ndarray]

    @classmethod
    def empty(cls, bin_minutes: int, windows: SessionWindows = SessionWindows()) -> "IntradayPattern":
        width = bin_minutes * 60
        starts = list(range(windows.open_end, windows.am_end, width))
        starts += list(range(windows.pm_start, windows.close, width))
        counts = {(d, r): np.zeros(len(starts), dtype=np.int64) for d in HitDirection for r in Regime}
        return cls(bin_minutes, tuple(starts), counts)

    def total(self, direction: HitDirection) -> np.ndarray:
        return self.counts[(direction, Regime.BULL)] + self.counts[(direction, Regime.BEAR)]

    def merge(self, other: "IntradayPattern") -> "IntradayPattern":
        if other.bin_starts != self.bin_starts:
            raise ValueError("Cannot merge intraday patterns with different bins")
        for key in self.counts:
            self.counts[key] = self.counts[key] + other.counts[key]
        return self


def intraday_pattern(
    day_records: Iterable[DayHitRecord],
    calendar: RegimeCalendar,
    bin_minutes: int = 5,
    windows: SessionWindows = SessionWindows(),
) -> IntradayPattern:
    """Count each day's first hit per direction into intraday bins, split bull/bear."""
    pattern = IntradayPattern.empty(bin_minutes, windows)
    for record in day_records:
        regime = calendar.regime_for(record.date)
        for direction in record.directions():
            index = bin_index(record.first_hit_time(direction), bin_minutes, windows)
            pattern.counts[(direction, regime)][index] += 1
    return pattern
