"""Deterministic synthetic tick corpus with a ground-truth manifest.

A scenario (JSON) names the stocks, the trading dates, the record cadence and
a set of planted limit-hit days; the remaining stock-days follow a bounded
random walk, optionally with randomly planted hits. Every stock-day draws from
its own ``numpy.random.Generator(PCG64([seed, stock_index, day_index]))`` so
the corpus is byte-identical for a given scenario.

Scenario schema::

    {
      "seed": 7,
      "dates": {"start": "2007-03-01", "count": 20} | ["2007-03-01", ...],
      "stocks": [{"stock_id": "600000", "prev_close": "12.34",
                  "shares_outstanding": 5000000,
                  "ipo_date": "2007-03-05", "ex_dividend_dates": [...]}],
      "stock_count": 3,                     (instead of "stocks")
      "levels": 5, "cadence_seconds": 5,
      "random_hit_rate": 0.05, "halt_rate": 0.0,
      "bull_windows": "2007-03-01:2007-03-09",
      "sample_start": "...", "sample_end": "...",
      "bin_minutes": 5, "event_window": 100,
      "hits": [{"stock_id": "600000", "date": "2007-03-02", "direction": "up",
                "segments": [["10:00:00", 300]], "other_segments": [],
                "closed_at_limit": false, "next_day_open": "higher",
                "approach": [30, 30, 30, 30, 30, 30, 30, 30, 30, 30] | "none"}]
    }

Record timeline: one call-auction record at 09:25:00, then one record every
``cadence_seconds`` over [09:30:00, 11:30:00] and [13:00:00, 15:00:00]. Every
record carries a trade. Non-hit prices walk in whole-cent steps of -1/0/+1
inside +-3% of the previous close. The book standing before each trade is
built from that trade's planned aggressor side: ask1 at the trade price for a
buyer, bid1 at the trade price for a seller, the other side 1-3 cents away;
levels beyond the daily limits are left empty.
"""
import bisect
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from limithits.aggregation import (
    RegimeCalendar,
    SampleUniverse,
    all_scopes,
    build_portfolios,
    intraday_pattern,
    per_stock_stats,
    summarize_hit_stats,
    tabulate_all_scopes,
)
from limithits.config import (
    DEFAULT_BULL_WINDOWS,
    ConfigError,
    RunConfig,
    SessionWindows,
    parse_bull_windows,
    parse_clock,
    parse_date,
    write_run_config,
)
from limithits.limit_engine import (
    DayHitRecord,
    HitDirection,
    HitSegment,
    HitWindow,
    LimitPrices,
    NextDayClass,
    classify_window,
    compute_limit_prices,
    hit_row,
)
from limithits.market_data import (
    SUPPORTED_LEVELS,
    ClassifiedTrade,
    LobSnapshot,
    StockDayMeta,
    TickRecord,
    TradeDirection,
    build_session,
    parse_cents,
    write_session_metadata,
    write_tick_file,
)
from limithits.prehit import (
    EventClass,
    EventStudyAccumulator,
    PrehitEvent,
    VelocityAccumulator,
    exclusion_report,
    velocity_thresholds,
)
from limithits import reports


logger = logging.getLogger(__name__)

AUCTION_TIME = 9 * 3600 + 25 * 60
WALK_BAND_BPS = 300
OPEN_GAP_BPS = 200
MIN_HIT_PREV_CLOSE = 500
RANDOM_UP_ONLY_BELOW = 800
SUBINTERVALS = 10
RELATIONS = ("higher", "lower", "equal", "halt")
RUN_CONF_KEYS = (
    "tick_paths", "session_paths", "output_dir", "limit_fraction", "bull_windows",
    "sample_start", "sample_end", "bin_minutes", "event_window", "duration_clock",
)


class ScenarioError(ValueError):
    """Raised for malformed or infeasible scenarios."""


@dataclass(frozen=True)
class StockSpec:
    stock_id: str
    prev_close: int
    shares_outstanding: int
    ipo_date: Optional[date] = None
    ex_dividend_dates: Tuple[date, ...] = ()


@dataclass(frozen=True)
class SegmentPlan:
    direction: HitDirection
    start: int
    end: int


@dataclass(frozen=True)
class HitPlan:
    """A planted limit-hit day.

    ``approach`` holds the seconds spent at each velocity sub-level before the
    first segment of ``direction``; None means the price jumps straight to
    the limit. ``random_approach`` asks the generator to draw one.
    """

    direction: HitDirection
    segments: Tuple[SegmentPlan, ...]
    closed_at_limit: bool
    next_day_open: Optional[str] = None
    approach: Optional[Tuple[int, ...]] = None
    random_approach: bool = False

    @property
    def first_start(self) -> int:
        return min(s.start for s in self.segments if s.direction is self.direction)

    @property
    def opens_at_limit(self) -> bool:
        return self.segments[0].start == AUCTION_TIME


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    dates: Tuple[date, ...]
    stocks: Tuple[StockSpec, ...]
    levels: int = 5
    cadence_seconds: int = 5
    random_hit_rate: float = 0.0
    halt_rate: float = 0.0
    plans: Mapping[Tuple[str, date], HitPlan] = field(default_factory=dict)
    bull_windows: Tuple[Tuple[date, date], ...] = DEFAULT_BULL_WINDOWS
    sample_start: Optional[date] = None
    sample_end: Optional[date] = None
    bin_minutes: int = 5
    event_window: int = 100

    def run_config(self) -> RunConfig:
        """Analysis settings the manifest is computed under."""
        return RunConfig(
            tick_paths=("ticks",),
            session_paths=("sessions.csv",),
            output_dir="reports",
            bull_windows=self.bull_windows,
            sample_start=self.sample_start or self.dates[0],
            sample_end=self.sample_end or self.dates[-1],
            bin_minutes=self.bin_minutes,
            event_window=self.event_window,
        ).validate()

    @classmethod
    def load(cls, path: Path) -> "ScenarioSpec":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"Cannot read scenario {path}: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioSpec":
        """Build and validate a scenario from its JSON form.

        Raises:
            ScenarioError: For missing fields, bad values or infeasible plans
        """
        try:
            seed = int(data["seed"])
            dates = _parse_dates(data["dates"])
            stocks = _parse_stocks(data, seed)
            cadence = int(data.get("cadence_seconds", 5))
            levels = int(data.get("levels", 5))
            bull = data.get("bull_windows")
            bull_windows = parse_bull_windows(bull) if bull is not None else DEFAULT_BULL_WINDOWS
            spec = cls(
                seed=seed,
                dates=dates,
                stocks=stocks,
                levels=levels,
                cadence_seconds=cadence,
                random_hit_rate=float(data.get("random_hit_rate", 0.0)),
                halt_rate=float(data.get("halt_rate", 0.0)),
                bull_windows=bull_windows,
                sample_start=parse_date(data["sample_start"]) if "sample_start" in data else None,
                sample_end=parse_date(data["sample_end"]) if "sample_end" in data else None,
                bin_minutes=int(data.get("bin_minutes", 5)),
                event_window=int(data.get("event_window", 100)),
            )
            if levels not in SUPPORTED_LEVELS:
                raise ScenarioError(f"levels must be one of {SUPPORTED_LEVELS}, got {levels}")
            if cadence < 1 or 300 % cadence:
                raise ScenarioError(f"cadence_seconds must divide 300, got {cadence}")
            if not 0 <= spec.random_hit_rate <= 1 or not 0 <= spec.halt_rate <= 1:
                raise ScenarioError("random_hit_rate and halt_rate must lie in [0, 1]")
            plans = {}
            grid = set(record_times(cadence))
            for entry in data.get("hits", []):
                key, plan = _parse_plan(entry, grid, cadence)
                if key in plans:
                    raise ScenarioError(f"Two plans for {key[0]} {key[1]}")
                plans[key] = plan
            spec = replace(spec, plans=plans)
            config = spec.run_config()
            if config.sample_start > dates[0] or config.sample_end < dates[-1]:
                raise ScenarioError("sample_start..sample_end must cover every scenario date")
        except ScenarioError:
            raise
        except ConfigError as e:
            raise ScenarioError(str(e)) from e
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"Bad scenario: {e!r}") from e
        spec._check_plan_targets()
        return spec

    def _check_plan_targets(self) -> None:
        stock_ids = {s.stock_id for s in self.stocks}
        dates = set(self.dates)
        for stock_id, day in self.plans:
            if stock_id not in stock_ids:
                raise ScenarioError(f"Plan names unknown stock {stock_id}")
            if day not in dates:
                raise ScenarioError(f"Plan date {day} is not a scenario date")


def record_times(cadence: int, windows: SessionWindows = SessionWindows()) -> List[int]:
    """Timestamps of one synthetic trading day."""
    times = [AUCTION_TIME]
    times += list(range(windows.open_end, windows.am_end + 1, cadence))
    times += list(range(windows.pm_start, windows.close + 1, cadence))
    return times


def _parse_dates(raw) -> Tuple[date, ...]:
    if isinstance(raw, Mapping):
        index = pd.bdate_range(start=raw["start"], periods=int(raw["count"]))
        dates = tuple(ts.date() for ts in index)
    else:
        dates = tuple(parse_date(text) for text in raw)
    if not dates:
        raise ScenarioError("Scenario has no dates")
    if list(dates) != sorted(set(dates)):
        raise ScenarioError("Scenario dates must be strictly increasing")
    return dates


def _parse_stocks(data: Mapping, seed: int) -> Tuple[StockSpec, ...]:
    if "stocks" in data:
        stocks = tuple(
            StockSpec(
                stock_id=str(entry["stock_id"]),
                prev_close=parse_cents(str(entry["prev_close"])),
                shares_outstanding=int(entry["shares_outstanding"]),
                ipo_date=parse_date(entry["ipo_date"]) if entry.get("ipo_date") else None,
                ex_dividend_dates=tuple(parse_date(d) for d in entry.get("ex_dividend_dates", ())),
            )
            for entry in data["stocks"]
        )
    else:
        rng = np.random.Generator(np.random.PCG64([seed]))
        count = int(data["stock_count"])
        closes = rng.integers(500, 5001, size=count)
        shares = rng.integers(10, 1000, size=count) * 1_000_000
        stocks = tuple(
            StockSpec(f"{600000 + i:06d}", int(closes[i]), int(shares[i])) for i in range(count)
        )
    if not stocks:
        raise ScenarioError("Scenario has no stocks")
    ids = [s.stock_id for s in stocks]
    if len(set(ids)) != len(ids):
        raise ScenarioError("Duplicate stock_id in scenario")
    for stock in stocks:
        if len(stock.stock_id) != 6 or not stock.stock_id.isdigit():
            raise ScenarioError(f"stock_id must be 6 digits, got {stock.stock_id!r}")
        if stock.prev_close < 100 or stock.shares_outstanding <= 0:
            raise ScenarioError(f"{stock.stock_id}: prev_close must be at least 1.00 and shares positive")
    return stocks


def _parse_segments(raw, direction: HitDirection, cadence: int) -> List[SegmentPlan]:
    segments = []
    for start_text, duration in raw:
        start = parse_clock(start_text)
        duration = int(duration)
        if duration <= 0 or duration % cadence:
            raise ScenarioError(f"Segment duration {duration} must be a positive multiple of {cadence}")
        segments.append(SegmentPlan(direction, start, start + duration))
    return segments


def _parse_plan(entry: Mapping, grid: set, cadence: int) -> Tuple[Tuple[str, date], HitPlan]:
    direction = HitDirection(entry["direction"])
    other = HitDirection.DOWN if direction is HitDirection.UP else HitDirection.UP
    segments = _parse_segments(entry["segments"], direction, cadence)
    if not segments:
        raise ScenarioError("A hit plan needs at least one segment")
    segments += _parse_segments(entry.get("other_segments", []), other, cadence)

    approach_raw = entry.get("approach")
    approach, random_approach = None, False
    if approach_raw is None:
        random_approach = True
    elif approach_raw != "none":
        approach = tuple(int(d) for d in approach_raw)
        if len(approach) != SUBINTERVALS or any(d <= 0 or d % cadence for d in approach):
            raise ScenarioError(f"approach needs {SUBINTERVALS} positive multiples of {cadence} seconds")

    relation = entry.get("next_day_open")
    if relation is not None and relation not in RELATIONS:
        raise ScenarioError(f"next_day_open must be one of {RELATIONS}, got {relation!r}")

    plan = HitPlan(
        direction=direction,
        segments=tuple(sorted(segments, key=lambda s: s.start)),
        closed_at_limit=bool(entry["closed_at_limit"]),
        next_day_open=relation,
        approach=approach,
        random_approach=random_approach,
    )
    _validate_plan(plan, grid)
    return (str(entry["stock_id"]), parse_date(entry["date"])), plan


def _validate_plan(plan: HitPlan, grid: set, windows: SessionWindows = SessionWindows()) -> None:
    """Check that the plan can be realised exactly on the record grid.

    Raises:
        ScenarioError: Naming the first infeasible element
    """
    for segment in plan.segments:
        if segment.start not in grid or segment.end not in grid:
            raise ScenarioError(
                f"Segment {segment.start}-{segment.end} must start and end on record times "
                f"inside the sessions (no later than 15:00:00)"
            )
    for a, b in zip(plan.segments, plan.segments[1:]):
        if b.start < a.end or (b.start == a.end and a.direction is b.direction):
            raise ScenarioError("Planned segments overlap")
    if plan.segments[0].start == AUCTION_TIME and plan.segments[0].direction is not plan.direction:
        raise ScenarioError("Only the planned direction may open at the limit")
    closes_at_limit = plan.segments[-1].end == windows.close
    if closes_at_limit != plan.closed_at_limit:
        raise ScenarioError(
            f"closed_at_limit={plan.closed_at_limit} contradicts the last segment ending at "
            f"{plan.segments[-1].end}"
        )
    if plan.approach is not None:
        _check_approach(plan, plan.approach, grid, windows)


def _approach_problem(plan: HitPlan, approach: Sequence[int], grid: set,
                      windows: SessionWindows = SessionWindows()) -> Optional[str]:
    start = plan.first_start
    if start <= windows.open_end:
        return "opening-window hits have no approach"
    begin = start - sum(approach)
    session_start = windows.open_end if start <= windows.am_end else windows.pm_start
    if begin < session_start:
        return "approach does not fit between the session start and the first segment"
    crossings = np.cumsum((begin,) + tuple(approach)[:-1])
    if any(int(t) not in grid for t in crossings):
        return "approach crossings are not on record times"
    if any(s.start < start and s.end > begin for s in plan.segments):
        return "approach overlaps a planned segment"
    return None


def _check_approach(plan: HitPlan, approach: Sequence[int], grid: set,
                    windows: SessionWindows = SessionWindows()) -> None:
    problem = _approach_problem(plan, approach, grid, windows)
    if problem:
        raise ScenarioError(problem)


@dataclass(frozen=True)
class PlannedTrade:
    timestamp: int
    price: int
    volume: int
    direction: TradeDirection


@dataclass
class DayScript:
    """Everything generated for one stock-day."""

    stock: StockSpec
    date: date
    prev_close: int
    limits: LimitPrices
    excluded: bool
    trades: List[PlannedTrade]
    lobs: List[LobSnapshot]
    plan: Optional[HitPlan]
    relation: Optional[str] = None
    next_day_open: Optional[int] = None

    @property
    def close(self) -> int:
        return self.trades[-1].price

    @property
    def open(self) -> int:
        return self.trades[0].price


def _lunch_adjust(t: int, windows: SessionWindows) -> int:
    return windows.pm_start if windows.am_end < t < windows.pm_start else t


def random_plan(rng: np.random.Generator, prev_close: int, cadence: int, grid: set,
                windows: SessionWindows = SessionWindows()) -> HitPlan:
    """Draw a feasible hit plan: 1-3 segments, random approach, sometimes an opening or closing hit."""
    if prev_close < RANDOM_UP_ONLY_BELOW or rng.random() < 0.6:
        direction = HitDirection.UP
    else:
        direction = HitDirection.DOWN
    other = HitDirection.DOWN if direction is HitDirection.UP else HitDirection.UP

    approach = None
    if rng.random() < 0.1:
        start = windows.open_end
    else:
        k_max = max(1, min(6, 7200 // (20 * cadence)))
        approach = tuple(int(k) * cadence for k in rng.integers(1, k_max + 1, size=SUBINTERVALS))
        if rng.random() < 0.5:
            session_start, session_end = windows.open_end, windows.am_end
        else:
            session_start, session_end = windows.pm_start, windows.close
        earliest = session_start + sum(approach) + cadence
        latest = session_end - cadence
        if earliest > latest:
            approach = None
            earliest = session_start + cadence
        start = earliest + cadence * int(rng.integers(0, (latest - earliest) // cadence + 1))

    segments = []
    cursor = start
    for _ in range(int(rng.integers(1, 4))):
        end = _lunch_adjust(cursor + cadence * int(rng.integers(1, 241)), windows)
        end = min(end, windows.close)
        segments.append(SegmentPlan(direction, cursor, end))
        if end == windows.close:
            break
        cursor = end + cadence * int(rng.integers(1, 121))
        if windows.am_end < cursor < windows.pm_start:
            cursor = windows.pm_start + cadence
        if cursor >= windows.close:
            break

    closed = segments[-1].end == windows.close or rng.random() < 0.3
    if closed:
        segments[-1] = replace(segments[-1], end=windows.close)
    elif rng.random() < 0.1:
        other_start = _lunch_adjust(segments[-1].end + cadence * int(rng.integers(1, 61)), windows)
        if other_start == windows.pm_start:
            other_start += cadence
        other_end = _lunch_adjust(other_start + cadence * int(rng.integers(1, 61)), windows)
        if other_end < windows.close:
            segments.append(SegmentPlan(other, other_start, other_end))

    plan = HitPlan(direction=direction, segments=tuple(segments), closed_at_limit=closed, approach=approach)
    if approach is not None and _approach_problem(plan, approach, grid, windows):
        plan = replace(plan, approach=None)
    _validate_plan(plan, grid, windows)
    return plan


class ScenarioGenerator:
    """Generates the corpus of a ScenarioSpec, one stock at a time."""

    def __init__(self, spec: ScenarioSpec, windows: SessionWindows = SessionWindows()):
        self.spec = spec
        self.windows = windows
        self.times = record_times(spec.cadence_seconds, windows)
        self.grid = set(self.times)

    def _rng(self, stock_index: int, day_index: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64([self.spec.seed, stock_index, day_index]))

    def generate_stock(self, stock_index: int) -> List[DayScript]:
        """All sessions of one stock, in date order.

        Raises:
            ScenarioError: If a planted day cannot be realised
        """
        spec = self.spec
        stock = spec.stocks[stock_index]
        scripts: List[DayScript] = []
        prev_close = stock.prev_close
        relation: Optional[str] = None
        halted = False

        for day_index, day in enumerate(spec.dates):
            plan = spec.plans.get((stock.stock_id, day))
            listed = stock.ipo_date is None or day >= stock.ipo_date
            if halted or not listed:
                if plan is not None:
                    reason = "halted" if halted else "not listed yet"
                    raise ScenarioError(f"{stock.stock_id} has a plan on {day} but is {reason}")
                halted = False
                relation = None
                continue

            rng = self._rng(stock_index, day_index)
            excluded = day == stock.ipo_date or day in stock.ex_dividend_dates
            if plan is not None and excluded:
                raise ScenarioError(f"{stock.stock_id} {day}: planted hit on an IPO or ex-dividend day")
            if plan is None and not excluded and prev_close >= MIN_HIT_PREV_CLOSE:
                if rng.random() < spec.random_hit_rate:
                    plan = random_plan(rng, prev_close, spec.cadence_seconds, self.grid, self.windows)
            if plan is not None:
                if prev_close < MIN_HIT_PREV_CLOSE:
                    raise ScenarioError(
                        f"{stock.stock_id} {day}: planted hits need a previous close of at least "
                        f"{MIN_HIT_PREV_CLOSE / 100:.2f}"
                    )
                plan = self._settle_approach(plan, rng)

            script = self._generate_day(stock, day, prev_close, excluded, plan, relation, rng)
            relation = self._next_relation(stock, day_index, plan, rng)
            script.relation = relation
            follows = scripts and scripts[-1].date == spec.dates[day_index - 1]
            if follows and scripts[-1].relation not in (None, "halt"):
                scripts[-1].next_day_open = script.open
            scripts.append(script)
            prev_close = script.close
            halted = relation == "halt"
        return scripts

    def _settle_approach(self, plan: HitPlan, rng: np.random.Generator) -> HitPlan:
        if not plan.random_approach:
            return plan
        cadence = self.spec.cadence_seconds
        k_max = max(1, min(6, 7200 // (20 * cadence)))
        drawn = tuple(int(k) * cadence for k in rng.integers(1, k_max + 1, size=SUBINTERVALS))
        for approach in (drawn, (cadence,) * SUBINTERVALS):
            if _approach_problem(plan, approach, self.grid, self.windows) is None:
                return replace(plan, approach=approach, random_approach=False)
        return replace(plan, approach=None, random_approach=False)

    def _next_relation(self, stock: StockSpec, day_index: int, plan: Optional[HitPlan],
                       rng: np.random.Generator) -> Optional[str]:
        spec = self.spec
        relation = plan.next_day_open if plan is not None else None
        forced = None
        if day_index + 1 < len(spec.dates):
            upcoming = spec.plans.get((stock.stock_id, spec.dates[day_index + 1]))
            if upcoming is not None and upcoming.opens_at_limit:
                forced = "higher" if upcoming.direction is HitDirection.UP else "lower"
        if relation is not None:
            if forced is not None and relation != forced:
                raise ScenarioError(
                    f"{stock.stock_id} {spec.dates[day_index]}: next_day_open={relation} contradicts "
                    f"the opening hit planned for the next date"
                )
            return relation
        if forced is not None:
            return forced
        if rng.random() < spec.halt_rate:
            return "halt"
        return str(rng.choice(("higher", "lower", "equal"), p=(0.45, 0.45, 0.10)))

    def _open_price(self, prev_close: int, limits: LimitPrices, plan: Optional[HitPlan],
                    relation: Optional[str], rng: np.random.Generator) -> int:
        if plan is not None and plan.opens_at_limit:
            return limits.limit_for(plan.direction)
        gap_max = max(1, prev_close * OPEN_GAP_BPS // 10000)
        if relation == "higher":
            return prev_close + int(rng.integers(1, gap_max + 1))
        if relation == "lower":
            return prev_close - int(rng.integers(1, gap_max + 1))
        if relation == "equal":
            return prev_close
        return prev_close + int(rng.integers(-gap_max, gap_max + 1))

    def _generate_day(self, stock: StockSpec, day: date, prev_close: int, excluded: bool,
                      plan: Optional[HitPlan], relation: Optional[str],
                      rng: np.random.Generator) -> DayScript:
        windows = self.windows
        times = self.times
        n = len(times)
        limits = compute_limit_prices(prev_close)
        open_price = self._open_price(prev_close, limits, plan, relation, rng)

        steps = rng.integers(-1, 2, size=n)
        volumes = rng.integers(1, 100, size=n) * 100
        coins = rng.random(n)
        offsets = rng.integers(1, 6, size=n)
        spreads = rng.integers(1, 4, size=n)
        depth = rng.integers(1, 50, size=(n, 2 * self.spec.levels)) * 100

        band = prev_close * WALK_BAND_BPS // 10000
        low, high = prev_close - band, prev_close + band
        segments = plan.segments if plan is not None else ()

        approach_start = approach_end = None
        crossings: List[int] = []
        thresholds: List[int] = []
        if plan is not None and plan.approach is not None:
            approach_end = plan.first_start
            approach_start = approach_end - sum(plan.approach)
            crossings = [int(t) for t in np.cumsum((approach_start,) + plan.approach[:-1])]
            thresholds = velocity_thresholds(
                prev_close, plan.direction, limits.limit_for(plan.direction), subintervals=SUBINTERVALS
            )

        trades: List[PlannedTrade] = []
        walk = open_price
        last_direction: Optional[HitDirection] = None
        for r, t in enumerate(times):
            segment = next(
                (s for s in segments if s.start <= t < s.end or t == s.end == windows.close), None
            )
            toward: Optional[HitDirection] = None
            if segment is not None:
                price = limits.limit_for(segment.direction)
                last_direction = toward = segment.direction
            elif approach_start is not None and approach_start <= t < approach_end:
                price = thresholds[bisect.bisect_right(crossings, t) - 1]
                toward = plan.direction
            elif last_direction is not None:
                offset = int(offsets[r])
                price = (limits.up_limit - offset if last_direction is HitDirection.UP
                         else limits.down_limit + offset)
            elif r == 0:
                price = open_price
            else:
                walk = min(max(walk + int(steps[r]), low), high)
                price = walk
            if not limits.down_limit <= price <= limits.up_limit or (
                segment is None and limits.direction_at(price) is not None
            ):
                raise ScenarioError(f"{stock.stock_id} {day}: planned price {price} escapes the limits")

            if r == 0:
                direction = TradeDirection.UNKNOWN
            elif toward is not None:
                same = coins[r] < 0.7
                buyer = (toward is HitDirection.UP) == same
                direction = TradeDirection.BUYER_INITIATED if buyer else TradeDirection.SELLER_INITIATED
            else:
                direction = (TradeDirection.BUYER_INITIATED if coins[r] < 0.5
                             else TradeDirection.SELLER_INITIATED)
            trades.append(PlannedTrade(t, price, int(volumes[r]), direction))

        lobs = [self._book(r, trades, limits, int(spreads[r]), depth[r]) for r in range(n)]
        return DayScript(
            stock=stock,
            date=day,
            prev_close=prev_close,
            limits=limits,
            excluded=excluded,
            trades=trades,
            lobs=lobs,
            plan=plan,
        )

    def _book(self, r: int, trades: Sequence[PlannedTrade], limits: LimitPrices,
              spread: int, depth: np.ndarray) -> LobSnapshot:
        """Book standing after record r, shaped so that trade r+1 classifies as planned."""
        if r + 1 < len(trades):
            upcoming = trades[r + 1]
            if upcoming.direction is TradeDirection.BUYER_INITIATED:
                ask, bid = upcoming.price, upcoming.price - spread
            else:
                ask, bid = upcoming.price + spread, upcoming.price
        else:
            ask, bid = trades[r].price + 1, trades[r].price - 1

        levels = self.spec.levels
        ask_prices, ask_volumes, bid_prices, bid_volumes = [], [], [], []
        for j in range(levels):
            price = ask + j
            present = price <= limits.up_limit
            ask_prices.append(price if present else 0)
            ask_volumes.append(int(depth[j]) if present else 0)
        for j in range(levels):
            price = bid - j
            present = price >= limits.down_limit and price > 0
            bid_prices.append(price if present else 0)
            bid_volumes.append(int(depth[levels + j]) if present else 0)
        return LobSnapshot(tuple(ask_prices), tuple(ask_volumes), tuple(bid_prices), tuple(bid_volumes))


def expected_record(script: DayScript, windows: SessionWindows = SessionWindows()) -> DayHitRecord:
    """The DayHitRecord a correct analysis must derive from a planted day."""
    plan = script.plan
    by_direction: Dict[HitDirection, List[HitSegment]] = {d: [] for d in HitDirection}
    for s in plan.segments:
        by_direction[s.direction].append(HitSegment(
            direction=s.direction,
            start_time=s.start,
            duration=s.end - s.start,
            ends_at_close=s.end == windows.close,
            end_time=s.end,
        ))
    firsts = {d: segs[0].start_time for d, segs in by_direction.items() if segs}
    headline = min(firsts, key=firsts.get)

    def span(segs: List[HitSegment]) -> int:
        return segs[-1].end_time - segs[0].start_time if segs else 0

    last = plan.segments[-1]
    close_direction = last.direction if last.end == windows.close else None
    if script.relation in (None, "halt") or script.next_day_open is None:
        next_class = NextDayClass.UNAVAILABLE
    elif script.relation == "equal":
        next_class = NextDayClass.FLAT
    elif (script.relation == "higher") == (headline is HitDirection.UP):
        next_class = NextDayClass.CONTINUATION
    else:
        next_class = NextDayClass.REVERSAL

    return DayHitRecord(
        stock_id=script.stock.stock_id,
        date=script.date,
        direction=headline,
        segments_up=tuple(by_direction[HitDirection.UP]),
        segments_down=tuple(by_direction[HitDirection.DOWN]),
        span_up=span(by_direction[HitDirection.UP]),
        span_down=span(by_direction[HitDirection.DOWN]),
        first_hit_window=classify_window(firsts[headline], windows),
        closed_at_limit=close_direction is not None,
        close_direction=close_direction,
        next_day_class=next_class,
        prev_close=script.prev_close,
        close_price=script.close,
        capitalization=script.stock.shares_outstanding * script.prev_close,
    )


def planned_events(script: DayScript, record: DayHitRecord, calendar: RegimeCalendar,
                   windows: SessionWindows = SessionWindows()) -> List[PrehitEvent]:
    """Pre-hit events from the planned trades, with planned aggressor sides and quotes."""
    regime = calendar.regime_for(script.date)
    classified = [
        ClassifiedTrade(
            index=r,
            timestamp=trade.timestamp,
            price=trade.price,
            volume=trade.volume,
            direction=trade.direction,
            ask_before=script.lobs[r - 1].best_ask if r else None,
            bid_before=script.lobs[r - 1].best_bid if r else None,
        )
        for r, trade in enumerate(script.trades)
    ]
    events = []
    for direction in record.directions():
        start = record.first_hit_time(direction)
        hit_index = next(i for i, t in enumerate(classified) if t.timestamp == start)
        events.append(PrehitEvent(
            stock_id=script.stock.stock_id,
            date=script.date,
            direction=direction,
            event_class=EventClass.of(direction, regime),
            hit_window=classify_window(start, windows),
            prev_close=script.prev_close,
            limit_price=script.limits.limit_for(direction),
            trades=tuple(classified[:hit_index + 1]),
        ))
    return events


def build_manifest(spec: ScenarioSpec, scripts: Sequence[DayScript]) -> dict:
    """Ground truth for every report, derived from the plans rather than the tick files."""
    config = spec.run_config()
    calendar = RegimeCalendar.from_config(config)
    universe = SampleUniverse()
    records: List[DayHitRecord] = []
    velocity = VelocityAccumulator(SUBINTERVALS)
    study = EventStudyAccumulator(spec.event_window)

    for script in scripts:
        if script.excluded:
            continue
        universe.add(script.stock.stock_id, script.date)
        if script.plan is None:
            continue
        record = expected_record(script)
        records.append(record)
        for event in planned_events(script, record, calendar):
            study.add(event)
            if event.hit_window is HitWindow.OPEN:
                velocity.exclusions[event.event_class]["opening_hit"] += 1
            elif event.direction is script.plan.direction and script.plan.approach is not None:
                velocity.add_durations(event.event_class, script.plan.approach)
            else:
                velocity.exclusions[event.event_class]["zero_duration"] += 1

    records.sort(key=lambda r: (r.stock_id, r.date))
    portfolios = build_portfolios(records, config.portfolio_count)
    scopes = all_scopes(config.portfolio_count)
    columns, hit_counts = reports.hit_count_rows(
        tabulate_all_scopes(records, calendar, portfolios, universe, config.portfolio_count)
    )
    return {
        "scenario": {
            "seed": spec.seed,
            "stocks": len(spec.stocks),
            "dates": len(spec.dates),
            "levels": spec.levels,
            "cadence_seconds": spec.cadence_seconds,
        },
        "sessions": {
            "total": len(scripts),
            "excluded": sum(1 for s in scripts if s.excluded),
            "rows": sum(len(s.trades) for s in scripts),
        },
        "hits": [hit_row(r) for r in records],
        "hit_counts": {"columns": columns, "rows": hit_counts},
        "hit_stats": reports.hit_stats_rows(summarize_hit_stats(records, calendar, portfolios, scopes)),
        "per_stock": reports.per_stock_rows(per_stock_stats(records, universe)),
        "intraday": reports.intraday_rows(intraday_pattern(records, calendar, config.bin_minutes)),
        "velocity": {
            c.value: reports.velocity_rows(velocity.profile(c)) for c in EventClass if velocity.profile(c)
        },
        "event_study": {
            c.value: reports.event_study_rows(study.series(c)) for c in EventClass if study.series(c)
        },
        "prehit_exclusions": exclusion_report(velocity, study),
    }


@dataclass(frozen=True)
class GeneratedCorpus:
    tick_files: Tuple[Path, ...]
    session_file: Path
    manifest_file: Path
    config_file: Path
    manifest: dict


def _tick_record(stock_id: str, trade: PlannedTrade, lob: LobSnapshot) -> TickRecord:
    return TickRecord(stock_id, trade.timestamp, trade.price, trade.volume, lob)


def generate(spec: ScenarioSpec, output_dir: Path) -> GeneratedCorpus:
    """Write ticks/<stock_id>.csv, sessions.csv, manifest.json and run.conf under output_dir.

    Raises:
        ScenarioError: If the scenario cannot be realised
    """
    output_dir = Path(output_dir)
    generator = ScenarioGenerator(spec)
    config = spec.run_config()

    scripts: List[DayScript] = []
    tick_files = []
    session_rows: List[Tuple[str, date, StockDayMeta]] = []
    for stock_index, stock in enumerate(spec.stocks):
        stock_scripts = generator.generate_stock(stock_index)
        sessions = []
        for script in stock_scripts:
            meta = StockDayMeta(
                prev_close=script.prev_close,
                shares_outstanding=stock.shares_outstanding,
                is_ipo_day=script.date == stock.ipo_date,
                is_ex_dividend_day=script.date in stock.ex_dividend_dates,
                next_day_open=script.next_day_open,
            )
            ticks = [_tick_record(stock.stock_id, t, lob) for t, lob in zip(script.trades, script.lobs)]
            sessions.append((script, meta, build_session(stock.stock_id, script.date, meta, ticks)))
        tick_files.append(write_tick_file(
            output_dir / "ticks" / f"{stock.stock_id}.csv", [s for _, _, s in sessions], spec.levels
        ))
        scripts.extend(stock_scripts)
        logger.debug("Generated %d sessions of %s", len(stock_scripts), stock.stock_id)
        session_rows.extend((stock.stock_id, script.date, meta) for script, meta, _ in sessions)

    session_file = write_session_metadata(output_dir / "sessions.csv", session_rows)
    manifest = build_manifest(spec, scripts)
    manifest_file = reports.write_json(output_dir / "manifest.json", manifest, config)
    config_file = write_run_config(config, output_dir / "run.conf", RUN_CONF_KEYS)
    logger.info("Generated %d sessions of %d stocks into %s (%d planted hit days)",
                len(scripts), len(spec.stocks), output_dir, len(manifest["hits"]))
    return GeneratedCorpus(
        tick_files=tuple(tick_files),
        session_file=session_file,
        manifest_file=manifest_file,
        config_file=config_file,
        manifest=manifest,
    )
