import math
import sys
import unittest
from dataclasses import replace
from datetime import date
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple


REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

from limithits.aggregation import Regime
from limithits.config import parse_clock
from limithits.limit_engine import DurationClock, HitDirection, HitWindow, compute_limit_prices, segment_hits
from limithits.market_data import (
    ClassifiedTrade,
    LobSnapshot,
    StockDayMeta,
    TickRecord,
    TradeDirection,
    build_session,
)
from limithits.prehit import (
    EventClass,
    EventStudyAccumulator,
    PrehitEvent,
    VelocityAccumulator,
    event_contribution,
    event_study,
    exclusion_report,
    extract_events,
    subinterval_durations,
    velocity_profile,
    velocity_thresholds,
)


DAY = date(2007, 3, 1)
UP, DOWN = HitDirection.UP, HitDirection.DOWN
BUY, SELL = TradeDirection.BUYER_INITIATED, TradeDirection.SELLER_INITIATED


def make_event(prices: Sequence[Tuple[int, int]], direction: HitDirection = UP,
               window: HitWindow = HitWindow.AM, stock_id: str = "600000",
               sides: Optional[Sequence[TradeDirection]] = None, volume: int = 100,
               quotes: Optional[Tuple[int, int]] = (1000, 998)) -> PrehitEvent:
    """Event from (timestamp, price) trades; the last one is the hit trade."""
    sides = sides or [BUY] * len(prices)
    trades = tuple(
        ClassifiedTrade(i, ts, price, volume, side,
                        quotes[0] if quotes else None, quotes[1] if quotes else None)
        for i, ((ts, price), side) in enumerate(zip(prices, sides))
    )
    limits = compute_limit_prices(1000)
    return PrehitEvent(
        stock_id=stock_id,
        date=DAY,
        direction=direction,
        event_class=EventClass.of(direction, Regime.BULL),
        hit_window=window,
        prev_close=1000,
        limit_price=limits.limit_for(direction),
        trades=trades,
    )


def steady_approach(step_seconds: Sequence[int]) -> List[Tuple[int, int]]:
    """Start at the close, then one trade on each threshold after the given gaps."""
    thresholds = velocity_thresholds(1000, UP, 1100)
    t = parse_clock("10:00:00")
    prices = [(t, 1000), (t + 60, thresholds[0])]
    t += 60
    for gap, level in zip(step_seconds, thresholds[1:]):
        t += gap
        prices.append((t, level))
    return prices


class ThresholdsTest(unittest.TestCase):
    def test_up_and_down_levels(self) -> None:
        up = velocity_thresholds(1000, UP, 1100)
        self.assertEqual(len(up), 11)
        self.assertEqual(up[:3], [1050, 1055, 1060])
        self.assertEqual(up[-2:], [1095, 1100])
        down = velocity_thresholds(1000, DOWN, 900)
        self.assertEqual(down[:2], [950, 945])
        self.assertEqual(down[-1], 900)

    def test_cent_rounding_toward_the_limit(self) -> None:
        # 777 * 1.05 = 815.85, 777 * 0.95 = 738.15
        self.assertEqual(velocity_thresholds(777, UP, 855)[0], 816)
        self.assertEqual(velocity_thresholds(777, DOWN, 699)[0], 738)

    def test_levels_stay_inside_the_limits_below_one_yuan(self) -> None:
        for prev_close in range(1, 100):
            limits = compute_limit_prices(prev_close)
            up = velocity_thresholds(prev_close, UP, limits.up_limit)
            down = velocity_thresholds(prev_close, DOWN, limits.down_limit)
            self.assertEqual(max(up), limits.up_limit, prev_close)
            self.assertEqual(min(down), limits.down_limit, prev_close)
            self.assertEqual(up, sorted(up), prev_close)
            self.assertEqual(down, sorted(down, reverse=True), prev_close)


class SubintervalDurationsTest(unittest.TestCase):
    def test_durations_between_first_crossings(self) -> None:
        event = make_event(steady_approach([30 * (m + 1) for m in range(10)]))
        durations, reason = subinterval_durations(event, velocity_thresholds(1000, UP, 1100), DurationClock())
        self.assertIsNone(reason)
        self.assertEqual(durations, [30 * (m + 1) for m in range(10)])

    def test_exclusions(self) -> None:
        thresholds = velocity_thresholds(1000, UP, 1100)
        t = parse_clock("10:00:00")
        cases = {
            "opening_hit": make_event([(parse_clock("09:25:00"), 1100)], window=HitWindow.OPEN),
            "gap_open": make_event([(t, 1060), (t + 60, 1100)]),
            "zero_duration": make_event([(t, 1000), (t + 60, 1100)]),
        }
        for reason, event in cases.items():
            self.assertEqual(subinterval_durations(event, thresholds, DurationClock()), (None, reason))

    def test_penny_stock_approach(self) -> None:
        # 11 cents: every sub-level rounds onto the 12-cent limit
        t = parse_clock("10:00:00")
        event = replace(make_event([(t, 11), (t + 60, 12)]), prev_close=11, limit_price=12)
        thresholds = velocity_thresholds(11, UP, 12)
        self.assertEqual(subinterval_durations(event, thresholds, DurationClock()), (None, "zero_duration"))

    def test_session_pinned_at_a_three_cent_limit(self) -> None:
        quotes = LobSnapshot((0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0))
        ticks = [TickRecord("600000", parse_clock("10:00:00") + 60 * i, 3, 100, quotes) for i in range(5)]
        session = build_session("600000", DAY, StockDayMeta(3, 10), ticks)
        limits = compute_limit_prices(3)
        record = segment_hits(session, limits)

        events = extract_events(session, record, Regime.BULL, {d: limits.limit_for(d) for d in record.directions()})

        self.assertTrue(events)
        self.assertEqual(velocity_profile(events), {})


class VelocityTest(unittest.TestCase):
    def test_linearly_growing_durations(self) -> None:
        accumulator = VelocityAccumulator()
        accumulator.add_durations(EventClass.UP_BULL, [m + 1 for m in range(10)])
        profile = accumulator.profile(EventClass.UP_BULL)
        self.assertAlmostEqual(profile.V[0], 55.0)
        self.assertAlmostEqual(profile.V[9], 5.5)
        self.assertEqual(sum(profile.mean_shares), Fraction(1))

    def test_uniform_approach(self) -> None:
        events = [make_event(steady_approach([45] * 10), stock_id=s) for s in ("600000", "600001")]
        profiles = velocity_profile(events)
        self.assertEqual(list(profiles), [EventClass.UP_BULL])
        self.assertEqual(profiles[EventClass.UP_BULL].events, 2)
        for value in profiles[EventClass.UP_BULL].V:
            self.assertAlmostEqual(value, 10.0)

    def test_merge_matches_a_single_pass(self) -> None:
        first, second, whole = VelocityAccumulator(), VelocityAccumulator(), VelocityAccumulator()
        for durations, target in (([1] * 10, first), ([m + 1 for m in range(10)], second)):
            target.add_durations(EventClass.DOWN_BEAR, durations)
            whole.add_durations(EventClass.DOWN_BEAR, durations)
        merged = first.merge(second)
        self.assertEqual(merged.profile(EventClass.DOWN_BEAR), whole.profile(EventClass.DOWN_BEAR))

    def test_empty_class_has_no_profile(self) -> None:
        self.assertIsNone(VelocityAccumulator().profile(EventClass.UP_BEAR))


class EventStudyTest(unittest.TestCase):
    def setUp(self) -> None:
        t = parse_clock("10:00:00")
        self.prices = [(t, 1000), (t + 5, 1050), (t + 10, 1100)]

    def test_hand_computed_series(self) -> None:
        events = [
            make_event(self.prices, stock_id="600000", sides=[BUY, BUY, BUY]),
            make_event(self.prices, stock_id="600001", sides=[BUY, SELL, BUY], volume=300),
        ]
        series = event_study(events, window=2)[EventClass.UP_BULL]

        self.assertEqual(series.events, 2)
        self.assertEqual(series.n_plus, (1, 2))
        self.assertEqual(series.n_minus, (1, 0))
        self.assertAlmostEqual(series.s_plus[0], math.log(100))
        self.assertAlmostEqual(series.s_minus[0], math.log(300))
        self.assertAlmostEqual(series.s_plus[1], (math.log(100) + math.log(300)) / 2)
        self.assertEqual(series.s_minus[-1], 0.0)
        self.assertAlmostEqual(series.R[0], math.log(1050 / 1000))
        self.assertAlmostEqual(series.R[1], math.log(1100 / 1050))
        self.assertEqual(series.R, series.v)
        self.assertAlmostEqual(series.S[0], 2 / 999)
        # per-position returns telescope to the whole move over the window
        self.assertAlmostEqual(sum(series.R), math.log(1100 / 1000), places=12)

    def test_constant_price_has_no_returns(self) -> None:
        t = parse_clock("10:00:00")
        event = make_event([(t + 5 * i, 1100) for i in range(5)])
        series = event_study([event], window=4)[EventClass.UP_BULL]
        self.assertEqual(series.R, (0.0,) * 4)
        self.assertEqual(series.v, (0.0,) * 4)

    def test_event_exclusions(self) -> None:
        opening = make_event([(parse_clock("09:25:00"), 1100)], window=HitWindow.OPEN)
        self.assertEqual(event_contribution(opening, 2), (None, "opening_hit"))
        self.assertEqual(event_contribution(make_event(self.prices), 5), (None, "short_history"))

    def test_trade_level_counts(self) -> None:
        accumulator = EventStudyAccumulator(window=2)
        accumulator.add(make_event(self.prices, sides=[BUY, TradeDirection.UNKNOWN, BUY], quotes=None))
        exclusions = accumulator.exclusions[EventClass.UP_BULL]
        self.assertEqual(exclusions["unknown_direction"], 1)
        self.assertEqual(exclusions["missing_quotes"], 2)
        series = accumulator.series(EventClass.UP_BULL)
        self.assertEqual(series.n_plus, (0, 1))
        self.assertEqual(series.S, (None, None))

    def test_merge_and_hit_sizes(self) -> None:
        first, second = EventStudyAccumulator(window=2), EventStudyAccumulator(window=2)
        second.add(make_event(self.prices, stock_id="600001", volume=300))
        first.add(make_event(self.prices, stock_id="600000"))
        merged = second.merge(first)
        self.assertEqual(merged.hit_log_sizes(EventClass.UP_BULL), [math.log(100), math.log(300)])

    def test_exclusion_report_lists_every_class(self) -> None:
        velocity, study = VelocityAccumulator(), EventStudyAccumulator(window=2)
        opening = make_event([(parse_clock("09:25:00"), 1100)], window=HitWindow.OPEN)
        velocity.add(opening, velocity_thresholds(1000, UP, 1100), DurationClock())
        study.add(opening)
        report = exclusion_report(velocity, study)
        self.assertEqual(set(report["velocity"]), {c.value for c in EventClass})
        self.assertEqual(report["velocity"]["up_bull"]["opening_hit"], 1)
        self.assertEqual(report["event_study"]["up_bull"]["opening_hit"], 1)
        self.assertEqual(report["velocity_events"]["up_bull"], 0)


class ExtractEventsTest(unittest.TestCase):
    def test_event_ends_at_the_hit_trade(self) -> None:
        quotes = LobSnapshot((0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0))
        ticks = [
            TickRecord("600000", parse_clock(t), price, 100, quotes)
            for t, price in (("10:00:00", 1000), ("10:01:00", 1050), ("10:02:00", 1100), ("10:03:00", 1090))
        ]
        session = build_session("600000", DAY, StockDayMeta(1000, 10), ticks)
        record = segment_hits(session, compute_limit_prices(1000))

        events = extract_events(session, record, Regime.BEAR, {UP: 1100, DOWN: 900})

        self.assertEqual(len(events), 1)
        event = events[0]
        self.assertIs(event.event_class, EventClass.UP_BEAR)
        self.assertIs(event.hit_window, HitWindow.AM)
        self.assertEqual(len(event.trades), 3)
        self.assertEqual(event.hit_trade.price, 1100)
        self.assertEqual(event.key, ("600000", DAY, "up"))


if __name__ == "__main__":
    unittest.main()
