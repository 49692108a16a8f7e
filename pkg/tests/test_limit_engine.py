import sys
import unittest
from datetime import date
from pathlib import Path
from typing import List, Optional, Tuple


REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

from limithits.config import parse_clock
from limithits.limit_engine import (
    DurationClock,
    HitDirection,
    HitWindow,
    NextDayClass,
    SessionError,
    classify_window,
    compute_limit_prices,
    hit_row,
    segment_hits,
)
from limithits.market_data import LobSnapshot, StockDayMeta, TickRecord, build_session


DAY = date(2007, 3, 1)
QUOTES = LobSnapshot((0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0))


def session(trades: List[Tuple[str, int]], prev_close: int = 1000, next_day_open: Optional[int] = None):
    """Session from (HH:MM:SS, price) pairs; price 0 makes a quote-only record."""
    ticks = [
        TickRecord("600000", parse_clock(t), price, 100 if price else 0, QUOTES)
        for t, price in trades
    ]
    meta = StockDayMeta(prev_close=prev_close, shares_outstanding=1000, next_day_open=next_day_open)
    return build_session("600000", DAY, meta, ticks)


def analyse(trades, prev_close: int = 1000, next_day_open: Optional[int] = None, clock: str = "wall"):
    s = session(trades, prev_close, next_day_open)
    return segment_hits(s, compute_limit_prices(prev_close), clock=DurationClock(clock))


class LimitPricesTest(unittest.TestCase):
    def test_rounding_table(self) -> None:
        table = {
            1000: (1100, 900),
            777: (855, 699),
            995: (1095, 896),
            999999: (1099999, 899999),
            1: (1, 1),
        }
        for prev_close, (up, down) in table.items():
            limits = compute_limit_prices(prev_close)
            self.assertEqual((limits.up_limit, limits.down_limit), (up, down), prev_close)

    def test_degenerate_small_closes(self) -> None:
        self.assertTrue(compute_limit_prices(1).degenerate)
        self.assertTrue(compute_limit_prices(5).degenerate)
        self.assertFalse(compute_limit_prices(6).degenerate)
        self.assertFalse(compute_limit_prices(1000).degenerate)

    def test_other_limit_fraction(self) -> None:
        limits = compute_limit_prices(1000, limit_bps=500)
        self.assertEqual((limits.up_limit, limits.down_limit), (1050, 950))

    def test_direction_at(self) -> None:
        limits = compute_limit_prices(1000)
        self.assertIs(limits.direction_at(1100), HitDirection.UP)
        self.assertIs(limits.direction_at(900), HitDirection.DOWN)
        self.assertIsNone(limits.direction_at(1099))


class ClassifyWindowTest(unittest.TestCase):
    def test_boundaries(self) -> None:
        self.assertIs(classify_window(parse_clock("09:25:00")), HitWindow.OPEN)
        self.assertIs(classify_window(parse_clock("09:30:00")), HitWindow.OPEN)
        self.assertIs(classify_window(parse_clock("09:30:01")), HitWindow.AM)
        self.assertIs(classify_window(parse_clock("11:30:00")), HitWindow.AM)
        self.assertIs(classify_window(parse_clock("13:00:00")), HitWindow.PM)
        self.assertIs(classify_window(parse_clock("15:00:00")), HitWindow.PM)
        with self.assertRaises(SessionError):
            classify_window(parse_clock("12:00:00"))


class SegmentHitsTest(unittest.TestCase):
    def test_single_morning_segment(self) -> None:
        record = analyse([("09:30:00", 1000), ("10:00:00", 1100), ("10:05:00", 1099), ("15:00:00", 1050)])
        self.assertEqual(record.M_up, 1)
        self.assertEqual(record.M_down, 0)
        self.assertEqual(record.total_duration_up, 300)
        self.assertEqual(record.span_up, 300)
        self.assertIs(record.first_hit_window, HitWindow.AM)
        self.assertFalse(record.closed_at_limit)
        self.assertIsNone(record.close_direction)
        self.assertIs(record.next_day_class, NextDayClass.UNAVAILABLE)

    def test_no_hit_day(self) -> None:
        self.assertIsNone(analyse([("09:30:00", 1000), ("10:00:00", 1099), ("15:00:00", 901)]))

    def test_quote_only_records_carry_the_last_trade_price(self) -> None:
        record = analyse([("10:00:00", 1100), ("10:01:00", 0), ("10:02:00", 1090)])
        self.assertEqual(record.total_duration_up, 120)

    def test_several_segments_and_span(self) -> None:
        record = analyse([
            ("10:00:00", 1100), ("10:01:00", 1098),
            ("10:10:00", 1100), ("10:12:00", 1095),
            ("14:00:00", 1000),
        ])
        self.assertEqual(record.M_up, 2)
        self.assertEqual(record.total_duration_up, 180)
        self.assertEqual(record.span_up, 720)
        self.assertEqual([s.start_time for s in record.segments_up], [parse_clock("10:00:00"), parse_clock("10:10:00")])

    def test_closing_at_limit_and_next_day_classes(self) -> None:
        trades = [("13:30:00", 900), ("14:00:00", 900)]
        cases = {880: NextDayClass.CONTINUATION, 950: NextDayClass.REVERSAL,
                 900: NextDayClass.FLAT, None: NextDayClass.UNAVAILABLE}
        for next_open, expected in cases.items():
            record = analyse(trades, next_day_open=next_open)
            self.assertIs(record.next_day_class, expected, next_open)
        record = analyse(trades)
        self.assertIs(record.direction, HitDirection.DOWN)
        self.assertTrue(record.closed_at_limit)
        self.assertIs(record.close_direction, HitDirection.DOWN)
        self.assertEqual(record.total_duration_down, 5400)
        self.assertTrue(record.segments_down[0].ends_at_close)
        self.assertIs(record.first_hit_window, HitWindow.PM)

    def test_jump_between_limits(self) -> None:
        record = analyse([("10:00:00", 1100), ("10:30:00", 900), ("11:00:00", 1000)])
        self.assertIs(record.direction, HitDirection.UP)
        self.assertEqual(record.directions(), [HitDirection.UP, HitDirection.DOWN])
        self.assertEqual(record.total_duration_up, 1800)
        self.assertEqual(record.total_duration_down, 1800)
        self.assertEqual(record.first_hit_time(HitDirection.DOWN), parse_clock("10:30:00"))

    def test_opening_auction_hit(self) -> None:
        record = analyse([("09:25:00", 1100), ("09:30:00", 1100), ("09:35:00", 1080)])
        self.assertIs(record.first_hit_window, HitWindow.OPEN)
        self.assertEqual(record.total_duration_up, 600)

    def test_trading_clock_skips_the_lunch_break(self) -> None:
        trades = [("11:00:00", 1100), ("13:30:00", 1090)]
        self.assertEqual(analyse(trades).total_duration_up, 9000)
        self.assertEqual(analyse(trades, clock="trading").total_duration_up, 3600)

    def test_trade_beyond_limits_is_a_session_error(self) -> None:
        with self.assertRaises(SessionError):
            analyse([("10:00:00", 1101)])

    def test_record_in_lunch_break_is_a_session_error(self) -> None:
        with self.assertRaises(SessionError):
            analyse([("10:00:00", 1000), ("12:00:00", 1000)])

    def test_hit_row(self) -> None:
        row = hit_row(analyse([("10:00:00", 1100), ("10:05:00", 1099)]))
        self.assertEqual(row["M_up"], "1")
        self.assertEqual(row["dt_up_s"], "300")
        self.assertEqual(row["first_window"], "am")
        self.assertEqual(row["close_direction"], "")


if __name__ == "__main__":
    unittest.main()
