import csv
import sys
import tempfile
import unittest
from datetime import date
from pathlib import Path
from typing import List


REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

from limithits.market_data import (
    LobSnapshot,
    ParseReport,
    StockDayMeta,
    TickFileFormat,
    TickFormatError,
    TickRecord,
    TradeDirection,
    build_session,
    classify_session_trades,
    classify_trade_direction,
    format_cents,
    load_session_metadata,
    parse_cents,
    parse_tick_file,
    parse_tick_row,
    tick_file_header,
    write_session_metadata,
    write_tick_file,
)


DAY = date(2007, 3, 1)


def book_fields(ask1: str, bid1: str, levels: int = 3) -> List[str]:
    ask, bid = parse_cents(ask1), parse_cents(bid1)
    fields = []
    for j in range(levels):
        fields += [format_cents(ask + j), "100"]
    for j in range(levels):
        fields += [format_cents(bid - j), "200"]
    return fields


def tick_row(time: str, price: str, volume: str, ask1: str, bid1: str,
             stock_id: str = "600000", day: str = "2007-03-01") -> List[str]:
    return [stock_id, day, time, price, volume] + book_fields(ask1, bid1)


def lob(ask: int, bid: int) -> LobSnapshot:
    return LobSnapshot((ask, ask + 1, ask + 2), (1, 1, 1), (bid, bid - 1, bid - 2), (1, 1, 1))


class PriceTextTest(unittest.TestCase):
    def test_cents(self) -> None:
        self.assertEqual(parse_cents("12.34"), 1234)
        self.assertEqual(parse_cents("0.05"), 5)
        self.assertEqual(format_cents(1005), "10.05")
        for text in ("12.3", "12", "-1.00", "01.00", "1.005"):
            with self.assertRaises(ValueError):
                parse_cents(text)


class ParseTickRowTest(unittest.TestCase):
    def test_valid_row(self) -> None:
        stock_id, day, tick = parse_tick_row(tick_row("10:00:03", "10.00", "500", "10.01", "10.00"),
                                             TickFileFormat(3))
        self.assertEqual((stock_id, day), ("600000", DAY))
        self.assertEqual(tick.timestamp, 36003)
        self.assertEqual(tick.trade_price, 1000)
        self.assertEqual(tick.lob.best_ask, 1001)
        self.assertEqual(tick.lob.best_bid, 1000)

    def test_quote_only_row(self) -> None:
        _, _, tick = parse_tick_row(tick_row("10:00:03", "0.00", "0", "10.01", "10.00"), TickFileFormat(3))
        self.assertFalse(tick.has_trade)

    def test_crossed_book_is_rejected(self) -> None:
        with self.assertRaisesRegex(ValueError, "crossed book"):
            parse_tick_row(tick_row("10:00:03", "10.00", "500", "9.99", "10.00"), TickFileFormat(3))

    def test_trade_price_without_volume_is_rejected(self) -> None:
        with self.assertRaises(ValueError):
            parse_tick_row(tick_row("10:00:03", "10.00", "0", "10.01", "10.00"), TickFileFormat(3))

    def test_absent_levels_parse_as_missing_quotes(self) -> None:
        row = ["600000", "2007-03-01", "10:00:03", "11.00", "500",
               "0.00", "0", "0.00", "0", "0.00", "0",
               "11.00", "900", "10.99", "100", "10.98", "100"]
        _, _, tick = parse_tick_row(row, TickFileFormat(3))
        self.assertIsNone(tick.lob.best_ask)
        self.assertEqual(tick.lob.best_bid, 1100)

    def test_header_inference(self) -> None:
        self.assertEqual(TickFileFormat.from_header(tick_file_header(5)).levels, 5)
        self.assertEqual(TickFileFormat.from_header(tick_file_header(3)).levels, 3)
        with self.assertRaises(TickFormatError):
            TickFileFormat.from_header(tick_file_header(4))
        with self.assertRaises(TickFormatError):
            TickFileFormat.from_header(list(tick_file_header(3))[::-1])


class ParseTickFileTest(unittest.TestCase):
    def write(self, path: Path, rows: List[List[str]]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(tick_file_header(3))
            writer.writerows(rows)

    def metadata(self) -> dict:
        return {
            ("600000", DAY): StockDayMeta(prev_close=1000, shares_outstanding=1000),
            ("600001", DAY): StockDayMeta(prev_close=500, shares_outstanding=10, is_ex_dividend_day=True),
        }

    def test_sessions_and_record_errors(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ticks.csv"
            self.write(path, [
                tick_row("09:31:00", "10.02", "100", "10.03", "10.02"),
                tick_row("09:30:00", "10.01", "100", "10.02", "10.01"),
                tick_row("09:32:00", "10.02", "100", "9.00", "10.02"),
                tick_row("09:30:00", "5.00", "100", "5.01", "5.00", stock_id="600001"),
            ])
            report = ParseReport()

            sessions = list(parse_tick_file(path, self.metadata(), report=report))

        self.assertEqual([s.stock_id for s in sessions], ["600000", "600001"])
        first = sessions[0]
        self.assertEqual([t.timestamp for t in first.ticks], [34200, 34260])
        self.assertEqual(first.capitalization, 1000 * 1000)
        self.assertEqual(first.close_price, 1002)
        self.assertTrue(sessions[1].excluded)
        self.assertEqual(report.rows_total, 4)
        self.assertEqual(report.rows_valid, 3)
        self.assertEqual(report.excluded_sessions, 1)
        self.assertEqual(len(report.errors), 1)
        self.assertEqual(report.errors[0].row, 4)
        self.assertIn("crossed book", report.errors[0].message)

    def test_canonical_file_writes_back_byte_identical(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / "ticks.csv"
            self.write(source, [
                tick_row("09:30:00", "10.01", "100", "10.02", "10.01"),
                tick_row("09:30:05", "0.00", "0", "10.03", "10.02"),
                tick_row("10:15:42", "10.99", "2500", "11.00", "10.99"),
                tick_row("09:30:00", "5.00", "100", "5.01", "5.00", stock_id="600001"),
                tick_row("14:59:59", "5.50", "300", "5.51", "5.50", stock_id="600001"),
            ])
            sessions = list(parse_tick_file(source, self.metadata()))
            copy = write_tick_file(Path(tmp) / "copy.csv", sessions, 3)

            self.assertEqual(copy.read_bytes(), source.read_bytes())

    def test_errors_are_reported_in_line_order(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ticks.csv"
            self.write(path, [
                tick_row("09:30:00", "10.01", "100", "10.02", "10.01"),
                tick_row("09:31:00", "10.01", "100", "10.02", "10.01")[:-1],
                tick_row("09:32:00", "10.02", "100", "9.00", "10.02"),
                tick_row("09:33:00", "10.02", "100", "10.03", "10.02")[:5],
            ])
            report = ParseReport()
            sessions = list(parse_tick_file(path, self.metadata(), report=report))

        self.assertEqual([len(s.ticks) for s in sessions], [1])
        self.assertEqual([e.row for e in report.errors], [3, 4, 5])
        self.assertIn("crossed book", report.errors[1].message)

    def test_non_contiguous_stock_day_is_fatal(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ticks.csv"
            self.write(path, [
                tick_row("09:30:00", "10.01", "100", "10.02", "10.01"),
                tick_row("09:30:00", "5.00", "100", "5.01", "5.00", stock_id="600001"),
                tick_row("09:31:00", "10.01", "100", "10.02", "10.01"),
            ])
            with self.assertRaises(TickFormatError):
                list(parse_tick_file(path, self.metadata()))

    def test_missing_metadata_is_a_record_error(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ticks.csv"
            self.write(path, [tick_row("09:30:00", "10.01", "100", "10.02", "10.01", stock_id="600002")])
            report = ParseReport()
            self.assertEqual(list(parse_tick_file(path, self.metadata(), report=report)), [])
            self.assertEqual(len(report.errors), 1)

    def test_empty_file_is_fatal(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ticks.csv"
            path.write_text("")
            with self.assertRaises(TickFormatError):
                list(parse_tick_file(path, {}))


class SessionMetadataTest(unittest.TestCase):
    def test_written_metadata_reads_back(self) -> None:
        rows = [
            ("600000", DAY, StockDayMeta(1000, 5000, next_day_open=1010)),
            ("000001", DAY, StockDayMeta(995, 7, is_ipo_day=True)),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_session_metadata(Path(tmp) / "sessions.csv", rows)
            metadata = load_session_metadata(path)
        self.assertEqual(metadata[("600000", DAY)].next_day_open, 1010)
        self.assertIsNone(metadata[("000001", DAY)].next_day_open)
        self.assertTrue(metadata[("000001", DAY)].is_ipo_day)

    def test_duplicate_stock_day_is_fatal(self) -> None:
        rows = [("600000", DAY, StockDayMeta(1000, 5000))] * 2
        with tempfile.TemporaryDirectory() as tmp:
            path = write_session_metadata(Path(tmp) / "sessions.csv", rows)
            with self.assertRaises(TickFormatError):
                load_session_metadata(path)


class TradeDirectionTest(unittest.TestCase):
    def tick(self, price: int) -> TickRecord:
        return TickRecord("600000", 36000, price, 100, lob(price + 1, price - 1))

    def test_quote_rule(self) -> None:
        self.assertIs(classify_trade_direction(self.tick(1001), lob(1001, 1000), 1000),
                      TradeDirection.BUYER_INITIATED)
        self.assertIs(classify_trade_direction(self.tick(1000), lob(1001, 1000), 1001),
                      TradeDirection.SELLER_INITIATED)

    def test_tick_test_inside_the_spread(self) -> None:
        wide = lob(1010, 990)
        self.assertIs(classify_trade_direction(self.tick(1001), wide, 1000), TradeDirection.BUYER_INITIATED)
        self.assertIs(classify_trade_direction(self.tick(999), wide, 1000), TradeDirection.SELLER_INITIATED)
        self.assertIs(classify_trade_direction(self.tick(1000), wide, 1000), TradeDirection.UNKNOWN)
        self.assertIs(classify_trade_direction(self.tick(1000), None, None), TradeDirection.UNKNOWN)

    def test_session_trades_carry_preceding_quotes(self) -> None:
        ticks = [
            TickRecord("600000", 34200, 1000, 100, lob(1001, 1000)),
            TickRecord("600000", 34205, 0, 0, lob(1002, 1001)),
            TickRecord("600000", 34210, 1002, 100, lob(1003, 1002)),
        ]
        session = build_session("600000", DAY, StockDayMeta(1000, 1), ticks)
        trades = classify_session_trades(session)
        self.assertEqual([t.index for t in trades], [0, 2])
        self.assertIs(trades[0].direction, TradeDirection.UNKNOWN)
        self.assertIsNone(trades[0].ask_before)
        self.assertIs(trades[1].direction, TradeDirection.BUYER_INITIATED)
        self.assertEqual((trades[1].ask_before, trades[1].bid_before), (1002, 1001))


if __name__ == "__main__":
    unittest.main()
