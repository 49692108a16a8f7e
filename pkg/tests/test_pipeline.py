import shutil
import sys
import tempfile
import unittest
from pathlib import Path


REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

from limithits import reports
from limithits.aggregation import RegimeCalendar, intraday_pattern, period_scopes, tabulate_counters
from limithits.config import load_run_config
from limithits.limit_engine import hit_row
from limithits.market_data import TickFormatError
from limithits.pipeline import expand_tick_paths, load_metadata, run_corpus
from limithits.prehit import EventClass, exclusion_report
from limithits.synthgen import ScenarioSpec, generate


SCENARIO = {
    "seed": 5,
    "dates": {"start": "2008-06-02", "count": 10},
    "stock_count": 5,
    "levels": 5,
    "cadence_seconds": 60,
    "random_hit_rate": 0.4,
    "bull_windows": "2008-06-02:2008-06-06",
    "event_window": 10,
}


class RunCorpusTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.TemporaryDirectory()
        cls.corpus = generate(ScenarioSpec.from_dict(SCENARIO), Path(cls.tmp.name))

    @classmethod
    def tearDownClass(cls) -> None:
        cls.tmp.cleanup()

    def config(self, **overrides):
        return load_run_config(self.corpus.config_file, {k: str(v) for k, v in overrides.items()}, {})

    def test_worker_count_does_not_change_results(self) -> None:
        single = run_corpus(self.config(threads=1), prehit=True)
        parallel = run_corpus(self.config(threads=4), prehit=True)

        self.assertEqual([hit_row(r) for r in single.records], [hit_row(r) for r in parallel.records])
        self.assertEqual(single.universe.dates, parallel.universe.dates)
        self.assertEqual(single.report.to_dict(), parallel.report.to_dict())
        self.assertEqual(exclusion_report(single.velocity, single.study),
                         exclusion_report(parallel.velocity, parallel.study))
        for event_class in EventClass:
            self.assertEqual(single.velocity.profile(event_class), parallel.velocity.profile(event_class))
            self.assertEqual(single.study.series(event_class), parallel.study.series(event_class))

    def test_records_are_sorted(self) -> None:
        records = run_corpus(self.config()).records
        keys = [(r.stock_id, r.date) for r in records]
        self.assertEqual(keys, sorted(keys))
        self.assertEqual(len(records), len(self.corpus.manifest["hits"]))

    def test_prehit_is_skipped_unless_asked(self) -> None:
        result = run_corpus(self.config())
        self.assertEqual(sum(result.velocity.events.values()), 0)
        self.assertEqual(result.study.contributions, {})

    def test_merged_partials_match_whole_corpus_tabulation(self) -> None:
        config = self.config(threads=3)
        result = run_corpus(config, aggregate=True)
        calendar = RegimeCalendar.from_config(config)

        self.assertEqual(set(result.counters), set(period_scopes()))
        for scope in period_scopes():
            self.assertEqual(result.counters[scope],
                             tabulate_counters(result.records, calendar, {}, scope, result.universe))
        whole = intraday_pattern(result.records, calendar, config.bin_minutes, config.windows)
        self.assertEqual(reports.intraday_rows(result.intraday), reports.intraday_rows(whole))

    def test_partials_do_not_depend_on_worker_count(self) -> None:
        single = run_corpus(self.config(threads=1), aggregate=True)
        parallel = run_corpus(self.config(threads=4), aggregate=True)
        self.assertEqual(single.counters, parallel.counters)
        self.assertEqual(reports.intraday_rows(single.intraday), reports.intraday_rows(parallel.intraday))

    def test_partials_are_skipped_unless_asked(self) -> None:
        result = run_corpus(self.config())
        self.assertEqual(result.counters, {})
        self.assertIsNone(result.intraday)

    def test_stock_day_in_two_files_is_fatal(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            first = self.corpus.tick_files[0]
            copy = shutil.copy(first, Path(tmp) / "copy.csv")
            config = self.config(tick_paths=f"{first},{copy}")
            with self.assertRaises(TickFormatError):
                run_corpus(config)

    def test_no_tick_files(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(TickFormatError):
                run_corpus(self.config(tick_paths=tmp))


class LoadingTest(unittest.TestCase):
    def test_directories_expand_in_name_order(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("b.csv", "a.csv", "notes.txt"):
                (Path(tmp) / name).write_text("")
            files = expand_tick_paths([tmp, "/data/extra.csv"])
        self.assertEqual([f.name for f in files], ["a.csv", "b.csv", "extra.csv"])

    def test_metadata_listed_twice_is_fatal(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            corpus = generate(ScenarioSpec.from_dict(dict(SCENARIO, stock_count=1)), Path(tmp))
            path = str(corpus.session_file)
            self.assertEqual(len(load_metadata([path])), 10)
            with self.assertRaises(TickFormatError):
                load_metadata([path, path])
            with self.assertRaises(TickFormatError):
                load_metadata([])


if __name__ == "__main__":
    unittest.main()
