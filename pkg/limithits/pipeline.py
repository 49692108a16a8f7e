"""Per-file analysis worker and the ordered parallel driver around it.

Each tick file is handled by one worker process that runs its sessions
through segmentation (and, when asked, pre-hit extraction and the per-file
counter and intraday partials) and returns partial aggregates. Results are
merged in input-file order, so output does not depend on the number of
workers.
"""
import logging
import multiprocessing as mp
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from limithits.aggregation import (
    HitCounters,
    IntradayPattern,
    RegimeCalendar,
    SampleUniverse,
    Scope,
    intraday_pattern,
    period_scopes,
    tabulate_counters,
)
from limithits.config import RunConfig
from limithits.limit_engine import (
    DayHitRecord,
    DurationClock,
    SessionError,
    compute_limit_prices,
    segment_hits,
)
from limithits.market_data import (
    ParseReport,
    StockDayMeta,
    TickFormatError,
    load_session_metadata,
    parse_tick_file,
)
from limithits.prehit import EventStudyAccumulator, VelocityAccumulator, extract_events, velocity_thresholds


logger = logging.getLogger(__name__)


@dataclass
class FileResult:
    """Partial aggregates of one tick file; merge() combines them."""

    report: ParseReport = field(default_factory=ParseReport)
    records: List[DayHitRecord] = field(default_factory=list)
    universe: SampleUniverse = field(default_factory=SampleUniverse)
    velocity: VelocityAccumulator = field(default_factory=VelocityAccumulator)
    study: EventStudyAccumulator = field(default_factory=EventStudyAccumulator)
    counters: Dict[Scope, HitCounters] = field(default_factory=dict)
    intraday: Optional[IntradayPattern] = None
    analysed_sessions: Dict[Tuple[str, date], str] = field(default_factory=dict)

    def merge(self, other: "FileResult") -> "FileResult":
        for key, path in other.analysed_sessions.items():
            if key in self.analysed_sessions:
                raise TickFormatError(
                    f"{key[0]} {key[1].isoformat()} appears in both {self.analysed_sessions[key]} and {path}"
                )
            self.analysed_sessions[key] = path
        self.report.merge(other.report)
        self.records.extend(other.records)
        self.universe.merge(other.universe)
        self.velocity.merge(other.velocity)
        self.study.merge(other.study)
        for scope, counters in other.counters.items():
            self.counters.setdefault(scope, HitCounters()).merge(counters)
        if other.intraday is not None:
            self.intraday = other.intraday if self.intraday is None else self.intraday.merge(other.intraday)
        return self


def expand_tick_paths(paths: Iterable[str]) -> List[Path]:
    """Files as given; directories contribute their *.csv files in name order."""
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("*.csv")))
        else:
            files.append(path)
    return files


def load_metadata(paths: Sequence[str]) -> Dict[Tuple[str, date], StockDayMeta]:
    """Union of all session sidecar files; a stock-day listed twice is fatal."""
    if not paths:
        raise TickFormatError("No session metadata files configured (session_paths)")
    metadata = {}
    for path in paths:
        for key, meta in load_session_metadata(Path(path)).items():
            if key in metadata:
                raise TickFormatError(f"{path}: stock-day {key[0]} {key[1].isoformat()} listed twice")
            metadata[key] = meta
    return metadata


class FileAnalyzer:
    """Callable worker that turns one tick file into a FileResult."""

    def __init__(
        self,
        config: RunConfig,
        metadata: Dict[Tuple[str, date], StockDayMeta],
        calendar: Optional[RegimeCalendar] = None,
        prehit: bool = False,
        aggregate: bool = False,
    ):
        self.config = config
        self.metadata = metadata
        self.calendar = calendar or RegimeCalendar.from_config(config)
        self.prehit = prehit
        self.aggregate = aggregate
        self.clock = DurationClock(config.duration_clock, config.windows)

    def __call__(self, path: Path) -> FileResult:
        config = self.config
        result = FileResult(
            velocity=VelocityAccumulator(config.velocity_subintervals),
            study=EventStudyAccumulator(config.event_window),
        )
        logger.debug("Analysing %s", path)
        for session in parse_tick_file(path, self.metadata, report=result.report):
            key = (session.stock_id, session.date)
            result.analysed_sessions[key] = str(path)
            if session.excluded:
                continue
            limits = compute_limit_prices(session.prev_close, config.limit_bps, config.tick_size)
            try:
                record = segment_hits(session, limits, config.windows, self.clock)
            except SessionError as e:
                result.report.skip_session(f"{path}: {e}")
                continue
            result.universe.add(session.stock_id, session.date)
            if record is None:
                continue
            result.records.append(record)
            if self.prehit:
                self._add_events(result, session, record, limits)
        if self.aggregate:
            self._add_partials(result)
        return result

    def _add_events(self, result: FileResult, session, record: DayHitRecord, limits) -> None:
        config = self.config
        regime = self.calendar.regime_for(record.date)
        limit_prices = {d: limits.limit_for(d) for d in record.directions()}
        for event in extract_events(session, record, regime, limit_prices, config.windows):
            thresholds = velocity_thresholds(
                event.prev_close, event.direction, event.limit_price,
                config.velocity_start_bps, config.limit_bps, config.velocity_subintervals,
            )
            result.velocity.add(event, thresholds, self.clock)
            result.study.add(event)

    def _add_partials(self, result: FileResult) -> None:
        # portfolio scopes need every file's hits of a date, so they are tabulated after the merge
        for scope in period_scopes():
            result.counters[scope] = tabulate_counters(result.records, self.calendar, {}, scope, result.universe)
        result.intraday = intraday_pattern(result.records, self.calendar, self.config.bin_minutes,
                                           self.config.windows)


_worker: Optional[FileAnalyzer] = None


def _start_worker(analyzer: FileAnalyzer) -> None:
    global _worker
    _worker = analyzer


def _analyse(path: Path) -> FileResult:
    return _worker(path)


def run_corpus(config: RunConfig, prehit: bool = False, aggregate: bool = False) -> FileResult:
    """Analyse every configured tick file with up to ``config.threads`` worker processes.

    Args:
        config: Run configuration
        prehit: Also extract pre-hit events into the velocity and event-study accumulators
        aggregate: Also build per-file hit counters and intraday partials

    Raises:
        TickFormatError: For fatal file-level problems
        ConfigError: For hit dates outside the regime calendar
    """
    files = expand_tick_paths(config.tick_paths)
    if not files:
        raise TickFormatError("No tick files configured (tick_paths)")
    metadata = load_metadata(config.session_paths)
    analyzer = FileAnalyzer(config, metadata, prehit=prehit, aggregate=aggregate)

    workers = min(config.threads, len(files))
    logger.info("Analysing %d tick files with %d workers", len(files), workers)
    if workers == 1:
        partials = [analyzer(path) for path in files]
    else:
        with mp.Pool(workers, initializer=_start_worker, initargs=(analyzer,)) as pool:
            partials = pool.map(_analyse, files, chunksize=1)

    total = FileResult(
        velocity=VelocityAccumulator(config.velocity_subintervals),
        study=EventStudyAccumulator(config.event_window),
    )
    for partial in partials:
        total.merge(partial)
    total.records.sort(key=lambda r: (r.stock_id, r.date))
    logger.info(
        "%d sessions (%d excluded, %d skipped), %d limit-hitting days, %d record errors",
        total.report.sessions, total.report.excluded_sessions, len(total.report.skipped_sessions),
        len(total.records), len(total.report.errors),
    )
    return total
