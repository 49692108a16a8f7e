"""Command-line front end.

Usage:
    python3 -m limithits validate --config run.conf
    python3 -m limithits hits --config run.conf --threads 4
    python3 -m limithits summary --config run.conf --set bull_windows=2007-01-04:2007-10-16
    python3 -m limithits intraday --config run.conf
    python3 -m limithits fit --config run.conf --target duration [--bin-width 60]
    python3 -m limithits prehit --config run.conf
    python3 -m limithits synth scenario.json --output corpus/

Exit status: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from limithits import __version__, reports
from limithits.aggregation import (
    RegimeCalendar,
    all_scopes,
    build_portfolios,
    per_stock_stats,
    summarize_hit_stats,
    tabulate_all_scopes,
)
from limithits.config import ConfigError, RunConfig, load_run_config, parse_overrides
from limithits.distfit import DomainError, NumericalError, estimate_pdf, fit_series
from limithits.limit_engine import HIT_CSV_COLUMNS, HitDirection, hit_row
from limithits.market_data import TickFormatError
from limithits.pipeline import FileResult, run_corpus
from limithits.prehit import EventClass, exclusion_report
from limithits.synthgen import ScenarioError, ScenarioSpec, generate


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

HIT_SIZE_BIN_WIDTH = 0.25
FIT_TARGETS = ("hit_prob", "daily_hits", "duration", "span", "per_stock_means")


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def _positive_int(value: str) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("must be an integer")
    if parsed < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return parsed


def _positive_float(value: str) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("must be a number")
    if not parsed > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return parsed


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=VALUE config file.")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key (repeatable).")
    common.add_argument("--ticks", action="append", default=[],
                        help="Tick CSV file or directory (repeatable; replaces tick_paths).")
    common.add_argument("--sessions", action="append", default=[],
                        help="Session metadata CSV (repeatable; replaces session_paths).")
    common.add_argument("--output", help="Output directory (replaces output_dir).")
    common.add_argument("--threads", type=_positive_int, help="Worker processes (replaces threads).")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")

    parser = ArgumentParser(
        prog="limithits",
        description="Price-limit hit analytics for daily-limit equity tick data.",
    )
    parser.add_argument("--version", action="version", version=f"limithits {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    commands.add_parser("validate", parents=[common], help="Parse the corpus and report format problems.")
    commands.add_parser("hits", parents=[common], help="Per stock-day limit-hit records (hits.csv).")
    commands.add_parser("summary", parents=[common], help="Counters, summary statistics and per-stock rows.")
    commands.add_parser("intraday", parents=[common], help="First-hit counts per intraday bin.")
    fit = commands.add_parser("fit", parents=[common], help="Left-truncated normal fits of a hit measure.")
    fit.add_argument("--target", choices=FIT_TARGETS, required=True)
    fit.add_argument("--bin-width", type=_positive_float,
                     help="Histogram bin width for every series of the target.")
    commands.add_parser("prehit", parents=[common], help="Velocity profile and event-study series.")

    synth = commands.add_parser("synth", help="Generate a synthetic corpus with its manifest.")
    synth.add_argument("scenario", help="Scenario JSON file.")
    synth.add_argument("--output", required=True, help="Directory for the corpus.")
    synth.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    overrides = parse_overrides(args.overrides)
    if args.ticks:
        overrides["tick_paths"] = ",".join(args.ticks)
    if args.sessions:
        overrides["session_paths"] = ",".join(args.sessions)
    if args.output:
        overrides["output_dir"] = args.output
    if args.threads:
        overrides["threads"] = str(args.threads)
    return load_run_config(Path(args.config) if args.config else None, overrides)


def _output(config: RunConfig, name: str) -> Path:
    return Path(config.output_dir) / name


def cmd_validate(config: RunConfig, args: argparse.Namespace) -> int:
    result = run_corpus(config)
    report = result.report
    settings = {k: v for k, v in config.settings().items() if k not in ("threads", "output_dir")}
    reports.write_json(_output(config, "validation.json"), {
        "settings": settings,
        "parse": report.to_dict(),
        "analysed_sessions": sum(result.universe.trading_days(s) for s in result.universe.stocks()),
        "limit_hit_days": len(result.records),
    }, config)
    print(f"Settings (config {config.config_hash}):")
    for key, value in settings.items():
        print(f"  {key}={value}")
    print(f"{report.files} files, {report.rows_valid}/{report.rows_total} valid rows, "
          f"{report.sessions} sessions ({report.excluded_sessions} excluded, "
          f"{len(report.skipped_sessions)} skipped), {len(report.errors)} record errors")
    for error in report.errors:
        print(f"  {error}")
    return EXIT_OK


def cmd_hits(config: RunConfig, args: argparse.Namespace) -> int:
    result = run_corpus(config)
    reports.write_csv(_output(config, "hits.csv"), HIT_CSV_COLUMNS,
                      (hit_row(r) for r in result.records), config)
    print(f"{len(result.records)} limit-hitting stock-days")
    return EXIT_OK


def cmd_summary(config: RunConfig, args: argparse.Namespace) -> int:
    result = run_corpus(config, aggregate=True)
    calendar = RegimeCalendar.from_config(config)
    portfolios = build_portfolios(result.records, config.portfolio_count)
    counters = tabulate_all_scopes(result.records, calendar, portfolios, result.universe,
                                   config.portfolio_count, partials=result.counters)
    columns, rows = reports.hit_count_rows(counters)
    reports.write_csv(_output(config, "hit_counts.csv"), columns, rows, config)
    summaries = summarize_hit_stats(result.records, calendar, portfolios, all_scopes(config.portfolio_count))
    reports.write_csv(_output(config, "hit_stats.csv"), reports.HIT_STATS_COLUMNS,
                      reports.hit_stats_rows(summaries), config)
    reports.write_csv(_output(config, "per_stock.csv"), reports.PER_STOCK_COLUMNS,
                      reports.per_stock_rows(per_stock_stats(result.records, result.universe)), config)
    whole = counters[all_scopes(config.portfolio_count)[0]]
    print(f"N+ = {whole.up.N}, N- = {whole.down.N} over {len(whole.stocks)} stocks")
    return EXIT_OK


def cmd_intraday(config: RunConfig, args: argparse.Namespace) -> int:
    pattern = run_corpus(config, aggregate=True).intraday
    reports.write_csv(_output(config, "intraday.csv"), reports.INTRADAY_COLUMNS,
                      reports.intraday_rows(pattern), config)
    print(f"{len(pattern.bin_starts)} bins of {config.bin_minutes} minutes")
    return EXIT_OK


def fit_inputs(target: str, result: FileResult) -> List[Tuple[str, List[float], float]]:
    """(series name, values, default bin width) for a fit target."""
    up, down = HitDirection.UP, HitDirection.DOWN
    records = result.records
    if target == "hit_prob":
        stats = per_stock_stats(records, result.universe)
        return [
            ("n", [s.n for s in stats], 0.005),
            ("n_up", [s.n_up for s in stats], 0.005),
            ("n_down", [s.n_down for s in stats], 0.005),
        ]
    if target == "daily_hits":
        return [(f"M_{d.value}", [r.hit_count(d) for r in records if r.has(d)], 1.0) for d in (up, down)]
    if target == "duration":
        return [
            (f"dt_{d.value}", [s.duration for r in records for s in r.segments(d)], 60.0)
            for d in (up, down)
        ]
    if target == "span":
        return [(f"span_{d.value}", [r.span(d) for r in records if r.has(d)], 60.0) for d in (up, down)]
    if target == "per_stock_means":
        stats = [s for s in per_stock_stats(records, result.universe) if s.K]
        series = []
        for quantity, width in (("M", 0.5), ("dt", 60.0), ("span", 60.0)):
            for d in (up, down):
                values = [s.mean(quantity, d) for s in stats]
                series.append((f"{quantity}_{d.value}", [v for v in values if v is not None], width))
        return series
    raise ConfigError(f"Unknown fit target {target!r}")


def cmd_fit(config: RunConfig, args: argparse.Namespace) -> int:
    result = run_corpus(config)
    target = args.target
    fitted = []
    failed = False
    for name, values, width in fit_inputs(target, result):
        width = args.bin_width or width
        series = fit_series(name, values, width)
        failed = failed or series.numerical_failure
        entry = series.to_dict()
        entry["bin_width"] = width
        fitted.append(entry)
        reports.write_csv(_output(config, f"fit_{target}_{name}_hist.csv"), reports.HISTOGRAM_COLUMNS,
                          reports.histogram_rows(series.histogram), config)
        for fit in series.fits:
            print(f"{name:>8} {fit.method.value}: mu={fit.mu:.6g} sigma={fit.sigma:.6g} (n={series.sample_size})")
    reports.write_json(_output(config, f"fit_{target}.json"), {"target": target, "series": fitted}, config)
    if failed:
        logger.error("Numerical failure while fitting %s; see fit_%s.json", target, target)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_prehit(config: RunConfig, args: argparse.Namespace) -> int:
    result = run_corpus(config, prehit=True)
    velocity, study = result.velocity, result.study
    for event_class in EventClass:
        label = event_class.value
        profile = velocity.profile(event_class)
        if profile is not None:
            reports.write_csv(_output(config, f"velocity_{label}.csv"), reports.VELOCITY_COLUMNS,
                              reports.velocity_rows(profile), config)
        series = study.series(event_class)
        if series is not None:
            reports.write_csv(_output(config, f"event_study_{label}.csv"), reports.EVENT_STUDY_COLUMNS,
                              reports.event_study_rows(series), config)
            sizes = study.hit_log_sizes(event_class)
            try:
                histogram = estimate_pdf(sizes, HIT_SIZE_BIN_WIDTH)
            except DomainError as e:
                logger.warning("No hit-size histogram for %s: %s", label, e)
                histogram = None
            reports.write_csv(_output(config, f"hit_size_{label}_hist.csv"), reports.HISTOGRAM_COLUMNS,
                              reports.histogram_rows(histogram), config)
        print(f"{label:>8}: velocity events {velocity.events[event_class]}, "
              f"event-study events {series.events if series else 0}")
    reports.write_json(_output(config, "prehit_exclusions.json"), exclusion_report(velocity, study), config)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = ScenarioSpec.load(Path(args.scenario))
    corpus = generate(spec, Path(args.output))
    print(f"Wrote {len(corpus.tick_files)} tick files, {corpus.session_file}, "
          f"{corpus.manifest_file} and {corpus.config_file}")
    print(f"Analyse with: python3 -m limithits summary --config {corpus.config_file}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "validate": cmd_validate,
    "hits": cmd_hits,
    "summary": cmd_summary,
    "intraday": cmd_intraday,
    "fit": cmd_fit,
    "prehit": cmd_prehit,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        config = load_config(args)
        logger.debug("Config %s: %s", config.config_hash, config.settings())
        return COMMANDS[args.command](config, args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_USAGE
    except (TickFormatError, ScenarioError) as e:
        logger.error("Data error: %s", e)
        return EXIT_DATA
    except NumericalError as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
