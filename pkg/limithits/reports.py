"""Report tables and their CSV/JSON emission.

Row builders return plain string rows so the CLI's CSV files and the synthetic
corpus manifest share one formatting path. Every emitted file starts with a
provenance line naming the tool version and the config hash.
"""
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from limithits import __version__
from limithits.aggregation import (
    COUNTER_NAMES,
    HIT_STAT_MEASURES,
    HitCounters,
    HitStatsSummary,
    IntradayPattern,
    Regime,
    Scope,
    StockHitStats,
)
from limithits.config import RunConfig, format_clock
from limithits.distfit import Histogram
from limithits.limit_engine import HitDirection
from limithits.prehit import EventStudySeries, VelocityProfile


logger = logging.getLogger(__name__)

Row = Dict[str, str]

PER_STOCK_COLUMNS = (
    "stock_id", "T", "K", "K_u", "K_d", "n", "n_u", "n_d",
    "M_u", "M_d", "dt_u", "dt_d", "span_u", "span_d",
)
HIT_STATS_COLUMNS = ("scope", "direction", "measure", "max", "mean", "median")
INTRADAY_COLUMNS = ("bin_start", "C_u", "C_d", "C_u_bull", "C_u_bear", "C_d_bull", "C_d_bear")
VELOCITY_COLUMNS = ("m", "V_m")
EVENT_STUDY_COLUMNS = (
    "k", "s_plus", "s_minus", "R", "v", "S", "n_contributing", "n_plus", "n_minus", "n_spread",
)
HISTOGRAM_COLUMNS = ("bin_center", "density")

# Derived hit-count ratios: (label, numerator, denominator)
HIT_COUNT_RATIOS = (
    ("N_con/N", "N_con", "N"),
    ("N_rev/N", "N_rev", "N"),
    ("N_close/N", "N_close", "N"),
    ("N_close_con/N_close", "N_close_con", "N_close"),
    ("N_close_rev/N_close", "N_close_rev", "N_close"),
)


def format_value(value) -> str:
    """Canonical text of a report cell; absent values are empty."""
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def provenance_header(config: RunConfig) -> str:
    return f"# limithits {__version__} config={config.config_hash}"


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Row], config: RunConfig) -> Path:
    """Write rows under a provenance comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=list(columns), dtype=str)
    with open(path, "w", newline="") as f:
        f.write(provenance_header(config) + "\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def write_json(path: Path, payload: Mapping, config: RunConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"tool": "limithits", "version": __version__, "config_hash": config.config_hash}
    document.update(payload)
    path.write_text(json.dumps(document, indent=2) + "\n")
    logger.info("Wrote %s", path)
    return path


def read_csv_report(path: Path) -> List[Row]:
    """Read a CSV written by write_csv back into string rows."""
    with open(path, "r") as f:
        first = f.readline()
    skip = 1 if first.startswith("#") else 0
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skiprows=skip)
    return frame.to_dict(orient="records")


def _sign(direction: HitDirection) -> str:
    return "+" if direction is HitDirection.UP else "-"


def hit_count_rows(counters: Mapping[Scope, HitCounters]) -> Tuple[List[str], List[Row]]:
    """Measures down the side, one column per scope."""
    scopes = list(counters)
    columns = ["measure"] + [scope.label for scope in scopes]
    rows = []
    for direction in HitDirection:
        sign = _sign(direction)
        for name in COUNTER_NAMES:
            row = {"measure": f"{name}{sign}"}
            for scope in scopes:
                row[scope.label] = format_value(getattr(counters[scope].family(direction), name))
            rows.append(row)
        row = {"measure": f"mean_N{sign}"}
        for scope in scopes:
            row[scope.label] = format_value(counters[scope].mean_N(direction))
        rows.append(row)
        for label, numerator, denominator in HIT_COUNT_RATIOS:
            row = {"measure": label.replace("/", f"{sign}/") + sign}
            for scope in scopes:
                row[scope.label] = format_value(counters[scope].ratio(direction, numerator, denominator))
            rows.append(row)
    stocks = {"measure": "stocks"}
    for scope in scopes:
        stocks[scope.label] = format_value(len(counters[scope].stocks))
    rows.append(stocks)
    return columns, rows


def hit_stats_rows(summaries: Mapping[Scope, HitStatsSummary]) -> List[Row]:
    rows = []
    for scope, summary in summaries.items():
        for direction in HitDirection:
            for measure in HIT_STAT_MEASURES:
                stats = summary.get(measure, direction)
                rows.append({
                    "scope": scope.label,
                    "direction": direction.value,
                    "measure": measure,
                    "max": format_value(stats.max),
                    "mean": format_value(stats.mean),
                    "median": format_value(stats.median),
                })
    return rows


def per_stock_rows(stats: Iterable[StockHitStats]) -> List[Row]:
    return [
        {
            "stock_id": s.stock_id,
            "T": format_value(s.T),
            "K": format_value(s.K),
            "K_u": format_value(s.K_up),
            "K_d": format_value(s.K_down),
            "n": format_value(s.n),
            "n_u": format_value(s.n_up),
            "n_d": format_value(s.n_down),
            "M_u": format_value(s.M_up),
            "M_d": format_value(s.M_down),
            "dt_u": format_value(s.dt_up),
            "dt_d": format_value(s.dt_down),
            "span_u": format_value(s.span_up),
            "span_d": format_value(s.span_down),
        }
        for s in stats
    ]


def intraday_rows(pattern: IntradayPattern) -> List[Row]:
    up, down = HitDirection.UP, HitDirection.DOWN
    totals = {d: pattern.total(d) for d in HitDirection}
    rows = []
    for i, start in enumerate(pattern.bin_starts):
        rows.append({
            "bin_start": format_clock(start),
            "C_u": format_value(int(totals[up][i])),
            "C_d": format_value(int(totals[down][i])),
            "C_u_bull": format_value(int(pattern.counts[(up, Regime.BULL)][i])),
            "C_u_bear": format_value(int(pattern.counts[(up, Regime.BEAR)][i])),
            "C_d_bull": format_value(int(pattern.counts[(down, Regime.BULL)][i])),
            "C_d_bear": format_value(int(pattern.counts[(down, Regime.BEAR)][i])),
        })
    return rows


def velocity_rows(profile: VelocityProfile) -> List[Row]:
    return [{"m": str(m), "V_m": format_value(value)} for m, value in enumerate(profile.V)]


def event_study_rows(series: EventStudySeries) -> List[Row]:
    rows = []
    for i in range(series.window):
        rows.append({
            "k": str(i + 1),
            "s_plus": format_value(series.s_plus[i]),
            "s_minus": format_value(series.s_minus[i]),
            "R": format_value(series.R[i]),
            "v": format_value(series.v[i]),
            "S": format_value(series.S[i]),
            "n_contributing": str(series.events),
            "n_plus": str(series.n_plus[i]),
            "n_minus": str(series.n_minus[i]),
            "n_spread": str(series.n_spread[i]),
        })
    return rows


def histogram_rows(histogram: Optional[Histogram]) -> List[Row]:
    if histogram is None:
        return []
    return [
        {"bin_center": format_value(center), "density": format_value(density)}
        for center, density in histogram.rows()
    ]
