"""Configuration management - loads from a KEY=VALUE file, --set overrides and environment variables."""
import hashlib
import os
from dataclasses import dataclass
from datetime import date
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple


ENV_PREFIX = "LIMITHITS_"

# Bull windows of the Shanghai composite; every other sample date is bear.
DEFAULT_BULL_WINDOWS = (
    (date(2000, 1, 4), date(2001, 6, 13)),
    (date(2005, 6, 4), date(2007, 10, 16)),
    (date(2008, 10, 28), date(2009, 8, 4)),
)
DEFAULT_SAMPLE_START = date(2000, 1, 4)
DEFAULT_SAMPLE_END = date(2011, 12, 30)

DURATION_CLOCKS = ("wall", "trading")

# Keys that never change report contents; left out of the config hash.
_PROVENANCE_EXCLUDED = ("tick_paths", "session_paths", "output_dir", "threads")


class ConfigError(ValueError):
    """Raised when configuration values are missing or malformed."""


def _load_config_file(config_path: Optional[Path]) -> dict:
    """Load settings from a KEY=VALUE text file.

    Args:
        config_path: Path to the config file (None means no file)

    Returns:
        dict of lower-cased keys to raw string values

    Raises:
        ConfigError: If the file is named but cannot be read
    """
    settings = {}

    if config_path is None:
        return settings

    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")

    try:
        with open(config_path, "r") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.strip()
                # Skip empty lines and comments
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{config_path}:{line_number}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                settings[key.strip().lower()] = _strip_quotes(value.strip())
    except OSError as e:
        raise ConfigError(f"Could not read config file {config_path}: {e}") from e

    return settings


def _strip_quotes(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
        return value[1:-1]
    return value


def parse_overrides(pairs: Optional[Iterable[str]]) -> dict:
    """Parse repeated --set key=value arguments.

    Args:
        pairs: Raw "key=value" strings

    Returns:
        dict of lower-cased keys to values

    Raises:
        ConfigError: If a pair has no "="
    """
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip().lower()] = _strip_quotes(value.strip())
    return overrides


def _get_setting(key: str, file_vars: Mapping[str, str], overrides: Mapping[str, str],
                 environ: Mapping[str, str]) -> Optional[str]:
    """Get a setting from --set overrides, the config file, then the environment."""
    if key in overrides:
        return overrides[key]
    if key in file_vars:
        return file_vars[key]
    return environ.get(ENV_PREFIX + key.upper())


def parse_clock(text: str) -> int:
    """Parse HH:MM:SS into seconds since midnight."""
    parts = text.strip().split(":")
    if len(parts) != 3 or not all(p.isdigit() and len(p) == 2 for p in parts):
        raise ConfigError(f"Expected HH:MM:SS, got {text!r}")
    hours, minutes, seconds = (int(p) for p in parts)
    if hours > 23 or minutes > 59 or seconds > 59:
        raise ConfigError(f"Clock time out of range: {text!r}")
    return hours * 3600 + minutes * 60 + seconds


def format_clock(seconds: int) -> str:
    """Format seconds since midnight as HH:MM:SS."""
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


def parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError as e:
        raise ConfigError(f"Expected YYYY-MM-DD, got {text!r}") from e


def parse_bull_windows(text: str) -> Tuple[Tuple[date, date], ...]:
    """Parse "start:end,start:end" into date pairs."""
    windows = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"bull_windows entries must look like start:end, got {chunk!r}")
        start, end = chunk.split(":", 1)
        windows.append((parse_date(start), parse_date(end)))
    return tuple(windows)


def format_bull_windows(windows: Iterable[Tuple[date, date]]) -> str:
    return ",".join(f"{start.isoformat()}:{end.isoformat()}" for start, end in windows)


def fraction_to_bps(text: str, key: str) -> int:
    """Convert a decimal fraction such as "0.10" to integer basis points."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation as e:
        raise ConfigError(f"{key} must be a decimal fraction, got {text!r}") from e
    bps = value * 10000
    if bps != bps.to_integral_value():
        raise ConfigError(f"{key} must be a whole number of basis points, got {text!r}")
    return int(bps)


def _positive_int(text: str, key: str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from e
    if value < 1:
        raise ConfigError(f"{key} must be at least 1, got {value}")
    return value


def _path_list(text: str) -> Tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class SessionWindows:
    """Trading-day boundaries in seconds since midnight.

    open: hits at or before ``open_end`` (call auction plus cooling period)
    am:   (open_end, am_end]
    pm:   [pm_start, close]
    """

    auction_start: int = 9 * 3600 + 15 * 60
    open_end: int = 9 * 3600 + 30 * 60
    am_end: int = 11 * 3600 + 30 * 60
    pm_start: int = 13 * 3600
    close: int = 15 * 3600

    def validate(self) -> None:
        ordered = (self.auction_start, self.open_end, self.am_end, self.pm_start, self.close)
        if any(a >= b for a, b in zip(ordered, ordered[1:])):
            raise ConfigError(
                "Session windows must be ordered: auction_start < open_end < am_end < pm_start < close"
            )

    def in_session(self, timestamp: int) -> bool:
        return (self.auction_start <= timestamp <= self.am_end
                or self.pm_start <= timestamp <= self.close)


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of one run."""

    tick_paths: Tuple[str, ...] = ()
    session_paths: Tuple[str, ...] = ()
    output_dir: str = "reports"
    tick_size: int = 1
    limit_bps: int = 1000
    windows: SessionWindows = SessionWindows()
    bull_windows: Tuple[Tuple[date, date], ...] = DEFAULT_BULL_WINDOWS
    sample_start: date = DEFAULT_SAMPLE_START
    sample_end: date = DEFAULT_SAMPLE_END
    portfolio_count: int = 6
    bin_minutes: int = 5
    event_window: int = 100
    velocity_subintervals: int = 10
    velocity_start_bps: int = 500
    duration_clock: str = "wall"
    threads: int = 1

    def validate(self) -> "RunConfig":
        """Check cross-field invariants and return self.

        Raises:
            ConfigError: If any invariant fails
        """
        self.windows.validate()
        if not 0 < self.limit_bps < 10000:
            raise ConfigError(f"limit_fraction must lie in (0, 1), got {self.limit_bps / 10000}")
        if not 0 < self.velocity_start_bps < self.limit_bps:
            raise ConfigError("velocity_start_fraction must lie strictly between 0 and limit_fraction")
        if (self.limit_bps - self.velocity_start_bps) % self.velocity_subintervals:
            raise ConfigError(
                "velocity_subintervals must split (velocity_start_fraction, limit_fraction] "
                "into whole basis points"
            )
        for session_seconds in (self.windows.am_end - self.windows.open_end,
                                self.windows.close - self.windows.pm_start):
            if session_seconds % (self.bin_minutes * 60):
                raise ConfigError(f"bin_minutes={self.bin_minutes} does not divide the continuous sessions")
        if self.duration_clock not in DURATION_CLOCKS:
            raise ConfigError(f"duration_clock must be one of {', '.join(DURATION_CLOCKS)}")
        if self.sample_start > self.sample_end:
            raise ConfigError("sample_start is after sample_end")
        return self

    def settings(self) -> Dict[str, str]:
        """Canonical string form of every setting, in a stable key order."""
        return {
            "tick_paths": ",".join(self.tick_paths),
            "session_paths": ",".join(self.session_paths),
            "output_dir": self.output_dir,
            "tick_size": str(self.tick_size),
            "limit_fraction": str(Decimal(self.limit_bps) / 10000),
            "open_end": format_clock(self.windows.open_end),
            "am_end": format_clock(self.windows.am_end),
            "pm_start": format_clock(self.windows.pm_start),
            "close": format_clock(self.windows.close),
            "bull_windows": format_bull_windows(self.bull_windows),
            "sample_start": self.sample_start.isoformat(),
            "sample_end": self.sample_end.isoformat(),
            "portfolio_count": str(self.portfolio_count),
            "bin_minutes": str(self.bin_minutes),
            "event_window": str(self.event_window),
            "velocity_subintervals": str(self.velocity_subintervals),
            "velocity_start_fraction": str(Decimal(self.velocity_start_bps) / 10000),
            "duration_clock": self.duration_clock,
            "threads": str(self.threads),
        }

    @property
    def config_hash(self) -> str:
        """Short SHA-256 of the analytical settings."""
        lines = [
            f"{key}={value}" for key, value in sorted(self.settings().items())
            if key not in _PROVENANCE_EXCLUDED
        ]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def load_run_config(
    config_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, str]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Build a RunConfig from a config file, --set overrides and the environment.

    Args:
        config_path: Optional KEY=VALUE file
        overrides: Parsed --set values (highest precedence)
        environ: Environment mapping (defaults to os.environ)

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If a value is malformed or an unknown key is given
    """
    file_vars = _load_config_file(config_path)
    overrides = dict(overrides or {})
    environ = os.environ if environ is None else environ

    known = set(RunConfig().settings())
    unknown = sorted((set(file_vars) | set(overrides)) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

    def get(key: str) -> Optional[str]:
        return _get_setting(key, file_vars, overrides, environ)

    def get_paths(key: str) -> Tuple[str, ...]:
        # Relative paths written in the config file are relative to that file
        paths = _path_list(get(key))
        if key in file_vars and key not in overrides:
            base = Path(config_path).resolve().parent
            paths = tuple(p if Path(p).is_absolute() else str(base / p) for p in paths)
        return paths

    kwargs = {}
    windows = {}

    for key in ("tick_paths", "session_paths"):
        if get(key) is not None:
            kwargs[key] = get_paths(key)
    if get("output_dir"):
        kwargs["output_dir"] = get_paths("output_dir")[0]
    for key in ("tick_size", "portfolio_count", "bin_minutes", "event_window",
                "velocity_subintervals", "threads"):
        if get(key) is not None:
            kwargs[key] = _positive_int(get(key), key)
    if get("limit_fraction") is not None:
        kwargs["limit_bps"] = fraction_to_bps(get("limit_fraction"), "limit_fraction")
    if get("velocity_start_fraction") is not None:
        kwargs["velocity_start_bps"] = fraction_to_bps(
            get("velocity_start_fraction"), "velocity_start_fraction"
        )
    for key in ("open_end", "am_end", "pm_start", "close"):
        if get(key) is not None:
            windows[key] = parse_clock(get(key))
    if windows:
        kwargs["windows"] = SessionWindows(**windows)
    if get("bull_windows") is not None:
        kwargs["bull_windows"] = parse_bull_windows(get("bull_windows"))
    if get("sample_start") is not None:
        kwargs["sample_start"] = parse_date(get("sample_start"))
    if get("sample_end") is not None:
        kwargs["sample_end"] = parse_date(get("sample_end"))
    if get("duration_clock") is not None:
        kwargs["duration_clock"] = get("duration_clock").strip().lower()

    return RunConfig(**kwargs).validate()


def write_run_config(config: RunConfig, path: Path, keys: Optional[Iterable[str]] = None) -> Path:
    """Write settings back out in the KEY=VALUE format load_run_config reads."""
    settings = config.settings()
    selected = list(keys) if keys is not None else list(settings)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for key in selected:
            f.write(f"{key}={settings[key]}\n")
    return path
