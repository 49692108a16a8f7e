#!/usr/bin/env python3
"""Oracle check - generates a synthetic corpus and compares every report with its manifest.

Runs the hits, summary, intraday, prehit and validate commands on the
generated corpus twice (once single-threaded, once with --threads N), checks
the two runs are byte-identical, then compares each report field with the
ground truth the generator derived from its plans.

Usage:
    python3 tools/oracle_check.py
    python3 tools/oracle_check.py --stocks 10 --days 40 --rate 0.2 --threads 8 --keep /tmp/oracle
"""
import argparse
import json
import math
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

# Add limithits to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from limithits import cli, reports
from limithits.synthgen import ScenarioSpec, generate


RELATIVE_TOLERANCE = 1e-9
REPORT_FILES = ("hits.csv", "hit_counts.csv", "hit_stats.csv", "per_stock.csv", "intraday.csv",
                "prehit_exclusions.json", "validation.json")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Compare analysis output with a synthetic corpus manifest.")
    parser.add_argument("--stocks", type=int, default=50)
    parser.add_argument("--days", type=int, default=250)
    parser.add_argument("--rate", type=float, default=0.05, help="Random planted-hit rate per stock-day.")
    parser.add_argument("--seed", type=int, default=20070104)
    parser.add_argument("--cadence", type=int, default=5, help="Seconds between records.")
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--keep", help="Write the corpus here instead of a temporary directory.")
    return parser.parse_args(argv)


def scenario(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "dates": {"start": "2007-01-04", "count": args.days},
        "stock_count": args.stocks,
        "cadence_seconds": args.cadence,
        "random_hit_rate": args.rate,
        "halt_rate": 0.01,
    }


def cells_match(expected: str, actual: str) -> bool:
    if expected == actual:
        return True
    try:
        a, b = float(expected), float(actual)
    except ValueError:
        return False
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.isclose(a, b, rel_tol=RELATIVE_TOLERANCE, abs_tol=1e-12)


def compare_rows(expected: List[Dict[str, str]], actual: List[Dict[str, str]]) -> Optional[str]:
    """First difference between two row lists, or None."""
    if len(expected) != len(actual):
        return f"{len(actual)} rows, expected {len(expected)}"
    for i, (want, got) in enumerate(zip(expected, actual)):
        for column, value in want.items():
            if not cells_match(value, got.get(column, "")):
                return f"row {i + 1} column {column}: got {got.get(column)!r}, expected {value!r}"
    return None


def partition_problems(hit_counts: List[Dict[str, str]], intraday: List[Dict[str, str]]) -> List[str]:
    """Counter identities that must hold in any emitted hit-count / intraday pair."""
    problems = []
    rows = {row["measure"]: row for row in hit_counts}
    portfolio_labels = [c for c in hit_counts[0] if c.startswith("whole_p")]
    for sign in "+-":
        whole = int(rows[f"N{sign}"]["whole_all"])
        by_portfolio = sum(int(rows[f"N{sign}"][label]) for label in portfolio_labels)
        by_regime = int(rows[f"N{sign}"]["bull_all"]) + int(rows[f"N{sign}"]["bear_all"])
        by_window = sum(int(rows[f"{w}{sign}"]["whole_all"]) for w in ("N_open", "N_am", "N_pm"))
        for label, total in (("portfolios", by_portfolio), ("regimes", by_regime), ("windows", by_window)):
            if total != whole:
                problems.append(f"N{sign} over {label} sums to {total}, expected {whole}")
    for row in intraday:
        for d in ("u", "d"):
            if int(row[f"C_{d}"]) != int(row[f"C_{d}_bull"]) + int(row[f"C_{d}_bear"]):
                problems.append(f"intraday bin {row['bin_start']}: C_{d} != bull + bear")
    return problems


def run_commands(config_file: Path, output: Path, threads: int) -> List[str]:
    failures = []
    for command in ("validate", "hits", "summary", "intraday", "prehit"):
        status = cli.main([command, "--config", str(config_file), "--output", str(output),
                           "--threads", str(threads)])
        if status != cli.EXIT_OK:
            failures.append(f"{command} exited {status}")
    return failures


def check(name: str, problem: Optional[str], results: List[Tuple[str, bool, str]]) -> None:
    results.append((name, problem is None, problem or "matches"))


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    cli.configure_logging(False)
    with tempfile.TemporaryDirectory() as scratch:
        root = Path(args.keep) if args.keep else Path(scratch)
        started = time.time()
        corpus = generate(ScenarioSpec.from_dict(scenario(args)), root / "corpus")
        manifest = corpus.manifest
        generated = time.time()

        single, parallel = root / "reports_1", root / f"reports_{args.threads}"
        results: List[Tuple[str, bool, str]] = []
        failures = run_commands(corpus.config_file, single, 1)
        failures += run_commands(corpus.config_file, parallel, args.threads)
        analysed = time.time()
        check("commands", "; ".join(failures) or None, results)

        different = [
            name for name in REPORT_FILES + tuple(p.name for p in single.glob("*_*.csv"))
            if (single / name).read_bytes() != (parallel / name).read_bytes()
        ]
        check(f"threads 1 vs {args.threads}", ", ".join(sorted(set(different))) or None, results)

        check("hits.csv", compare_rows(manifest["hits"], reports.read_csv_report(single / "hits.csv")), results)
        hit_counts = reports.read_csv_report(single / "hit_counts.csv")
        check("hit_counts.csv", compare_rows(manifest["hit_counts"]["rows"], hit_counts), results)
        for name in ("hit_stats", "per_stock", "intraday"):
            actual = reports.read_csv_report(single / f"{name}.csv")
            check(f"{name}.csv", compare_rows(manifest[name], actual), results)
        intraday = reports.read_csv_report(single / "intraday.csv")
        check("partition identities", "; ".join(partition_problems(hit_counts, intraday)) or None, results)

        for kind in ("velocity", "event_study"):
            for label, rows in manifest[kind].items():
                path = single / f"{kind}_{label}.csv"
                problem = compare_rows(rows, reports.read_csv_report(path)) if path.exists() else "missing"
                check(path.name, problem, results)

        exclusions = json.loads((single / "prehit_exclusions.json").read_text())
        for key in ("tool", "version", "config_hash"):
            exclusions.pop(key)
        check("prehit_exclusions.json",
              None if exclusions == manifest["prehit_exclusions"] else "exclusion counts differ", results)

        validation = json.loads((single / "validation.json").read_text())
        parse = validation["parse"]
        expected = manifest["sessions"]
        counts = (parse["sessions"], parse["excluded_sessions"], parse["rows_valid"], len(parse["errors"]))
        want = (expected["total"], expected["excluded"], expected["rows"], 0)
        check("validation.json", None if counts == want else f"got {counts}, expected {want}", results)

    print("=" * 70)
    print(f"ORACLE CHECK - {args.stocks} stocks x {args.days} days, seed {args.seed}")
    print(f"{len(manifest['hits'])} planted hit days; generated in {generated - started:.1f}s, "
          f"analysed twice in {analysed - generated:.1f}s")
    print("=" * 70)
    for name, ok, detail in results:
        emoji = "✅" if ok else "🛑"
        print(f"{emoji} {name}: {detail}")
    all_ok = all(ok for _, ok, _ in results)
    print("=" * 70)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
