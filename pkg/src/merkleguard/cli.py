"""Command line entry point: run one scenario or sweep it over a seed range."""
from __future__ import annotations

import argparse
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .metrics import export_csv
from .scenario import ScenarioConfig, ScenarioError, parse_scenario, with_overrides
from .simulation import RunResult, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def bundled_scenarios() -> list[str]:
    folder = resources.files("merkleguard") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def locate_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("merkleguard") / "scenarios" / f"{name}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ScenarioError(f"no scenario file {name!r} (bundled: {', '.join(bundled_scenarios())})")


def parse_seed_range(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}")
    a, b = int(m.group(1)), int(m.group(2))
    if b < a:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return list(range(a, b + 1))


def on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def csv_name(config: ScenarioConfig, seed: int) -> str:
    return f"{config.name}_{seed}.csv"


def format_summary(result: RunResult) -> str:
    c = result.counters
    lines = [
        f"scenario {result.config.name}  seed {result.seed}  duration {result.config.duration:g} s  "
        f"defense {'on' if result.config.defense.enabled else 'off'}",
        f"  data sent {c['data_sent']}  delivered {c['data_delivered']}  dropped {c['data_dropped']}  "
        f"lost {c['data_lost']}  in flight {c['data_in_flight']}  "
        f"delivery ratio {result.delivery_ratio():.4f}",
        f"  mean load {result.metrics.mean_load_bps():.1f} bit/s  "
        f"mean delay {result.metrics.mean_delay():.6f} s",
    ]
    if result.insertions:
        t, src, dst, via = result.insertions[0]
        lines.append(f"  forged route adopted by {src} for {dst} via {via} at t={t:.3f}")
    if result.blacklists:
        for node, entries in sorted(result.blacklists.items()):
            for suspect, t in sorted(entries.items(), key=lambda kv: kv[1]):
                lines.append(f"  blacklisted by {node}: node {suspect} at t={t:.3f}")
    else:
        lines.append("  blacklisted nodes: none")
    for d in result.detections:
        lines.append(f"  verdict t={d.time:.3f} {d.outcome.value} suspect {d.suspect} ({d.reason})")
    counters = ", ".join(f"{k}={v}" for k, v in sorted(c.items()) if not k.startswith("data_"))
    lines.append(f"  counters: {counters}")
    return "\n".join(lines)


def format_table(results: Sequence[RunResult]) -> str:
    header = f"{'seed':>6} {'sent':>6} {'recv':>6} {'ratio':>7} {'load_bps':>9} {'delay_s':>9} {'blacklisted (time)'}"
    rows = [header]
    for r in results:
        bl = "; ".join(f"{s}@{t:.2f}" for entries in r.blacklists.values()
                       for s, t in sorted(entries.items(), key=lambda kv: kv[1])) or "-"
        rows.append(f"{r.seed:>6} {r.sent:>6} {r.delivered:>6} {r.delivery_ratio():>7.4f} "
                    f"{r.metrics.mean_load_bps():>9.1f} {r.metrics.mean_delay():>9.6f} {bl}")
    return "\n".join(rows)


def _run_one(config: ScenarioConfig, seed: int, out: Optional[Path]) -> RunResult:
    result = run_scenario(config, seed)
    if out is not None:
        export_csv(result.metrics, out / csv_name(config, seed))
    return result


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="merkleguard",
        description="Simulate AODV with black hole attacks and the Merkle forwarding check.")
    p.add_argument("--scenario", required=False,
                   help="scenario YAML file, or the name of a bundled scenario")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="override the scenario seed")
    seeds.add_argument("--seeds", type=parse_seed_range, metavar="A..B",
                       help="run every seed in the inclusive range")
    p.add_argument("--out", type=Path, default=Path("results"),
                   help="directory for <scenario>_<seed>.csv files (default: results)")
    p.add_argument("--duration", type=float, help="override the simulated duration in seconds")
    p.add_argument("--defense", type=on_off, metavar="on|off", help="override the defense switch")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for seed sweeps")
    p.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_scenario(locate_scenario(args.scenario))
        config = with_overrides(config, duration=args.duration, defense=args.defense)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seeds = args.seeds or [args.seed if args.seed is not None else config.seed]
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.jobs > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_run_one, [config] * len(seeds), seeds, [args.out] * len(seeds)))
        else:
            results = [_run_one(config, s, args.out) for s in seeds]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    for r in results:
        print(format_summary(r))
    if len(results) > 1:
        print()
        print(format_table(results))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
