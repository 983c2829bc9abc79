#!/usr/bin/env python3
"""Measure how collection time grows with workload size.

Doubles the user count (and with it the pageview volume) and times only the
replay-into-store step, printing the wall time and throughput for each size
plus the ratio against the previous run.  Near-linear scaling shows up as
ratios close to each doubling factor.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from webusage.collector import Collector, replay_stream
from webusage.compare import load_roster
from webusage.enrichment import sample_geoip_table
from webusage.simulator import SITE_HOST, WorkloadConfig, generate
from webusage.storage import LogStore


def timed_collect(n_users: int, args: argparse.Namespace) -> tuple[int, float]:
    config = WorkloadConfig(
        seed=args.seed,
        n_users=n_users,
        session_rate=args.session_rate,
        pageviews_per_session_mean=args.pageviews_mean,
    )
    events, truth = generate(config)
    store = LogStore(":memory:")
    try:
        load_roster(store, truth)
        collector = Collector(store, [SITE_HOST], geoip=sample_geoip_table(),
                              timeout=config.timeout)
        start = time.perf_counter()
        pages, errors = replay_stream(collector, events)
        elapsed = time.perf_counter() - start
    finally:
        store.close()
    if errors:
        raise RuntimeError(f"{errors} events failed to collect")
    return pages, elapsed


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="125,250,500,1000",
                        help="comma-separated user counts to run")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--session-rate", type=float, default=20.0)
    parser.add_argument("--pageviews-mean", type=float, default=10.0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    print(f"{'users':>7} {'pageviews':>10} {'seconds':>8} {'pages/s':>9} {'ratio':>6}")
    previous: float | None = None
    for n_users in sizes:
        pages, elapsed = timed_collect(n_users, args)
        ratio = "" if previous is None else f"{elapsed / previous:.2f}"
        print(f"{n_users:>7} {pages:>10} {elapsed:>8.2f}"
              f" {pages / elapsed:>9.0f} {ratio:>6}")
        previous = elapsed
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
