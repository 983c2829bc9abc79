#!/usr/bin/env python3
"""Score the request-time collector against classical log preprocessing.

Generates one synthetic workload per stress scenario, runs both pipelines
on it, and prints how well each one recovers the true users and sessions.
The collector sees the replay stream (with identity tokens); the classical
side sees only the access log the same traffic would have produced.
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from webusage.baseline import preprocess_log, score_against_truth
from webusage.collector import Collector, replay_stream
from webusage.compare import collector_report, load_roster
from webusage.enrichment import sample_geoip_table
from webusage.simulator import SITE_HOST, WorkloadConfig, generate, simulate_to_dir
from webusage.storage import LogStore
from webusage.truth import load_truth

SCENARIOS = (
    ("clean", {}),
    ("cached-nav 0.3", {"cached_nav_share": 0.3}),
    ("dynamic-ip 0.5", {"dynamic_ip_share": 0.5}),
    ("nat 0.3", {"nat_share": 0.3}),
    ("cookie-loss 0.25", {"cookie_loss_share": 0.25}),
    ("cookie-loss 1.0", {"cookie_loss_share": 1.0}),
    ("nat + loss", {"nat_share": 0.3, "cookie_loss_share": 1.0}),
    ("all stresses", {"nat_share": 0.3, "cookie_loss_share": 0.25,
                      "dynamic_ip_share": 0.5, "cached_nav_share": 0.3}),
)


def run_scenario(name: str, overrides: dict, args: argparse.Namespace) -> tuple:
    config = WorkloadConfig(
        seed=args.seed,
        n_users=args.users,
        session_rate=args.session_rate,
        pageviews_per_session_mean=args.pageviews_mean,
        **overrides,
    )
    with tempfile.TemporaryDirectory() as tmp:
        paths = simulate_to_dir(config, tmp)
        truth = load_truth(paths["truth"])
        events, _ = generate(config)

        store = LogStore(":memory:")
        try:
            load_roster(store, truth)
            collector = Collector(store, [SITE_HOST], geoip=sample_geoip_table(),
                                  timeout=config.timeout)
            replay_stream(collector, events)
            collector_side = collector_report(store, truth)
        finally:
            store.close()

        result = preprocess_log(
            paths["eclf"],
            mode=args.mode,
            page_gap=args.page_gap,
            session_gap=args.session_gap,
            site_hosts=[SITE_HOST],
        )
        baseline_side = score_against_truth(result.sessions, truth)

    return (
        name,
        truth.session_count(),
        collector_side.exact_session_match_rate,
        baseline_side.exact_session_match_rate,
        collector_side.exact_session_match_rate
        - baseline_side.exact_session_match_rate,
        baseline_side.user_precision,
        baseline_side.user_recall,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--users", type=int, default=100)
    parser.add_argument("--session-rate", type=float, default=5.0)
    parser.add_argument("--pageviews-mean", type=float, default=7.0)
    parser.add_argument("--mode", default="page_gap",
                        choices=("page_gap", "session_duration", "both"))
    parser.add_argument("--page-gap", type=float, default=1800.0,
                        help="classical page-gap threshold in seconds")
    parser.add_argument("--session-gap", type=float, default=1800.0)
    args = parser.parse_args()

    header = (f"{'scenario':<18} {'sessions':>8} {'collector':>9} "
              f"{'baseline':>9} {'gap':>9} {'user P':>7} {'user R':>7}")
    print(header)
    print("-" * len(header))
    for name, overrides in SCENARIOS:
        row = run_scenario(name, overrides, args)
        print(f"{row[0]:<18} {row[1]:>8} {row[2]:>9.4f} {row[3]:>9.4f}"
              f" {row[4]:>9.4f} {row[5]:>7.4f} {row[6]:>7.4f}")
    print()
    print("collector/baseline: exact_session_match_rate against ground truth")
    print("user P/R: pairwise user precision/recall of the classical side")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
