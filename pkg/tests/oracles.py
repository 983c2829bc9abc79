"""Independent brute-force reimplementations used to check report output.

Everything here recomputes results from the CSV export files (or plain
Python values) with its own loops, its own rounding, and hardcoded
constants, so a bug in the library cannot hide in its own oracle.
"""

from __future__ import annotations

import csv
import ipaddress
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

USER_TYPE_ORDER = (
    "guest",
    "academic_staff",
    "administrative_staff",
    "contracted_staff",
    "retired_staff",
    "lecturer_nonsigned",
    "student",
    "graduate",
    "unit_mission",
)
SINGLE_GENDER_TYPES = ("guest", "unit_mission")
BUCKETS = ((1, 3, "1-3"), (4, 10, "4-10"), (11, 30, "11-30"), (31, 100, "31-100"), (101, None, "101+"))


def load_export(export_dir: str | Path) -> dict[str, list[dict[str, str]]]:
    tables = {}
    for path in Path(export_dir).glob("*.csv"):
        with path.open(encoding="utf-8", newline="") as fh:
            tables[path.stem] = list(csv.DictReader(fh))
    return tables


def _parse_dt(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%d %H:%M:%S")


def oracle_pps(pageviews: int, sessions: int) -> str:
    if sessions == 0:
        return "0.00"
    value = Decimal(pageviews) / Decimal(sessions)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def oracle_dwell(times) -> float:
    total = 0.0
    for earlier, later in zip(times, times[1:]):
        total += (later - earlier).total_seconds()
    return total


def oracle_sessions(export: dict[str, list[dict[str, str]]]) -> list[dict]:
    """Join exported sessions to their pages; skip sessions with no pages."""
    pages_by_opn: dict[int, list[datetime]] = {}
    for page in export["log_page"]:
        opn = int(page["log_opn_id"])
        pages_by_opn.setdefault(opn, []).append(_parse_dt(page["log_datetime"]))
    rows = []
    for sess in export["log_session"]:
        opn = int(sess["opn_id"])
        times = pages_by_opn.get(opn)
        if not times:
            continue
        times.sort()
        rows.append(
            {
                "opn_id": opn,
                "user_id": int(sess["user_id"]) if sess["user_id"] else None,
                "username": sess["username"] or None,
                "user_type": sess["user_type"],
                "gender": sess["gender"],
                "ip": sess["ip"],
                "country_code": sess["country_code"],
                "browser_name": sess["browser_name"],
                "browser_version": sess["browser_version"],
                "os_name": sess["os_name"],
                "os_version": sess["os_version"],
                "device_type": sess["device_type"],
                "language": sess["language"] or None,
                "referral_class": sess["referral_class"],
                "search_engine": sess["search_engine"] or None,
                "search_keywords": sess["search_keywords"] or None,
                "pageviews": len(times),
                "dwell_seconds": int((times[-1] - times[0]).total_seconds()),
            }
        )
    rows.sort(key=lambda r: r["opn_id"])
    return rows


def bucket_of(pageviews: int) -> str:
    for low, high, label in BUCKETS:
        if pageviews >= low and (high is None or pageviews <= high):
            return label
    raise AssertionError(f"no bucket for {pageviews}")


def oracle_usage_buckets(rows: list[dict]) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for row in rows:
        visitor = "Guests" if row["user_type"] == "guest" else "Users"
        key = (visitor, bucket_of(row["pageviews"]))
        counts[key] = counts.get(key, 0) + 1
    return counts


def oracle_user_type_gender(rows: list[dict]) -> list[dict]:
    """Body rows in fixed order plus a trailing total row."""
    out = []
    for user_type in USER_TYPE_ORDER:
        genders = (
            ("not_applicable",)
            if user_type in SINGLE_GENDER_TYPES
            else ("male", "female")
        )
        for gender in genders:
            members = [
                r for r in rows if r["user_type"] == user_type and r["gender"] == gender
            ]
            if user_type == "guest":
                users = len(
                    {
                        (
                            r["ip"], r["browser_name"], r["browser_version"],
                            r["os_name"], r["os_version"], r["device_type"],
                        )
                        for r in members
                    }
                )
                dur_s = dur_m = dur_h = None
            else:
                users = len({r["user_id"] for r in members})
                dur_s = sum(r["dwell_seconds"] for r in members)
                dur_m = int(
                    (Decimal(dur_s) / 60).quantize(Decimal("1"), rounding=ROUND_HALF_UP)
                )
                dur_h = str(
                    (Decimal(dur_s) / 3600).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
                )
            sessions = len(members)
            pageviews = sum(r["pageviews"] for r in members)
            out.append(
                {
                    "user_type": user_type,
                    "gender": gender,
                    "users": users,
                    "sessions": sessions,
                    "pageviews": pageviews,
                    "pps": oracle_pps(pageviews, sessions),
                    "duration_seconds": dur_s,
                    "duration_minutes": dur_m,
                    "duration_hours": dur_h,
                }
            )
    total_sessions = sum(r["sessions"] for r in out)
    total_pageviews = sum(r["pageviews"] for r in out)
    total_hours = sum(
        (Decimal(r["duration_hours"]) for r in out if r["duration_hours"] is not None),
        Decimal("0.0"),
    )
    out.append(
        {
            "user_type": "total",
            "gender": "",
            "users": sum(r["users"] for r in out),
            "sessions": total_sessions,
            "pageviews": total_pageviews,
            "pps": oracle_pps(total_pageviews, total_sessions),
            "duration_seconds": sum(r["duration_seconds"] or 0 for r in out),
            "duration_minutes": sum(r["duration_minutes"] or 0 for r in out),
            "duration_hours": str(total_hours),
        }
    )
    return out


def oracle_hourly(export: dict[str, list[dict[str, str]]]) -> dict[tuple[int, str], int]:
    type_by_opn = {int(s["opn_id"]): s["user_type"] for s in export["log_session"]}
    counts: dict[tuple[int, str], int] = {}
    for page in export["log_page"]:
        hour = _parse_dt(page["log_datetime"]).hour
        key = (hour, type_by_opn[int(page["log_opn_id"])])
        counts[key] = counts.get(key, 0) + 1
    return counts


def oracle_distribution(rows: list[dict], kind: str) -> list[tuple[str, int, float]]:
    field = {
        "device": "device_type",
        "os": "os_name",
        "browser": "browser_name",
        "country": "country_code",
        "language": "language",
    }[kind]
    counts: dict[str, int] = {}
    for row in rows:
        value = row[field]
        if value is None:
            value = "unknown"
        counts[value] = counts.get(value, 0) + 1
    total = len(rows)
    return [
        (category, n, n / total)
        for category, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]


def oracle_top_ips(rows: list[dict], n: int) -> list[tuple[str, int, int, str]]:
    per_ip: dict[str, list[int]] = {}
    for row in rows:
        cell = per_ip.setdefault(row["ip"], [0, 0])
        cell[0] += 1
        cell[1] += row["pageviews"]
    ordered = sorted(
        per_ip.items(),
        key=lambda kv: (-kv[1][0], -kv[1][1], int(ipaddress.IPv4Address(kv[0]))),
    )
    return [
        (ip, sessions, pageviews, oracle_pps(pageviews, sessions))
        for ip, (sessions, pageviews) in ordered[:n]
    ]


def oracle_top_users(rows: list[dict], n: int) -> list[tuple[int, str, int, int]]:
    per_user: dict[tuple[int, str], list[int]] = {}
    for row in rows:
        if row["user_id"] is None:
            continue
        cell = per_user.setdefault((row["user_id"], row["username"] or ""), [0, 0])
        cell[0] += row["pageviews"]
        cell[1] += 1
    ordered = sorted(per_user.items(), key=lambda kv: (-kv[1][0], kv[0][1]))
    return [
        (uid, name, pageviews, sessions)
        for (uid, name), (pageviews, sessions) in ordered[:n]
    ]


def oracle_search(rows: list[dict]) -> tuple[list, list]:
    engines: dict[str, int] = {}
    keywords: dict[str, int] = {}
    for row in rows:
        if row["referral_class"] != "search_engine" or row["search_engine"] is None:
            continue
        engines[row["search_engine"]] = engines.get(row["search_engine"], 0) + 1
        if row["search_keywords"]:
            keywords[row["search_keywords"]] = keywords.get(row["search_keywords"], 0) + 1
    return (
        sorted(engines.items(), key=lambda kv: (-kv[1], kv[0])),
        sorted(keywords.items(), key=lambda kv: (-kv[1], kv[0])),
    )


def geoip_lookup_linear(ranges, ip: str | int) -> str:
    """Scan every range instead of bisecting."""
    value = int(ipaddress.IPv4Address(ip)) if isinstance(ip, str) else ip
    for rng in ranges:
        if rng.start_ip <= value <= rng.end_ip:
            return rng.country_code
    return "unknown"


def sessionize_reference(epochs: list[float], session_gap: float, page_gap: float, mode: str) -> list[int]:
    """Session sizes for a sorted epoch list, split by the stated rule."""
    sizes = []
    count = 0
    session_start = None
    prev = None
    for t in epochs:
        split = False
        if count:
            if mode in ("page_gap", "both") and t - prev > page_gap:
                split = True
            if mode in ("session_duration", "both") and t - session_start > session_gap:
                split = True
        if split:
            sizes.append(count)
            count = 0
        if count == 0:
            session_start = t
        count += 1
        prev = t
    if count:
        sizes.append(count)
    return sizes
