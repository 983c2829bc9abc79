"""Client enrichment: user-agent parsing, GeoIP lookup, language tags,
and the search-engine registry.

All lookups here are table driven.  The user-agent rules, bot substrings and
search-engine registry ship as plain data files under ``webusage/data`` so
behaviour can be pinned by tests and extended without code changes.  Parsing
never raises on arbitrary agent strings; unknown fields come back as the
literal string ``"unknown"``.
"""

from __future__ import annotations

import bisect
import csv
import ipaddress
import re
import urllib.parse
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import IO, Iterable, Sequence

UNKNOWN = "unknown"

DEVICE_TYPES = ("desktop", "mobile", "tablet", "bot", UNKNOWN)


@dataclass(frozen=True)
class ClientProfile:
    browser_name: str = UNKNOWN
    browser_version: str = UNKNOWN
    os_name: str = UNKNOWN
    os_version: str = UNKNOWN
    device_type: str = UNKNOWN
    is_bot: bool = False
    language: str | None = None


# ---------------------------------------------------------------------------
# user agents
# ---------------------------------------------------------------------------

class UaRegistryError(ValueError):
    pass


class _Rule:
    __slots__ = ("token", "name", "pattern")

    def __init__(self, token: str, name: str):
        self.token = token
        self.name = name
        # Token must not sit inside a longer word: "Edg" must not match
        # "Edge/18", and "OPR" must not match inside unrelated text.  A
        # version may follow after '/' or a space.
        self.pattern = re.compile(
            r"(?<![A-Za-z0-9])"
            + re.escape(token)
            + r"(?![A-Za-z])[/ ]?(\d+(?:[._]\d+)*)?",
            re.IGNORECASE,
        )

    def match(self, ua: str) -> tuple[str, str] | None:
        m = self.pattern.search(ua)
        if m is None:
            return None
        version = m.group(1)
        if version:
            return self.name, version.replace("_", ".")
        return self.name, UNKNOWN


class UaRegistry:
    """Ordered token rules for browser, OS and device classification.

    Rule files are tab separated: ``kind<TAB>match-token<TAB>name`` with
    '#' comments.  First matching rule of each kind wins, so specific
    tokens (Edg before Chrome before Safari) go first.
    """

    def __init__(self, rules: Iterable[tuple[str, str, str]], bots: Sequence[str] = ()):
        self.browser_rules: list[_Rule] = []
        self.os_rules: list[_Rule] = []
        self.device_rules: list[_Rule] = []
        for kind, token, name in rules:
            if kind == "browser":
                self.browser_rules.append(_Rule(token, name))
            elif kind == "os":
                self.os_rules.append(_Rule(token, name))
            elif kind == "device":
                if name not in DEVICE_TYPES:
                    raise UaRegistryError(f"unknown device type {name!r}")
                self.device_rules.append(_Rule(token, name))
            else:
                raise UaRegistryError(f"unknown rule kind {kind!r}")
        self.bots = tuple(b.lower() for b in bots)

    @classmethod
    def from_text(cls, text: str, bots: Sequence[str] = ()) -> "UaRegistry":
        rules = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.rstrip()
            if not line or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise UaRegistryError(f"line {line_no}: expected 3 tab-separated fields")
            rules.append((parts[0], parts[1], parts[2]))
        return cls(rules, bots)


def _first_match(rules: Sequence[_Rule], ua: str) -> tuple[str, str]:
    for rule in rules:
        hit = rule.match(ua)
        if hit is not None:
            return hit
    return UNKNOWN, UNKNOWN


def parse_user_agent(ua: str | None, registry: "UaRegistry | None" = None) -> ClientProfile:
    """Classify a user-agent string.  Total: never raises on any input."""
    if registry is None:
        registry = default_ua_registry()
    if not ua:
        return ClientProfile()
    lowered = ua.lower()
    if any(bot in lowered for bot in registry.bots):
        return ClientProfile(device_type="bot", is_bot=True)
    browser, browser_version = _first_match(registry.browser_rules, ua)
    os_name, os_version = _first_match(registry.os_rules, ua)
    device, _ = _first_match(registry.device_rules, ua)
    if device == UNKNOWN:
        if browser != UNKNOWN or os_name != UNKNOWN:
            device = "desktop"
    return ClientProfile(
        browser_name=browser,
        browser_version=browser_version,
        os_name=os_name,
        os_version=os_version,
        device_type=device,
    )


# ---------------------------------------------------------------------------
# GeoIP
# ---------------------------------------------------------------------------

class GeoIpLoadError(ValueError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def ip_to_int(ip: str | int) -> int:
    if isinstance(ip, int):
        return ip
    return int(ipaddress.IPv4Address(ip))


@dataclass(frozen=True)
class GeoIpRange:
    start_ip: int
    end_ip: int
    country_code: str


class GeoIpTable:
    """Sorted, non-overlapping inclusive integer ranges with binary search."""

    def __init__(self, ranges: Sequence[GeoIpRange]):
        ordered = sorted(ranges, key=lambda r: r.start_ip)
        self._starts = [r.start_ip for r in ordered]
        self._ends = [r.end_ip for r in ordered]
        self._codes = [r.country_code for r in ordered]
        self.ranges = tuple(ordered)

    def __len__(self) -> int:
        return len(self.ranges)

    def lookup(self, ip: str | int) -> str:
        value = ip_to_int(ip)
        idx = bisect.bisect_right(self._starts, value) - 1
        if idx >= 0 and value <= self._ends[idx]:
            return self._codes[idx]
        return UNKNOWN


def load_geoip(source: IO[str] | Iterable[str]) -> GeoIpTable:
    """Parse ``start_ip,end_ip,country_code`` CSV rows into a lookup table.

    Rows may arrive unsorted.  Errors name the offending 1-based line.
    """
    rows: list[tuple[GeoIpRange, int]] = []
    for line_no, row in enumerate(csv.reader(source), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if len(row) != 3:
            raise GeoIpLoadError("expected 3 columns", line_no)
        try:
            start, end = int(row[0]), int(row[1])
        except ValueError:
            raise GeoIpLoadError("ip bounds must be integers", line_no) from None
        code = row[2].strip()
        if not code:
            raise GeoIpLoadError("empty country code", line_no)
        if start > end:
            raise GeoIpLoadError("start_ip greater than end_ip", line_no)
        rows.append((GeoIpRange(start, end, code), line_no))
    rows.sort(key=lambda item: item[0].start_ip)
    for prev, cur in zip(rows, rows[1:]):
        if cur[0].start_ip <= prev[0].end_ip:
            raise GeoIpLoadError("range overlaps a previous range", cur[1])
    return GeoIpTable([r for r, _ in rows])


# ---------------------------------------------------------------------------
# languages
# ---------------------------------------------------------------------------

def first_language_tag(value: str | None) -> str | None:
    """First tag of an Accept-Language style value, case-normalized.

    "tr-TR,tr;q=0.9,en;q=0.8" gives "tr-TR"; empty input gives None.
    """
    if not value:
        return None
    tag = value.split(",")[0].split(";")[0].strip()
    if not tag:
        return None
    parts = tag.replace("_", "-").split("-")
    head = parts[0].lower()
    rest = [p.upper() if len(p) == 2 else p.lower() for p in parts[1:] if p]
    return "-".join([head] + rest)


# ---------------------------------------------------------------------------
# search engines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchEngine:
    name: str
    host_label: str
    query_param: str


class SearchRegistry:
    """Maps referrer hosts to engines and extracts search keywords.

    An engine matches when its host label appears as one of the dot
    separated labels of the referrer host, so "google" covers both
    www.google.com and www.google.com.tr.
    """

    def __init__(self, engines: Sequence[SearchEngine]):
        self.engines = tuple(engines)

    @classmethod
    def from_text(cls, text: str) -> "SearchRegistry":
        engines = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.rstrip()
            if not line or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {line_no}: expected 3 tab-separated fields")
            engines.append(SearchEngine(parts[0], parts[1].lower(), parts[2]))
        return cls(engines)

    def match_host(self, host: str) -> SearchEngine | None:
        labels = host.lower().split(".")
        for engine in self.engines:
            if engine.host_label in labels:
                return engine
        return None

    def extract(self, referrer_url: str) -> tuple[str, str | None] | None:
        """(engine name, normalized keywords or None), or None if no engine."""
        try:
            parts = urllib.parse.urlsplit(referrer_url)
            host = parts.hostname
        except ValueError:
            return None
        if not host:
            return None
        engine = self.match_host(host)
        if engine is None:
            return None
        query = urllib.parse.parse_qs(parts.query)
        values = query.get(engine.query_param)
        if not values or not values[0].strip():
            return engine.name, None
        keywords = " ".join(values[0].split()).lower()
        return engine.name, keywords


# ---------------------------------------------------------------------------
# bundled data
# ---------------------------------------------------------------------------

def _data_text(name: str) -> str:
    return resources.files("webusage.data").joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def default_bots() -> tuple[str, ...]:
    lines = _data_text("bots.txt").splitlines()
    return tuple(l.strip().lower() for l in lines if l.strip() and not l.startswith("#"))


@lru_cache(maxsize=None)
def default_ua_registry() -> UaRegistry:
    return UaRegistry.from_text(_data_text("ua_rules.tsv"), bots=default_bots())


@lru_cache(maxsize=None)
def default_search_registry() -> SearchRegistry:
    return SearchRegistry.from_text(_data_text("search_engines.tsv"))


@lru_cache(maxsize=None)
def sample_geoip_table() -> GeoIpTable:
    with resources.files("webusage.data").joinpath("geoip_sample.csv").open("r") as fh:
        return load_geoip(fh)
