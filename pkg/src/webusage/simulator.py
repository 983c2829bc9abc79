"""Deterministic synthetic-traffic generator.

Produces three aligned views of the same simulated browsing: a replay file
for the request-time collector, the equivalent server access log for the
classical pipeline, and a ground-truth CSV labeling every event with its
true visitor and session.  Everything is driven by one seeded Mersenne
Twister, so a (config, seed) pair always yields byte-identical files on any
host.

A visitor keeps one identity token across visits (a persistent cookie); a
true session is a maximal run of requests under one token with no pause
longer than the timeout.  ``cookie_loss_share`` models clients that shed
cookies: a loss replaces the token mid-stream, which genuinely starts a new
identity, so the ground truth splits there too.  NAT pools, mid-session IP
changes, cache-hidden back navigations, and log-only noise (static files,
error responses, crawler hits) each stress one classical-preprocessing
weakness without touching what the collector sees.
"""

from __future__ import annotations

import ipaddress
import math
import random
import urllib.parse
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, TextIO

from .baseline import EclfEntry, render_log_line
from .events import RawRequestEvent, write_replay
from .truth import GroundTruth, TruthEvent, TruthSession, TruthUser, save_truth

SITE_HOST = "www.campus.example"
BASE_EPOCH = 1_630_540_800  # 2021-09-02 00:00:00 UTC
DEVICE_TYPES = ("desktop", "mobile", "tablet")

_EPOCH0 = datetime(1970, 1, 1)

DEFAULT_USER_TYPE_MIX = (
    ("guest", 0.45),
    ("student", 0.28),
    ("academic_staff", 0.10),
    ("administrative_staff", 0.07),
    ("graduate", 0.04),
    ("lecturer_nonsigned", 0.03),
    ("unit_mission", 0.02),
    ("contracted_staff", 0.006),
    ("retired_staff", 0.004),
)
DEFAULT_DEVICE_MIX = (
    ("desktop", 0.62),
    ("mobile", 0.28),
    ("tablet", 0.10),
)

# Account kinds that carry no personal gender.
_NO_GENDER = ("guest", "unit_mission")

_AGENTS = {
    "desktop": (
        ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/92.0.4515.131 Safari/537.36", 0.34),
        ("Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:91.0) Gecko/20100101"
         " Firefox/91.0", 0.16),
        ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/92.0.4515.131 Safari/537.36"
         " Edg/92.0.902.67", 0.14),
        ("Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15"
         " (KHTML, like Gecko) Version/14.1.2 Safari/605.1.15", 0.10),
        ("Mozilla/5.0 (Macintosh; Intel Mac OS X 11_5_2) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/92.0.4515.159 Safari/537.36", 0.08),
        ("Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:92.0) Gecko/20100101"
         " Firefox/92.0", 0.08),
        ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/91.0.4472.164 Safari/537.36"
         " OPR/77.0.4054.277", 0.05),
        ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/91.0.4472.135 YaBrowser/21.6.2.855"
         " Yowser/2.5 Safari/537.36", 0.05),
    ),
    "mobile": (
        ("Mozilla/5.0 (Linux; Android 11; SM-A515F) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/92.0.4515.115 Mobile Safari/537.36", 0.45),
        ("Mozilla/5.0 (iPhone; CPU iPhone OS 14_6 like Mac OS X)"
         " AppleWebKit/605.1.15 (KHTML, like Gecko) Version/14.1.1"
         " Mobile/15E148 Safari/604.1", 0.30),
        ("Mozilla/5.0 (Linux; Android 11; SAMSUNG SM-G991B) AppleWebKit/537.36"
         " (KHTML, like Gecko) SamsungBrowser/15.0 Chrome/90.0.4430.210"
         " Mobile Safari/537.36", 0.15),
        ("Mozilla/5.0 (Android 11; Mobile; rv:92.0) Gecko/92.0 Firefox/92.0", 0.10),
    ),
    "tablet": (
        ("Mozilla/5.0 (iPad; CPU OS 14_6 like Mac OS X) AppleWebKit/605.1.15"
         " (KHTML, like Gecko) Version/14.1.1 Mobile/15E148 Safari/604.1", 0.60),
        ("Mozilla/5.0 (Linux; Android 10; SM-T510) AppleWebKit/537.36"
         " (KHTML, like Gecko) Chrome/91.0.4472.114 Safari/537.36", 0.40),
    ),
}

_LANGUAGES = (
    ("tr-TR,tr;q=0.9", 0.55),
    ("en-US,en;q=0.8", 0.20),
    ("de-DE,de;q=0.7", 0.08),
    ("en-GB,en;q=0.9", 0.06),
    ("fr-FR,fr;q=0.9", 0.06),
    ("nl-NL,nl;q=0.8", 0.05),
)

# (first address, last address) pools the sample country table covers.
_IP_POOLS = (
    ((193, 140, 0, 0), 65536, 0.50),   # TR
    ((212, 174, 0, 0), 65536, 0.12),   # TR
    ((193, 255, 0, 0), 65536, 0.08),   # TR
    ((141, 76, 0, 0), 65536, 0.08),    # DE
    ((145, 97, 0, 0), 65536, 0.06),    # NL
    ((51, 140, 0, 0), 65536, 0.06),    # GB
    ((90, 0, 0, 0), 4194304, 0.05),    # FR
    ((23, 0, 0, 0), 1048576, 0.05),    # US
)

_ENTRY_PAGES = (
    ("/index.php", 0.50),
    ("/announcements.php", 0.20),
    ("/courses.php", 0.15),
    ("/login.php", 0.15),
)
_NEXT_PAGES = (
    ("/index.php", 0.10),
    ("/courses.php", 0.14),
    ("/courses.php?id=101", 0.08),
    ("/courses.php?id=205", 0.06),
    ("/announcements.php", 0.10),
    ("/news.php?id=7", 0.07),
    ("/library.php", 0.09),
    ("/profile.php", 0.08),
    ("/grades.php", 0.08),
    ("/schedule.php", 0.08),
    ("/assignments.php", 0.06),
    ("/exam.php", 0.06),
)

_SEARCH_REFERRERS = (
    ("https://www.google.com/search?q=library+hours", 0.40),
    ("https://www.google.com/search?q=course+schedule", 0.20),
    ("https://www.bing.com/search?q=exam+results", 0.15),
    ("https://search.yahoo.com/search?p=campus+announcements", 0.10),
    ("https://yandex.com.tr/search/?text=student+portal", 0.08),
    ("https://duckduckgo.com/?q=campus+library", 0.07),
)
_EXTERNAL_REFERRERS = (
    ("https://www.facebook.com/", 0.4),
    ("https://twitter.com/campusnews", 0.3),
    ("http://www.partner.example/links.html", 0.3),
)

_STATIC_RESOURCES = ("/static/style.css", "/static/logo.png", "/static/app.js",
                     "/favicon.ico")
_BOT_AGENTS = (
    "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)",
    "Mozilla/5.0 (compatible; bingbot/2.0; +http://www.bing.com/bingbot.htm)",
    "Mozilla/5.0 (compatible; YandexBot/3.0; +http://yandex.com/bots)",
)

_NOISE_STREAM_OFFSET = 1_000_003


class ConfigError(ValueError):
    """One or more workload fields are out of range; names use flag spelling."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.fields = [flag for flag, _ in problems]
        super().__init__("; ".join(f"{flag}: {why}" for flag, why in problems))


@dataclass
class WorkloadConfig:
    seed: int = 42
    n_users: int = 50
    user_type_mix: tuple[tuple[str, float], ...] = DEFAULT_USER_TYPE_MIX
    device_mix: tuple[tuple[str, float], ...] = DEFAULT_DEVICE_MIX
    session_rate: float = 5.0
    pageviews_per_session_mean: float = 7.0
    timeout: float = 1800.0
    nat_share: float = 0.0
    dynamic_ip_share: float = 0.0
    cookie_loss_share: float = 0.0
    cached_nav_share: float = 0.0
    duration: float = 7 * 86400.0

    def validate(self) -> None:
        problems: list[tuple[str, str]] = []

        def share(flag: str, value: float) -> None:
            if not 0.0 <= value <= 1.0:
                problems.append((flag, f"must be within [0, 1], got {value}"))

        if self.n_users < 1:
            problems.append(("users", "must be at least 1"))
        if not 0.0 < self.session_rate <= 1000.0:
            problems.append(("session-rate", f"must be in (0, 1000], got {self.session_rate}"))
        if not 1.0 <= self.pageviews_per_session_mean <= 1000.0:
            problems.append((
                "pageviews-mean",
                f"must be in [1, 1000], got {self.pageviews_per_session_mean}",
            ))
        if self.timeout < 60.0:
            problems.append(("timeout", f"must be at least 60 seconds, got {self.timeout}"))
        if self.duration < 3600.0:
            problems.append(("duration", f"must be at least 3600 seconds, got {self.duration}"))
        share("nat-share", self.nat_share)
        share("dynamic-ip-share", self.dynamic_ip_share)
        share("cookie-loss-share", self.cookie_loss_share)
        share("cached-nav-share", self.cached_nav_share)
        for flag, mix, valid in (
            ("user-type-mix", self.user_type_mix, None),
            ("device-mix", self.device_mix, DEVICE_TYPES),
        ):
            if not mix:
                problems.append((flag, "must not be empty"))
                continue
            if any(w < 0 for _, w in mix):
                problems.append((flag, "weights must be non-negative"))
            if abs(sum(w for _, w in mix) - 1.0) > 1e-9:
                problems.append((flag, "weights must sum to 1"))
            if valid is not None and any(name not in valid for name, _ in mix):
                problems.append((flag, f"names must be among {valid}"))
        if problems:
            raise ConfigError(problems)


def _pick(rng: random.Random, weighted: Iterable[tuple[object, float]]):
    u = rng.random()
    acc = 0.0
    item = None
    for item, weight in weighted:
        acc += weight
        if u < acc:
            return item
    return item


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def _exp_seconds(rng: random.Random, mean: float) -> int:
    return int(-mean * math.log(1.0 - rng.random()))


@dataclass
class _Person:
    user_id: int
    username: str | None
    user_type: str
    gender: str | None
    device: str
    agent: str
    language: str
    ip: str
    pool: int
    dynamic: bool
    token: str


@dataclass
class _SimEvent:
    epoch: int
    ip: str
    resource: str
    referrer: str | None
    token: str
    cached: bool


class _IpAllocator:
    """Hands out distinct addresses from the sampled country pools."""

    def __init__(self):
        self._next = [0] * len(_IP_POOLS)

    def take(self, pool: int) -> str:
        (a, b, c, d), size, _ = _IP_POOLS[pool]
        base = ((a * 256 + b) * 256 + c) * 256 + d
        offset = 10 + self._next[pool]
        if offset >= size - 10:
            offset = 10 + (offset % (size - 20))
        self._next[pool] += 1
        return str(ipaddress.IPv4Address(base + offset))


def _full_url(resource: str) -> str:
    return f"http://{SITE_HOST}{resource}"


def _entry_referrer(rng: random.Random) -> str | None:
    u = rng.random()
    if u < 0.40:
        return None
    if u < 0.65:
        return _pick(rng, _SEARCH_REFERRERS)
    if u < 0.80:
        return _pick(rng, _EXTERNAL_REFERRERS)
    return _full_url("/index.php")


def _make_people(config: WorkloadConfig, rng: random.Random,
                 alloc: _IpAllocator) -> list[_Person]:
    nat_count = int(round(config.nat_share * config.n_users))
    nat_ips: list[str] = []
    people = []
    token_seq = 0
    for user_id in range(1, config.n_users + 1):
        user_type = _pick(rng, config.user_type_mix)
        device = _pick(rng, config.device_mix)
        agent = _pick(rng, _AGENTS[device])
        language = _pick(rng, _LANGUAGES)
        pool = _pick(rng, [(i, w) for i, (_, _, w) in enumerate(_IP_POOLS)])
        if user_id <= nat_count:
            # Roughly three visitors share each translated address.
            pool_index = (user_id - 1) // 3
            if pool_index >= len(nat_ips):
                nat_ips.append(alloc.take(pool))
            ip = nat_ips[pool_index]
            dynamic = False
        else:
            ip = alloc.take(pool)
            dynamic = rng.random() < config.dynamic_ip_share
        if user_type == "guest":
            username = None
            gender = None
        else:
            username = f"u{user_id:04d}"
            gender = None if user_type in _NO_GENDER else (
                "male" if rng.random() < 0.5 else "female"
            )
        token_seq += 1
        people.append(_Person(
            user_id=user_id,
            username=username,
            user_type=user_type,
            gender=gender,
            device=device,
            agent=agent,
            language=language,
            ip=ip,
            pool=pool,
            dynamic=dynamic,
            token=f"v{user_id:06d}x{token_seq:08d}",
        ))
    return people


def generate(config: WorkloadConfig) -> tuple[list[RawRequestEvent], GroundTruth]:
    """Produce the replay event list and its ground truth.

    Events come out globally time-ordered; event_seq N in the truth is the
    N-th replay line.  Deterministic for a given config.
    """
    config.validate()
    rng = random.Random(config.seed)
    alloc = _IpAllocator()
    people = _make_people(config, rng, alloc)

    intra_cap = max(1, min(300, int(config.timeout // 2)))
    token_seq = len(people)
    per_user_events: dict[int, list[_SimEvent]] = {}

    for person in people:
        n_sessions = _poisson(rng, config.session_rate)
        events: list[_SimEvent] = []
        starts = sorted(
            BASE_EPOCH + int(config.duration * rng.random())
            for _ in range(n_sessions)
        )
        prev_end: int | None = None
        for raw_start in starts:
            start = raw_start
            if prev_end is not None:
                floor = prev_end + int(config.timeout) + 1 + _exp_seconds(rng, 300.0)
                if start < floor:
                    start = floor
            n_pages = 1 + _poisson(rng, config.pageviews_per_session_mean - 1.0)
            t = start
            ip = person.ip
            history: list[str] = []
            prev_resource: str | None = None
            for page_index in range(n_pages):
                if rng.random() < config.cookie_loss_share:
                    token_seq += 1
                    person.token = f"v{person.user_id:06d}x{token_seq:08d}"
                if page_index > 0:
                    t += 1 + min(_exp_seconds(rng, 60.0), intra_cap - 1)
                    if person.dynamic and rng.random() < 0.25:
                        ip = alloc.take(person.pool)
                cached = (
                    page_index > 0
                    and len(history) >= 2
                    and rng.random() < config.cached_nav_share
                )
                if page_index == 0:
                    resource = _pick(rng, _ENTRY_PAGES)
                    referrer = _entry_referrer(rng)
                elif cached:
                    resource = history[-2]
                    referrer = _full_url(prev_resource) if prev_resource else None
                    history.pop()
                else:
                    resource = _pick(rng, _NEXT_PAGES)
                    referrer = _full_url(prev_resource) if prev_resource else None
                if not cached:
                    history.append(resource)
                events.append(_SimEvent(
                    epoch=t,
                    ip=ip,
                    resource=resource,
                    referrer=referrer,
                    token=person.token,
                    cached=cached,
                ))
                prev_resource = resource
            prev_end = t
        per_user_events[person.user_id] = events

    by_id = {p.user_id: p for p in people}
    ordered: list[tuple[int, int, int]] = []  # (epoch, user_id, per-user index)
    for user_id, events in per_user_events.items():
        for index, event in enumerate(events):
            ordered.append((event.epoch, user_id, index))
    ordered.sort()

    # True sessions are token runs with no pause above the timeout.
    session_key_to_id: dict[tuple[int, int], int] = {}
    session_meta: list[tuple[int, int, int, int, int]] = []
    for person in people:
        events = per_user_events[person.user_id]
        run = 0
        for index, event in enumerate(events):
            previous = events[index - 1] if index else None
            if (
                previous is None
                or event.token != previous.token
                or event.epoch - previous.epoch > config.timeout
            ):
                run += 1
                session_meta.append(
                    (event.epoch, person.user_id, run, index, index)
                )
            else:
                start_epoch, uid, r, first, _ = session_meta[-1]
                session_meta[-1] = (start_epoch, uid, r, first, index)
            session_key_to_id[(person.user_id, index)] = run
    session_meta.sort(key=lambda m: (m[0], m[1], m[2]))
    run_to_global: dict[tuple[int, int], int] = {}
    truth_sessions = []
    for global_id, (start_epoch, uid, run, first, last) in enumerate(session_meta, start=1):
        run_to_global[(uid, run)] = global_id
        events = per_user_events[uid]
        truth_sessions.append(TruthSession(
            session_id=global_id,
            user_id=uid,
            pageviews=last - first + 1,
            start_epoch=events[first].epoch,
            end_epoch=events[last].epoch,
        ))

    replay_events: list[RawRequestEvent] = []
    truth_events: list[TruthEvent] = []
    for seq, (epoch, user_id, index) in enumerate(ordered, start=1):
        person = by_id[user_id]
        event = per_user_events[user_id][index]
        run = session_key_to_id[(user_id, index)]
        resource = event.resource
        query = resource.partition("?")[2]
        get_params = dict(urllib.parse.parse_qsl(query)) if query else {}
        module = resource.partition("?")[0].lstrip("/").removesuffix(".php") or "index"
        replay_events.append(RawRequestEvent(
            client_ip=event.ip,
            timestamp=_EPOCH0 + timedelta(seconds=epoch),
            method="GET",
            url=_full_url(resource),
            session_token=event.token,
            user_agent=person.agent,
            referrer=event.referrer,
            auth_user=person.username,
            app_service="campus",
            module=module,
            server_id=1,
            get_params=get_params,
            post_params={},
            cookies={"sid": event.token, "accept-language": person.language},
        ))
        truth_events.append(TruthEvent(
            event_seq=seq,
            true_user_id=user_id,
            true_session_id=run_to_global[(user_id, run)],
            epoch=epoch,
            ip=event.ip,
            resource=resource,
            cached=event.cached,
        ))

    truth = GroundTruth(
        users=[
            TruthUser(p.user_id, p.username, p.user_type, p.gender, p.device)
            for p in people
        ],
        sessions=truth_sessions,
        events=truth_events,
    )
    return replay_events, truth


def emit_eclf(
    events: list[RawRequestEvent],
    truth: GroundTruth,
    config: WorkloadConfig,
    stream: TextIO,
    noise: bool = True,
) -> int:
    """Write the server's view of the stream as combined-format log lines.

    Cache-served navigations never reach the server, so they are skipped.
    With ``noise`` on, a second seeded generator interleaves static-file
    fetches, non-200 responses, and crawler hits; all of it is confined to
    the log so the replay stream and ground truth stay untouched.
    """
    noise_rng = random.Random(config.seed + _NOISE_STREAM_OFFSET)
    lines = 0

    def write(entry: EclfEntry) -> None:
        nonlocal lines
        stream.write(render_log_line(entry, "ECLF"))
        stream.write("\n")
        lines += 1

    for event, truth_event in zip(events, truth.events):
        if truth_event.cached:
            continue
        when = datetime.fromtimestamp(truth_event.epoch, tz=timezone.utc)
        write(EclfEntry(
            ip=event.client_ip,
            identd=None,
            authuser=None,
            timestamp=when,
            method=event.method,
            resource=truth_event.resource,
            protocol="HTTP/1.1",
            status=200,
            bytes_sent=800 + (truth_event.event_seq * 137) % 18200,
            referrer=event.referrer,
            user_agent=event.user_agent,
        ))
        if not noise:
            continue
        if noise_rng.random() < 0.40:
            count = 1 + int(noise_rng.random() * 3)
            for _ in range(count):
                write(EclfEntry(
                    ip=event.client_ip,
                    identd=None,
                    authuser=None,
                    timestamp=when,
                    method="GET",
                    resource=_STATIC_RESOURCES[
                        int(noise_rng.random() * len(_STATIC_RESOURCES))
                    ],
                    protocol="HTTP/1.1",
                    status=200,
                    bytes_sent=120 + int(noise_rng.random() * 4000),
                    referrer=_full_url(truth_event.resource),
                    user_agent=event.user_agent,
                ))
        if noise_rng.random() < 0.05:
            status = (301, 302, 404)[int(noise_rng.random() * 3)]
            write(EclfEntry(
                ip=event.client_ip,
                identd=None,
                authuser=None,
                timestamp=when,
                method="GET",
                resource=_pick(noise_rng, _NEXT_PAGES),
                protocol="HTTP/1.1",
                status=status,
                bytes_sent=None if status in (301, 302) else 291,
                referrer=None,
                user_agent=event.user_agent,
            ))
        if noise_rng.random() < 0.02:
            agent = _BOT_AGENTS[int(noise_rng.random() * len(_BOT_AGENTS))]
            ip = str(ipaddress.IPv4Address(
                1123631104 + int(noise_rng.random() * 8192)
            ))
            for _ in range(1 + int(noise_rng.random() * 2)):
                write(EclfEntry(
                    ip=ip,
                    identd=None,
                    authuser=None,
                    timestamp=when,
                    method="GET",
                    resource=(
                        "/robots.txt"
                        if noise_rng.random() < 0.4
                        else _pick(noise_rng, _NEXT_PAGES)
                    ),
                    protocol="HTTP/1.1",
                    status=200,
                    bytes_sent=500 + int(noise_rng.random() * 3000),
                    referrer=None,
                    user_agent=agent,
                ))
    return lines


def simulate_to_dir(
    config: WorkloadConfig,
    out_dir: str | Path,
    noise: bool = True,
) -> dict[str, Path]:
    """Generate one workload and write replay, access log, and truth files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events, truth = generate(config)
    paths = {
        "replay": out / "events.replay",
        "eclf": out / "access.log",
        "truth": out / "truth.csv",
    }
    with open(paths["replay"], "w", encoding="utf-8", newline="") as fh:
        write_replay(events, fh)
    with open(paths["eclf"], "w", encoding="utf-8", newline="") as fh:
        emit_eclf(events, truth, config, fh, noise=noise)
    save_truth(truth, paths["truth"])
    return paths
