"""Classical server-log preprocessing.

The reference pipeline reconstructs visits from an access log the way log
miners have to: parse combined-format lines, drop irrelevant entries, key
users by (address, agent), split visits with time heuristics, and patch
cache-hidden navigation from referrers.  Its output can be scored against a
simulator ground truth, which is where the request-time collector and this
pipeline get compared on equal footing.
"""

from __future__ import annotations

import csv
import gzip
import re
import urllib.parse
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .enrichment import default_bots
from .truth import GroundTruth

DEFAULT_PAGE_GAP = 600.0
DEFAULT_SESSION_GAP = 1800.0
SESSIONIZE_MODES = ("page_gap", "session_duration", "both")
DEFAULT_STATIC_EXTENSIONS = (".png", ".jpg", ".gif", ".css", ".js", ".ico")

_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
           "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_MONTH_NUM = {name: i + 1 for i, name in enumerate(_MONTHS)}
_TS_RE = re.compile(
    r"^(\d{2})/([A-Za-z]{3})/(\d{4}):(\d{2}):(\d{2}):(\d{2}) ([+-])(\d{2})(\d{2})$"
)


class LineParseError(ValueError):
    def __init__(self, message: str, line: str = ""):
        super().__init__(message)
        self.line = line


@dataclass
class EclfEntry:
    ip: str
    identd: str
    authuser: str
    timestamp: datetime  # aware; keeps the zone the log was written in
    method: str
    resource: str
    protocol: str
    status: int
    bytes_sent: int | None
    referrer: str | None = None
    user_agent: str | None = None
    cookies: str | None = None


@dataclass
class CleanedEntry:
    ip: str
    timestamp: datetime
    resource: str
    referrer: str | None
    user_agent: str | None

    def epoch(self) -> int:
        return int(self.timestamp.timestamp())


@dataclass
class VisitEvent:
    timestamp: datetime
    resource: str
    referrer: str | None = None
    inferred: bool = False

    def epoch(self) -> int:
        return int(self.timestamp.timestamp())


@dataclass
class Visit:
    user_key: tuple[str, str]  # (ip, user agent or "")
    events: list[VisitEvent]
    session_id: int | None = None


@dataclass
class FilterStats:
    kept: int = 0
    dropped_status: int = 0
    dropped_static: int = 0
    dropped_bot: int = 0

    def dropped(self) -> int:
        return self.dropped_status + self.dropped_static + self.dropped_bot


@dataclass
class PathStats:
    inferred: int = 0
    incomplete: int = 0


# ---------------------------------------------------------------------------
# parsing and rendering
# ---------------------------------------------------------------------------

def _parse_timestamp(text: str) -> datetime:
    m = _TS_RE.match(text)
    if m is None:
        raise LineParseError(f"bad timestamp: {text!r}")
    day, mon, year, hh, mm, ss, sign, zh, zm = m.groups()
    month = _MONTH_NUM.get(mon)
    if month is None:
        raise LineParseError(f"bad month: {mon!r}")
    offset = timedelta(hours=int(zh), minutes=int(zm))
    if sign == "-":
        offset = -offset
    return datetime(
        int(year), month, int(day), int(hh), int(mm), int(ss),
        tzinfo=timezone(offset),
    )


def _format_timestamp(value: datetime) -> str:
    offset = value.utcoffset() or timedelta(0)
    total = int(offset.total_seconds())
    sign = "+" if total >= 0 else "-"
    total = abs(total)
    return (
        f"{value.day:02d}/{_MONTHS[value.month - 1]}/{value.year:04d}:"
        f"{value.hour:02d}:{value.minute:02d}:{value.second:02d}"
        f" {sign}{total // 3600:02d}{(total % 3600) // 60:02d}"
    )


def _split_tokens(line: str) -> list[str]:
    """Split a log line into space-separated tokens honoring "..." and [...]."""
    tokens: list[str] = []
    i = 0
    n = len(line)
    while i < n:
        if line[i] == " ":
            i += 1
            continue
        if line[i] == '"':
            i += 1
            out = []
            while i < n and line[i] != '"':
                if line[i] == "\\" and i + 1 < n:
                    out.append(line[i + 1])
                    i += 2
                else:
                    out.append(line[i])
                    i += 1
            if i >= n:
                raise LineParseError("unterminated quote", line)
            i += 1
            tokens.append('"' + "".join(out))
        elif line[i] == "[":
            end = line.find("]", i)
            if end < 0:
                raise LineParseError("unterminated bracket", line)
            tokens.append(line[i + 1:end])
            i = end + 1
        else:
            end = line.find(" ", i)
            if end < 0:
                end = n
            tokens.append(line[i:end])
            i = end
    return tokens


def parse_log_line(line: str, log_format: str = "ECLF") -> EclfEntry:
    """Parse one CLF or ECLF line into its fields.

    ECLF is CLF plus quoted referrer and user agent; a trailing quoted
    cookies field is kept when present.  '-' marks an absent value.
    """
    if log_format not in ("CLF", "ECLF"):
        raise ValueError(f"log_format must be CLF or ECLF, got {log_format!r}")
    tokens = _split_tokens(line)
    expected = 7 if log_format == "CLF" else 9
    if len(tokens) < expected or len(tokens) > expected + (0 if log_format == "CLF" else 1):
        raise LineParseError(
            f"expected {expected} fields for {log_format}, got {len(tokens)}", line
        )
    ip, identd, authuser, ts_text, request = tokens[:5]
    if not request.startswith('"'):
        raise LineParseError("request line must be quoted", line)
    identd = None if identd == "-" else identd
    authuser = None if authuser == "-" else authuser
    parts = request[1:].split(" ")
    if len(parts) != 3:
        raise LineParseError(f"bad request line: {request[1:]!r}", line)
    method, resource, protocol = parts
    if not (resource.startswith("/") or resource == "*"):
        raise LineParseError(f"bad resource: {resource!r}", line)
    try:
        status = int(tokens[5])
    except ValueError:
        raise LineParseError(f"bad status: {tokens[5]!r}", line) from None
    if not 100 <= status <= 599:
        raise LineParseError(f"status out of range: {status}", line)
    raw_bytes = tokens[6]
    if raw_bytes == "-":
        bytes_sent = None
    else:
        try:
            bytes_sent = int(raw_bytes)
        except ValueError:
            raise LineParseError(f"bad byte count: {raw_bytes!r}", line) from None
        if bytes_sent < 0:
            raise LineParseError(f"negative byte count: {bytes_sent}", line)
    entry = EclfEntry(
        ip=ip,
        identd=identd,
        authuser=authuser,
        timestamp=_parse_timestamp(ts_text),
        method=method,
        resource=resource,
        protocol=protocol,
        status=status,
        bytes_sent=bytes_sent,
    )
    if log_format == "ECLF":
        entry.referrer = None if tokens[7] == '"-' else tokens[7][1:]
        entry.user_agent = None if tokens[8] == '"-' else tokens[8][1:]
        if len(tokens) == 10:
            entry.cookies = tokens[9][1:]
    return entry


def _quoted(value: str | None) -> str:
    if value is None:
        return '"-"'
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_log_line(entry: EclfEntry, log_format: str = "ECLF") -> str:
    """Inverse of :func:`parse_log_line` for well-formed lines."""
    body = (
        f"{entry.ip} {entry.identd or '-'} {entry.authuser or '-'}"
        f" [{_format_timestamp(entry.timestamp)}]"
        f' "{entry.method} {entry.resource} {entry.protocol}"'
        f" {entry.status} {'-' if entry.bytes_sent is None else entry.bytes_sent}"
    )
    if log_format == "CLF":
        return body
    body += f" {_quoted(entry.referrer)} {_quoted(entry.user_agent)}"
    if entry.cookies is not None:
        body += f" {_quoted(entry.cookies)}"
    return body


def read_log(path: str | Path, log_format: str = "ECLF") -> Iterator[tuple[EclfEntry | None, str]]:
    """Yield (entry, line) pairs; entry is None for unparseable lines.

    Transparently reads gzip when the file name ends with .gz.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            try:
                yield parse_log_line(line, log_format), line
            except LineParseError:
                yield None, line


# ---------------------------------------------------------------------------
# filtering and user identification
# ---------------------------------------------------------------------------

def _static_extension(resource: str, extensions: Sequence[str]) -> bool:
    path = resource.split("?", 1)[0].lower()
    return any(path.endswith(ext) for ext in extensions)


def filter_entries(
    entries: Iterable[EclfEntry],
    static_extensions: Sequence[str] = DEFAULT_STATIC_EXTENSIONS,
    bot_substrings: Sequence[str] | None = None,
) -> tuple[list[CleanedEntry], FilterStats]:
    """Keep successful page requests from human clients.

    Drops, in order: status other than 200, static resources by extension,
    and robot agents.  Each dropped entry is counted once, under the first
    rule that removed it.
    """
    if bot_substrings is None:
        bot_substrings = default_bots()
    bots = tuple(b.lower() for b in bot_substrings)
    stats = FilterStats()
    cleaned: list[CleanedEntry] = []
    for entry in entries:
        if entry.status != 200:
            stats.dropped_status += 1
            continue
        if _static_extension(entry.resource, static_extensions):
            stats.dropped_static += 1
            continue
        agent = entry.user_agent or ""
        lowered = agent.lower()
        if agent and any(bot in lowered for bot in bots):
            stats.dropped_bot += 1
            continue
        stats.kept += 1
        cleaned.append(
            CleanedEntry(
                ip=entry.ip,
                timestamp=entry.timestamp,
                resource=entry.resource,
                referrer=entry.referrer,
                user_agent=entry.user_agent,
            )
        )
    return cleaned, stats


def identify_users(cleaned: Iterable[CleanedEntry]) -> list[Visit]:
    """Group cleaned entries into per-user visit streams keyed by (ip, agent).

    Events are time-ordered within a user; users come out sorted by key so
    the output is reproducible.
    """
    groups: dict[tuple[str, str], list[CleanedEntry]] = {}
    for entry in cleaned:
        key = (entry.ip, entry.user_agent or "")
        groups.setdefault(key, []).append(entry)
    visits = []
    for key in sorted(groups):
        events = sorted(groups[key], key=lambda e: e.timestamp)
        visits.append(
            Visit(
                user_key=key,
                events=[
                    VisitEvent(e.timestamp, e.resource, e.referrer) for e in events
                ],
            )
        )
    return visits


# ---------------------------------------------------------------------------
# sessionization
# ---------------------------------------------------------------------------

def sessionize(
    visit: Visit,
    session_gap: float = DEFAULT_SESSION_GAP,
    page_gap: float = DEFAULT_PAGE_GAP,
    mode: str = "both",
    split_at_midnight: bool = False,
) -> list[Visit]:
    """Split one user's visit stream into sessions.

    ``page_gap`` splits when the pause between consecutive pages exceeds the
    threshold; ``session_duration`` splits when the time since the session
    started exceeds it; ``both`` applies either.  ``split_at_midnight``
    reproduces the defective calendar-day cut some pipelines apply.
    """
    if mode not in SESSIONIZE_MODES:
        raise ValueError(f"mode must be one of {SESSIONIZE_MODES}")
    if session_gap <= 0 or page_gap <= 0:
        raise ValueError("gap thresholds must be positive")
    sessions: list[Visit] = []
    current: list[VisitEvent] = []
    session_start: datetime | None = None
    previous: datetime | None = None
    for event in visit.events:
        split = False
        if current:
            assert session_start is not None and previous is not None
            page_pause = (event.timestamp - previous).total_seconds()
            duration = (event.timestamp - session_start).total_seconds()
            if mode in ("page_gap", "both") and page_pause > page_gap:
                split = True
            if mode in ("session_duration", "both") and duration > session_gap:
                split = True
            if split_at_midnight and event.timestamp.date() != previous.date():
                split = True
        if split:
            sessions.append(Visit(visit.user_key, current, len(sessions) + 1))
            current = []
        if not current:
            session_start = event.timestamp
        current.append(event)
        previous = event.timestamp
    if current:
        sessions.append(Visit(visit.user_key, current, len(sessions) + 1))
    return sessions


# ---------------------------------------------------------------------------
# path completion
# ---------------------------------------------------------------------------

def _referrer_resource(referrer: str, site_hosts: set[str]) -> str | None:
    """Referrer as an on-site resource path, or None when off-site.

    A site-relative referrer ("/a.php") is on-site by construction; an
    absolute URL is on-site only when its host is in ``site_hosts``.
    """
    try:
        parts = urllib.parse.urlsplit(referrer)
    except ValueError:
        return None
    host = parts.hostname
    if host is None and referrer.startswith("/"):
        return referrer
    if not host or host.lower() not in site_hosts:
        return None
    resource = parts.path or "/"
    if parts.query:
        resource = f"{resource}?{parts.query}"
    return resource


def complete_paths(
    events: Sequence[VisitEvent],
    site_hosts: Iterable[str] = (),
    site_graph: dict[str, set[str]] | None = None,
) -> tuple[list[VisitEvent], PathStats]:
    """Insert cache-hidden back navigations inferred from referrers.

    When an event's on-site referrer is not the previous page but did occur
    earlier in the session, the pages walked back over are re-inserted in
    reverse order, marked inferred, timestamped with the following request.
    A referrer that never occurred earlier counts as incomplete.  With a
    ``site_graph`` the inferred click must be a known link, else the gap is
    left alone and counted incomplete.
    """
    hosts = {h.lower() for h in site_hosts}
    stats = PathStats()
    result: list[VisitEvent] = []
    for event in events:
        if result and event.referrer:
            ref_resource = _referrer_resource(event.referrer, hosts)
            if ref_resource is not None and ref_resource != result[-1].resource:
                match = None
                for j in range(len(result) - 2, -1, -1):
                    if result[j].resource == ref_resource:
                        match = j
                        break
                if match is None:
                    stats.incomplete += 1
                elif (
                    site_graph is not None
                    and event.resource not in site_graph.get(ref_resource, set())
                ):
                    stats.incomplete += 1
                else:
                    for k in range(len(result) - 2, match - 1, -1):
                        result.append(
                            VisitEvent(
                                timestamp=event.timestamp,
                                resource=result[k].resource,
                                inferred=True,
                            )
                        )
                        stats.inferred += 1
        result.append(event)
    return result, stats


# ---------------------------------------------------------------------------
# accuracy scoring
# ---------------------------------------------------------------------------

@dataclass
class AccuracyReport:
    user_precision: float
    user_recall: float
    session_precision: float
    session_recall: float
    exact_session_match_rate: float
    truth_sessions: int = 0
    predicted_sessions: int = 0

    def to_text(self, prefix: str = "") -> str:
        names = (
            "user_precision", "user_recall", "session_precision",
            "session_recall", "exact_session_match_rate",
        )
        lines = [f"{prefix}{n}: {getattr(self, n):.6f}" for n in names]
        lines.append(f"{prefix}truth_sessions: {self.truth_sessions}")
        lines.append(f"{prefix}predicted_sessions: {self.predicted_sessions}")
        return "\n".join(lines)


class UniverseMismatchError(ValueError):
    """Prediction and truth do not describe the same set of events."""


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


def _pairwise(pred: dict[int, int], truth: dict[int, int]) -> tuple[float, float]:
    """Pairwise precision/recall of a predicted clustering of event ids."""
    contingency: dict[tuple[int, int], int] = {}
    pred_sizes: dict[int, int] = {}
    truth_sizes: dict[int, int] = {}
    for event_id, p_cluster in pred.items():
        t_cluster = truth[event_id]
        contingency[(p_cluster, t_cluster)] = contingency.get((p_cluster, t_cluster), 0) + 1
        pred_sizes[p_cluster] = pred_sizes.get(p_cluster, 0) + 1
        truth_sizes[t_cluster] = truth_sizes.get(t_cluster, 0) + 1
    together_both = sum(_pairs(n) for n in contingency.values())
    together_pred = sum(_pairs(n) for n in pred_sizes.values())
    together_truth = sum(_pairs(n) for n in truth_sizes.values())
    precision = together_both / together_pred if together_pred else 1.0
    recall = together_both / together_truth if together_truth else 1.0
    return precision, recall


def score_labelings(
    pred_session: dict[int, object],
    pred_user: dict[int, object],
    truth_session: dict[int, object],
    truth_user: dict[int, object],
) -> AccuracyReport:
    """Score predicted session/user labels against truth labels.

    All four maps must cover the same event ids.  Sessions are matched by
    event-set equality for the exact rate; precision/recall are pairwise
    co-membership metrics.
    """
    ids = set(pred_session)
    if ids != set(truth_session) or ids != set(pred_user) or ids != set(truth_user):
        raise UniverseMismatchError("label maps cover different events")

    def renumber(labels: dict[int, object]) -> dict[int, int]:
        mapping: dict[object, int] = {}
        out = {}
        for event_id in sorted(labels):
            label = labels[event_id]
            if label not in mapping:
                mapping[label] = len(mapping)
            out[event_id] = mapping[label]
        return out

    ps = renumber(pred_session)
    pu = renumber(pred_user)
    ts = renumber(truth_session)
    tu = renumber(truth_user)

    session_precision, session_recall = _pairwise(ps, ts)
    user_precision, user_recall = _pairwise(pu, tu)

    truth_sets: dict[int, set[int]] = {}
    pred_sets: dict[int, set[int]] = {}
    for event_id, cluster in ts.items():
        truth_sets.setdefault(cluster, set()).add(event_id)
    for event_id, cluster in ps.items():
        pred_sets.setdefault(cluster, set()).add(event_id)
    predicted = {frozenset(s) for s in pred_sets.values()}
    exact = sum(1 for s in truth_sets.values() if frozenset(s) in predicted)
    return AccuracyReport(
        user_precision=user_precision,
        user_recall=user_recall,
        session_precision=session_precision,
        session_recall=session_recall,
        exact_session_match_rate=exact / len(truth_sets) if truth_sets else 1.0,
        truth_sessions=len(truth_sets),
        predicted_sessions=len(pred_sets),
    )


def score_against_truth(sessions: Sequence[Visit], truth: GroundTruth) -> AccuracyReport:
    """Score reconstructed sessions against ground truth.

    Real (non-inferred) events are joined to non-cached truth events by
    (epoch, ip, resource); duplicate keys pair up in occurrence order.  The
    two universes must contain the same key multiset.
    """
    key_to_truth: dict[tuple[int, str, str], list[int]] = {}
    for truth_event in truth.events:
        if truth_event.cached:
            continue
        key = (truth_event.epoch, truth_event.ip, truth_event.resource)
        key_to_truth.setdefault(key, []).append(truth_event.event_seq)

    pred_session: dict[int, object] = {}
    pred_user: dict[int, object] = {}
    flat: list[tuple[tuple[int, str, str], object, object]] = []
    for visit in sessions:
        cluster = (visit.user_key, visit.session_id)
        for event in visit.events:
            if event.inferred:
                continue
            key = (event.epoch(), visit.user_key[0], event.resource)
            flat.append((key, cluster, visit.user_key))
    flat.sort(key=lambda item: (item[0], str(item[1])))

    consumed: dict[tuple[int, str, str], int] = {}
    for key, cluster, user_key in flat:
        candidates = key_to_truth.get(key)
        index = consumed.get(key, 0)
        if candidates is None or index >= len(candidates):
            raise UniverseMismatchError(f"predicted event not in truth: {key}")
        consumed[key] = index + 1
        event_seq = candidates[index]
        pred_session[event_seq] = cluster
        pred_user[event_seq] = user_key
    unmatched = {
        key for key, ids in key_to_truth.items() if consumed.get(key, 0) != len(ids)
    }
    if unmatched:
        raise UniverseMismatchError(f"truth events missing from prediction: {sorted(unmatched)[:3]}")

    truth_session = {}
    truth_user = {}
    for truth_event in truth.events:
        if truth_event.cached:
            continue
        truth_session[truth_event.event_seq] = truth_event.true_session_id
        truth_user[truth_event.event_seq] = truth_event.true_user_id
    return score_labelings(pred_session, pred_user, truth_session, truth_user)


# ---------------------------------------------------------------------------
# pipeline orchestration and session CSV
# ---------------------------------------------------------------------------

@dataclass
class PreprocessResult:
    sessions: list[Visit]
    lines: int = 0
    parse_errors: int = 0
    filter_stats: FilterStats = field(default_factory=FilterStats)
    users: int = 0
    path_stats: PathStats = field(default_factory=PathStats)

    def stats_text(self) -> str:
        f = self.filter_stats
        pairs = [
            ("lines", self.lines),
            ("parse_errors", self.parse_errors),
            ("kept", f.kept),
            ("dropped_status", f.dropped_status),
            ("dropped_static", f.dropped_static),
            ("dropped_bot", f.dropped_bot),
            ("users", self.users),
            ("sessions", len(self.sessions)),
            ("inferred_events", self.path_stats.inferred),
            ("incomplete_paths", self.path_stats.incomplete),
        ]
        return "\n".join(f"{k}: {v}" for k, v in pairs)


def preprocess_log(
    path: str | Path,
    log_format: str = "ECLF",
    page_gap: float = DEFAULT_PAGE_GAP,
    session_gap: float = DEFAULT_SESSION_GAP,
    mode: str = "both",
    split_at_midnight: bool = False,
    site_hosts: Iterable[str] = (),
    static_extensions: Sequence[str] = DEFAULT_STATIC_EXTENSIONS,
) -> PreprocessResult:
    """Run the whole pipeline over a log file."""
    entries = []
    lines = 0
    parse_errors = 0
    for entry, _ in read_log(path, log_format):
        lines += 1
        if entry is None:
            parse_errors += 1
        else:
            entries.append(entry)
    cleaned, filter_stats = filter_entries(entries, static_extensions)
    visits = identify_users(cleaned)
    sessions: list[Visit] = []
    path_stats = PathStats()
    for visit in visits:
        for session in sessionize(
            visit, session_gap, page_gap, mode, split_at_midnight
        ):
            completed, stats = complete_paths(session.events, site_hosts)
            session.events = completed
            path_stats.inferred += stats.inferred
            path_stats.incomplete += stats.incomplete
            sessions.append(session)
    return PreprocessResult(
        sessions=sessions,
        lines=lines,
        parse_errors=parse_errors,
        filter_stats=filter_stats,
        users=len(visits),
        path_stats=path_stats,
    )


_SESSION_CSV_HEADER = ("user_key", "session_id", "seq", "time", "resource", "inferred")


def write_sessions_csv(sessions: Sequence[Visit], stream) -> int:
    """One row per event: user_key, session_id, seq, epoch, resource, inferred."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_SESSION_CSV_HEADER)
    n = 0
    for visit in sessions:
        key = f"{visit.user_key[0]}|{visit.user_key[1]}"
        for seq, event in enumerate(visit.events, start=1):
            writer.writerow(
                [key, visit.session_id, seq, event.epoch(), event.resource, int(event.inferred)]
            )
            n += 1
    return n


def read_sessions_csv(stream) -> list[Visit]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != list(_SESSION_CSV_HEADER):
        raise ValueError(f"unexpected sessions header: {header}")
    grouped: dict[tuple[str, int], Visit] = {}
    epoch0 = datetime(1970, 1, 1, tzinfo=timezone.utc)
    for row in reader:
        if not row:
            continue
        key_text, session_id, _, epoch, resource, inferred = row
        ip, _, agent = key_text.partition("|")
        cluster = (key_text, int(session_id))
        visit = grouped.get(cluster)
        if visit is None:
            visit = Visit(user_key=(ip, agent), events=[], session_id=int(session_id))
            grouped[cluster] = visit
        visit.events.append(
            VisitEvent(
                timestamp=epoch0 + timedelta(seconds=int(epoch)),
                resource=resource,
                inferred=bool(int(inferred)),
            )
        )
    return [grouped[k] for k in sorted(grouped, key=lambda c: (c[0], c[1]))]
