"""Request events and the line-oriented replay file codec.

A replay file carries one request per line as space-separated ``key=value``
tokens with URL-escaped values, so any event the embedded API accepts can be
stored in a plain text file and fed back later.
"""

from __future__ import annotations

import urllib.parse
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Iterator, TextIO

METHODS = ("GET", "POST")

# Characters left unescaped in replay values.  Space, newline and '%' must
# always be escaped; '=' may stay literal because the reader splits each
# token on the first '=' only.
_SAFE = ":/?&=._-~+@,;()'*!"


class ReplayFormatError(ValueError):
    """A replay line could not be decoded."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class AppPageResult:
    """End-of-request application data for one served page."""

    page_title: str = ""
    web_message: str = ""
    subtitle: str = ""
    page_load_time: float = 0.0
    error_text: str | None = None

    def __post_init__(self) -> None:
        if self.page_load_time < 0:
            raise ValueError("page_load_time must be >= 0")


@dataclass
class RawRequestEvent:
    """One HTTP request as seen by the application tier.

    ``session_token`` is always present: the serving layer issues one on the
    first response even when the client arrived without a cookie.
    """

    client_ip: str
    timestamp: datetime
    method: str
    url: str
    session_token: str
    user_agent: str = ""
    referrer: str | None = None
    auth_user: str | None = None
    app_service: str = ""
    module: str = ""
    server_id: int = 1
    get_params: dict[str, str] = field(default_factory=dict)
    post_params: dict[str, str] = field(default_factory=dict)
    cookies: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.session_token:
            raise ValueError("session_token must be non-empty")
        if self.referrer == "":
            self.referrer = None
        if self.auth_user == "":
            self.auth_user = None


def _encode_map(m: dict[str, str]) -> str:
    return urllib.parse.urlencode(m, quote_via=urllib.parse.quote)


def _decode_map(s: str) -> dict[str, str]:
    if not s:
        return {}
    return dict(urllib.parse.parse_qsl(s, keep_blank_values=True))


def format_replay_line(event: RawRequestEvent) -> str:
    pairs: list[tuple[str, str]] = [
        ("ip", event.client_ip),
        ("time", event.timestamp.isoformat(sep="T", timespec="seconds")),
        ("method", event.method),
        ("url", event.url),
        ("token", event.session_token),
        ("agent", event.user_agent),
    ]
    if event.referrer is not None:
        pairs.append(("referrer", event.referrer))
    if event.auth_user is not None:
        pairs.append(("user", event.auth_user))
    pairs.extend(
        [
            ("service", event.app_service),
            ("module", event.module),
            ("server", str(event.server_id)),
            ("get", _encode_map(event.get_params)),
            ("post", _encode_map(event.post_params)),
            ("cookies", _encode_map(event.cookies)),
        ]
    )
    return " ".join(f"{k}={urllib.parse.quote(v, safe=_SAFE)}" for k, v in pairs)


_REQUIRED_KEYS = frozenset({"ip", "time", "method", "url", "token"})
_ALL_KEYS = _REQUIRED_KEYS | {
    "agent",
    "referrer",
    "user",
    "service",
    "module",
    "server",
    "get",
    "post",
    "cookies",
}


def parse_replay_line(line: str, line_no: int | None = None) -> RawRequestEvent:
    values: dict[str, str] = {}
    for token in line.split(" "):
        if not token:
            raise ReplayFormatError("empty token (double space?)", line_no)
        key, sep, raw = token.partition("=")
        if not sep:
            raise ReplayFormatError(f"token without '=': {token!r}", line_no)
        if key not in _ALL_KEYS:
            raise ReplayFormatError(f"unknown key {key!r}", line_no)
        if key in values:
            raise ReplayFormatError(f"duplicate key {key!r}", line_no)
        values[key] = urllib.parse.unquote(raw)
    missing = _REQUIRED_KEYS - values.keys()
    if missing:
        raise ReplayFormatError(f"missing keys: {sorted(missing)}", line_no)
    try:
        when = datetime.fromisoformat(values["time"])
    except ValueError as exc:
        raise ReplayFormatError(f"bad time: {exc}", line_no) from None
    try:
        server = int(values.get("server", "1"))
    except ValueError:
        raise ReplayFormatError(f"bad server id: {values['server']!r}", line_no) from None
    try:
        return RawRequestEvent(
            client_ip=values["ip"],
            timestamp=when,
            method=values["method"],
            url=values["url"],
            session_token=values["token"],
            user_agent=values.get("agent", ""),
            referrer=values.get("referrer"),
            auth_user=values.get("user"),
            app_service=values.get("service", ""),
            module=values.get("module", ""),
            server_id=server,
            get_params=_decode_map(values.get("get", "")),
            post_params=_decode_map(values.get("post", "")),
            cookies=_decode_map(values.get("cookies", "")),
        )
    except ValueError as exc:
        raise ReplayFormatError(str(exc), line_no) from None


def write_replay(events: Iterable[RawRequestEvent], stream: TextIO) -> int:
    """Write events one per line; returns the number written."""
    n = 0
    for event in events:
        stream.write(format_replay_line(event))
        stream.write("\n")
        n += 1
    return n


def read_replay(stream: Iterable[str]) -> Iterator[RawRequestEvent]:
    """Yield events from a replay stream.

    Blank lines and '#' comments are skipped.  Timestamps must be
    non-decreasing, mirroring how a live request stream arrives.
    """
    last: datetime | None = None
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        event = parse_replay_line(line, line_no)
        if last is not None and event.timestamp < last:
            raise ReplayFormatError("timestamps must be non-decreasing", line_no)
        last = event.timestamp
        yield event
