"""Embedded relational log store.

Five tables mirror the collection data model: ``user_info`` (app-managed
accounts), ``open_sessions`` (live bookkeeping), ``log_geoip`` (country
ranges), ``log_session`` (one row per visit) and ``log_page`` (one row per
pageview, foreign-keyed to its session).  SQLite provides transactions and
referential integrity; a process-wide lock gives single-writer semantics so
the collector can be driven from many request threads.
"""

from __future__ import annotations

import csv
import io
import json
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .enrichment import UNKNOWN, GeoIpRange
from .events import AppPageResult

USER_TYPES = (
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
GENDERS = ("male", "female", "not_applicable")
NO_GENDER_TYPES = ("guest", "unit_mission")
END_REASONS = ("logout", "timeout")
REFERRAL_CLASSES = ("direct", "internal", "search_engine", "external")

_DT_FMT = "%Y-%m-%d %H:%M:%S"


class StorageError(Exception):
    pass


class ConstraintError(StorageError):
    pass


class ForeignKeyError(StorageError):
    pass


class NotFoundError(StorageError):
    pass


class MapFormatError(StorageError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


def dt_to_text(value: datetime) -> str:
    return value.strftime(_DT_FMT)


def text_to_dt(value: str) -> datetime:
    return datetime.strptime(value, _DT_FMT)


def serialize_map(m: dict[str, str]) -> str:
    """Canonical text for a string map: JSON with sorted keys.

    Equal maps serialize to identical bytes regardless of insertion order;
    the empty map is exactly ``{}``.
    """
    for key, value in m.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ConstraintError("map keys and values must be strings")
    return json.dumps(m, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def deserialize_map(text: str) -> dict[str, str]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFormatError(exc.msg, exc.pos) from None
    if not isinstance(data, dict):
        raise MapFormatError("expected an object")
    for key, value in data.items():
        if not isinstance(value, str):
            raise MapFormatError(f"value for {key!r} is not a string")
    return data


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class UserInfo:
    user_id: int
    username: str
    user_type: str
    gender: str

    def validate(self) -> None:
        if not self.username:
            raise ConstraintError("username must be non-empty")
        if self.user_type not in USER_TYPES or self.user_type == "guest":
            raise ConstraintError(f"bad user_type for account: {self.user_type!r}")
        _check_gender(self.user_type, self.gender)


def _check_gender(user_type: str, gender: str) -> None:
    if gender not in GENDERS:
        raise ConstraintError(f"bad gender: {gender!r}")
    if user_type in NO_GENDER_TYPES:
        if gender != "not_applicable":
            raise ConstraintError(f"{user_type} records must carry gender not_applicable")
    elif gender == "not_applicable":
        raise ConstraintError(f"{user_type} records must carry male or female")


@dataclass
class SessionRecord:
    ip: str
    started_at: datetime
    opn_id: int | None = None
    user_id: int | None = None
    username: str | None = None
    user_type: str = "guest"
    gender: str = "not_applicable"
    country_code: str = UNKNOWN
    browser_name: str = UNKNOWN
    browser_version: str = UNKNOWN
    os_name: str = UNKNOWN
    os_version: str = UNKNOWN
    device_type: str = UNKNOWN
    language: str | None = None
    referrer_url: str | None = None
    referral_class: str = "direct"
    search_engine: str | None = None
    search_keywords: str | None = None
    ended_at: datetime | None = None
    end_reason: str | None = None

    def validate(self) -> None:
        if not self.ip:
            raise ConstraintError("ip must be non-empty")
        if self.user_type not in USER_TYPES:
            raise ConstraintError(f"bad user_type: {self.user_type!r}")
        if (self.user_id is None) != (self.user_type == "guest"):
            raise ConstraintError("user_id absent exactly for guest sessions")
        _check_gender(self.user_type, self.gender)
        if self.referral_class not in REFERRAL_CLASSES:
            raise ConstraintError(f"bad referral_class: {self.referral_class!r}")
        if self.end_reason is not None and self.end_reason not in END_REASONS:
            raise ConstraintError(f"bad end_reason: {self.end_reason!r}")
        if self.ended_at is not None and self.ended_at < self.started_at:
            raise ConstraintError("ended_at before started_at")


@dataclass
class PageRecord:
    log_opn_id: int
    log_datetime: datetime
    log_url: str
    log_details_id: int | None = None
    log_uid: int | None = None
    log_username: str | None = None
    log_date: date | None = None
    log_server: int = 1
    log_app_service: str = ""
    log_module: str = ""
    log_web_message: str = ""
    log_subtitle: str = ""
    log_page_title: str = ""
    log_cookie_serialize: str = "{}"
    log_session_serialize: str = "{}"
    log_post_serialize: str = "{}"
    log_get_serialize: str = "{}"
    log_page_load_time: float = 0.0
    log_error_text: str | None = None
    log_url_malformed: bool = False

    def validate(self) -> None:
        if self.log_date is None:
            self.log_date = self.log_datetime.date()
        elif self.log_date != self.log_datetime.date():
            raise ConstraintError("log_date must equal the date of log_datetime")
        if self.log_page_load_time < 0:
            raise ConstraintError("log_page_load_time must be >= 0")
        for text in (
            self.log_cookie_serialize,
            self.log_session_serialize,
            self.log_post_serialize,
            self.log_get_serialize,
        ):
            deserialize_map(text)


@dataclass
class OpenSession:
    session_token: str
    opn_id: int
    user_id: int | None
    started_at: datetime
    last_activity: datetime


def parse_load_time(text: str) -> float:
    """Parse a load time that may use a decimal comma ("0,0266")."""
    return float(text.strip().replace(",", "."))


# ---------------------------------------------------------------------------
# schema and row codecs
# ---------------------------------------------------------------------------

_SCHEMA = """
PRAGMA foreign_keys = ON;
CREATE TABLE IF NOT EXISTS user_info (
    user_id     INTEGER PRIMARY KEY,
    username    TEXT NOT NULL UNIQUE,
    user_type   TEXT NOT NULL,
    gender      TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS log_geoip (
    start_ip     INTEGER PRIMARY KEY,
    end_ip       INTEGER NOT NULL,
    country_code TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS log_session (
    opn_id          INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id         INTEGER,
    username        TEXT,
    user_type       TEXT NOT NULL,
    gender          TEXT NOT NULL,
    ip              TEXT NOT NULL,
    country_code    TEXT NOT NULL,
    browser_name    TEXT NOT NULL,
    browser_version TEXT NOT NULL,
    os_name         TEXT NOT NULL,
    os_version      TEXT NOT NULL,
    device_type     TEXT NOT NULL,
    language        TEXT,
    referrer_url    TEXT,
    referral_class  TEXT NOT NULL,
    search_engine   TEXT,
    search_keywords TEXT,
    started_at      TEXT NOT NULL,
    ended_at        TEXT,
    end_reason      TEXT
);
CREATE TABLE IF NOT EXISTS open_sessions (
    session_token TEXT PRIMARY KEY,
    opn_id        INTEGER NOT NULL UNIQUE REFERENCES log_session(opn_id),
    user_id       INTEGER,
    started_at    TEXT NOT NULL,
    last_activity TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS log_page (
    log_details_id        INTEGER PRIMARY KEY AUTOINCREMENT,
    log_opn_id            INTEGER NOT NULL REFERENCES log_session(opn_id),
    log_uid               INTEGER,
    log_username          TEXT,
    log_datetime          TEXT NOT NULL,
    log_date              TEXT NOT NULL,
    log_server            INTEGER NOT NULL,
    log_app_service       TEXT NOT NULL,
    log_module            TEXT NOT NULL,
    log_url               TEXT NOT NULL,
    log_web_message       TEXT NOT NULL,
    log_subtitle          TEXT NOT NULL,
    log_page_title        TEXT NOT NULL,
    log_cookie_serialize  TEXT NOT NULL,
    log_session_serialize TEXT NOT NULL,
    log_post_serialize    TEXT NOT NULL,
    log_get_serialize     TEXT NOT NULL,
    log_page_load_time    REAL NOT NULL,
    log_error_text        TEXT,
    log_url_malformed     INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS idx_page_session ON log_page(log_opn_id);
"""

_SESSION_COLS = (
    "opn_id", "user_id", "username", "user_type", "gender", "ip", "country_code",
    "browser_name", "browser_version", "os_name", "os_version", "device_type",
    "language", "referrer_url", "referral_class", "search_engine",
    "search_keywords", "started_at", "ended_at", "end_reason",
)
_PAGE_COLS = (
    "log_details_id", "log_opn_id", "log_uid", "log_username", "log_datetime",
    "log_date", "log_server", "log_app_service", "log_module", "log_url",
    "log_web_message", "log_subtitle", "log_page_title", "log_cookie_serialize",
    "log_session_serialize", "log_post_serialize", "log_get_serialize",
    "log_page_load_time", "log_error_text", "log_url_malformed",
)
_USER_COLS = ("user_id", "username", "user_type", "gender")
_GEOIP_COLS = ("start_ip", "end_ip", "country_code")
_OPEN_COLS = ("session_token", "opn_id", "user_id", "started_at", "last_activity")

TABLE_COLUMNS = {
    "user_info": _USER_COLS,
    "log_geoip": _GEOIP_COLS,
    "log_session": _SESSION_COLS,
    "open_sessions": _OPEN_COLS,
    "log_page": _PAGE_COLS,
}

_TABLE_KEYS = {
    "user_info": "user_id",
    "log_geoip": "start_ip",
    "log_session": "opn_id",
    "open_sessions": "opn_id",
    "log_page": "log_details_id",
}

# CSV cannot tell an empty string from NULL, so on import the empty cell
# means NULL exactly where the schema allows NULL and the empty string
# everywhere else.  Must track the nullable columns in _SCHEMA.
_NULLABLE_COLUMNS = {
    "user_info": frozenset(),
    "log_geoip": frozenset(),
    "log_session": frozenset(
        {
            "user_id", "username", "language", "referrer_url",
            "search_engine", "search_keywords", "ended_at", "end_reason",
        }
    ),
    "open_sessions": frozenset({"user_id"}),
    "log_page": frozenset({"log_uid", "log_username", "log_error_text"}),
}


def _session_to_row(rec: SessionRecord) -> tuple:
    return (
        rec.opn_id, rec.user_id, rec.username, rec.user_type, rec.gender, rec.ip,
        rec.country_code, rec.browser_name, rec.browser_version, rec.os_name,
        rec.os_version, rec.device_type, rec.language, rec.referrer_url,
        rec.referral_class, rec.search_engine, rec.search_keywords,
        dt_to_text(rec.started_at),
        dt_to_text(rec.ended_at) if rec.ended_at else None,
        rec.end_reason,
    )


def _session_from_row(row: Sequence[Any]) -> SessionRecord:
    return SessionRecord(
        opn_id=row[0], user_id=row[1], username=row[2], user_type=row[3],
        gender=row[4], ip=row[5], country_code=row[6], browser_name=row[7],
        browser_version=row[8], os_name=row[9], os_version=row[10],
        device_type=row[11], language=row[12], referrer_url=row[13],
        referral_class=row[14], search_engine=row[15], search_keywords=row[16],
        started_at=text_to_dt(row[17]),
        ended_at=text_to_dt(row[18]) if row[18] else None,
        end_reason=row[19],
    )


def _page_to_row(rec: PageRecord) -> tuple:
    return (
        rec.log_details_id, rec.log_opn_id, rec.log_uid, rec.log_username,
        dt_to_text(rec.log_datetime), rec.log_date.isoformat(), rec.log_server,
        rec.log_app_service, rec.log_module, rec.log_url, rec.log_web_message,
        rec.log_subtitle, rec.log_page_title, rec.log_cookie_serialize,
        rec.log_session_serialize, rec.log_post_serialize, rec.log_get_serialize,
        rec.log_page_load_time, rec.log_error_text, int(rec.log_url_malformed),
    )


def _page_from_row(row: Sequence[Any]) -> PageRecord:
    return PageRecord(
        log_details_id=row[0], log_opn_id=row[1], log_uid=row[2],
        log_username=row[3], log_datetime=text_to_dt(row[4]),
        log_date=date.fromisoformat(row[5]), log_server=row[6],
        log_app_service=row[7], log_module=row[8], log_url=row[9],
        log_web_message=row[10], log_subtitle=row[11], log_page_title=row[12],
        log_cookie_serialize=row[13], log_session_serialize=row[14],
        log_post_serialize=row[15], log_get_serialize=row[16],
        log_page_load_time=row[17], log_error_text=row[18],
        log_url_malformed=bool(row[19]),
    )


# ---------------------------------------------------------------------------
# the store
# ---------------------------------------------------------------------------

class LogStore:
    """Single-writer, multi-reader store over one SQLite connection."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        self._lock = threading.RLock()
        self._depth = 0
        with self._lock:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    @contextmanager
    def transaction(self) -> Iterator[sqlite3.Connection]:
        """Serialized transaction scope; nested scopes join the outer one."""
        with self._lock:
            if self._depth == 0:
                self._conn.execute("BEGIN IMMEDIATE")
            self._depth += 1
            try:
                yield self._conn
            except BaseException:
                self._depth -= 1
                if self._depth == 0:
                    self._conn.execute("ROLLBACK")
                raise
            else:
                self._depth -= 1
                if self._depth == 0:
                    self._conn.execute("COMMIT")

    def _query(self, sql: str, params: Sequence[Any] = ()) -> list:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    # -- user_info ---------------------------------------------------------

    def upsert_user(self, user: UserInfo) -> None:
        user.validate()
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO user_info (user_id, username, user_type, gender)"
                " VALUES (?, ?, ?, ?) ON CONFLICT(user_id) DO UPDATE SET"
                " username=excluded.username, user_type=excluded.user_type,"
                " gender=excluded.gender",
                (user.user_id, user.username, user.user_type, user.gender),
            )

    def get_user_by_name(self, username: str) -> UserInfo | None:
        rows = self._query(
            "SELECT user_id, username, user_type, gender FROM user_info WHERE username = ?",
            (username,),
        )
        if not rows:
            return None
        return UserInfo(*rows[0])

    def user_count(self) -> int:
        return self._query("SELECT COUNT(*) FROM user_info")[0][0]

    # -- geoip -------------------------------------------------------------

    def replace_geoip(self, ranges: Iterable[GeoIpRange]) -> int:
        with self.transaction() as conn:
            conn.execute("DELETE FROM log_geoip")
            rows = [(r.start_ip, r.end_ip, r.country_code) for r in ranges]
            conn.executemany("INSERT INTO log_geoip VALUES (?, ?, ?)", rows)
            return len(rows)

    # -- sessions ----------------------------------------------------------

    def insert_session(self, rec: SessionRecord) -> int:
        rec.validate()
        with self.transaction() as conn:
            if rec.opn_id is not None:
                current = conn.execute("SELECT MAX(opn_id) FROM log_session").fetchone()[0]
                if current is not None and rec.opn_id <= current:
                    raise ConstraintError("explicit opn_id must exceed all existing ids")
            try:
                cur = conn.execute(
                    f"INSERT INTO log_session ({', '.join(_SESSION_COLS)})"
                    f" VALUES ({', '.join('?' * len(_SESSION_COLS))})",
                    _session_to_row(rec),
                )
            except sqlite3.IntegrityError as exc:
                raise ConstraintError(str(exc)) from None
            rec.opn_id = cur.lastrowid
            return rec.opn_id

    def close_session(self, opn_id: int, ended_at: datetime, reason: str) -> None:
        if reason not in END_REASONS:
            raise ConstraintError(f"bad end_reason: {reason!r}")
        with self.transaction() as conn:
            rows = self._query(
                "SELECT started_at FROM log_session WHERE opn_id = ?", (opn_id,)
            )
            if not rows:
                raise NotFoundError(f"no session {opn_id}")
            if ended_at < text_to_dt(rows[0][0]):
                raise ConstraintError("ended_at before started_at")
            conn.execute(
                "UPDATE log_session SET ended_at = ?, end_reason = ? WHERE opn_id = ?",
                (dt_to_text(ended_at), reason, opn_id),
            )

    def get_session(self, opn_id: int) -> SessionRecord | None:
        rows = self._query(
            f"SELECT {', '.join(_SESSION_COLS)} FROM log_session WHERE opn_id = ?",
            (opn_id,),
        )
        return _session_from_row(rows[0]) if rows else None

    def session_count(self) -> int:
        return self._query("SELECT COUNT(*) FROM log_session")[0][0]

    # -- open sessions -----------------------------------------------------

    def get_open_session(self, token: str) -> OpenSession | None:
        rows = self._query(
            "SELECT session_token, opn_id, user_id, started_at, last_activity"
            " FROM open_sessions WHERE session_token = ?",
            (token,),
        )
        if not rows:
            return None
        tok, opn, uid, started, last = rows[0]
        return OpenSession(tok, opn, uid, text_to_dt(started), text_to_dt(last))

    def put_open_session(self, open_session: OpenSession) -> None:
        if open_session.last_activity < open_session.started_at:
            raise ConstraintError("last_activity before started_at")
        with self.transaction() as conn:
            try:
                conn.execute(
                    "INSERT INTO open_sessions VALUES (?, ?, ?, ?, ?)",
                    (
                        open_session.session_token,
                        open_session.opn_id,
                        open_session.user_id,
                        dt_to_text(open_session.started_at),
                        dt_to_text(open_session.last_activity),
                    ),
                )
            except sqlite3.IntegrityError as exc:
                if "FOREIGN KEY" in str(exc):
                    raise ForeignKeyError(str(exc)) from None
                raise ConstraintError(str(exc)) from None

    def touch_open_session(self, token: str, last_activity: datetime) -> None:
        with self.transaction() as conn:
            cur = conn.execute(
                "UPDATE open_sessions SET last_activity = MAX(last_activity, ?)"
                " WHERE session_token = ?",
                (dt_to_text(last_activity), token),
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"no open session for token {token!r}")

    def delete_open_session(self, token: str) -> bool:
        with self.transaction() as conn:
            cur = conn.execute("DELETE FROM open_sessions WHERE session_token = ?", (token,))
            return cur.rowcount > 0

    def iter_open_sessions(self) -> list[OpenSession]:
        rows = self._query(
            "SELECT session_token, opn_id, user_id, started_at, last_activity"
            " FROM open_sessions ORDER BY opn_id"
        )
        return [
            OpenSession(t, o, u, text_to_dt(s), text_to_dt(l)) for t, o, u, s, l in rows
        ]

    def open_session_count(self) -> int:
        return self._query("SELECT COUNT(*) FROM open_sessions")[0][0]

    # -- pages ---------------------------------------------------------------

    def insert_page(self, rec: PageRecord) -> int:
        rec.validate()
        with self.transaction() as conn:
            if rec.log_details_id is not None:
                current = conn.execute("SELECT MAX(log_details_id) FROM log_page").fetchone()[0]
                if current is not None and rec.log_details_id <= current:
                    raise ConstraintError("explicit log_details_id must exceed all existing ids")
            try:
                cur = conn.execute(
                    f"INSERT INTO log_page ({', '.join(_PAGE_COLS)})"
                    f" VALUES ({', '.join('?' * len(_PAGE_COLS))})",
                    _page_to_row(rec),
                )
            except sqlite3.IntegrityError as exc:
                if "FOREIGN KEY" in str(exc):
                    raise ForeignKeyError(str(exc)) from None
                raise ConstraintError(str(exc)) from None
            rec.log_details_id = cur.lastrowid
            return rec.log_details_id

    def update_page_result(self, page_id: int, result: AppPageResult) -> None:
        with self.transaction() as conn:
            cur = conn.execute(
                "UPDATE log_page SET log_page_title = ?, log_web_message = ?,"
                " log_subtitle = ?, log_page_load_time = ?, log_error_text = ?"
                " WHERE log_details_id = ?",
                (
                    result.page_title,
                    result.web_message,
                    result.subtitle,
                    result.page_load_time,
                    result.error_text,
                    page_id,
                ),
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"no page row {page_id}")

    def get_page(self, page_id: int) -> PageRecord | None:
        rows = self._query(
            f"SELECT {', '.join(_PAGE_COLS)} FROM log_page WHERE log_details_id = ?",
            (page_id,),
        )
        return _page_from_row(rows[0]) if rows else None

    def page_count(self) -> int:
        return self._query("SELECT COUNT(*) FROM log_page")[0][0]

    def join_sessions_pages(self) -> Iterator[tuple[SessionRecord, PageRecord]]:
        """Inner join of sessions and their pages, ordered by page id."""
        s_cols = ", ".join(f"s.{c}" for c in _SESSION_COLS)
        p_cols = ", ".join(f"p.{c}" for c in _PAGE_COLS)
        rows = self._query(
            f"SELECT {s_cols}, {p_cols} FROM log_session s"
            " JOIN log_page p ON p.log_opn_id = s.opn_id ORDER BY p.log_details_id"
        )
        split = len(_SESSION_COLS)
        for row in rows:
            yield _session_from_row(row[:split]), _page_from_row(row[split:])

    # -- CSV export / import -------------------------------------------------

    def export_table(self, table: str, stream) -> int:
        """Write one table as CSV (header + rows, ordered by primary key)."""
        cols = TABLE_COLUMNS.get(table)
        if cols is None:
            raise ValueError(f"unknown table {table!r}")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(cols)
        n = 0
        rows = self._query(
            f"SELECT {', '.join(cols)} FROM {table} ORDER BY {_TABLE_KEYS[table]}"
        )
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
            n += 1
        return n

    def export_all(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for table in TABLE_COLUMNS:
            path = out / f"{table}.csv"
            with path.open("w", encoding="utf-8", newline="") as fh:
                self.export_table(table, fh)
            paths[table] = path
        return paths

    def import_table(self, table: str, stream) -> int:
        cols = TABLE_COLUMNS.get(table)
        if cols is None:
            raise ValueError(f"unknown table {table!r}")
        reader = csv.reader(stream)
        header = next(reader, None)
        if header != list(cols):
            raise StorageError(f"unexpected header for {table}: {header}")
        nullable = _NULLABLE_COLUMNS[table]
        null_at = tuple(name in nullable for name in cols)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(cols):
                raise StorageError(
                    f"{table}: expected {len(cols)} columns, got {len(row)}"
                )
            rows.append(
                tuple(
                    None if v == "" and is_null else v
                    for v, is_null in zip(row, null_at)
                )
            )
        with self.transaction() as conn:
            try:
                conn.executemany(
                    f"INSERT INTO {table} ({', '.join(cols)})"
                    f" VALUES ({', '.join('?' * len(cols))})",
                    rows,
                )
            except sqlite3.IntegrityError as exc:
                if "FOREIGN KEY" in str(exc):
                    raise ForeignKeyError(str(exc)) from None
                raise ConstraintError(str(exc)) from None
        return len(rows)

    # -- stats ---------------------------------------------------------------

    def row_size_stats(self) -> dict[str, float]:
        """Average CSV-serialized row size in bytes for the two log tables."""
        stats = {}
        for table in ("log_session", "log_page"):
            buf = io.StringIO()
            n = self.export_table(table, buf)
            if n == 0:
                stats[table] = 0.0
                continue
            lines = buf.getvalue().splitlines()[1:]
            total = sum(len(line.encode("utf-8")) for line in lines)
            stats[table] = total / n
        return stats

    def store_stats(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for table in TABLE_COLUMNS:
            out[f"rows.{table}"] = self._query(f"SELECT COUNT(*) FROM {table}")[0][0]
        for table, size in self.row_size_stats().items():
            out[f"avg_row_bytes.{table}"] = round(size, 1)
        return out
