"""Ground-truth records produced by the traffic simulator.

The simulator knows exactly which visitor issued each request and where the
true session boundaries are, so it writes that knowledge out as one CSV that
scoring can join against.  The file carries three row kinds (user, session,
event) in a single 15-column table; columns that do not apply to a kind stay
empty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

TRUTH_HEADER = (
    "kind", "user_id", "username", "user_type", "gender", "device",
    "session_id", "pageviews", "start", "end",
    "event_seq", "cached", "epoch", "ip", "resource",
)


@dataclass(frozen=True)
class TruthUser:
    user_id: int
    username: str | None   # None for visitors who never sign in
    user_type: str
    gender: str | None
    device: str


@dataclass(frozen=True)
class TruthSession:
    session_id: int
    user_id: int
    pageviews: int
    start_epoch: int
    end_epoch: int


@dataclass(frozen=True)
class TruthEvent:
    event_seq: int
    true_user_id: int
    true_session_id: int
    epoch: int
    ip: str
    resource: str
    cached: bool = False


@dataclass
class GroundTruth:
    users: list[TruthUser] = field(default_factory=list)
    sessions: list[TruthSession] = field(default_factory=list)
    events: list[TruthEvent] = field(default_factory=list)

    def session_count(self) -> int:
        return len(self.sessions)

    def served_events(self) -> list[TruthEvent]:
        """Events a server would actually log (cache hits never reach it)."""
        return [e for e in self.events if not e.cached]


def write_truth(truth: GroundTruth, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for user in truth.users:
        writer.writerow([
            "user", user.user_id, user.username or "", user.user_type,
            user.gender or "", user.device, "", "", "", "", "", "", "", "", "",
        ])
    for session in truth.sessions:
        writer.writerow([
            "session", session.user_id, "", "", "", "",
            session.session_id, session.pageviews,
            session.start_epoch, session.end_epoch, "", "", "", "", "",
        ])
    for event in truth.events:
        writer.writerow([
            "event", event.true_user_id, "", "", "", "",
            event.true_session_id, "", "", "",
            event.event_seq, int(event.cached), event.epoch, event.ip,
            event.resource,
        ])


def read_truth(stream) -> GroundTruth:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != list(TRUTH_HEADER):
        raise ValueError(f"unexpected truth header: {header}")
    truth = GroundTruth()
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(TRUTH_HEADER):
            raise ValueError(f"line {line_no}: expected {len(TRUTH_HEADER)} columns")
        kind = row[0]
        if kind == "user":
            truth.users.append(TruthUser(
                user_id=int(row[1]),
                username=row[2] or None,
                user_type=row[3],
                gender=row[4] or None,
                device=row[5],
            ))
        elif kind == "session":
            truth.sessions.append(TruthSession(
                session_id=int(row[6]),
                user_id=int(row[1]),
                pageviews=int(row[7]),
                start_epoch=int(row[8]),
                end_epoch=int(row[9]),
            ))
        elif kind == "event":
            truth.events.append(TruthEvent(
                event_seq=int(row[10]),
                true_user_id=int(row[1]),
                true_session_id=int(row[6]),
                epoch=int(row[12]),
                ip=row[13],
                resource=row[14],
                cached=bool(int(row[11])),
            ))
        else:
            raise ValueError(f"line {line_no}: unknown row kind {kind!r}")
    return truth


def load_truth(path: str | Path) -> GroundTruth:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_truth(fh)


def save_truth(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_truth(truth, fh)
