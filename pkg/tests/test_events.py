import io
from datetime import datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webusage.events import (
    AppPageResult,
    RawRequestEvent,
    ReplayFormatError,
    format_replay_line,
    parse_replay_line,
    read_replay,
    write_replay,
)

_text = st.text(max_size=25)
_short = st.text(min_size=1, max_size=25)
_map = st.dictionaries(_text, _text, max_size=4)
_dt = st.datetimes(
    min_value=datetime(2000, 1, 1), max_value=datetime(2099, 12, 31)
).map(lambda d: d.replace(microsecond=0))

events_st = st.builds(
    RawRequestEvent,
    client_ip=_text,
    timestamp=_dt,
    method=st.sampled_from(["GET", "POST"]),
    url=_text,
    session_token=_short,
    user_agent=_text,
    referrer=st.none() | _short,
    auth_user=st.none() | _short,
    app_service=_text,
    module=_text,
    server_id=st.integers(min_value=0, max_value=9999),
    get_params=_map,
    post_params=_map,
    cookies=_map,
)


def _event(**overrides) -> RawRequestEvent:
    base = dict(
        client_ip="10.0.0.1",
        timestamp=datetime(2021, 9, 2, 12, 0, 0),
        method="GET",
        url="/index.php",
        session_token="tok1",
    )
    base.update(overrides)
    return RawRequestEvent(**base)


class TestEventModel:
    def test_bad_method_rejected(self):
        with pytest.raises(ValueError, match="method"):
            _event(method="PUT")

    def test_empty_token_rejected(self):
        with pytest.raises(ValueError, match="session_token"):
            _event(session_token="")

    def test_empty_referrer_becomes_none(self):
        assert _event(referrer="").referrer is None

    def test_empty_auth_user_becomes_none(self):
        assert _event(auth_user="").auth_user is None

    def test_negative_load_time_rejected(self):
        with pytest.raises(ValueError, match="page_load_time"):
            AppPageResult(page_load_time=-0.1)

    def test_load_time_zero_ok(self):
        assert AppPageResult().page_load_time == 0.0


class TestLineCodec:
    def test_key_order_is_fixed(self):
        line = format_replay_line(
            _event(referrer="http://x/", auth_user="u0001", cookies={"sid": "tok1"})
        )
        keys = [token.partition("=")[0] for token in line.split(" ")]
        assert keys == [
            "ip", "time", "method", "url", "token", "agent", "referrer",
            "user", "service", "module", "server", "get", "post", "cookies",
        ]

    def test_optional_keys_omitted(self):
        keys = [t.partition("=")[0] for t in format_replay_line(_event()).split(" ")]
        assert "referrer" not in keys
        assert "user" not in keys

    def test_time_is_isoformat_seconds(self):
        line = format_replay_line(_event())
        assert " time=2021-09-02T12:00:00 " in line

    def test_value_with_spaces_survives(self):
        agent = "Mozilla/5.0 (X11; Ubuntu) Firefox/15.0.1"
        got = parse_replay_line(format_replay_line(_event(user_agent=agent)))
        assert got.user_agent == agent

    @settings(max_examples=200)
    @given(events_st)
    def test_round_trip(self, event):
        assert parse_replay_line(format_replay_line(event)) == event

    @pytest.mark.parametrize(
        "mangle, fragment",
        [
            (lambda s: s + " bogus=1", "unknown key"),
            (lambda s: s + " ip=1.2.3.4", "duplicate key"),
            (lambda s: s.replace(" method=GET", ""), "missing keys"),
            (lambda s: s.replace("time=2021-09-02T12:00:00", "time=noon"), "bad time"),
            (lambda s: s.replace(" server=1", " server=one"), "bad server id"),
            (lambda s: s.replace(" method=GET", " method=GET "), "empty token"),
            (lambda s: s + " floop", "without '='"),
            (lambda s: s.replace("method=GET", "method=PUT"), "method"),
            (lambda s: s.replace("token=tok1", "token="), "session_token"),
        ],
    )
    def test_parse_errors(self, mangle, fragment):
        line = format_replay_line(_event())
        with pytest.raises(ReplayFormatError, match=fragment):
            parse_replay_line(mangle(line))

    def test_line_number_reported(self):
        with pytest.raises(ReplayFormatError, match="line 7:") as info:
            parse_replay_line("junk", line_no=7)
        assert info.value.line_no == 7


class TestReplayStream:
    def test_write_read_round_trip(self):
        events = [
            _event(timestamp=datetime(2021, 9, 2, 12, 0, i), url=f"/p{i}.php")
            for i in range(5)
        ]
        buf = io.StringIO()
        assert write_replay(events, buf) == 5
        buf.seek(0)
        assert list(read_replay(buf)) == events

    def test_blank_lines_and_comments_skipped(self):
        line = format_replay_line(_event())
        stream = ["\n", "# header comment\n", line + "\n", "   \n", line + "\n"]
        assert len(list(read_replay(stream))) == 2

    def test_decreasing_timestamps_rejected(self):
        lines = [
            format_replay_line(_event(timestamp=datetime(2021, 9, 2, 12, 0, 5))),
            format_replay_line(_event(timestamp=datetime(2021, 9, 2, 12, 0, 4))),
        ]
        with pytest.raises(ReplayFormatError, match="non-decreasing") as info:
            list(read_replay(lines))
        assert info.value.line_no == 2

    def test_equal_timestamps_allowed(self):
        line = format_replay_line(_event())
        assert len(list(read_replay([line, line]))) == 2

    def test_error_names_physical_line(self):
        line = format_replay_line(_event())
        stream = ["# comment\n", line + "\n", "broken\n"]
        with pytest.raises(ReplayFormatError, match="line 3:"):
            list(read_replay(stream))
