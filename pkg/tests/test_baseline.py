import gzip
import io
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webusage.baseline import (
    DEFAULT_STATIC_EXTENSIONS,
    AccuracyReport,
    EclfEntry,
    LineParseError,
    UniverseMismatchError,
    Visit,
    VisitEvent,
    complete_paths,
    filter_entries,
    identify_users,
    parse_log_line,
    preprocess_log,
    read_log,
    read_sessions_csv,
    render_log_line,
    score_labelings,
    sessionize,
    write_sessions_csv,
)

import oracles

SAMPLE = (
    '193.140.253.80 - - [15/Aug/2021:17:30:51 +0300] "GET /index.php HTTP/1.1"'
    ' 200 1246 "http://www.server.com/"'
    ' "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:15.0) Gecko/ 20100101 Firefox/15.0.1"'
)

TZ3 = timezone(timedelta(hours=3))


def _line(
    ip="10.0.0.1",
    when="02/Sep/2021:10:00:00 +0300",
    request="GET /index.php HTTP/1.1",
    status=200,
    size="512",
    referrer="-",
    agent="Mozilla/5.0 (X11; Linux x86_64) Firefox/91.0",
):
    return (
        f'{ip} - - [{when}] "{request}" {status} {size} "{referrer}" "{agent}"'
    )


def _entry(**kw) -> EclfEntry:
    return parse_log_line(_line(**kw))


def _mins(n):
    return datetime(2021, 9, 2, 10, 0, 0, tzinfo=TZ3) + timedelta(minutes=n)


def _visit(minute_offsets, resources=None, referrers=None):
    events = []
    for i, minutes in enumerate(minute_offsets):
        events.append(
            VisitEvent(
                timestamp=_mins(minutes),
                resource=resources[i] if resources else f"/p{i}.php",
                referrer=referrers[i] if referrers else None,
            )
        )
    return Visit(user_key=("10.0.0.1", "agent"), events=events)


class TestParse:
    def test_sample_line_fields(self):
        entry = parse_log_line(SAMPLE)
        assert entry.ip == "193.140.253.80"
        assert entry.identd is None
        assert entry.authuser is None
        assert entry.timestamp == datetime(2021, 8, 15, 17, 30, 51, tzinfo=TZ3)
        assert entry.method == "GET"
        assert entry.resource == "/index.php"
        assert entry.protocol == "HTTP/1.1"
        assert entry.status == 200
        assert entry.bytes_sent == 1246
        assert entry.referrer == "http://www.server.com/"
        assert entry.user_agent == (
            "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:15.0)"
            " Gecko/ 20100101 Firefox/15.0.1"
        )
        assert entry.cookies is None

    def test_garbage_rejected(self):
        with pytest.raises(LineParseError):
            parse_log_line("hello")

    def test_clf_line(self):
        line = '10.0.0.1 - frank [02/Sep/2021:10:00:00 +0300] "GET /a.php HTTP/1.0" 200 88'
        entry = parse_log_line(line, log_format="CLF")
        assert entry.referrer is None
        assert entry.user_agent is None
        assert entry.authuser == "frank"

    def test_clf_rejects_eclf_width(self):
        with pytest.raises(LineParseError):
            parse_log_line(SAMPLE, log_format="CLF")

    def test_trailing_cookie_field(self):
        line = SAMPLE + ' "sid=abc123; lang=tr"'
        entry = parse_log_line(line)
        assert entry.cookies == "sid=abc123; lang=tr"

    def test_dash_bytes_is_none(self):
        entry = _entry(size="-")
        assert entry.bytes_sent is None

    def test_bad_status_rejected(self):
        with pytest.raises(LineParseError):
            parse_log_line(_line(status=999))

    def test_bad_timestamp_rejected(self):
        with pytest.raises(LineParseError):
            parse_log_line(_line(when="02/Xxx/2021:10:00:00 +0300"))

    def test_escaped_quote_inside_agent(self):
        line = _line(agent='weird \\"quoted\\" agent')
        entry = parse_log_line(line)
        assert entry.user_agent == 'weird "quoted" agent'
        assert render_log_line(entry) == line

    def test_line_attached_to_error(self):
        with pytest.raises(LineParseError) as info:
            parse_log_line("hello")
        assert info.value.line == "hello"

    def test_round_trip_sample_is_byte_identical(self):
        assert render_log_line(parse_log_line(SAMPLE)) == SAMPLE

    @pytest.mark.parametrize(
        "kwargs",
        [
            {},
            {"referrer": "-"},
            {"size": "-", "status": 302},
            {"agent": "Googlebot/2.1 (+http://www.google.com/bot.html)"},
            {"request": "GET /app/images/ccc.png HTTP/1.1"},
            {"ip": "212.174.9.30", "when": "31/Dec/2021:23:59:59 -0500"},
        ],
    )
    def test_round_trip_variants(self, kwargs):
        line = _line(**kwargs)
        assert render_log_line(parse_log_line(line)) == line


class TestReadLog:
    def test_plain_file(self, tmp_path):
        path = tmp_path / "access.log"
        path.write_text(SAMPLE + "\nhello\n" + SAMPLE + "\n", encoding="utf-8")
        rows = list(read_log(path, "ECLF"))
        assert len(rows) == 3
        parsed = [entry for entry, _ in rows if entry is not None]
        assert len(parsed) == 2
        bad = [line for entry, line in rows if entry is None]
        assert bad == ["hello"]

    def test_gzip_file(self, tmp_path):
        path = tmp_path / "access.log.gz"
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(SAMPLE + "\n")
        rows = list(read_log(path, "ECLF"))
        assert len(rows) == 1
        assert rows[0][0].ip == "193.140.253.80"


class TestFilter:
    def test_spec_listed_cases(self):
        entries = [
            _entry(request="GET /app/images/ccc.png HTTP/1.1"),
            _entry(request="GET /app/admin/adm.php HTTP/1.1", status=404),
            _entry(),
        ]
        kept, stats = filter_entries(entries)
        assert [e.resource for e in kept] == ["/index.php"]
        assert stats.kept == 1
        assert stats.dropped_static == 1
        assert stats.dropped_status == 1
        assert stats.dropped_bot == 0

    def test_bot_dropped(self):
        entries = [_entry(agent="Googlebot/2.1 (+http://www.google.com/bot.html)")]
        kept, stats = filter_entries(entries)
        assert kept == []
        assert stats.dropped_bot == 1

    def test_status_checked_before_extension(self):
        entries = [_entry(request="GET /x.png HTTP/1.1", status=404)]
        _, stats = filter_entries(entries)
        assert stats.dropped_status == 1
        assert stats.dropped_static == 0

    def test_query_string_stripped_for_extension(self):
        entries = [_entry(request="GET /style.css?v=3 HTTP/1.1")]
        _, stats = filter_entries(entries)
        assert stats.dropped_static == 1

    def test_custom_extension_list(self):
        entries = [_entry(request="GET /x.css HTTP/1.1")]
        kept, stats = filter_entries(entries, static_extensions=(".png",))
        assert len(kept) == 1
        assert stats.kept == 1

    def test_default_extensions(self):
        assert set(DEFAULT_STATIC_EXTENSIONS) == {
            ".png", ".jpg", ".gif", ".css", ".js", ".ico",
        }

    @settings(max_examples=60)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["/a.php", "/b.png", "/c.css", "/d.php"]),
                st.sampled_from([200, 301, 404]),
                st.sampled_from(["Mozilla/5.0", "crawler-x"]),
            ),
            max_size=25,
        )
    )
    def test_kept_subset_and_counts_conserve(self, rows):
        entries = [
            _entry(request=f"GET {res} HTTP/1.1", status=status, agent=agent)
            for res, status, agent in rows
        ]
        kept, stats = filter_entries(entries)
        assert stats.kept == len(kept)
        assert stats.kept + stats.dropped() == len(entries)
        assert stats.dropped() == (
            stats.dropped_status + stats.dropped_static + stats.dropped_bot
        )
        kept_keys = [(e.timestamp, e.resource) for e in kept]
        all_keys = [(e.timestamp, e.resource) for e in entries]
        for key in kept_keys:
            assert key in all_keys


class TestIdentifyUsers:
    def test_two_ips_two_users(self):
        entries = [_entry(ip="10.0.0.1"), _entry(ip="10.0.0.2")]
        kept, _ = filter_entries(entries)
        visits = identify_users(kept)
        assert len(visits) == 2

    def test_one_ip_two_agents_two_users(self):
        entries = [
            _entry(agent="Mozilla/5.0 (X11; Linux x86_64) Firefox/91.0"),
            _entry(agent="Mozilla/5.0 (Windows NT 10.0) Chrome/92.0"),
        ]
        kept, _ = filter_entries(entries)
        assert len(identify_users(kept)) == 2

    def test_same_pair_merges_ordered(self):
        entries = [
            _entry(when="02/Sep/2021:10:05:00 +0300"),
            _entry(when="02/Sep/2021:10:00:00 +0300"),
            _entry(when="02/Sep/2021:10:02:00 +0300"),
        ]
        kept, _ = filter_entries(entries)
        visits = identify_users(kept)
        assert len(visits) == 1
        times = [e.timestamp for e in visits[0].events]
        assert times == sorted(times)


class TestSessionize:
    def test_both_mode_spec_fixture(self):
        visit = _visit([0, 5, 36, 38])
        sessions = sessionize(visit)
        assert [len(s.events) for s in sessions] == [2, 2]

    def test_page_gap_vs_session_duration(self):
        visit = _visit([0, 9, 18, 27, 36])
        by_page_gap = sessionize(visit, mode="page_gap")
        assert [len(s.events) for s in by_page_gap] == [5]
        by_duration = sessionize(visit, mode="session_duration")
        assert [len(s.events) for s in by_duration] == [4, 1]

    def test_single_event(self):
        assert [len(s.events) for s in sessionize(_visit([0]))] == [1]

    def test_boundary_strict(self):
        exactly = sessionize(_visit([0, 10]), mode="page_gap")
        assert len(exactly) == 1
        over = sessionize(_visit([0, 10.001]), mode="page_gap")
        assert len(over) == 2

    def test_split_at_midnight(self):
        visit = Visit(
            user_key=("10.0.0.1", "agent"),
            events=[
                VisitEvent(datetime(2021, 9, 2, 23, 58, 0, tzinfo=TZ3), "/a.php"),
                VisitEvent(datetime(2021, 9, 3, 0, 2, 0, tzinfo=TZ3), "/b.php"),
            ],
        )
        assert len(sessionize(visit)) == 1
        assert len(sessionize(visit, split_at_midnight=True)) == 2

    def test_session_ids_sequential(self):
        sessions = sessionize(_visit([0, 5, 36, 38]))
        assert [s.session_id for s in sessions] == [1, 2]

    @settings(max_examples=100)
    @given(
        st.lists(st.integers(min_value=0, max_value=90), min_size=1, max_size=30),
        st.sampled_from(["page_gap", "session_duration", "both"]),
    )
    def test_concatenation_restores_input(self, offsets, mode):
        offsets.sort()
        visit = _visit(offsets)
        sessions = sessionize(visit, mode=mode)
        flattened = [e for s in sessions for e in s.events]
        assert flattened == visit.events
        expected_sizes = oracles.sessionize_reference(
            [m * 60.0 for m in offsets],
            session_gap=1800.0,
            page_gap=600.0,
            mode=mode,
        )
        assert [len(s.events) for s in sessions] == expected_sizes


class TestCompletePaths:
    def test_back_button_chain(self):
        events = [
            VisitEvent(_mins(0), "/a.php"),
            VisitEvent(_mins(1), "/b.php", referrer="/a.php"),
            VisitEvent(_mins(2), "/c.php", referrer="/b.php"),
            VisitEvent(_mins(3), "/d.php", referrer="/a.php"),
        ]
        completed, stats = complete_paths(events)
        resources = [(e.resource, e.inferred) for e in completed]
        assert resources == [
            ("/a.php", False),
            ("/b.php", False),
            ("/c.php", False),
            ("/b.php", True),
            ("/a.php", True),
            ("/d.php", False),
        ]
        assert stats.inferred == 2
        assert stats.incomplete == 0
        assert completed[3].timestamp == _mins(3)
        assert completed[4].timestamp == _mins(3)

    def test_referrer_equals_previous_is_noop(self):
        events = [
            VisitEvent(_mins(0), "/a.php"),
            VisitEvent(_mins(1), "/b.php", referrer="/a.php"),
        ]
        completed, stats = complete_paths(events)
        assert completed == events
        assert stats.inferred == 0

    def test_external_referrer_untouched(self):
        events = [
            VisitEvent(_mins(0), "/a.php"),
            VisitEvent(_mins(1), "/b.php", referrer="http://elsewhere.org/x"),
        ]
        completed, stats = complete_paths(events, site_hosts=("www.campus.example",))
        assert completed == events
        assert stats.inferred == 0

    def test_absolute_site_referrer_resolved(self):
        events = [
            VisitEvent(_mins(0), "/a.php"),
            VisitEvent(_mins(1), "/b.php", referrer="http://www.campus.example/a.php"),
            VisitEvent(_mins(2), "/c.php", referrer="http://www.campus.example/a.php"),
        ]
        completed, stats = complete_paths(events, site_hosts=("www.campus.example",))
        assert [e.resource for e in completed] == [
            "/a.php", "/b.php", "/a.php", "/c.php",
        ]
        assert stats.inferred == 1
        assert completed[2].inferred

    def test_unseen_referrer_counts_incomplete(self):
        events = [
            VisitEvent(_mins(0), "/a.php"),
            VisitEvent(_mins(1), "/b.php", referrer="/zzz.php"),
        ]
        completed, stats = complete_paths(events)
        assert completed == events
        assert stats.incomplete == 1


class TestScoring:
    def test_identical_labelings_all_ones(self):
        pred = {1: "a", 2: "a", 3: "b"}
        truth_sess = {1: 10, 2: 10, 3: 11}
        users_pred = {1: "u1", 2: "u1", 3: "u1"}
        users_truth = {1: 5, 2: 5, 3: 5}
        report = score_labelings(pred, users_pred, truth_sess, users_truth)
        assert report.user_precision == 1.0
        assert report.user_recall == 1.0
        assert report.session_precision == 1.0
        assert report.session_recall == 1.0
        assert report.exact_session_match_rate == 1.0

    def test_singletons_vs_one_session(self):
        pred = {1: "a", 2: "b", 3: "c"}
        truth_sess = {1: 10, 2: 10, 3: 10}
        users = {1: "u", 2: "u", 3: "u"}
        report = score_labelings(pred, users, truth_sess, users)
        assert report.exact_session_match_rate == 0.0
        assert report.session_precision == 1.0  # no false pair predicted
        assert report.session_recall == 0.0

    def test_merged_vs_split_truth(self):
        pred = {1: "a", 2: "a"}
        truth_sess = {1: 10, 2: 11}
        users = {1: "u", 2: "u"}
        report = score_labelings(pred, users, truth_sess, users)
        assert report.session_precision == 0.0
        assert report.session_recall == 1.0

    def test_report_text_shape(self):
        pred = {1: "a"}
        report = score_labelings(pred, pred, {1: 1}, {1: 1})
        text = report.to_text(prefix="  ")
        assert "  exact_session_match_rate: 1.000000" in text
        assert "  user_precision: 1.000000" in text


class TestEndToEnd:
    def test_nat_pair_confuses_user_precision(self, tmp_path):
        # Two people share one IP and one browser build; the baseline sees
        # one user where the truth has two.
        lines = []
        for minute, who in [(0, "a"), (1, "b"), (2, "a"), (3, "b")]:
            lines.append(
                _line(
                    ip="193.140.5.5",
                    when=f"02/Sep/2021:10:{minute:02d}:00 +0300",
                    request=f"GET /{who}.php HTTP/1.1",
                )
            )
        path = tmp_path / "nat.log"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        result = preprocess_log(path)
        assert result.filter_stats.kept == 4
        assert result.users == 1

    def test_preprocess_stats_text(self, tmp_path):
        path = tmp_path / "tiny.log"
        path.write_text(
            "\n".join(
                [
                    SAMPLE,
                    "junk line",
                    _line(request="GET /x.png HTTP/1.1"),
                    _line(status=404),
                    _line(agent="curl/7.79"),
                    _line(),
                ]
            )
            + "\n",
            encoding="utf-8",
        )
        result = preprocess_log(path)
        text = result.stats_text()
        assert "lines: 6" in text
        assert "parse_errors: 1" in text
        assert "dropped_status: 1" in text
        assert "dropped_static: 1" in text
        assert "dropped_bot: 1" in text
        assert "kept: 2" in text

    def test_sessions_csv_round_trip(self, tmp_path):
        visit = _visit([0, 5, 36, 38])
        sessions = sessionize(visit)
        out = tmp_path / "sessions.csv"
        with out.open("w", encoding="utf-8", newline="") as fh:
            write_sessions_csv(sessions, fh)
        with out.open(encoding="utf-8", newline="") as fh:
            restored = read_sessions_csv(fh)
        assert [len(s.events) for s in restored] == [2, 2]
        assert restored[0].user_key == visit.user_key
        assert restored[0].events[0].resource == visit.events[0].resource
        assert restored[0].events[0].timestamp == visit.events[0].timestamp


class TestUniverseChecks:
    def test_mismatched_stream_raises(self, small_workload, tmp_path):
        from webusage.simulator import simulate_to_dir

        config, _, truth = small_workload
        out = simulate_to_dir(config, tmp_path, noise=False)
        result = preprocess_log(out["eclf"], site_hosts=("www.campus.example",))
        wrong = truth.__class__(
            users=truth.users,
            sessions=truth.sessions,
            events=truth.events[:-1],
        )
        from webusage.baseline import score_against_truth

        with pytest.raises(UniverseMismatchError):
            score_against_truth(result.sessions, wrong)
