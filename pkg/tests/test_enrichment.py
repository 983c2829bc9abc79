import io
import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webusage.enrichment import (
    ClientProfile,
    GeoIpLoadError,
    GeoIpRange,
    GeoIpTable,
    default_search_registry,
    default_ua_registry,
    first_language_tag,
    ip_to_int,
    load_geoip,
    parse_user_agent,
    sample_geoip_table,
)

from oracles import geoip_lookup_linear

FIREFOX_UBUNTU = (
    "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:15.0) Gecko/ 20100101 Firefox/15.0.1"
)


class TestUserAgents:
    def test_firefox_on_ubuntu(self):
        profile = parse_user_agent(FIREFOX_UBUNTU)
        assert profile.browser_name == "Firefox"
        assert profile.browser_version == "15.0.1"
        assert profile.os_name == "Linux"
        assert profile.os_version == "unknown"
        assert profile.device_type == "desktop"
        assert profile.is_bot is False

    def test_empty_and_none_are_unknown(self):
        assert parse_user_agent("") == ClientProfile()
        assert parse_user_agent(None) == ClientProfile()
        assert parse_user_agent("") .device_type == "unknown"

    def test_googlebot_is_bot(self):
        profile = parse_user_agent("Googlebot/2.1 (+http://www.google.com/bot.html)")
        assert profile.is_bot is True
        assert profile.device_type == "bot"

    def test_chrome_on_windows(self):
        ua = (
            "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
            " (KHTML, like Gecko) Chrome/92.0.4515.131 Safari/537.36"
        )
        profile = parse_user_agent(ua)
        assert profile.browser_name == "Chrome"
        assert profile.browser_version.startswith("92.0")
        assert profile.os_name == "Windows"
        assert profile.device_type == "desktop"

    def test_iphone_is_mobile(self):
        ua = (
            "Mozilla/5.0 (iPhone; CPU iPhone OS 14_6 like Mac OS X)"
            " AppleWebKit/605.1.15 (KHTML, like Gecko) Version/14.1.1"
            " Mobile/15E148 Safari/604.1"
        )
        assert parse_user_agent(ua).device_type == "mobile"

    def test_ipad_is_tablet(self):
        ua = (
            "Mozilla/5.0 (iPad; CPU OS 14_6 like Mac OS X) AppleWebKit/605.1.15"
            " (KHTML, like Gecko) Version/14.1.1 Mobile/15E148 Safari/604.1"
        )
        assert parse_user_agent(ua).device_type == "tablet"

    def test_edge_beats_chrome_token(self):
        ua = (
            "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36"
            " (KHTML, like Gecko) Chrome/91.0.4472.124 Safari/537.36 Edg/91.0.864.67"
        )
        assert parse_user_agent(ua).browser_name == "Edge"

    @settings(max_examples=200)
    @given(st.text(max_size=120))
    def test_total_on_arbitrary_input(self, ua):
        profile = parse_user_agent(ua)
        assert profile.device_type in ("desktop", "mobile", "tablet", "bot", "unknown")
        assert profile.browser_version == "unknown" or re.match(
            r"^[\w.]+$", profile.browser_version
        )

    def test_registry_reused(self):
        registry = default_ua_registry()
        first = parse_user_agent(FIREFOX_UBUNTU, registry)
        second = parse_user_agent(FIREFOX_UBUNTU, registry)
        assert first == second


class TestGeoIp:
    def test_two_rows_load(self):
        table = load_geoip(io.StringIO("0,100,AA\n200,300,BB\n"))
        assert len(table) == 2
        assert table.lookup(0) == "AA"
        assert table.lookup(150) == "unknown"
        assert table.lookup(300) == "BB"

    def test_overlap_rejected_with_line(self):
        with pytest.raises(GeoIpLoadError, match="line 2") as info:
            load_geoip(io.StringIO("0,100,AA\n50,300,BB\n"))
        assert info.value.line_no == 2

    def test_unsorted_input_accepted(self):
        table = load_geoip(io.StringIO("200,300,BB\n0,100,AA\n"))
        assert table.lookup(250) == "BB"
        assert table.lookup(99) == "AA"

    def test_bad_rows_rejected(self):
        for text, fragment in [
            ("1,2\n", "3 columns"),
            ("a,2,XX\n", "integers"),
            ("5,2,XX\n", "greater than"),
            ("1,2,\n", "empty country"),
        ]:
            with pytest.raises(GeoIpLoadError, match=fragment):
                load_geoip(io.StringIO(text))

    def test_comments_and_blanks_skipped(self):
        table = load_geoip(io.StringIO("# header\n\n0,100,AA\n"))
        assert len(table) == 1

    def test_empty_table_is_unknown(self):
        assert GeoIpTable([]).lookup("8.8.8.8") == "unknown"

    def test_boundaries_inclusive(self):
        table = GeoIpTable([GeoIpRange(100, 200, "CC")])
        assert table.lookup(100) == "CC"
        assert table.lookup(200) == "CC"
        assert table.lookup(99) == "unknown"
        assert table.lookup(201) == "unknown"

    def test_sample_table_resolves_campus_address(self):
        table = sample_geoip_table()
        assert table.lookup("193.140.253.80") == "TR"
        assert table.lookup("8.8.8.8") == "US"
        assert table.lookup("141.76.10.1") == "DE"

    def test_ip_to_int(self):
        assert ip_to_int("8.8.8.8") == 134744072
        assert ip_to_int("0.0.0.0") == 0
        assert ip_to_int(42) == 42
        with pytest.raises(ValueError):
            ip_to_int("not-an-ip")

    def test_lookup_matches_linear_scan(self):
        table = sample_geoip_table()
        rng = random.Random(20210902)
        probes = [rng.randrange(0, 2**32) for _ in range(10_000)]
        for rec in table.ranges:
            probes.extend([rec.start_ip, rec.end_ip, rec.start_ip - 1, rec.end_ip + 1])
        for value in probes:
            assert table.lookup(value) == geoip_lookup_linear(table.ranges, value)


class TestLanguages:
    @pytest.mark.parametrize(
        "value, expected",
        [
            ("tr-TR,tr;q=0.9,en;q=0.8", "tr-TR"),
            ("en-us", "en-US"),
            ("DE", "de"),
            ("en_GB", "en-GB"),
            (" fr ;q=0.5", "fr"),
            ("", None),
            (None, None),
            (",en", None),
        ],
    )
    def test_first_tag(self, value, expected):
        assert first_language_tag(value) == expected


class TestSearchRegistry:
    def test_google_query(self):
        registry = default_search_registry()
        got = registry.extract("http://www.google.com/search?q=sakarya")
        assert got == ("google", "sakarya")

    def test_country_domain_matches(self):
        registry = default_search_registry()
        got = registry.extract("https://www.google.com.tr/search?q=ders+programi")
        assert got == ("google", "ders programi")

    def test_yahoo_uses_p_param(self):
        registry = default_search_registry()
        assert registry.extract("http://search.yahoo.com/search?p=exam") == (
            "yahoo",
            "exam",
        )

    def test_engine_without_keywords(self):
        registry = default_search_registry()
        assert registry.extract("http://www.bing.com/search") == ("bing", None)
        assert registry.extract("http://www.bing.com/search?q=++") == ("bing", None)

    def test_keywords_normalized(self):
        registry = default_search_registry()
        got = registry.extract("http://www.google.com/search?q=Ders++Program%C4%B1")
        assert got == ("google", "ders programı")

    def test_non_engine_is_none(self):
        registry = default_search_registry()
        assert registry.extract("http://www.example.com/?q=x") is None
        assert registry.extract("not a url") is None

    def test_label_must_be_whole_component(self):
        registry = default_search_registry()
        assert registry.extract("http://notgoogle.com/?q=x") is None
