import pytest
from hypothesis import given, strategies as st

from contentflow import httpsem


GET = b"GET /pictures/picture.jpg HTTP/1.1\r\nHost: www.server.com\r\n\r\n"


class TestParseRequest:
    def test_basic_get(self):
        req = httpsem.parse_request(GET)
        assert req.method == "GET"
        assert req.path == "/pictures/picture.jpg"
        assert req.host == "www.server.com"
        assert req.raw_header_len == len(GET)
        assert req.is_content

    def test_content_name_from_request(self):
        req = httpsem.parse_request(GET)
        assert httpsem.content_name(req.host, req.path) == \
            "www.server.com/pictures/picture.jpg"

    def test_range_header(self):
        raw = b"GET /f HTTP/1.1\r\nHost: h\r\nRange: bytes=100-199\r\n\r\n"
        assert httpsem.parse_request(raw).range == (100, 199)

    def test_post_is_not_content(self):
        raw = b"POST /upload HTTP/1.1\r\nHost: h\r\n\r\n"
        req = httpsem.parse_request(raw)
        assert req.method == "POST"
        assert not req.is_content

    def test_path_without_slash_rejected(self):
        raw = b"GET noslash HTTP/1.1\r\nHost: h\r\n\r\n"
        with pytest.raises(httpsem.RequestParseError):
            httpsem.parse_request(raw)

    def test_malformed_request_line(self):
        with pytest.raises(httpsem.RequestParseError):
            httpsem.parse_request(b"NOT HTTP AT ALL\r\n\r\n")

    def test_incomplete_header_block(self):
        with pytest.raises(httpsem.HttpError):
            httpsem.parse_request(b"GET / HTTP/1.1\r\nHost: h\r\n")


class TestParseResponse:
    def test_ok_with_length(self):
        raw = httpsem.render_response(200, b"x" * 42)
        meta = httpsem.parse_response_meta(raw)
        assert meta.status == 200
        assert meta.content_length == 42
        assert meta.content_range is None
        assert not meta.ignorable

    def test_partial_content_range(self):
        raw = httpsem.render_response(206, b"x" * 100, content_range=(100, 199, 500))
        meta = httpsem.parse_response_meta(raw)
        assert meta.status == 206
        assert meta.content_range == (100, 199, 500)

    def test_inconsistent_range_rejected(self):
        raw = b"HTTP/1.1 206 Partial Content\r\nContent-Range: bytes 9-5/10\r\n\r\n"
        with pytest.raises(httpsem.ResponseParseError):
            httpsem.parse_response_meta(raw)

    def test_error_statuses_ignorable(self):
        assert httpsem.parse_response_meta(httpsem.render_response(404)).ignorable
        assert httpsem.parse_response_meta(b"HTTP/1.1 100 Continue\r\n\r\n").ignorable

    def test_malformed_status_line(self):
        with pytest.raises(httpsem.ResponseParseError):
            httpsem.parse_response_meta(b"HTP/9 whatever\r\n\r\n")

    def test_bad_content_length(self):
        raw = b"HTTP/1.1 200 OK\r\nContent-Length: nan\r\n\r\n"
        with pytest.raises(httpsem.ResponseParseError):
            httpsem.parse_response_meta(raw)


class TestStripHeaders:
    def test_exact_body(self):
        body = bytes(range(256))
        raw = httpsem.render_response(200, body)
        assert httpsem.strip_headers(raw) == body

    def test_body_containing_terminator(self):
        # a blank line inside the body must survive stripping
        body = b"abc\r\n\r\ndef"
        raw = httpsem.render_response(200, body)
        assert httpsem.strip_headers(raw) == body

    def test_missing_terminator(self):
        with pytest.raises(httpsem.StripError):
            httpsem.strip_headers(b"HTTP/1.1 200 OK\r\n")


class TestContentName:
    def test_empty_host_rejected(self):
        with pytest.raises(httpsem.NamingError):
            httpsem.content_name("", "/x")

    def test_bad_path_rejected(self):
        with pytest.raises(httpsem.NamingError):
            httpsem.content_name("h", "x")


hosts = st.from_regex(r"[a-z0-9][a-z0-9.\-]{0,19}", fullmatch=True)
paths = st.from_regex(r"/[a-zA-Z0-9._\-/]{0,30}", fullmatch=True)


class TestProperties:
    @given(hosts, paths)
    def test_request_round_trip(self, host, path):
        raw = httpsem.render_request(host, path)
        req = httpsem.parse_request(raw)
        assert (req.host, req.path) == (host, path)

    @given(hosts, paths)
    def test_content_name_splits_back(self, host, path):
        name = httpsem.content_name(host, path)
        got_host, _, rest = name.partition("/")
        assert (got_host, "/" + rest) == (host, path)

    @given(st.binary(max_size=5000))
    def test_response_round_trip(self, body):
        raw = httpsem.render_response(200, body)
        meta = httpsem.parse_response_meta(raw)
        assert meta.content_length == len(body)
        assert httpsem.strip_headers(raw) == body

    @given(st.binary(max_size=2000), st.binary(max_size=200))
    def test_strip_is_inverse_of_concat(self, body, tail):
        # stripping after appending arbitrary bytes keeps them intact
        raw = httpsem.render_response(200, body) + tail
        assert httpsem.strip_headers(raw) == body + tail
