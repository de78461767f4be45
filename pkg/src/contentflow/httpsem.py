"""HTTP/1.1 header semantics: request/response parsing, content naming, header stripping.

Everything here is a pure function over bytes. The supported subset is
deliberately small: no chunked transfer-encoding, no compression, one
request per connection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Tuple

CRLF = b"\r\n"
HEADER_END = b"\r\n\r\n"

_REQUEST_LINE = re.compile(rb"^([A-Z]+) (\S+) HTTP/1\.[01]$")
_STATUS_LINE = re.compile(rb"^HTTP/1\.[01] (\d{3})(?: .*)?$")
_CONTENT_RANGE = re.compile(r"^bytes (\d+)-(\d+)/(\d+)$")
_RANGE = re.compile(r"^bytes=(\d+)-(\d+)$")


class HttpError(Exception):
    """Malformed header block or request/status line."""


class RequestParseError(HttpError):
    pass


class ResponseParseError(HttpError):
    pass


class StripError(HttpError):
    pass


class NamingError(HttpError):
    pass


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    host: str
    raw_header_len: int
    # byte range requested via a Range header, if any (first, last)
    range: Optional[Tuple[int, int]] = None

    @property
    def is_content(self) -> bool:
        """Only GET requests name content; everything else passes through."""
        return self.method == "GET"


@dataclass(frozen=True)
class HttpResponseMeta:
    status: int
    header_len: int
    content_length: Optional[int] = None
    content_range: Optional[Tuple[int, int, int]] = None  # (first, last, total)

    @property
    def ignorable(self) -> bool:
        """Error responses carry no cacheable content."""
        return self.status >= 400 or self.status < 200


def header_block_end(data: bytes) -> int:
    """Offset one past the blank-line terminator, or -1 if incomplete."""
    idx = data.find(HEADER_END)
    if idx < 0:
        return -1
    return idx + len(HEADER_END)


def _split_header(data: bytes) -> Tuple[list, int]:
    end = header_block_end(data)
    if end < 0:
        raise HttpError("incomplete header block")
    lines = data[: end - len(HEADER_END)].split(CRLF)
    return lines, end


def _header_fields(lines) -> dict:
    fields = {}
    for line in lines:
        if b":" not in line:
            continue
        name, _, value = line.partition(b":")
        fields[name.strip().lower().decode("latin-1")] = value.strip().decode("latin-1")
    return fields


def parse_request(data: bytes) -> HttpRequest:
    """Parse a request header block.

    Raises RequestParseError on a malformed request line or a path that
    does not start with "/"; the caller is expected to pass the bytes
    through unmodified in that case.
    """
    lines, end = _split_header(data)
    m = _REQUEST_LINE.match(lines[0])
    if not m:
        raise RequestParseError("malformed request line: %r" % lines[0][:80])
    method = m.group(1).decode("ascii")
    path = m.group(2).decode("latin-1")
    if not path.startswith("/"):
        raise RequestParseError("request path must start with '/': %r" % path)
    fields = _header_fields(lines[1:])
    host = fields.get("host", "")
    rng = None
    if "range" in fields:
        rm = _RANGE.match(fields["range"])
        if rm:
            rng = (int(rm.group(1)), int(rm.group(2)))
    return HttpRequest(method=method, path=path, host=host, raw_header_len=end, range=rng)


def parse_response_meta(data: bytes) -> HttpResponseMeta:
    """Parse a response header block into status/length/range metadata."""
    lines, end = _split_header(data)
    m = _STATUS_LINE.match(lines[0])
    if not m:
        raise ResponseParseError("malformed status line: %r" % lines[0][:80])
    status = int(m.group(1))
    if not 100 <= status <= 599:
        raise ResponseParseError("status out of range: %d" % status)
    fields = _header_fields(lines[1:])
    content_length = None
    if "content-length" in fields:
        try:
            content_length = int(fields["content-length"])
        except ValueError:
            raise ResponseParseError("bad Content-Length: %r" % fields["content-length"])
    content_range = None
    if "content-range" in fields:
        rm = _CONTENT_RANGE.match(fields["content-range"])
        if not rm:
            raise ResponseParseError("bad Content-Range: %r" % fields["content-range"])
        first, last, total = int(rm.group(1)), int(rm.group(2)), int(rm.group(3))
        if not first <= last < total:
            raise ResponseParseError(
                "inconsistent Content-Range: %d-%d/%d" % (first, last, total)
            )
        content_range = (first, last, total)
    return HttpResponseMeta(
        status=status,
        header_len=end,
        content_length=content_length,
        content_range=content_range,
    )


def strip_headers(data: bytes) -> bytes:
    """Return everything after the first blank-line terminator, byte-exact."""
    end = header_block_end(data)
    if end < 0:
        raise StripError("no header terminator found")
    return data[end:]


def content_name(host: str, path: str) -> str:
    """Globally unique content name: host + path, e.g. "www.server.com/pictures/picture.jpg"."""
    if not host:
        raise NamingError("empty host")
    if not path.startswith("/"):
        raise NamingError("path must start with '/': %r" % path)
    return host + path


def render_request(host: str, path: str, method: str = "GET",
                   byte_range: Optional[Tuple[int, int]] = None) -> bytes:
    lines = ["%s %s HTTP/1.1" % (method, path), "Host: %s" % host]
    if byte_range is not None:
        lines.append("Range: bytes=%d-%d" % byte_range)
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1")


def render_response(status: int, body: bytes = b"",
                    content_range: Optional[Tuple[int, int, int]] = None) -> bytes:
    reasons = {200: "OK", 206: "Partial Content", 404: "Not Found", 400: "Bad Request"}
    lines = ["HTTP/1.1 %d %s" % (status, reasons.get(status, "Unknown"))]
    lines.append("Content-Length: %d" % len(body))
    if content_range is not None:
        lines.append("Content-Range: bytes %d-%d/%d" % content_range)
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + body
