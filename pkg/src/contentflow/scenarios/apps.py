"""Client and origin-server endpoints used by scenario runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .. import httpsem
from ..netmodel import HostStack, Session
from .config import RequestSpec, AFTER


class OriginServer:
    """Plain HTTP file server: 200 with Content-Length, 206 for ranged
    requests, 404 otherwise. Closes the connection after each response."""

    def __init__(self, stack: HostStack, hostname: str,
                 contents: Dict[str, bytes], trace=None):
        self.stack = stack
        self.hostname = hostname
        self.contents = contents
        self.trace = trace
        self.requests_served = 0

    def start(self) -> None:
        self.stack.listen(80, self._accept)

    def _accept(self, session: Session) -> None:
        buf = bytearray()
        session.on_data = lambda s, data: self._on_data(s, buf, data)
        session.on_close = lambda s: s.close()

    def _on_data(self, session: Session, buf: bytearray, data: bytes) -> None:
        buf.extend(data)
        raw = bytes(buf)
        if httpsem.header_block_end(raw) < 0:
            return
        try:
            request = httpsem.parse_request(raw)
            name = httpsem.content_name(request.host, request.path)
        except httpsem.HttpError:
            self._respond(session, httpsem.render_response(400))
            return
        body = self.contents.get(name)
        if body is None:
            self._respond(session, httpsem.render_response(404))
            return
        self.requests_served += 1
        if self.trace is not None:
            self.trace.record("server:%s" % self.hostname, "serve", name)
        if request.range is not None:
            first, last = request.range
            if not 0 <= first <= last < len(body):
                self._respond(session, httpsem.render_response(400))
                return
            self._respond(session, httpsem.render_response(
                206, body[first:last + 1], content_range=(first, last, len(body))))
        else:
            self._respond(session, httpsem.render_response(200, body))

    def _respond(self, session: Session, payload: bytes) -> None:
        session.send(payload)
        session.close()


@dataclass
class RequestRecord:
    request_id: int
    client: str
    content: str
    chunks: int
    start_time: Optional[int] = None
    end_time: Optional[int] = None
    body: bytes = b""
    observed_sources: List[Tuple[str, int]] = field(default_factory=list)
    statuses: List[int] = field(default_factory=list)
    local_ports: List[int] = field(default_factory=list)
    completed: bool = False
    error: Optional[str] = None

    @property
    def delay(self) -> Optional[int]:
        if self.start_time is None or self.end_time is None:
            return None
        return self.end_time - self.start_time


class ClientApp:
    """Drives one client host through its workload entries.

    Entries with time AFTER chain behind the close of the client's
    previous request; a chunked entry issues one connection per range
    chunk, closing each before starting the next.
    """

    def __init__(self, stack: HostStack, resolve: Callable[[str], Optional[str]],
                 content_sizes: Dict[str, int], trace=None):
        self.stack = stack
        self.resolve = resolve
        self.content_sizes = content_sizes
        self.trace = trace
        self.records: List[RequestRecord] = []
        self._queue: List[Tuple[RequestSpec, RequestRecord]] = []

    def add_request(self, spec: RequestSpec, request_id: int) -> RequestRecord:
        record = RequestRecord(request_id=request_id, client=self.stack.name,
                               content=spec.content, chunks=spec.chunks)
        self.records.append(record)
        self._queue.append((spec, record))
        return record

    def start(self) -> None:
        eq = self.stack.network.eq
        for i, (spec, record) in enumerate(self._queue):
            if spec.time != AFTER:
                eq.schedule_at(spec.time, lambda r=record: self._begin(r))
            elif i == 0:
                eq.schedule_at(0, lambda r=record: self._begin(r))
            # AFTER entries are started from the previous record's teardown

    def _log(self, event: str, detail: str) -> None:
        if self.trace is not None:
            self.trace.record("client:%s" % self.stack.name, event, detail)

    def _chunk_ranges(self, record: RequestRecord) -> List[Optional[Tuple[int, int]]]:
        size = self.content_sizes[record.content]
        if record.chunks <= 1 or size == 0:
            return [None]
        n = min(record.chunks, size)
        bounds = [size * k // n for k in range(n + 1)]
        return [(bounds[k], bounds[k + 1] - 1) for k in range(n)]

    def _begin(self, record: RequestRecord) -> None:
        record.start_time = self.stack.network.eq.now
        self._log("request", "%s chunks=%d" % (record.content, record.chunks))
        self._fetch_chunk(record, self._chunk_ranges(record), 0)

    def _fetch_chunk(self, record: RequestRecord, ranges, index: int) -> None:
        host, _, path = record.content.partition("/")
        dst_ip = self.resolve(host)
        if dst_ip is None:
            record.error = "unresolvable host %s" % host
            self._finish(record)
            return
        session = self.stack.connect(dst_ip, 80)
        record.local_ports.append(session.local_port)
        byte_range = ranges[index]
        raw_request = httpsem.render_request(host, "/" + path, byte_range=byte_range)
        buf = bytearray()
        meta_box: List[httpsem.HttpResponseMeta] = []

        def on_established(s: Session) -> None:
            s.send(raw_request)

        def on_data(s: Session, data: bytes) -> None:
            buf.extend(data)
            raw = bytes(buf)
            if not meta_box:
                if httpsem.header_block_end(raw) < 0:
                    return
                meta_box.append(httpsem.parse_response_meta(raw))
            meta = meta_box[0]
            if meta.content_length is not None:
                if len(raw) >= meta.header_len + meta.content_length:
                    # last byte of this chunk delivered
                    if s.observed_remote is not None:
                        record.observed_sources.append(s.observed_remote)

        def on_close(s: Session) -> None:
            s.close()

        def on_teardown(s: Session) -> None:
            # access delay runs until the connection is fully released,
            # covering session teardown as well as the transfer itself
            record.end_time = self.stack.network.eq.now
            self._chunk_done(record, ranges, index, bytes(buf),
                             meta_box[0] if meta_box else None)

        def on_error(s: Session, reason: str) -> None:
            record.error = reason
            self._finish(record)

        session.on_established = on_established
        session.on_data = on_data
        session.on_close = on_close
        session.on_teardown = on_teardown
        session.on_error = on_error

    def _chunk_done(self, record, ranges, index, raw: bytes,
                    meta: Optional[httpsem.HttpResponseMeta]) -> None:
        if meta is None:
            record.error = "empty response"
            self._finish(record)
            return
        record.statuses.append(meta.status)
        if meta.ignorable:
            record.error = "status %d" % meta.status
            self._finish(record)
            return
        record.body += httpsem.strip_headers(raw)
        if index + 1 < len(ranges):
            self._fetch_chunk(record, ranges, index + 1)
        else:
            record.completed = True
            self._finish(record)

    def _finish(self, record: RequestRecord) -> None:
        self._log("done" if record.completed else "failed",
                  "%s bytes=%d" % (record.content, len(record.body)))
        # chain the next AFTER entry for this client
        for i, (spec, rec) in enumerate(self._queue):
            if rec is record and i + 1 < len(self._queue):
                nxt_spec, nxt_rec = self._queue[i + 1]
                if nxt_spec.time == AFTER:
                    self.stack.network.eq.schedule_in(0, lambda: self._begin(nxt_rec))
                break
