"""One-sided transparent cache.

The cache never holds a TCP session with the server: it only sees the
server-to-proxy response stream duplicated at the forking switch. It
reassembles segments per flow, matches the stream to a controller-armed
filter, strips HTTP headers, and stores the body. Partial-content (206)
chunks accumulate per content until the full byte range is covered.
A small HTTP server side serves stored content back.
"""

from __future__ import annotations

import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Set, Tuple

from . import httpsem
from . import messages as msg
from .netmodel import FIN, HostStack, Session, SimPacket


@dataclass(frozen=True)
class FlowFilter:
    filename: str
    server_ip: str
    dst_port: int  # the controller-assigned handle


@dataclass
class AssemblyBuffer:
    key: Tuple[str, int, int]  # (server_ip, dst_port, ack)
    segments: Dict[int, bytes] = field(default_factory=dict)
    fin_seen: bool = False
    fin_seq: Optional[int] = None

    def insert(self, seq: int, payload: bytes) -> bool:
        """Dedupes by sequence number; returns False for duplicates."""
        if seq in self.segments:
            return False
        self.segments[seq] = payload
        return True

    def assemble(self) -> bytes:
        return b"".join(self.segments[s] for s in sorted(self.segments))

    def contiguous(self) -> bool:
        offset = 0
        for seq in sorted(self.segments):
            if seq != offset:
                return False
            offset = seq + len(self.segments[seq])
        return self.fin_seq is None or offset == self.fin_seq


@dataclass
class RangeAccumulator:
    content: str
    total: int
    body: bytearray = field(default_factory=bytearray)
    received: Set[Tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.body:
            self.body = bytearray(self.total)

    def add(self, first: int, last: int, data: bytes) -> None:
        self.body[first:last + 1] = data
        self.received.add((first, last))

    def covered(self) -> int:
        covered = 0
        edge = 0
        for first, last in sorted(self.received):
            lo = max(first, edge)
            if last >= lo:
                covered += last - lo + 1
                edge = last + 1
        return covered

    def complete(self) -> bool:
        return self.covered() == self.total


@dataclass
class CacheEntry:
    name: str
    body: bytes
    stored_at: int


class Cache:
    def __init__(self, stack: HostStack, controller, bus: msg.MessageBus,
                 cache_id: str, service_port: int, trace=None,
                 store_dir: Optional[str] = None):
        self.stack = stack
        self.controller = controller
        self.bus = bus
        self.cache_id = cache_id
        self.service_port = service_port
        self.trace = trace
        self.store_dir = Path(store_dir) if store_dir else None
        self.filters: Dict[Tuple[str, int], FlowFilter] = {}
        self.buffers: Dict[Tuple[str, int, int], AssemblyBuffer] = {}
        self.ranges: Dict[str, RangeAccumulator] = {}
        self.store: Dict[str, CacheEntry] = {}

    def start(self) -> None:
        self.stack.packet_tap = self.on_packet
        self.stack.listen(self.service_port, self._accept)

    def _log(self, event: str, detail: str) -> None:
        if self.trace is not None:
            self.trace.record("cache:%s" % self.cache_id, event, detail)

    # --- controller plane ----------------------------------------------

    def set_filter(self, m: msg.SetFilter) -> bool:
        key = (m.server_ip, m.dst_port)
        if key in self.filters:
            # handle reuse while the previous content is still live
            self._log("filter_conflict", "%s:%d" % key)
            return False
        self.filters[key] = FlowFilter(m.filename, m.server_ip, m.dst_port)
        self._log("filter_armed", "%s %s:%d" % (m.filename, m.server_ip, m.dst_port))
        return True

    # --- packet tap ----------------------------------------------------

    def on_packet(self, packet: SimPacket) -> None:
        key = (packet.src_ip, packet.dst_port)
        if key not in self.filters:
            return
        bkey = (packet.src_ip, packet.dst_port, packet.ack)
        buf = self.buffers.get(bkey)
        if buf is None:
            buf = self.buffers[bkey] = AssemblyBuffer(key=bkey)
        if packet.payload:
            buf.insert(packet.seq, packet.payload)
        if FIN in packet.flags:
            buf.fin_seen = True
            buf.fin_seq = packet.seq
            self.finalize(buf)

    # --- finalize ------------------------------------------------------

    def finalize(self, buf: AssemblyBuffer) -> None:
        server_ip, dst_port, _ = buf.key
        self.buffers.pop(buf.key, None)
        filt = self.filters.get((server_ip, dst_port))
        if filt is None:
            self._log("discard", "no filter for %s:%d" % (server_ip, dst_port))
            return
        raw = buf.assemble()
        try:
            meta = httpsem.parse_response_meta(raw)
        except httpsem.HttpError as exc:
            self._discard(filt, "unparsable response: %s" % exc)
            return
        if meta.ignorable:
            self._discard(filt, "status %d" % meta.status)
            return
        body = raw[meta.header_len:]
        if meta.status == 206 and meta.content_range is not None:
            self._finalize_partial(filt, meta, body)
            return
        if meta.content_length is not None and len(body) != meta.content_length:
            self._discard(filt, "length mismatch %d != %d" % (len(body), meta.content_length))
            return
        if not buf.contiguous():
            self._discard(filt, "gaps in stream")
            return
        self._commit(filt, body)

    def _finalize_partial(self, filt: FlowFilter, meta: httpsem.HttpResponseMeta,
                          body: bytes) -> None:
        first, last, total = meta.content_range
        if len(body) != last - first + 1:
            self._discard(filt, "range chunk length mismatch")
            return
        acc = self.ranges.get(filt.filename)
        if acc is None:
            acc = self.ranges[filt.filename] = RangeAccumulator(filt.filename, total)
        elif acc.total != total:
            self._discard(filt, "conflicting total size")
            return
        acc.add(first, last, body)
        self._log("range", "%s %d-%d/%d covered=%d" % (
            filt.filename, first, last, total, acc.covered()))
        if acc.complete():
            del self.ranges[filt.filename]
            self._commit(filt, bytes(acc.body))
        else:
            # chunk consumed but the file is still incomplete; the flow for
            # this handle is over, so tell the controller without an ACK
            self._disarm(filt)
            m = self.bus.stamp(msg.FlowDiscarded(
                server_ip=filt.server_ip, dst_port=filt.dst_port,
                cache_id=self.cache_id, reason="partial coverage"),
                "cache:%s" % self.cache_id)
            self.controller.on_flow_discarded(m)

    def _commit(self, filt: FlowFilter, body: bytes) -> None:
        self.store[filt.filename] = CacheEntry(
            name=filt.filename, body=body, stored_at=self.stack.network.eq.now)
        self._persist(filt.filename, body)
        self._disarm(filt)
        self._log("stored", "%s bytes=%d" % (filt.filename, len(body)))
        m = self.bus.stamp(msg.StoredAck(
            content_name=filt.filename, cache_id=self.cache_id),
            "cache:%s" % self.cache_id)
        self.controller.on_stored_ack(m)

    def _discard(self, filt: FlowFilter, reason: str) -> None:
        self._log("discard", "%s: %s" % (filt.filename, reason))
        self._disarm(filt)
        m = self.bus.stamp(msg.FlowDiscarded(
            server_ip=filt.server_ip, dst_port=filt.dst_port,
            cache_id=self.cache_id, reason=reason), "cache:%s" % self.cache_id)
        self.controller.on_flow_discarded(m)

    def _disarm(self, filt: FlowFilter) -> None:
        self.filters.pop((filt.server_ip, filt.dst_port), None)

    def _persist(self, name: str, body: bytes) -> None:
        if self.store_dir is None:
            return
        self.store_dir.mkdir(parents=True, exist_ok=True)
        (self.store_dir / urllib.parse.quote(name, safe="")).write_bytes(body)

    # --- serving -------------------------------------------------------

    def serve(self, name: str) -> bytes:
        """Full HTTP response for a stored content name (404 if absent)."""
        entry = self.store.get(name)
        if entry is None:
            return httpsem.render_response(404)
        return httpsem.render_response(200, entry.body)

    def _accept(self, session: Session) -> None:
        buf = bytearray()

        def on_data(s: Session, data: bytes) -> None:
            buf.extend(data)
            if httpsem.header_block_end(bytes(buf)) < 0:
                return
            try:
                request = httpsem.parse_request(bytes(buf))
                name = httpsem.content_name(request.host, request.path)
            except httpsem.HttpError:
                s.send(httpsem.render_response(400))
                s.close()
                return
            self._log("serve", name)
            s.send(self.serve(name))
            s.close()

        session.on_data = on_data
        session.on_close = lambda s: s.close()
