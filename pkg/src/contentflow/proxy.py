"""Transparent TCP-terminating proxy.

Terminates every client session at its service port, parses the GET,
queries the controller with the content name, then either fetches from
the designated cache or opens a late-bound session to the origin server
using the controller-assigned handle as its source port. The response is
relayed to the client only once it is complete, so the access delay
decomposes into the sum of the per-leg transfer terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

from . import httpsem
from . import messages as msg
from .netmodel import HostStack, Session


class ProxyState(Enum):
    AWAITING_REQUEST = "awaiting_request"
    QUERYING = "querying"
    STREAMING_ORIGIN = "streaming_origin"
    STREAMING_CACHE = "streaming_cache"
    PASS_THROUGH = "pass_through"
    CLOSING = "closing"


@dataclass
class ProxySession:
    client: Session
    state: ProxyState = ProxyState.AWAITING_REQUEST
    content: Optional[str] = None
    upstream: Optional[Session] = None
    assigned_handle: Optional[int] = None
    request_buf: bytes = b""
    response_buf: bytes = b""
    response_meta: Optional[httpsem.HttpResponseMeta] = None
    released: bool = False
    closed_notified: bool = False


class Proxy:
    def __init__(self, stack: HostStack, controller, bus: msg.MessageBus,
                 proxy_id: str, service_port: int,
                 handle_range: Tuple[int, int],
                 resolve: Callable[[str], Optional[str]],
                 trace=None, proxy_delay: int = 0):
        self.stack = stack
        self.controller = controller
        self.bus = bus
        self.proxy_id = proxy_id
        self.service_port = service_port
        self.handle_range = handle_range
        self.resolve = resolve
        self.trace = trace
        self.proxy_delay = proxy_delay
        self.sessions: Dict[int, ProxySession] = {}  # keyed by client-side remote port

    def start(self) -> None:
        """Registers the handle pool with the controller and starts listening."""
        m = self.bus.stamp(msg.Register(
            proxy_id=self.proxy_id, proxy_ip=self.stack.ip,
            service_port=self.service_port, port_range=self.handle_range),
            "proxy:%s" % self.proxy_id)
        self.controller.register(m)
        self.stack.listen(self.service_port, self._accept)

    def _log(self, event: str, detail: str) -> None:
        if self.trace is not None:
            self.trace.record("proxy:%s" % self.proxy_id, event, detail)

    def _accept(self, session: Session) -> None:
        ps = ProxySession(client=session)
        self.sessions[session.remote_port] = ps
        session.on_data = lambda s, data: self.on_client_data(ps, data)
        session.on_close = lambda s: self.on_client_close(ps)

    # --- client side ---------------------------------------------------

    def on_client_data(self, ps: ProxySession, data: bytes) -> None:
        if ps.state is not ProxyState.AWAITING_REQUEST:
            if ps.state is ProxyState.PASS_THROUGH and ps.upstream is not None:
                ps.upstream.send(data)
            return
        ps.request_buf += data
        if httpsem.header_block_end(ps.request_buf) < 0:
            return
        try:
            request = httpsem.parse_request(ps.request_buf)
        except httpsem.HttpError as exc:
            self._log("parse_error", str(exc))
            self._pass_through(ps, host=None)
            return
        if not request.is_content:
            self._log("non_content", request.method)
            self._pass_through(ps, host=request.host)
            return
        name = httpsem.content_name(request.host, request.path)
        ps.content = name
        ps.state = ProxyState.QUERYING
        if self.proxy_delay > 0:
            self.stack.network.eq.schedule_in(self.proxy_delay,
                                              lambda: self._query(ps, request, name))
        else:
            self._query(ps, request, name)

    def _query(self, ps: ProxySession, request: httpsem.HttpRequest, name: str) -> None:
        server_ip = self.resolve(request.host)
        if server_ip is None:
            self._log("unresolvable", request.host)
            ps.client.close()
            return
        q = self.bus.stamp(msg.Query(
            content_name=name,
            client_ip=ps.client.remote_ip, client_port=ps.client.remote_port,
            server_ip=server_ip, server_port=80,
            proxy_id=self.proxy_id), "proxy:%s" % self.proxy_id)
        try:
            reply = self.controller.handle_query(q)
        except Exception as exc:  # fail-open: relay to origin, no content processing
            self._log("controller_error", str(exc))
            ps.state = ProxyState.STREAMING_ORIGIN
            self._open_upstream(ps, server_ip, 80, src_port=None, request=request)
            return
        if reply.cache_location is not None:
            cache_ip, cache_port = reply.cache_location
            ps.state = ProxyState.STREAMING_CACHE
            self._open_upstream(ps, cache_ip, cache_port, src_port=None, request=request)
        else:
            ps.assigned_handle = reply.handle_port
            ps.state = ProxyState.STREAMING_ORIGIN
            # pool exhausted: relay to origin without a content handle
            self._open_upstream(ps, server_ip, 80, src_port=reply.handle_port,
                                request=request)

    def _open_upstream(self, ps: ProxySession, ip: str, port: int,
                       src_port: Optional[int], request: httpsem.HttpRequest) -> None:
        raw = httpsem.render_request(request.host, request.path,
                                     byte_range=request.range)
        upstream = self.stack.connect(ip, port, local_port=src_port)
        ps.upstream = upstream
        upstream.on_established = lambda s: s.send(raw)
        upstream.on_data = lambda s, data: self._on_upstream_data(ps, data)
        upstream.on_close = lambda s: self._on_upstream_close(ps)
        upstream.on_error = lambda s, reason: self._on_upstream_error(ps, reason)

    def _pass_through(self, ps: ProxySession, host: Optional[str]) -> None:
        """Non-GET traffic is relayed verbatim with no controller query."""
        ip = self.resolve(host) if host else None
        if ip is None:
            ps.client.close()
            return
        ps.state = ProxyState.PASS_THROUGH
        upstream = self.stack.connect(ip, 80)
        ps.upstream = upstream
        pending = ps.request_buf
        ps.request_buf = b""
        upstream.on_established = lambda s: s.send(pending)
        upstream.on_data = lambda s, data: ps.client.send(data)
        upstream.on_close = lambda s: ps.client.close()

    # --- upstream side -------------------------------------------------

    def _on_upstream_data(self, ps: ProxySession, data: bytes) -> None:
        ps.response_buf += data
        if ps.response_meta is None:
            end = httpsem.header_block_end(ps.response_buf)
            if end < 0:
                return
            try:
                ps.response_meta = httpsem.parse_response_meta(ps.response_buf)
            except httpsem.HttpError as exc:
                self._log("bad_response", str(exc))
                return
        meta = ps.response_meta
        if meta.content_length is not None:
            if len(ps.response_buf) >= meta.header_len + meta.content_length:
                self._relay_complete(ps)

    def _on_upstream_close(self, ps: ProxySession) -> None:
        if ps.state in (ProxyState.STREAMING_ORIGIN, ProxyState.STREAMING_CACHE):
            if ps.response_buf and ps.response_meta is None:
                # close-delimited response with no parsable header
                self._relay_complete(ps)
            elif ps.response_meta is not None and ps.response_buf:
                self._relay_complete(ps)
            else:
                self._finish(ps)

    def _on_upstream_error(self, ps: ProxySession, reason: str) -> None:
        self._log("upstream_error", reason)
        ps.client.close()
        self._finish(ps)

    def _relay_complete(self, ps: ProxySession) -> None:
        if ps.state is ProxyState.CLOSING:
            return
        ps.state = ProxyState.CLOSING
        self._log("relay", "%s bytes=%d" % (ps.content, len(ps.response_buf)))
        ps.client.send(ps.response_buf)
        ps.client.close()
        if ps.upstream is not None:
            ps.upstream.close()
        # handle release and close-notify wait for the client's FIN, so the
        # restoration rule stays installed until the response has passed it

    # --- teardown ------------------------------------------------------

    def on_client_close(self, ps: ProxySession) -> None:
        if ps.state is not ProxyState.CLOSING and ps.upstream is not None:
            ps.upstream.close()
        self._finish(ps)

    def _finish(self, ps: ProxySession) -> None:
        if ps.assigned_handle is not None and not ps.released:
            ps.released = True
            m = self.bus.stamp(msg.Release(
                proxy_id=self.proxy_id, handle_port=ps.assigned_handle),
                "proxy:%s" % self.proxy_id)
            self.controller.on_release(m)
        if not ps.closed_notified:
            ps.closed_notified = True
            m = self.bus.stamp(msg.CloseNotify(
                proxy_id=self.proxy_id,
                client_ip=ps.client.remote_ip, client_port=ps.client.remote_port),
                "proxy:%s" % self.proxy_id)
            self.controller.on_close_notify(m)
