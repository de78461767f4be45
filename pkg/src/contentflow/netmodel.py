"""Deterministic event-driven network model.

Hosts and switches are nodes joined by links with integer one-way delay
and a byte rate. Time is integer units throughout; ties in the event
queue break by insertion order, so two runs of the same scenario produce
identical traces.

On top of raw packets, hosts expose a simplified TCP-like session: a
3-packet handshake (SYN, SYN-ACK, ACK), MSS segmentation with monotone
sequence numbers, and FIN teardown. There is no loss model, no
retransmission and no congestion control.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

SYN = "SYN"
ACK = "ACK"
FIN = "FIN"

DEFAULT_MSS = 1460


class NodeKind(Enum):
    HOST = "host"
    SWITCH = "switch"


@dataclass(frozen=True)
class NodeId:
    id: int
    kind: NodeKind


class TopologyError(Exception):
    pass


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class SimPacket:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    seq: int = 0
    ack: int = 0
    flags: frozenset = frozenset()
    payload: bytes = b""

    def __post_init__(self):
        for port in (self.src_port, self.dst_port):
            if not 1 <= port <= 65535:
                raise ValueError("port out of range: %d" % port)

    def describe(self) -> str:
        f = "".join(sorted(self.flags)) or "-"
        return "%s:%d>%s:%d seq=%d ack=%d %s len=%d" % (
            self.src_ip, self.src_port, self.dst_ip, self.dst_port,
            self.seq, self.ack, f, len(self.payload),
        )


class EventQueue:
    """Priority queue of (time, insertion sequence, callback)."""

    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0

    def schedule_at(self, when: int, fn: Callable[[], None]) -> None:
        if when < self.now:
            raise ValueError("cannot schedule in the past")
        heapq.heappush(self._heap, (when, self._seq, fn))
        self._seq += 1

    def schedule_in(self, delay: int, fn: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay, fn)

    def pending(self) -> int:
        return len(self._heap)

    def run(self, until: Optional[int] = None, max_events: int = 50_000_000) -> None:
        count = 0
        while self._heap:
            when, _, fn = self._heap[0]
            if until is not None and when > until:
                break
            heapq.heappop(self._heap)
            self.now = when
            fn()
            count += 1
            if count > max_events:
                raise RuntimeError("event budget exceeded; runaway scenario?")


class Link:
    """Full-duplex link; each direction serializes packets FIFO."""

    def __init__(self, a: Tuple[str, int], b: Tuple[str, int], delay: int, rate: int):
        if delay < 0:
            raise TopologyError("link delay must be >= 0")
        if rate <= 0:
            raise TopologyError("link rate must be > 0")
        if a[0] == b[0]:
            raise TopologyError("link endpoints must be distinct nodes")
        self.a = a
        self.b = b
        self.delay = delay
        self.rate = rate
        self._busy_until = {a[0]: 0, b[0]: 0}
        # test hook: map one sent packet to several delivered copies
        self.tamper: Optional[Callable[[SimPacket], List[SimPacket]]] = None

    def other_end(self, node_name: str) -> Tuple[str, int]:
        if node_name == self.a[0]:
            return self.b
        if node_name == self.b[0]:
            return self.a
        raise TopologyError("node %s not on link" % node_name)

    def serialization(self, nbytes: int) -> int:
        return -(-nbytes // self.rate)  # ceil division

    def transmit_times(self, sender: str, now: int, nbytes: int) -> Tuple[int, int]:
        """Returns (departure complete, arrival) and reserves the sender slot."""
        start = max(now, self._busy_until[sender])
        done = start + self.serialization(nbytes)
        self._busy_until[sender] = done
        return done, done + self.delay


class Node:
    def __init__(self, node_id: NodeId, name: str):
        self.node_id = node_id
        self.name = name
        self.ports: Dict[int, Link] = {}
        # handler has receive(in_port, packet); set by HostStack / switch fabric
        self.handler = None


class Network:
    def __init__(self, eq: EventQueue, trace=None, mss: int = DEFAULT_MSS,
                 trace_packets: bool = True):
        self.eq = eq
        self.trace = trace
        self.mss = mss
        self.trace_packets = trace_packets
        self.nodes: Dict[str, Node] = {}
        self._next_id = 0

    def _add_node(self, name: str, kind: NodeKind) -> Node:
        if name in self.nodes:
            raise TopologyError("duplicate node name %r" % name)
        node = Node(NodeId(self._next_id, kind), name)
        self._next_id += 1
        self.nodes[name] = node
        return node

    def add_host(self, name: str, ip: str) -> "HostStack":
        node = self._add_node(name, NodeKind.HOST)
        stack = HostStack(self, node, ip)
        node.handler = stack
        return stack

    def add_switch_node(self, name: str) -> Node:
        return self._add_node(name, NodeKind.SWITCH)

    def add_link(self, a: str, b: str, delay: int, rate: int) -> Link:
        na, nb = self.nodes.get(a), self.nodes.get(b)
        if na is None or nb is None:
            raise TopologyError("unknown node in link %s-%s" % (a, b))
        pa = max(na.ports, default=-1) + 1
        pb = max(nb.ports, default=-1) + 1
        link = Link((a, pa), (b, pb), delay, rate)
        na.ports[pa] = link
        nb.ports[pb] = link
        return link

    def send(self, from_node: str, out_port: int, packet: SimPacket) -> int:
        """Queues a packet on a link; returns the scheduled arrival time."""
        node = self.nodes[from_node]
        link = node.ports.get(out_port)
        if link is None:
            raise TopologyError("no link on %s port %d" % (from_node, out_port))
        _, arrival = link.transmit_times(from_node, self.eq.now, len(packet.payload))
        peer, peer_port = link.other_end(from_node)
        copies = link.tamper(packet) if link.tamper else [packet]
        for copy in copies:
            self.eq.schedule_at(arrival, lambda c=copy: self._deliver(peer, peer_port, c))
        return arrival

    def _deliver(self, node_name: str, in_port: int, packet: SimPacket) -> None:
        if self.trace is not None and self.trace_packets:
            self.trace.record("net", "deliver",
                              "%s[%d] %s" % (node_name, in_port, packet.describe()))
        handler = self.nodes[node_name].handler
        if handler is not None:
            handler.receive(in_port, packet)


class SessionState(Enum):
    SYN_SENT = "syn_sent"
    SYN_RCVD = "syn_rcvd"
    ESTABLISHED = "established"
    CLOSED = "closed"


class Session:
    """One direction-agnostic TCP-like session endpoint."""

    def __init__(self, stack: "HostStack", local_port: int, remote_ip: str,
                 remote_port: int, loose: bool = False):
        self.stack = stack
        self.local_port = local_port
        self.remote_ip = remote_ip
        self.remote_port = remote_port
        self.loose = loose  # client side: demux by local port only
        self.state = SessionState.SYN_SENT
        self.send_next = 0
        self.recv_next = 0
        self.received_total = 0  # carried in the ack field of outgoing packets
        self._segments: Dict[int, bytes] = {}
        self.fin_sent = False
        self.fin_acked = False
        self._fin_seq: Optional[int] = None
        self._closed_notified = False
        self.observed_remote: Optional[Tuple[str, int]] = None
        self.on_established: Optional[Callable[["Session"], None]] = None
        self.on_data: Optional[Callable[["Session", bytes], None]] = None
        self.on_close: Optional[Callable[["Session"], None]] = None
        # fires when our own FIN has been acknowledged (teardown complete)
        self.on_teardown: Optional[Callable[["Session"], None]] = None
        self.on_error: Optional[Callable[["Session", str], None]] = None

    def _packet(self, flags, seq=0, ack=None, payload=b"") -> SimPacket:
        return SimPacket(
            src_ip=self.stack.ip, src_port=self.local_port,
            dst_ip=self.remote_ip, dst_port=self.remote_port,
            seq=seq, ack=self.received_total if ack is None else ack,
            flags=frozenset(flags), payload=payload,
        )

    def send(self, data: bytes) -> List[int]:
        """Segments data into MSS-sized packets with monotone seq; returns the seqs used."""
        if self.state is not SessionState.ESTABLISHED:
            raise SessionError("send on non-established session")
        mss = self.stack.network.mss
        seqs = []
        for off in range(0, len(data), mss):
            chunk = data[off:off + mss]
            self.stack._emit(self._packet({ACK}, seq=self.send_next, payload=chunk))
            seqs.append(self.send_next)
            self.send_next += len(chunk)
        return seqs

    def close(self) -> None:
        if self.fin_sent or self.state is SessionState.CLOSED:
            return
        self.fin_sent = True
        self.stack._emit(self._packet({FIN, ACK}, seq=self.send_next))
        if self._fin_seq is not None and self.recv_next >= self._fin_seq:
            self.state = SessionState.CLOSED

    def terminal(self) -> bool:
        """Both directions are done; only our FIN's ack may be outstanding."""
        if self.state is SessionState.CLOSED:
            return True
        return (self.fin_sent and self._fin_seq is not None
                and self.recv_next >= self._fin_seq)

    def _handle(self, packet: SimPacket) -> None:
        flags = packet.flags
        if SYN in flags and ACK in flags:
            if self.state is SessionState.SYN_SENT:
                self.state = SessionState.ESTABLISHED
                self.received_total = 1  # SYN occupies one sequence slot
                self.stack._emit(self._packet({ACK}))
                if self.on_established:
                    self.on_established(self)
            return
        if SYN in flags:
            return  # duplicate SYN on an existing session
        if packet.payload:
            self.observed_remote = (packet.src_ip, packet.src_port)
            if packet.seq not in self._segments and packet.seq >= self.recv_next:
                self._segments[packet.seq] = packet.payload
                self._drain()
        if FIN in flags:
            self._fin_seq = packet.seq
            self._maybe_finish()
            return
        if ACK in flags and self.state is SessionState.SYN_RCVD:
            self.state = SessionState.ESTABLISHED
            if self.on_established:
                self.on_established(self)
            return
        if ACK in flags and not packet.payload and self.fin_sent and not self.fin_acked:
            # pure ack of our FIN: the session is fully torn down
            self.fin_acked = True
            self.state = SessionState.CLOSED
            if self.on_teardown:
                self.on_teardown(self)
            if self._fin_seq is not None and self.recv_next >= self._fin_seq:
                self.stack.unbind(self)

    def _drain(self) -> None:
        while self.recv_next in self._segments:
            chunk = self._segments.pop(self.recv_next)
            self.recv_next += len(chunk)
            self.received_total += len(chunk)
            if self.on_data:
                self.on_data(self, chunk)
        self._maybe_finish()

    def _maybe_finish(self) -> None:
        if self._fin_seq is None or self.recv_next < self._fin_seq:
            return
        if not self._closed_notified:
            self._closed_notified = True
            # ack the FIN so teardown costs exactly two one-way traversals
            self.stack._emit(self._packet({ACK}, ack=self.received_total + 1))
            if self.fin_sent:
                self.state = SessionState.CLOSED
            if self.on_close:
                self.on_close(self)
            if self.fin_sent and self.fin_acked:
                self.stack.unbind(self)

    def fail(self, reason: str) -> None:
        self.state = SessionState.CLOSED
        self.stack.unbind(self)
        if self.on_error:
            self.on_error(self, reason)


class HostStack:
    """Per-host session layer: listeners, session demux and an optional raw tap."""

    EPHEMERAL_START = 10000

    def __init__(self, network: Network, node: Node, ip: str):
        self.network = network
        self.node = node
        self.ip = ip
        self.listeners: Dict[int, Callable[[Session], None]] = {}
        self._bound: Dict[Tuple[int, str, int], Session] = {}
        self._loose: Dict[int, Session] = {}
        self._next_ephemeral = self.EPHEMERAL_START
        # receives every packet not addressed to this host (one-sided tap)
        self.packet_tap: Optional[Callable[[SimPacket], None]] = None
        self.connect_timeout: Optional[int] = None

    @property
    def name(self) -> str:
        return self.node.name

    def listen(self, port: int, on_accept: Callable[[Session], None]) -> None:
        self.listeners[port] = on_accept

    def alloc_port(self) -> int:
        port = self._next_ephemeral
        self._next_ephemeral += 1
        return port

    def connect(self, dst_ip: str, dst_port: int,
                local_port: Optional[int] = None) -> Session:
        if local_port is None:
            local_port = self.alloc_port()
        stale = self._loose.get(local_port)
        if stale is not None:
            if not stale.terminal():
                raise SessionError("local port %d already in use" % local_port)
            # the previous occupant is only waiting for its FIN ack; evict it
            self.unbind(stale)
        session = Session(self, local_port, dst_ip, dst_port, loose=True)
        self._loose[local_port] = session
        self._emit(session._packet({SYN}, ack=0))
        if self.connect_timeout is not None:
            deadline = self.network.eq.now + self.connect_timeout
            def expire():
                if session.state is SessionState.SYN_SENT:
                    session.fail("connect timeout")
            self.network.eq.schedule_at(deadline, expire)
        return session

    def _emit(self, packet: SimPacket) -> None:
        if len(self.node.ports) != 1:
            raise TopologyError("host %s must have exactly one access link" % self.name)
        (port,) = self.node.ports
        self.network.send(self.name, port, packet)

    def receive(self, in_port: int, packet: SimPacket) -> None:
        if packet.dst_ip != self.ip:
            if self.packet_tap:
                self.packet_tap(packet)
            return
        key = (packet.dst_port, packet.src_ip, packet.src_port)
        session = self._bound.get(key)
        if session is None:
            session = self._loose.get(packet.dst_port)
        if (session is not None and SYN in packet.flags
                and ACK not in packet.flags and session.terminal()):
            # fresh connection reusing a drained session's port
            self.unbind(session)
            session = None
        if session is None:
            if SYN in packet.flags and packet.dst_port in self.listeners:
                session = Session(self, packet.dst_port, packet.src_ip, packet.src_port)
                session.state = SessionState.SYN_RCVD
                self._bound[key] = session
                self.listeners[packet.dst_port](session)
                session.received_total = 1
                self.stack_syn_ack(session)
            return
        session._handle(packet)

    def unbind(self, session: Session) -> None:
        for key, s in list(self._bound.items()):
            if s is session:
                del self._bound[key]
        for port, s in list(self._loose.items()):
            if s is session:
                del self._loose[port]

    def stack_syn_ack(self, session: Session) -> None:
        session.stack._emit(session._packet({SYN, ACK}))
