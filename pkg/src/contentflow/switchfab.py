"""OpenFlow-style switch: ordered match/action flow table with packet-in
escalation on table miss.

Controller-to-switch messaging is in-process: install_rule / remove_rule
calls and a packet_in callback. Buffered table-miss packets are
re-evaluated whenever a rule is installed, which stands in for the
OpenFlow packet-out.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple

from .netmodel import Network, Node, SimPacket


class RuleError(Exception):
    pass


@dataclass(frozen=True)
class MatchFields:
    src_ip: Optional[str] = None
    src_port: Optional[int] = None
    dst_ip: Optional[str] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        if all(v is None for v in (self.src_ip, self.src_port, self.dst_ip, self.dst_port)):
            raise RuleError("at least one match field must be set")

    def matches(self, packet: SimPacket) -> bool:
        return (
            (self.src_ip is None or self.src_ip == packet.src_ip)
            and (self.src_port is None or self.src_port == packet.src_port)
            and (self.dst_ip is None or self.dst_ip == packet.dst_ip)
            and (self.dst_port is None or self.dst_port == packet.dst_port)
        )


class ActionKind(Enum):
    OUTPUT = "output"
    REWRITE_DST = "rewrite_dst"
    REWRITE_SRC = "rewrite_src"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    port: Optional[int] = None
    ip: Optional[str] = None
    l4_port: Optional[int] = None

    @classmethod
    def output(cls, port: int) -> "Action":
        return cls(ActionKind.OUTPUT, port=port)

    @classmethod
    def duplicate(cls, port: int) -> "Action":
        return cls(ActionKind.DUPLICATE, port=port)

    @classmethod
    def rewrite_dst(cls, ip: str, l4_port: int) -> "Action":
        return cls(ActionKind.REWRITE_DST, ip=ip, l4_port=l4_port)

    @classmethod
    def rewrite_src(cls, ip: str, l4_port: int) -> "Action":
        return cls(ActionKind.REWRITE_SRC, ip=ip, l4_port=l4_port)

    def describe(self) -> str:
        if self.kind in (ActionKind.OUTPUT, ActionKind.DUPLICATE):
            return "%s(%d)" % (self.kind.value, self.port)
        return "%s(%s,%d)" % (self.kind.value, self.ip, self.l4_port)


@dataclass
class FlowRule:
    priority: int
    match: MatchFields
    actions: List[Action]
    static: bool = False

    def describe(self) -> str:
        m = self.match
        parts = []
        for label, v in (("src_ip", m.src_ip), ("src_port", m.src_port),
                         ("dst_ip", m.dst_ip), ("dst_port", m.dst_port)):
            if v is not None:
                parts.append("%s=%s" % (label, v))
        return "prio=%d match{%s} actions[%s]" % (
            self.priority, ",".join(parts), ",".join(a.describe() for a in self.actions))


class Switch:
    """Flow table plus table-miss buffering for one switch node."""

    def __init__(self, network: Network, node: Node, trace=None,
                 packet_in: Optional[Callable[["Switch", int, SimPacket], None]] = None):
        self.network = network
        self.node = node
        self.trace = trace
        self.packet_in = packet_in
        self._rules: List[Tuple[int, FlowRule]] = []  # (install seq, rule)
        self._install_seq = 0
        self._buffered: List[Tuple[int, SimPacket]] = []

    @property
    def name(self) -> str:
        return self.node.name

    def rules(self) -> List[FlowRule]:
        ordered = sorted(self._rules, key=lambda sr: (-sr[1].priority, sr[0]))
        return [rule for _, rule in ordered]

    def install_rule(self, rule: FlowRule) -> None:
        for action in rule.actions:
            if action.kind in (ActionKind.OUTPUT, ActionKind.DUPLICATE):
                if action.port not in self.node.ports:
                    raise RuleError(
                        "switch %s has no port %d" % (self.name, action.port))
        # identical match+priority replaces the old rule
        self._rules = [sr for sr in self._rules
                       if not (sr[1].match == rule.match and sr[1].priority == rule.priority)]
        self._rules.append((self._install_seq, rule))
        self._install_seq += 1
        if self.trace is not None:
            self.trace.record("switch:%s" % self.name, "install", rule.describe())
        self._reevaluate_buffered()

    def remove_rule(self, match: MatchFields) -> int:
        before = len(self._rules)
        self._rules = [sr for sr in self._rules if sr[1].match != match]
        removed = before - len(self._rules)
        if removed and self.trace is not None:
            self.trace.record("switch:%s" % self.name, "remove", str(match))
        return removed

    def discard_buffered(self, packet: SimPacket) -> None:
        self._buffered = [bp for bp in self._buffered if bp[1] is not packet]

    def _lookup(self, packet: SimPacket) -> Optional[FlowRule]:
        for rule in self.rules():
            if rule.match.matches(packet):
                return rule
        return None

    def receive(self, in_port: int, packet: SimPacket) -> None:
        self.process(in_port, packet)

    def process(self, in_port: int, packet: SimPacket) -> List[Tuple[int, SimPacket]]:
        """Applies the highest-priority matching rule; escalates on miss.

        Returns the (out_port, packet) emissions, which are also sent on
        the wire.
        """
        rule = self._lookup(packet)
        if rule is None:
            self._buffered.append((in_port, packet))
            if self.trace is not None:
                self.trace.record("switch:%s" % self.name, "packet_in", packet.describe())
            if self.packet_in is not None:
                self.packet_in(self, in_port, packet)
            return []
        emissions: List[Tuple[int, SimPacket]] = []
        current = packet
        for action in rule.actions:
            if action.kind is ActionKind.OUTPUT:
                emissions.append((action.port, current))
            elif action.kind is ActionKind.DUPLICATE:
                emissions.append((action.port, current))
            elif action.kind is ActionKind.REWRITE_DST:
                current = replace(current, dst_ip=action.ip, dst_port=action.l4_port)
            elif action.kind is ActionKind.REWRITE_SRC:
                current = replace(current, src_ip=action.ip, src_port=action.l4_port)
        for out_port, out_packet in emissions:
            self.network.send(self.name, out_port, out_packet)
        return emissions

    def _reevaluate_buffered(self) -> None:
        pending = self._buffered
        self._buffered = []
        for in_port, packet in pending:
            if self._lookup(packet) is None:
                self._buffered.append((in_port, packet))
            else:
                self.process(in_port, packet)
