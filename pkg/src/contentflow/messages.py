"""Controller message set.

The original control channel was REST over HTTP; here the same message
semantics are carried by in-process calls. Every message gets a monotone
sequence number and is written to the trace for auditing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional, Tuple


@dataclass
class Message:
    seq: int = field(init=False, default=-1)

    def describe(self) -> str:
        parts = ["%s=%s" % (f.name, getattr(self, f.name))
                 for f in fields(self) if f.name != "seq"]
        return "%s{seq=%d %s}" % (type(self).__name__, self.seq, " ".join(parts))


@dataclass
class Register(Message):
    proxy_id: str = ""
    proxy_ip: str = ""
    service_port: int = 0
    port_range: Tuple[int, int] = (0, 0)  # inclusive


@dataclass
class Query(Message):
    content_name: str = ""
    client_ip: str = ""
    client_port: int = 0
    server_ip: str = ""
    server_port: int = 80
    proxy_id: str = ""


@dataclass
class Reply(Message):
    cache_location: Optional[Tuple[str, int]] = None
    handle_port: Optional[int] = None


@dataclass
class Release(Message):
    proxy_id: str = ""
    handle_port: int = 0


@dataclass
class CloseNotify(Message):
    proxy_id: str = ""
    client_ip: str = ""
    client_port: int = 0


@dataclass
class SetFilter(Message):
    filename: str = ""
    server_ip: str = ""
    dst_port: int = 0


@dataclass
class StoredAck(Message):
    content_name: str = ""
    cache_id: str = ""


@dataclass
class FlowDiscarded(Message):
    server_ip: str = ""
    dst_port: int = 0
    cache_id: str = ""
    reason: str = ""


class MessageBus:
    """Stamps sequence numbers and logs every control message."""

    def __init__(self, trace=None):
        self.trace = trace
        self._seq = 0

    def stamp(self, msg: Message, sender: str) -> Message:
        msg.seq = self._seq
        self._seq += 1
        if self.trace is not None:
            self.trace.record(sender, "msg", msg.describe())
        return msg
