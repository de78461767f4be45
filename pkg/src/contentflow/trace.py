"""Append-only event trace shared by every component of a run."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Tuple


@dataclass(frozen=True)
class TraceEvent:
    time: int
    component: str
    event: str
    detail: str

    def render(self) -> str:
        return "%d\t%s\t%s\t%s" % (self.time, self.component, self.event, self.detail)


class Trace:
    def __init__(self, eq=None):
        self.eq = eq
        self.events: List[TraceEvent] = []

    @property
    def now(self) -> int:
        return self.eq.now if self.eq is not None else 0

    def record(self, component: str, event: str, detail: str = "") -> None:
        self.events.append(TraceEvent(self.now, component, event, detail))

    def lines(self) -> List[str]:
        return [e.render() for e in self.events]

    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.events:
            h.update(e.render().encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def select(self, component: str = None, event: str = None) -> List[TraceEvent]:
        out = []
        for e in self.events:
            if component is not None and e.component != component:
                continue
            if event is not None and e.event != event:
                continue
            out.append(e)
        return out
