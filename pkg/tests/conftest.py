"""Shared builders for unit and scenario tests."""

from __future__ import annotations

from typing import List, Optional, Tuple

from contentflow.netmodel import EventQueue, Network, SimPacket
from contentflow.scenarios.config import (AFTER, ContentSpec, LinkSpec,
                                          NodeSpec, PolicySpec, RequestSpec,
                                          ScenarioConfig)

CONTENT = "www.server.com/files/f.bin"


def standard_config(size: int = 5000, *, mode: str = "proxied",
                    policy: str = "cache_all", popularity_k: int = 2,
                    local_delay: int = 1, wan_delay: int = 50,
                    local_rate: int = 100000, wan_rate: int = 10000,
                    mss: int = 1460, proxy_delay: int = 0,
                    handles: Tuple[int, int] = (8000, 8015),
                    contents: Optional[List[ContentSpec]] = None,
                    workload: Optional[List[RequestSpec]] = None) -> ScenarioConfig:
    """Client, proxy and cache on one access switch; origin across a WAN link."""
    if contents is None:
        contents = [ContentSpec(CONTENT, size)]
    if workload is None:
        workload = [RequestSpec(0, "c1", CONTENT),
                    RequestSpec(AFTER, "c1", CONTENT)]
    return ScenarioConfig(
        nodes=[
            NodeSpec("c1", "host", "client", "10.0.0.1"),
            NodeSpec("p1", "host", "proxy", "10.0.0.2"),
            NodeSpec("k1", "host", "cache", "10.0.0.3"),
            NodeSpec("origin", "host", "server", "10.1.0.1", "www.server.com"),
            NodeSpec("sw1", "switch"),
            NodeSpec("sw2", "switch"),
        ],
        links=[
            LinkSpec("c1", "sw1", local_delay, local_rate),
            LinkSpec("p1", "sw1", local_delay, local_rate),
            LinkSpec("k1", "sw1", local_delay, local_rate),
            LinkSpec("sw1", "sw2", wan_delay, wan_rate),
            LinkSpec("origin", "sw2", local_delay, local_rate),
        ],
        contents=contents,
        workload=workload,
        policy=PolicySpec(policy=policy, popularity_k=popularity_k, mode=mode,
                          mss=mss, proxy_delay=proxy_delay, handles=handles),
    )


STANDARD_CONFIG_TEXT = """
[nodes]
c1     host client 10.0.0.1
p1     host proxy  10.0.0.2
k1     host cache  10.0.0.3
origin host server 10.1.0.1 www.server.com
sw1    switch
sw2    switch

[links]
c1 sw1     1 100000
p1 sw1     1 100000
k1 sw1     1 100000
sw1 sw2   50 10000
origin sw2 1 100000

[contents]
www.server.com/files/f.bin 5000

[workload]
0     c1 www.server.com/files/f.bin
after c1 www.server.com/files/f.bin

[policy]
policy cache_all
handles 8000 8015
"""


class Recorder:
    """Stand-in node handler that logs (time, in_port, packet)."""

    def __init__(self, eq: EventQueue):
        self.eq = eq
        self.received: List[Tuple[int, int, SimPacket]] = []

    def receive(self, in_port: int, packet: SimPacket) -> None:
        self.received.append((self.eq.now, in_port, packet))


def two_hosts(delay: int = 10, rate: int = 100000, mss: int = 1460):
    """Directly linked host pair (a, b) plus the shared event queue."""
    eq = EventQueue()
    net = Network(eq, mss=mss, trace_packets=False)
    a = net.add_host("a", "10.0.0.1")
    b = net.add_host("b", "10.0.0.2")
    net.add_link("a", "b", delay, rate)
    return eq, net, a, b
