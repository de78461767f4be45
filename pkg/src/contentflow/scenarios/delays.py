"""Analytic access-delay composition.

The composition is computed from the configured link parameters only, so
it can be compared against the simulator-measured delay. Terms follow the
three access cases: direct, proxied (miss) and cached (hit):

    direct:  TCP(client,server) + F(server,client)
    proxied: TCP(client,proxy) + Delay(proxy) + TCP(proxy,server)
             + F(server,proxy) + F(proxy,client)
    cached:  TCP(client,proxy) + Delay(proxy) + TCP(proxy,cache)
             + F(cache,proxy) + F(proxy,client)

The TCP term covers session setup and, on the client-facing leg, its
teardown: setup is three one-way traversals (SYN, SYN-ACK, then the
request riding the final ACK) and teardown two more (FIN, ack). Access
delay is measured until the client's connection is fully released, so
only the client-facing teardown sits on the critical path; upstream legs
tear down off it. F(A,B) is a pipelined MSS-segmented stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

Case_DIRECT = "direct"
Case_PROXIED = "proxied"
Case_CACHED = "cached"

LinkParams = Tuple[int, int]  # (one-way delay, rate in bytes/unit)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def one_way(links: List[LinkParams], nbytes: int) -> int:
    """Store-and-forward traversal of a single packet along a path."""
    return sum(delay + _ceil_div(nbytes, rate) for delay, rate in links)


def tcp_term(links: List[LinkParams], request_len: int) -> int:
    """Setup only: SYN, SYN-ACK, then the request behind the final ACK."""
    return 2 * one_way(links, 0) + one_way(links, request_len)


def session_term(links: List[LinkParams], request_len: int) -> int:
    """Setup plus teardown (FIN and its ack) for the client-facing leg."""
    return tcp_term(links, request_len) + 2 * one_way(links, 0)


def stream_term(links: List[LinkParams], nbytes: int, mss: int) -> int:
    """Last-byte arrival of an MSS-segmented stream queued all at once."""
    if nbytes == 0:
        return one_way(links, 0)
    sizes = [mss] * (nbytes // mss)
    if nbytes % mss:
        sizes.append(nbytes % mss)
    times = [0] * len(sizes)
    for delay, rate in links:
        busy = 0
        for k, size in enumerate(sizes):
            start = max(times[k], busy)
            busy = start + _ceil_div(size, rate)
            times[k] = busy + delay
    return times[-1]


@dataclass
class DelayBreakdown:
    case: str
    terms: Dict[str, int]
    analytic_total: int
    measured: int

    @property
    def mismatch(self) -> int:
        return abs(self.analytic_total - self.measured)

    @property
    def tolerance(self) -> int:
        # one event-granularity unit per TCP/transfer term
        return len(self.terms)


def compose(case: str, measured: int, *, mss: int, request_len: int,
            response_len: int, proxy_delay: int = 0,
            client_server: List[LinkParams] = None,
            client_proxy: List[LinkParams] = None,
            proxy_upstream: List[LinkParams] = None) -> DelayBreakdown:
    """Builds the per-case term table; `proxy_upstream` is the
    proxy-to-origin path for a miss and the proxy-to-cache path for a hit."""
    if case == Case_DIRECT:
        terms = {
            "tcp_client_server": session_term(client_server, request_len),
            "f_server_client": stream_term(client_server, response_len, mss),
        }
    else:
        upstream_label = "server" if case == Case_PROXIED else "cache"
        terms = {
            "tcp_client_proxy": session_term(client_proxy, request_len),
            "delay_proxy": proxy_delay,
            "tcp_proxy_%s" % upstream_label: tcp_term(proxy_upstream, request_len),
            "f_%s_proxy" % upstream_label: stream_term(proxy_upstream, response_len, mss),
            "f_proxy_client": stream_term(client_proxy, response_len, mss),
        }
    return DelayBreakdown(case=case, terms=terms,
                          analytic_total=sum(terms.values()), measured=measured)
