"""Scenario runner: builds a world from a config, executes it, and emits
per-request metrics, the event trace, and invariant-violation findings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .. import messages as msg
from ..cache import Cache
from ..controller import (CacheAllPolicy, CacheInfo, Controller, Fabric,
                          NeverCachePolicy, PopularityPolicy)
from ..netmodel import EventQueue, Network
from ..proxy import Proxy
from ..switchfab import Switch
from ..trace import Trace
from .. import httpsem
from .apps import ClientApp, OriginServer, RequestRecord
from .config import (AFTER, ConfigError, ContentSpec, RequestSpec,
                     ScenarioConfig, parse_config)
from . import delays


@dataclass
class RequestMetrics:
    request_id: int
    client: str
    content: str
    hit: Optional[bool]
    bytes: int
    delay: Optional[int]
    completed: bool
    observed_sources: List[Tuple[str, int]]
    breakdown: Optional[delays.DelayBreakdown] = None

    def row(self) -> dict:
        return {
            "request_id": self.request_id,
            "client": self.client,
            "content": self.content,
            "hit": self.hit,
            "bytes": self.bytes,
            "delay_units": self.delay,
            "completed": self.completed,
        }


@dataclass
class RunResult:
    metrics: List[RequestMetrics]
    trace: Trace
    violations: List[str]
    controller_dump: dict
    records: List[RequestRecord] = field(default_factory=list)

    @property
    def trace_hash(self) -> str:
        return self.trace.digest()


class World:
    """All live objects of one scenario instance."""

    def __init__(self, config: ScenarioConfig, trace_packets: bool = True):
        config.validate()
        self.config = config
        self.eq = EventQueue()
        self.trace = Trace(self.eq)
        self.network = Network(self.eq, trace=self.trace, mss=config.policy.mss,
                               trace_packets=trace_packets)
        self.bus = msg.MessageBus(self.trace)
        self.servers: Dict[str, OriginServer] = {}
        self.clients: Dict[str, ClientApp] = {}
        self.caches: Dict[str, Cache] = {}
        self.proxy: Optional[Proxy] = None
        self.records: List[RequestRecord] = []
        self._build()

    def _build(self) -> None:
        config = self.config
        self.fixture: Dict[str, bytes] = {c.name: c.body() for c in config.contents}
        self.hostnames: Dict[str, str] = {}
        for n in config.nodes:
            if n.kind == "switch":
                self.network.add_switch_node(n.name)
            else:
                stack = self.network.add_host(n.name, n.ip)
                if config.policy.connect_timeout is not None:
                    stack.connect_timeout = config.policy.connect_timeout
                if n.hostname:
                    self.hostnames[n.hostname] = n.ip
        for link in config.links:
            self.network.add_link(link.a, link.b, link.delay, link.rate)

        self.fabric = Fabric(self.network)
        policy = {
            "cache_all": CacheAllPolicy,
            "never": NeverCachePolicy,
        }.get(config.policy.policy, lambda: PopularityPolicy(config.policy.popularity_k))()
        self.controller = Controller(
            self.fabric, self.bus, trace=self.trace, policy=policy,
            proxy_enabled=(config.policy.mode == "proxied"))

        for n in config.nodes:
            if n.kind != "switch":
                continue
            node = self.network.nodes[n.name]
            switch = Switch(self.network, node, trace=self.trace,
                            packet_in=self.controller.on_packet_in)
            node.handler = switch
            self.fabric.register_switch(switch)

        for n in config.nodes:
            if n.kind != "host":
                continue
            stack = self.network.nodes[n.name].handler
            if n.role == "client":
                self.controller.add_client(n.ip, n.name)
            else:
                self.controller.add_host(n.ip, n.name)
            if n.role == "server":
                server = OriginServer(stack, n.hostname or n.ip, self.fixture, self.trace)
                server.start()
                self.servers[n.name] = server
                if n.hostname is None:
                    self.hostnames[n.ip] = n.ip
            elif n.role == "cache":
                cache = Cache(stack, self.controller, self.bus, cache_id=n.name,
                              service_port=config.policy.cache_port, trace=self.trace)
                cache.start()
                self.caches[n.name] = cache
                info = CacheInfo(cache_id=n.name, ip=n.ip,
                                 service_port=config.policy.cache_port, node=n.name)
                info.set_filter = cache.set_filter
                self.controller.add_cache(info)

        resolve = self.resolve
        proxies = self.config.hosts_with_role("proxy")
        if proxies and config.policy.mode == "proxied":
            p = proxies[0]
            stack = self.network.nodes[p.name].handler
            self.proxy = Proxy(
                stack, self.controller, self.bus, proxy_id=p.name,
                service_port=config.policy.proxy_port,
                handle_range=config.policy.handles,
                resolve=resolve, trace=self.trace,
                proxy_delay=config.policy.proxy_delay)
            self.proxy.start()

        sizes = {c.name: c.size for c in config.contents}
        for n in config.nodes:
            if n.kind == "host" and n.role == "client":
                stack = self.network.nodes[n.name].handler
                self.clients[n.name] = ClientApp(stack, resolve, sizes, self.trace)
        for request_id, spec in enumerate(config.workload):
            record = self.clients[spec.client].add_request(spec, request_id)
            self.records.append(record)
        for client in self.clients.values():
            client.start()

    def resolve(self, host: Optional[str]) -> Optional[str]:
        if host is None:
            return None
        return self.hostnames.get(host, host if self._known_ip(host) else None)

    def _known_ip(self, ip: str) -> bool:
        return any(n.ip == ip for n in self.config.nodes if n.kind == "host")

    # --- paths for the analytic delay composition -----------------------

    def path_links(self, a_node: str, b_node: str) -> List[Tuple[int, int]]:
        path = self.fabric.shortest_path(a_node, b_node)
        if path is None:
            raise ConfigError("no path %s -> %s" % (a_node, b_node))
        links = []
        for x, y in zip(path, path[1:]):
            for _, link in sorted(self.network.nodes[x].ports.items()):
                if link.other_end(x)[0] == y:
                    links.append((link.delay, link.rate))
                    break
        return links

    def node_of_ip(self, ip: str) -> Optional[str]:
        for n in self.config.nodes:
            if n.kind == "host" and n.ip == ip:
                return n.name
        return None


def run_world(world: World) -> RunResult:
    world.eq.run()
    return collect(world)


def run_config(config: ScenarioConfig, trace_packets: bool = True) -> RunResult:
    return run_world(World(config, trace_packets=trace_packets))


def run_text(text: str, trace_packets: bool = True) -> RunResult:
    return run_config(parse_config(text), trace_packets=trace_packets)


def collect(world: World) -> RunResult:
    violations: List[str] = []
    try:
        world.controller.check_consistency()
    except AssertionError as exc:
        violations.append("consistency: %s" % exc)

    hits = _hit_flags(world)
    metrics: List[RequestMetrics] = []
    for record in world.records:
        expected = world.fixture.get(record.content)
        if not record.completed:
            violations.append("request %d (%s) did not complete: %s"
                              % (record.request_id, record.content, record.error))
        elif record.body != expected:
            violations.append("request %d (%s) returned wrong bytes"
                              % (record.request_id, record.content))
        hit = hits.get(record.request_id)
        m = RequestMetrics(
            request_id=record.request_id, client=record.client,
            content=record.content, hit=hit, bytes=len(record.body),
            delay=record.delay, completed=record.completed,
            observed_sources=list(record.observed_sources),
        )
        if record.completed and record.chunks <= 1 and record.delay is not None:
            m.breakdown = _breakdown(world, record, hit)
        metrics.append(m)
    return RunResult(metrics=metrics, trace=world.trace, violations=violations,
                     controller_dump=world.controller.dump(), records=world.records)


def _hit_flags(world: World) -> Dict[int, Optional[bool]]:
    """Joins controller hit/miss decisions to requests via the client port."""
    decisions: Dict[Tuple[str, int], bool] = {}
    for e in world.trace.select(component="controller"):
        if e.event not in ("hit", "miss"):
            continue
        # detail ends with "client=<ip>:<port>"
        tail = e.detail.rsplit("client=", 1)
        if len(tail) != 2:
            continue
        ip, _, port = tail[1].partition(":")
        decisions[(ip, int(port))] = e.event == "hit"
    flags: Dict[int, Optional[bool]] = {}
    for record in world.records:
        client_ip = world.network.nodes[record.client].handler.ip
        verdicts = [decisions[(client_ip, p)] for p in record.local_ports
                    if (client_ip, p) in decisions]
        if not verdicts:
            flags[record.request_id] = None
        else:
            # a chunked request counts as a hit only if every chunk hit
            flags[record.request_id] = all(verdicts)
    return flags


def _breakdown(world: World, record: RequestRecord,
               hit: Optional[bool]) -> Optional[delays.DelayBreakdown]:
    config = world.config
    content = config.content(record.content)
    if content is None:
        return None
    server_ip = world.resolve(content.host)
    server_node = world.node_of_ip(server_ip)
    body = world.fixture[record.content]
    request_len = len(httpsem.render_request(content.host, content.path))
    response_len = len(httpsem.render_response(200, body))
    mss = config.policy.mss
    if config.policy.mode == "direct" or world.proxy is None:
        return delays.compose(
            delays.Case_DIRECT, record.delay, mss=mss,
            request_len=request_len, response_len=response_len,
            client_server=world.path_links(record.client, server_node))
    proxy_node = world.proxy.stack.name
    client_proxy = world.path_links(record.client, proxy_node)
    if hit:
        cache_node = _serving_cache_node(world, record.content)
        if cache_node is None:
            return None
        return delays.compose(
            delays.Case_CACHED, record.delay, mss=mss,
            request_len=request_len, response_len=response_len,
            proxy_delay=config.policy.proxy_delay,
            client_proxy=client_proxy,
            proxy_upstream=world.path_links(proxy_node, cache_node))
    return delays.compose(
        delays.Case_PROXIED, record.delay, mss=mss,
        request_len=request_len, response_len=response_len,
        proxy_delay=config.policy.proxy_delay,
        client_proxy=client_proxy,
        proxy_upstream=world.path_links(proxy_node, server_node))


def _serving_cache_node(world: World, content: str) -> Optional[str]:
    loc = world.controller.cache_dictionary.get(content)
    if loc is None:
        return None
    return world.node_of_ip(loc[0])


# --- sweep ---------------------------------------------------------------

@dataclass
class SweepRow:
    size: int
    miss_delay: Optional[int]
    hit_delay: Optional[int]
    flagged: bool = False  # hit slower than miss: cache farther than origin


def sweep(config: ScenarioConfig, sizes: List[int],
          trace_packets: bool = False) -> List[SweepRow]:
    """Per size: fresh miss-then-hit run of a single synthetic content."""
    if not sizes:
        raise ConfigError("sizes must be nonempty")
    servers = config.hosts_with_role("server")
    clients = config.hosts_with_role("client")
    if not servers or not clients:
        raise ConfigError("sweep needs at least one server and one client")
    host = servers[0].hostname or servers[0].ip
    client = clients[0].name
    rows = []
    for size in sizes:
        variant = ScenarioConfig(
            nodes=config.nodes, links=config.links,
            contents=[ContentSpec("%s/sweep_%d.bin" % (host, size), size)],
            workload=[
                RequestSpec(0, client, "%s/sweep_%d.bin" % (host, size)),
                RequestSpec(AFTER, client, "%s/sweep_%d.bin" % (host, size)),
            ],
            policy=config.policy,
        )
        result = run_config(variant, trace_packets=trace_packets)
        by_id = {m.request_id: m for m in result.metrics}
        miss, hit = by_id.get(0), by_id.get(1)
        miss_delay = miss.delay if miss and miss.hit is False else None
        hit_delay = hit.delay if hit and hit.hit else None
        flagged = (miss_delay is not None and hit_delay is not None
                   and hit_delay >= miss_delay)
        rows.append(SweepRow(size=size, miss_delay=miss_delay,
                             hit_delay=hit_delay, flagged=flagged))
    return rows


def metrics_csv(metrics: List[RequestMetrics], scenario: str = "run") -> str:
    lines = ["scenario,request_id,content,hit,bytes,delay_units"]
    for m in metrics:
        hit = "" if m.hit is None else str(m.hit).lower()
        delay = "" if m.delay is None else str(m.delay)
        lines.append("%s,%d,%s,%s,%d,%s"
                     % (scenario, m.request_id, m.content, hit, m.bytes, delay))
    return "\n".join(lines) + "\n"
