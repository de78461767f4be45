"""Content management layer: handle pool, content dictionaries, caching
policy, fork-point computation and flow-rule installation.

The controller reacts to switch packet-ins, to proxy queries/releases and
to cache acknowledgements. All state mutations happen synchronously
inside event dispatch.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from . import messages as msg
from .netmodel import Network, NodeKind, SimPacket
from .switchfab import Action, FlowRule, MatchFields, Switch

# rule priorities, lowest first: lazily installed destination routes,
# static client<->proxy redirects, per-content rules, cache-path overrides
PRIO_ROUTE = 0
PRIO_REDIRECT = 10
PRIO_CONTENT = 20
PRIO_CACHE_PATH = 25

HTTP_PORT = 80


class ControllerError(Exception):
    pass


class Fabric:
    """Topology view over a Network: deterministic shortest-path routing.

    Paths transit only through switches; hosts are leaves. Neighbor order
    is fixed by node id, so routing decisions are reproducible.
    """

    def __init__(self, network: Network):
        self.network = network
        self.switches: Dict[str, Switch] = {}
        self._adj: Dict[str, List[Tuple[str, int]]] = {}
        for name, node in network.nodes.items():
            neigh = []
            for port, link in sorted(node.ports.items()):
                peer, _ = link.other_end(name)
                neigh.append((peer, port))
            neigh.sort(key=lambda np: network.nodes[np[0]].node_id.id)
            self._adj[name] = neigh

    def register_switch(self, switch: Switch) -> None:
        self.switches[switch.name] = switch

    def node_id(self, name: str) -> int:
        return self.network.nodes[name].node_id.id

    def is_switch(self, name: str) -> bool:
        return self.network.nodes[name].node_id.kind is NodeKind.SWITCH

    def shortest_path(self, src: str, dst: str,
                      avoid=()) -> Optional[List[str]]:
        """BFS path src..dst transiting only switches not in `avoid`."""
        if src == dst:
            return [src]
        avoid = set(avoid)
        parent = {src: None}
        queue = deque([src])
        while queue:
            here = queue.popleft()
            if here != src and not self.is_switch(here):
                continue  # hosts do not forward
            if here in avoid and here != src:
                continue
            for peer, _ in self._adj[here]:
                if peer not in parent:
                    parent[peer] = here
                    if peer == dst:
                        path = [dst]
                        while parent[path[-1]] is not None:
                            path.append(parent[path[-1]])
                        return list(reversed(path))
                    queue.append(peer)
        return None

    def hop_dist(self, src: str, dst: str) -> Optional[int]:
        path = self.shortest_path(src, dst)
        return None if path is None else len(path) - 1

    def next_hop_port(self, from_node: str, dst: str) -> int:
        path = self.shortest_path(from_node, dst)
        if path is None or len(path) < 2:
            raise ControllerError("no path %s -> %s" % (from_node, dst))
        nxt = path[1]
        for peer, port in self._adj[from_node]:
            if peer == nxt:
                return port
        raise ControllerError("no port from %s toward %s" % (from_node, nxt))

    def access_switch(self, host: str) -> str:
        neigh = self._adj[host]
        if len(neigh) != 1:
            raise ControllerError("host %s must be single-homed" % host)
        return neigh[0][0]


class PortPool:
    """Per-proxy handle pool; allocation picks the smallest free port."""

    def __init__(self, lo: int, hi: int):
        if lo > hi:
            raise ControllerError("empty port range")
        if not (1024 <= lo <= hi <= 65535):
            raise ControllerError("port range must lie in [1024, 65535]")
        self.advertised = (lo, hi)
        self.free = set(range(lo, hi + 1))
        self.in_use: set = set()

    def allocate(self) -> Optional[int]:
        if not self.free:
            return None
        port = min(self.free)
        self.free.remove(port)
        self.in_use.add(port)
        return port

    def release(self, port: int) -> None:
        if port in self.in_use:
            self.in_use.remove(port)
            self.free.add(port)

    @property
    def size(self) -> int:
        return len(self.free) + len(self.in_use)


class MappingState(Enum):
    LIVE = "live"
    RELEASED = "released"


@dataclass
class HandleMapping:
    content_name: str
    client_ip_port: Tuple[str, int]
    server_ip_port: Tuple[str, int]
    handle: int
    proxy_id: str
    state: MappingState = MappingState.LIVE
    cache_pending: bool = False
    cache_id: Optional[str] = None
    fork_rules: List[Tuple[str, MatchFields]] = field(default_factory=list)


class CachingPolicy:
    """Decides, per request, whether content should be cached."""

    name = "base"

    def note_request(self, content_name: str) -> None:
        pass

    def should_cache(self, content_name: str, server_ip: str) -> bool:
        raise NotImplementedError


class CacheAllPolicy(CachingPolicy):
    name = "cache_all"

    def should_cache(self, content_name, server_ip):
        return True


class NeverCachePolicy(CachingPolicy):
    name = "never"

    def should_cache(self, content_name, server_ip):
        return False


class PopularityPolicy(CachingPolicy):
    """Caches a content starting from its k-th request."""

    name = "popularity"

    def __init__(self, threshold: int):
        self.threshold = threshold
        self.counts: Dict[str, int] = {}

    def note_request(self, content_name):
        self.counts[content_name] = self.counts.get(content_name, 0) + 1

    def should_cache(self, content_name, server_ip):
        return self.counts.get(content_name, 0) >= self.threshold


@dataclass
class ProxyInfo:
    proxy_id: str
    ip: str
    service_port: int
    node: str


@dataclass
class CacheInfo:
    cache_id: str
    ip: str
    service_port: int
    node: str
    # in-process delivery target for SET_FILTER; set by the runner
    set_filter = None


class Controller:
    def __init__(self, fabric: Fabric, bus: msg.MessageBus, trace=None,
                 policy: Optional[CachingPolicy] = None,
                 proxy_enabled: bool = True):
        self.fabric = fabric
        self.bus = bus
        self.trace = trace
        self.policy = policy or CacheAllPolicy()
        self.proxy_enabled = proxy_enabled
        self.proxies: Dict[str, ProxyInfo] = {}
        self.pools: Dict[str, PortPool] = {}
        self.caches: Dict[str, CacheInfo] = {}
        self.client_ips: Dict[str, str] = {}  # ip -> node name
        self.host_by_ip: Dict[str, str] = {}  # any host ip -> node name
        self.cache_dictionary: Dict[str, Tuple[str, int]] = {}
        self.request_dictionary: Dict[Tuple[str, int], str] = {}
        self.live: Dict[Tuple[str, int], HandleMapping] = {}  # (proxy, handle)
        self.history: List[HandleMapping] = []
        self._flows: Dict[Tuple[str, int], HandleMapping] = {}  # (server_ip, handle)
        self._x_rules: Dict[Tuple[str, int], Tuple[str, MatchFields]] = {}
        self._redirected_clients: set = set()

    # --- configuration -------------------------------------------------

    def add_client(self, ip: str, node: str) -> None:
        self.client_ips[ip] = node
        self.host_by_ip[ip] = node

    def add_host(self, ip: str, node: str) -> None:
        self.host_by_ip[ip] = node

    def add_cache(self, info: CacheInfo) -> None:
        self.caches[info.cache_id] = info
        self.host_by_ip[info.ip] = info.node

    def register(self, m: msg.Register) -> None:
        self.pools[m.proxy_id] = PortPool(*m.port_range)
        node = self.host_by_ip.get(m.proxy_ip)
        if node is None:
            raise ControllerError("unknown proxy address %s" % m.proxy_ip)
        self.proxies[m.proxy_id] = ProxyInfo(m.proxy_id, m.proxy_ip, m.service_port, node)
        self._log("register", "%s pool=%d-%d" % (m.proxy_id, *m.port_range))

    def _log(self, event: str, detail: str) -> None:
        if self.trace is not None:
            self.trace.record("controller", event, detail)

    # --- switch plane --------------------------------------------------

    def on_packet_in(self, switch: Switch, in_port: int, packet: SimPacket) -> None:
        if (self.proxy_enabled and self.proxies
                and packet.src_ip in self.client_ips
                and packet.dst_port == HTTP_PORT):
            self._install_redirect(switch, packet.src_ip)
            return
        dst_node = self.host_by_ip.get(packet.dst_ip)
        if dst_node is not None:
            port = self.fabric.next_hop_port(switch.name, dst_node)
            switch.install_rule(FlowRule(
                priority=PRIO_ROUTE,
                match=MatchFields(dst_ip=packet.dst_ip),
                actions=[Action.output(port)],
                static=True,
            ))
            return
        self._log("drop", "unroutable packet at %s: %s" % (switch.name, packet.describe()))
        switch.discard_buffered(packet)

    def _install_redirect(self, switch: Switch, client_ip: str) -> None:
        proxy = next(iter(self.proxies.values()))
        client_node = self.client_ips[client_ip]
        fwd = FlowRule(
            priority=PRIO_REDIRECT,
            match=MatchFields(src_ip=client_ip, dst_port=HTTP_PORT),
            actions=[
                Action.rewrite_dst(proxy.ip, proxy.service_port),
                Action.output(self.fabric.next_hop_port(switch.name, proxy.node)),
            ],
            static=True,
        )
        rev = FlowRule(
            priority=PRIO_REDIRECT,
            match=MatchFields(src_ip=proxy.ip, src_port=proxy.service_port,
                              dst_ip=client_ip),
            actions=[Action.output(self.fabric.next_hop_port(switch.name, client_node))],
            static=True,
        )
        # install the reverse rule first so the forward install's buffered
        # re-evaluation cannot race ahead of it
        switch.install_rule(rev)
        switch.install_rule(fwd)
        self._redirected_clients.add(client_ip)
        self._log("redirect", "client=%s via %s at %s" % (client_ip, proxy.proxy_id, switch.name))

    def _install_restore_rule(self, q: msg.Query, proxy: ProxyInfo) -> None:
        """Fig-3 style source restoration: the client sees the origin server
        address on the response stream."""
        client_node = self.client_ips.get(q.client_ip)
        if client_node is None:
            return
        sw_name = self.fabric.access_switch(client_node)
        switch = self.fabric.switches[sw_name]
        match = MatchFields(src_ip=proxy.ip, src_port=proxy.service_port,
                            dst_ip=q.client_ip, dst_port=q.client_port)
        switch.install_rule(FlowRule(
            priority=PRIO_CONTENT,
            match=match,
            actions=[
                Action.rewrite_src(q.server_ip, q.server_port),
                Action.output(self.fabric.next_hop_port(sw_name, client_node)),
            ],
        ))
        self._x_rules[(q.client_ip, q.client_port)] = (sw_name, match)

    # --- proxy plane ---------------------------------------------------

    def handle_query(self, q: msg.Query) -> msg.Reply:
        proxy = self.proxies.get(q.proxy_id)
        if proxy is None:
            raise ControllerError("query from unregistered proxy %s" % q.proxy_id)
        self.policy.note_request(q.content_name)
        self._install_restore_rule(q, proxy)
        location = self.cache_dictionary.get(q.content_name)
        if location is not None:
            self._log("hit", "%s -> %s:%d client=%s:%d"
                      % (q.content_name, location[0], location[1],
                         q.client_ip, q.client_port))
            return self.bus.stamp(msg.Reply(cache_location=location), "controller")
        handle = self.pools[q.proxy_id].allocate()
        if handle is None:
            self._log("pool_exhausted", "%s client=%s:%d"
                      % (q.proxy_id, q.client_ip, q.client_port))
            return self.bus.stamp(msg.Reply(), "controller")
        mapping = HandleMapping(
            content_name=q.content_name,
            client_ip_port=(q.client_ip, q.client_port),
            server_ip_port=(q.server_ip, q.server_port),
            handle=handle,
            proxy_id=q.proxy_id,
        )
        key = (q.proxy_id, handle)
        assert key not in self.live, "handle reuse while live"
        self.live[key] = mapping
        self.history.append(mapping)
        self.request_dictionary[(q.server_ip, handle)] = q.content_name
        self._log("miss", "%s handle=%d client=%s:%d"
                  % (q.content_name, handle, q.client_ip, q.client_port))
        if self.caches and self.policy.should_cache(q.content_name, q.server_ip):
            self._arm_cache(mapping, proxy)
        return self.bus.stamp(msg.Reply(handle_port=handle), "controller")

    def _arm_cache(self, mapping: HandleMapping, proxy: ProxyInfo) -> None:
        server_ip, server_port = mapping.server_ip_port
        server_node = self.host_by_ip.get(server_ip)
        if server_node is None:
            return
        cache = self.select_cache(mapping.content_name)
        fork = self.compute_fork_switch(server_node, proxy.node, cache.node)
        if fork is None:
            self._log("no_fork", "cache unreachable for %s" % mapping.content_name)
            return
        path = self._cache_branch_path(fork, server_node, proxy.node, cache.node)
        if path is None:
            self._log("no_fork", "no disjoint branch toward %s" % cache.node)
            return
        match = MatchFields(src_ip=server_ip, src_port=server_port,
                            dst_ip=proxy.ip, dst_port=mapping.handle)
        fork_switch = self.fabric.switches[fork]
        fork_switch.install_rule(FlowRule(
            priority=PRIO_CONTENT,
            match=match,
            actions=[
                Action.duplicate(self._port_toward(fork, path)),
                Action.output(self.fabric.next_hop_port(fork, proxy.node)),
            ],
        ))
        mapping.fork_rules.append((fork, match))
        for i, node in enumerate(path[1:-1], start=1):
            sw = self.fabric.switches[node]
            sw.install_rule(FlowRule(
                priority=PRIO_CACHE_PATH,
                match=match,
                actions=[Action.output(self._port_toward(node, path[i:]))],
            ))
            mapping.fork_rules.append((node, match))
        mapping.cache_pending = True
        mapping.cache_id = cache.cache_id
        self._flows[(server_ip, mapping.handle)] = mapping
        f = self.bus.stamp(msg.SetFilter(
            filename=mapping.content_name, server_ip=server_ip,
            dst_port=mapping.handle), "controller")
        accepted = cache.set_filter(f) if cache.set_filter else False
        if not accepted:
            self._log("filter_rejected", mapping.content_name)
            self._remove_fork(mapping)
            mapping.cache_pending = False
            del self._flows[(server_ip, mapping.handle)]

    def _port_toward(self, node: str, path: List[str]) -> int:
        nxt = path[path.index(node) + 1] if node in path else path[0]
        for peer, port in self.fabric._adj[node]:
            if peer == nxt:
                return port
        raise ControllerError("no port from %s toward %s" % (node, nxt))

    def _cache_branch_path(self, fork: str, server_node: str, proxy_node: str,
                           cache_node: str) -> Optional[List[str]]:
        """Path carrying the duplicated stream. It must avoid the switches
        downstream of the fork on the proxy-bound path, otherwise the
        override rules would steal the primary copy."""
        main = self.fabric.shortest_path(server_node, proxy_node) or []
        downstream = set()
        if fork in main:
            downstream = {n for n in main[main.index(fork) + 1:] if self.fabric.is_switch(n)}
        return self.fabric.shortest_path(fork, cache_node, avoid=downstream)

    def compute_fork_switch(self, server_node: str, proxy_node: str,
                            cache_node: str) -> Optional[str]:
        """Switch on the server->proxy path minimizing hops to the cache;
        ties break on the smallest node id."""
        path = self.fabric.shortest_path(server_node, proxy_node)
        if path is None:
            return None
        best = None
        for node in path:
            if not self.fabric.is_switch(node):
                continue
            d = self.fabric.hop_dist(node, cache_node)
            if d is None:
                continue
            key = (d, self.fabric.node_id(node))
            if best is None or key < best[0]:
                best = (key, node)
        return None if best is None else best[1]

    def on_release(self, m: msg.Release) -> None:
        key = (m.proxy_id, m.handle_port)
        mapping = self.live.pop(key, None)
        if mapping is None:
            return  # double release is a no-op
        mapping.state = MappingState.RELEASED
        self.request_dictionary.pop((mapping.server_ip_port[0], mapping.handle), None)
        self._log("release", "handle=%d content=%s" % (mapping.handle, mapping.content_name))
        if not mapping.cache_pending:
            self.pools[m.proxy_id].release(m.handle_port)
        # else: deferred until the cache acks or discards the flow

    def on_close_notify(self, m: msg.CloseNotify) -> None:
        entry = self._x_rules.pop((m.client_ip, m.client_port), None)
        if entry is not None:
            sw_name, match = entry
            self.fabric.switches[sw_name].remove_rule(match)

    # --- cache plane ---------------------------------------------------

    def on_stored_ack(self, m: msg.StoredAck) -> None:
        cache = self.caches.get(m.cache_id)
        flows = [f for f in self._flows.values()
                 if f.content_name == m.content_name and f.cache_id == m.cache_id]
        if cache is None or not flows:
            self._log("stray_ack", m.describe())
            return
        if m.content_name not in self.cache_dictionary:
            self.cache_dictionary[m.content_name] = (cache.ip, cache.service_port)
            self._log("stored", "%s at %s" % (m.content_name, m.cache_id))
        for mapping in flows:
            self._finish_flow(mapping)

    def on_flow_discarded(self, m: msg.FlowDiscarded) -> None:
        mapping = self._flows.get((m.server_ip, m.dst_port))
        if mapping is None:
            return
        self._log("flow_discarded", "%s:%d %s" % (m.server_ip, m.dst_port, m.reason))
        self._finish_flow(mapping)

    def _finish_flow(self, mapping: HandleMapping) -> None:
        self._remove_fork(mapping)
        mapping.cache_pending = False
        self._flows.pop((mapping.server_ip_port[0], mapping.handle), None)
        if mapping.state is MappingState.RELEASED:
            self.pools[mapping.proxy_id].release(mapping.handle)

    def _remove_fork(self, mapping: HandleMapping) -> None:
        for sw_name, match in mapping.fork_rules:
            self.fabric.switches[sw_name].remove_rule(match)
        mapping.fork_rules = []

    def select_cache(self, content_name: str) -> CacheInfo:
        """Least-loaded cache by assigned entry count; ties on node id."""
        loads: Dict[str, int] = {cid: 0 for cid in self.caches}
        for loc in self.cache_dictionary.values():
            for cid, info in self.caches.items():
                if (info.ip, info.service_port) == loc:
                    loads[cid] += 1
        for f in self._flows.values():
            if f.cache_id in loads:
                loads[f.cache_id] += 1
        best = min(self.caches.values(),
                   key=lambda c: (loads[c.cache_id], self.fabric.node_id(c.node)))
        return best

    # --- inspection ----------------------------------------------------

    def check_consistency(self) -> None:
        seen = set()
        for mapping in self.live.values():
            key = (mapping.proxy_id, mapping.server_ip_port[0], mapping.handle)
            if key in seen:
                raise AssertionError("two live mappings share %s" % (key,))
            seen.add(key)
        for proxy_id, pool in self.pools.items():
            if pool.free & pool.in_use:
                raise AssertionError("pool free/in-use overlap for %s" % proxy_id)
            lo, hi = pool.advertised
            if pool.free | pool.in_use != set(range(lo, hi + 1)):
                raise AssertionError("pool does not cover advertised range")
        for (server_ip, handle), name in self.request_dictionary.items():
            match = [m for m in self.live.values()
                     if m.handle == handle and m.server_ip_port[0] == server_ip]
            if len(match) != 1:
                raise AssertionError("requestDictionary entry without live mapping")

    def dump(self) -> dict:
        return {
            "cache_dictionary": dict(self.cache_dictionary),
            "request_dictionary": {"%s:%d" % k: v for k, v in self.request_dictionary.items()},
            "pools": {pid: {"free": sorted(p.free), "in_use": sorted(p.in_use)}
                      for pid, p in self.pools.items()},
            "live": ["%s handle=%d %s" % (m.content_name, m.handle, m.proxy_id)
                     for m in self.live.values()],
            "rules": {name: [r.describe() for r in sw.rules()]
                      for name, sw in self.fabric.switches.items()},
        }
