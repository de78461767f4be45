"""Line-oriented scenario config.

Sections, introduced by a bracketed header:

    [nodes]     name kind [role ip [hostname]]     kind: host|switch
    [links]     a b delay rate
    [contents]  name size          (name is host/path; body is generated
                                    deterministically from name and size)
    [workload]  time client content [chunks=k]     time: integer or "after"
    [policy]    key value          (policy, popularity_k, mode, mss,
                                    proxy_port, cache_port, handles,
                                    proxy_delay, seed, connect_timeout)

"#" starts a comment; blank lines are ignored.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

HOST_ROLES = ("client", "server", "proxy", "cache", "host")
AFTER = -1  # workload start time meaning "when this client's previous request closed"


class ConfigError(Exception):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = "line %d: %s" % (line_no, message)
        super().__init__(message)


@dataclass
class NodeSpec:
    name: str
    kind: str  # host | switch
    role: str = "host"
    ip: Optional[str] = None
    hostname: Optional[str] = None


@dataclass
class LinkSpec:
    a: str
    b: str
    delay: int
    rate: int


@dataclass
class ContentSpec:
    name: str
    size: int

    @property
    def host(self) -> str:
        return self.name.split("/", 1)[0]

    @property
    def path(self) -> str:
        return "/" + self.name.split("/", 1)[1]

    def body(self) -> bytes:
        return content_body(self.name, self.size)


@dataclass
class RequestSpec:
    time: int  # AFTER chains behind the client's previous request
    client: str
    content: str
    chunks: int = 1


@dataclass
class PolicySpec:
    policy: str = "cache_all"
    popularity_k: int = 2
    mode: str = "proxied"  # proxied | direct
    mss: int = 1460
    proxy_port: int = 3128
    cache_port: int = 8080
    handles: Tuple[int, int] = (8000, 8099)
    proxy_delay: int = 0
    seed: int = 1
    connect_timeout: Optional[int] = None


@dataclass
class ScenarioConfig:
    nodes: List[NodeSpec] = field(default_factory=list)
    links: List[LinkSpec] = field(default_factory=list)
    contents: List[ContentSpec] = field(default_factory=list)
    workload: List[RequestSpec] = field(default_factory=list)
    policy: PolicySpec = field(default_factory=PolicySpec)

    def node(self, name: str) -> Optional[NodeSpec]:
        for n in self.nodes:
            if n.name == name:
                return n
        return None

    def hosts_with_role(self, role: str) -> List[NodeSpec]:
        return [n for n in self.nodes if n.kind == "host" and n.role == role]

    def content(self, name: str) -> Optional[ContentSpec]:
        for c in self.contents:
            if c.name == name:
                return c
        return None

    def validate(self) -> None:
        names = set()
        ips = set()
        for n in self.nodes:
            if n.name in names:
                raise ConfigError("duplicate node %r" % n.name)
            names.add(n.name)
            if n.kind == "host":
                if not n.ip:
                    raise ConfigError("host %r needs an address" % n.name)
                if n.ip in ips:
                    raise ConfigError("duplicate address %s" % n.ip)
                ips.add(n.ip)
        for link in self.links:
            for end in (link.a, link.b):
                if end not in names:
                    raise ConfigError("link references unknown node %r" % end)
            if link.delay < 0 or link.rate <= 0:
                raise ConfigError("link %s-%s needs delay >= 0 and rate > 0"
                                  % (link.a, link.b))
        hostnames = {n.hostname for n in self.hosts_with_role("server") if n.hostname}
        for c in self.contents:
            if "/" not in c.name:
                raise ConfigError("content name %r must be host/path" % c.name)
            if c.host not in hostnames:
                raise ConfigError("content %r names no configured server" % c.name)
            if c.size < 0:
                raise ConfigError("content %r has negative size" % c.name)
        clients = {n.name for n in self.hosts_with_role("client")}
        content_names = {c.name for c in self.contents}
        for r in self.workload:
            if r.client not in clients:
                raise ConfigError("workload references unknown client %r" % r.client)
            if r.content not in content_names:
                raise ConfigError("workload references unknown content %r" % r.content)
            if r.chunks < 1 or r.chunks > 64:
                raise ConfigError("chunks must be in [1, 64]")
        if self.policy.mode not in ("proxied", "direct"):
            raise ConfigError("mode must be proxied or direct")
        if self.policy.mode == "proxied" and self.workload:
            if not self.hosts_with_role("proxy"):
                raise ConfigError("proxied mode needs a proxy node")
        lo, hi = self.policy.handles
        if not (1024 <= lo <= hi <= 65535):
            raise ConfigError("handle range must lie in [1024, 65535]")


def content_body(name: str, size: int) -> bytes:
    """Deterministic per-name pseudo-random body; acts as the payload tag."""
    rng = random.Random(zlib.crc32(name.encode("utf-8")) ^ (size * 2654435761))
    return rng.randbytes(size)


def _int(token: str, what: str, line_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ConfigError("%s must be an integer, got %r" % (what, token), line_no)


def parse_config(text: str) -> ScenarioConfig:
    config = ScenarioConfig()
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("nodes", "links", "contents", "workload", "policy"):
                raise ConfigError("unknown section %r" % section, line_no)
            continue
        if section is None:
            raise ConfigError("content before any section header", line_no)
        tokens = line.split()
        if section == "nodes":
            _parse_node(config, tokens, line_no)
        elif section == "links":
            _parse_link(config, tokens, line_no)
        elif section == "contents":
            _parse_content(config, tokens, line_no)
        elif section == "workload":
            _parse_request(config, tokens, line_no)
        elif section == "policy":
            _parse_policy(config, tokens, line_no)
    return config


def _parse_node(config, tokens, line_no):
    if len(tokens) < 2:
        raise ConfigError("node needs: name kind ...", line_no)
    name, kind = tokens[0], tokens[1]
    if kind == "switch":
        if len(tokens) != 2:
            raise ConfigError("switch takes no extra fields", line_no)
        config.nodes.append(NodeSpec(name, "switch"))
        return
    if kind != "host":
        raise ConfigError("kind must be host or switch, got %r" % kind, line_no)
    if len(tokens) < 4:
        raise ConfigError("host needs: name host role ip [hostname]", line_no)
    role = tokens[2]
    if role not in HOST_ROLES:
        raise ConfigError("role must be one of %s" % (HOST_ROLES,), line_no)
    hostname = tokens[4] if len(tokens) > 4 else None
    config.nodes.append(NodeSpec(name, "host", role, tokens[3], hostname))


def _parse_link(config, tokens, line_no):
    if len(tokens) != 4:
        raise ConfigError("link needs: a b delay rate", line_no)
    config.links.append(LinkSpec(
        tokens[0], tokens[1],
        _int(tokens[2], "delay", line_no), _int(tokens[3], "rate", line_no)))


def _parse_content(config, tokens, line_no):
    if len(tokens) != 2:
        raise ConfigError("content needs: name size", line_no)
    config.contents.append(ContentSpec(tokens[0], _int(tokens[1], "size", line_no)))


def _parse_request(config, tokens, line_no):
    if len(tokens) < 3:
        raise ConfigError("workload needs: time client content [chunks=k]", line_no)
    when = AFTER if tokens[0] == "after" else _int(tokens[0], "time", line_no)
    chunks = 1
    for extra in tokens[3:]:
        if extra.startswith("chunks="):
            chunks = _int(extra[len("chunks="):], "chunks", line_no)
        else:
            raise ConfigError("unknown workload option %r" % extra, line_no)
    config.workload.append(RequestSpec(when, tokens[1], tokens[2], chunks))


def _parse_policy(config, tokens, line_no):
    key = tokens[0]
    p = config.policy
    if key == "policy":
        if tokens[1] not in ("cache_all", "popularity", "never"):
            raise ConfigError("unknown policy %r" % tokens[1], line_no)
        p.policy = tokens[1]
    elif key == "popularity_k":
        p.popularity_k = _int(tokens[1], "popularity_k", line_no)
    elif key == "mode":
        p.mode = tokens[1]
    elif key == "mss":
        p.mss = _int(tokens[1], "mss", line_no)
    elif key == "proxy_port":
        p.proxy_port = _int(tokens[1], "proxy_port", line_no)
    elif key == "cache_port":
        p.cache_port = _int(tokens[1], "cache_port", line_no)
    elif key == "handles":
        if len(tokens) != 3:
            raise ConfigError("handles needs: handles lo hi", line_no)
        p.handles = (_int(tokens[1], "lo", line_no), _int(tokens[2], "hi", line_no))
    elif key == "proxy_delay":
        p.proxy_delay = _int(tokens[1], "proxy_delay", line_no)
    elif key == "seed":
        p.seed = _int(tokens[1], "seed", line_no)
    elif key == "connect_timeout":
        p.connect_timeout = _int(tokens[1], "connect_timeout", line_no)
    else:
        raise ConfigError("unknown policy key %r" % key, line_no)
