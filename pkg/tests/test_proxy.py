import pytest

from contentflow.controller import ControllerError
from contentflow.scenarios.config import RequestSpec, ContentSpec, AFTER
from contentflow.scenarios.runner import World, collect, run_config, run_world
from conftest import CONTENT, standard_config


class TestRegistration:
    def test_proxy_registers_handle_pool(self):
        world = World(standard_config(workload=[]), trace_packets=False)
        pool = world.controller.pools["p1"]
        assert pool.advertised == (8000, 8015)

    def test_invalid_handle_range_fails_startup(self):
        config = standard_config(workload=[], handles=(100, 200))
        config.policy.handles = (100, 200)
        with pytest.raises(Exception):
            World(config, trace_packets=False)


class TestTransparentRedirect:
    def test_client_connects_to_server_address_and_reaches_proxy(self):
        world = World(standard_config(), trace_packets=False)
        result = run_world(world)
        assert result.violations == []
        # the controller installed the redirect pair for the client
        redirects = world.trace.select(component="controller", event="redirect")
        assert len(redirects) == 1
        assert "client=10.0.0.1" in redirects[0].detail

    def test_observed_source_is_origin(self):
        world = World(standard_config(), trace_packets=False)
        result = run_world(world)
        for m in result.metrics:
            assert m.observed_sources == [("10.1.0.1", 80)]


class TestPassThrough:
    def _post_world(self):
        world = World(standard_config(workload=[]), trace_packets=False)
        client = world.network.nodes["c1"].handler
        return world, client

    def test_non_get_relayed_without_query(self):
        world, client = self._post_world()
        got = bytearray()
        raw = (b"POST /upload HTTP/1.1\r\nHost: www.server.com\r\n\r\n")

        def go():
            s = client.connect("10.1.0.1", 80)
            s.on_established = lambda s: s.send(raw)
            s.on_data = lambda s, data: got.extend(data)

        world.eq.schedule_at(0, go)
        world.eq.run()
        # the origin answers (404 for an unknown resource), bytes intact
        assert bytes(got).startswith(b"HTTP/1.1 404")
        assert world.trace.select(component="controller", event="miss") == []
        assert world.trace.select(component="controller", event="hit") == []
        assert world.servers["origin"].requests_served == 0

    def test_malformed_request_closes_connection(self):
        world, client = self._post_world()
        closed = []
        raw = b"NOT A REQUEST\r\n\r\n"

        def go():
            s = client.connect("10.1.0.1", 80)
            s.on_established = lambda s: s.send(raw)
            s.on_close = lambda s: (closed.append(world.eq.now), s.close())

        world.eq.schedule_at(0, go)
        world.eq.run()
        assert closed
        parse_errors = world.trace.select(component="proxy:p1", event="parse_error")
        assert parse_errors

    def test_unresolvable_host_closes_connection(self):
        world, client = self._post_world()
        closed = []
        raw = b"GET /x HTTP/1.1\r\nHost: nowhere.example\r\n\r\n"

        def go():
            s = client.connect("10.1.0.1", 80)
            s.on_established = lambda s: s.send(raw)
            s.on_close = lambda s: (closed.append(world.eq.now), s.close())

        world.eq.schedule_at(0, go)
        world.eq.run()
        assert closed
        assert world.trace.select(component="proxy:p1", event="unresolvable")


class TestFailOpen:
    def test_controller_error_falls_back_to_origin(self):
        world = World(standard_config(
            workload=[RequestSpec(0, "c1", CONTENT)]), trace_packets=False)

        def explode(q):
            raise RuntimeError("control channel down")

        world.controller.handle_query = explode
        world.eq.run()
        result = collect(world)
        (m,) = result.metrics
        assert m.completed
        assert m.bytes == 5000
        assert world.trace.select(component="proxy:p1", event="controller_error")


class TestHandleUse:
    def test_origin_connection_uses_assigned_handle(self):
        world = World(standard_config(
            workload=[RequestSpec(0, "c1", CONTENT)]), trace_packets=False)
        run_world(world)
        # the request dictionary entry was created for (server, first handle)
        entries = [e for e in world.trace.select(component="controller", event="miss")]
        assert "handle=8000" in entries[0].detail
        served = world.trace.select(component="server:www.server.com", event="serve")
        assert len(served) == 1

    def test_release_and_close_notify_sent_once(self):
        world = World(standard_config(
            workload=[RequestSpec(0, "c1", CONTENT)]), trace_packets=False)
        run_world(world)
        releases = [e for e in world.trace.select(event="msg")
                    if "Release{" in e.detail]
        notifies = [e for e in world.trace.select(event="msg")
                    if "CloseNotify{" in e.detail]
        assert len(releases) == 1
        assert len(notifies) == 1

    def test_pool_exhaustion_still_serves_clients(self):
        contents = [ContentSpec("www.server.com/a.bin", 3000),
                    ContentSpec("www.server.com/b.bin", 3000)]
        config = standard_config(
            policy="never", handles=(8000, 8000),
            contents=contents,
            workload=[RequestSpec(0, "c1", "www.server.com/a.bin"),
                      RequestSpec(0, "c1", "www.server.com/b.bin")])
        result = run_config(config, trace_packets=False)
        assert result.violations == []
        assert all(m.completed for m in result.metrics)
        exhausted = result.trace.select(component="controller",
                                        event="pool_exhausted")
        assert len(exhausted) == 1

    def test_restoration_rule_removed_after_close(self):
        world = World(standard_config(
            workload=[RequestSpec(0, "c1", CONTENT)]), trace_packets=False)
        run_world(world)
        assert world.controller._x_rules == {}
        # no content rules left on the client's access switch
        from contentflow.controller import PRIO_CONTENT
        leftovers = [r for r in world.fabric.switches["sw1"].rules()
                     if r.priority == PRIO_CONTENT]
        assert leftovers == []
