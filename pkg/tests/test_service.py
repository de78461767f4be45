from fastapi.testclient import TestClient

from contentflow import __version__
from contentflow.service import app
from conftest import CONTENT, STANDARD_CONFIG_TEXT

client = TestClient(app)


def test_healthz():
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "version": __version__}


class TestRunEndpoint:
    def test_miss_then_hit(self):
        r = client.post("/run", json={"config": STANDARD_CONFIG_TEXT,
                                      "trace_packets": False})
        assert r.status_code == 200
        body = r.json()
        assert body["violations"] == []
        hits = [m["hit"] for m in body["requests"]]
        assert hits == [False, True]
        assert body["requests"][0]["content"] == CONTENT
        assert body["requests"][0]["observed_sources"] == [["10.1.0.1", 80]]
        assert body["csv"].startswith(
            "scenario,request_id,content,hit,bytes,delay_units")
        assert len(body["trace_hash"]) == 64
        assert body["trace"]
        # the delay decomposition is reported per request
        assert body["requests"][0]["analytic_delay"] == \
            body["requests"][0]["delay_units"]
        assert "tcp_client_proxy" in body["requests"][0]["delay_terms"]

    def test_parse_error_is_422(self):
        r = client.post("/run", json={"config": "[nodes]\nbroken\n"})
        assert r.status_code == 422
        assert "line 2" in r.json()["detail"]

    def test_trace_packets_flag(self):
        quiet = client.post("/run", json={"config": STANDARD_CONFIG_TEXT,
                                          "trace_packets": False}).json()
        noisy = client.post("/run", json={"config": STANDARD_CONFIG_TEXT,
                                          "trace_packets": True}).json()
        assert len(noisy["trace"]) > len(quiet["trace"])


class TestValidateEndpoint:
    def test_valid(self):
        r = client.post("/validate", json={"config": STANDARD_CONFIG_TEXT})
        assert r.json() == {"valid": True, "error": None, "line": None}

    def test_invalid_reports_line(self):
        r = client.post("/validate", json={"config": "[links]\na b 1\n"})
        body = r.json()
        assert body["valid"] is False
        assert body["line"] == 2
        assert "line 2" in body["error"]


class TestSweepEndpoint:
    def test_rows(self):
        r = client.post("/sweep", json={"config": STANDARD_CONFIG_TEXT,
                                        "sizes": [2000, 20000]})
        assert r.status_code == 200
        rows = r.json()["rows"]
        assert [row["size"] for row in rows] == [2000, 20000]
        for row in rows:
            assert row["hit_delay"] < row["miss_delay"]
            assert row["flagged"] is False

    def test_empty_sizes_is_422(self):
        r = client.post("/sweep", json={"config": STANDARD_CONFIG_TEXT,
                                        "sizes": []})
        assert r.status_code == 422
