#!/usr/bin/env python3
"""
Tests for the PrefixForge Webservice.

Runs under pytest against the in-process app, or as a script against a
live server: ``python test_api.py [base_url]``.
"""

import asyncio
import inspect
import sys
from typing import Dict, Optional

import httpx
import pytest
from fastapi.testclient import TestClient

from app.main import app, reset_resources
from models.policy import save_checkpoint
from services.design_db import DesignDatabase
from utils.prefix_graph import CONSTRUCTORS, design_key, graph_to_payload, ripple, sklansky


def payload(graph) -> dict:
    return graph_to_payload(graph).model_dump()


class PrefixForgeTester:
    """Smoke checks over the public endpoints."""

    def __init__(self, base_url: str = "http://localhost:8080", client: Optional[httpx.AsyncClient] = None):
        self.base_url = base_url.rstrip('/')
        self.client = client or httpx.AsyncClient(base_url=self.base_url, timeout=30.0)

    async def test_health(self) -> bool:
        response = await self.client.get("/health")
        if response.status_code == 200:
            print(f"✅ Health check: {response.json()['status']}")
            return True
        print(f"❌ Health check failed: {response.status_code}")
        return False

    async def test_root(self) -> bool:
        response = await self.client.get("/")
        if response.status_code == 200:
            data = response.json()
            print(f"✅ Root endpoint: {data['service']} v{data['version']}")
            return True
        print(f"❌ Root endpoint failed: {response.status_code}")
        return False

    async def test_baselines(self) -> bool:
        response = await self.client.get("/baselines/16")
        if response.status_code == 200:
            rows = {row["name"]: row for row in response.json()}
            ok = (rows["sklansky"]["size"], rows["sklansky"]["depth"]) == (32, 5)
            print(f"{'✅' if ok else '❌'} Baselines: {len(rows)} constructors")
            return ok
        print(f"❌ Baselines failed: {response.status_code}")
        return False

    async def test_metrics(self) -> bool:
        response = await self.client.post("/designs/metrics", json=payload(sklansky(16)))
        if response.status_code == 200:
            data = response.json()
            print(f"✅ Metrics: size {data['size']} depth {data['depth']}")
            return data["size"] == 32
        print(f"❌ Metrics failed: {response.status_code}")
        return False

    async def test_simulate(self) -> bool:
        request = {"graph": payload(sklansky(8)), "a": 200, "b": 100}
        response = await self.client.post("/designs/simulate", json=request)
        if response.status_code == 200:
            data = response.json()
            print(f"✅ Simulate: 200 + 100 -> sum {data['sum']} carry {data['carry_out']}")
            return data == {"sum": 44, "carry_out": True}
        print(f"❌ Simulate failed: {response.status_code}")
        return False

    async def run_all_tests(self) -> Dict[str, bool]:
        print("🧪 Running PrefixForge API Tests")
        print("=" * 50)

        tests = [
            ("Health Check", self.test_health),
            ("Root Endpoint", self.test_root),
            ("Baselines", self.test_baselines),
            ("Metrics", self.test_metrics),
            ("Simulate", self.test_simulate),
        ]

        results = {}
        for test_name, test_func in tests:
            print(f"\n🧪 Testing: {test_name}")
            try:
                results[test_name] = await test_func()
            except Exception as e:
                print(f"❌ {test_name} failed with exception: {e}")
                results[test_name] = False
        return results

    async def cleanup(self):
        await self.client.aclose()


# -----------------------------------------------------------------------------
# pytest
# -----------------------------------------------------------------------------
@pytest.fixture
def client(monkeypatch):
    monkeypatch.delenv("PREFIXFORGE_DB", raising=False)
    monkeypatch.delenv("PREFIXFORGE_CHECKPOINT", raising=False)
    reset_resources()
    with TestClient(app) as test_client:
        yield test_client
    reset_resources()


@pytest.fixture
def seeded_db(tmp_path, monkeypatch):
    path = str(tmp_path / "designs.jsonl")
    DesignDatabase(path).seed(build(16) for build in CONSTRUCTORS.values())
    monkeypatch.setenv("PREFIXFORGE_DB", path)
    reset_resources()
    return path


@pytest.fixture
def checkpoint(tmp_path, monkeypatch, tiny_model):
    path = save_checkpoint(tiny_model, str(tmp_path / "tiny.pt"))
    monkeypatch.setenv("PREFIXFORGE_CHECKPOINT", path)
    reset_resources()
    return path


def test_smoke_suite_in_process():
    async def run() -> Dict[str, bool]:
        transport = httpx.ASGITransport(app=app)
        tester = PrefixForgeTester(client=httpx.AsyncClient(transport=transport, base_url="http://test"))
        try:
            return await tester.run_all_tests()
        finally:
            await tester.cleanup()

    assert all(asyncio.run(run()).values())


class TestInfo:
    def test_health(self, client):
        data = client.get("/health").json()
        assert data["status"] == "healthy"
        assert data["service"] == "prefixforge"

    def test_root_lists_features(self, client):
        assert "Adder simulation" in client.get("/").json()["features"]


class TestDesigns:
    def test_baselines_width_out_of_range(self, client):
        assert client.get("/baselines/1").status_code == 400

    def test_validate_ripple(self, client):
        response = client.post("/designs/validate", json={"width": 4, "nodes": []})
        assert response.status_code == 200
        assert response.json()["violations"] == []

    def test_validate_reports_merge_violation(self, client):
        response = client.post("/designs/validate", json={"width": 6, "nodes": [[5, 1]]})
        violations = response.json()["violations"]
        assert [v["rule"] for v in violations] == ["merge"]

    def test_metrics(self, client):
        data = client.post("/designs/metrics", json=payload(sklansky(16))).json()
        assert (data["size"], data["depth"], data["min_depth"]) == (32, 5, 5)
        assert data["key"] == design_key(sklansky(16))

    def test_metrics_rejects_invalid_graph(self, client):
        assert client.post("/designs/metrics", json={"width": 6, "nodes": [[5, 1]]}).status_code == 400

    def test_node_above_diagonal(self, client):
        response = client.post("/designs/metrics", json={"width": 4, "nodes": [[1, 2]]})
        assert response.status_code == 400
        assert response.json()["detail"]["error"] == "GraphValidationError"

    def test_malformed_payload(self, client):
        assert client.post("/designs/metrics", json={"width": 4, "nodes": [[1]]}).status_code == 422

    def test_netlist(self, client):
        response = client.post("/designs/netlist?name=rca4", json=payload(ripple(4)))
        assert response.status_code == 200
        assert response.text.startswith("// prefix adder: width=4 size=3 depth=4")
        assert "module rca4 (a, b, sum, cout);" in response.text

    def test_netlist_bad_name(self, client):
        response = client.post("/designs/netlist?name=bad name", json=payload(ripple(4)))
        assert response.status_code == 400

    def test_simulate_operand_out_of_range(self, client):
        request = {"graph": payload(ripple(4)), "a": 16, "b": 0}
        assert client.post("/designs/simulate", json=request).status_code == 400


class TestDatabase:
    def test_top_designs(self, client, seeded_db):
        records = client.get("/designs/top", params={"k": 2, "width": 16}).json()
        assert records[0]["key"] == design_key(sklansky(16))
        assert len(records) == 2

    def test_no_database(self, client):
        assert client.get("/designs/top").status_code == 404


class TestSample:
    def test_sample_from_checkpoint(self, client, checkpoint):
        params = {"width": 6, "count": 5, "seed": 3}
        first = client.get("/sample", params=params).json()
        second = client.get("/sample", params=params).json()
        assert first["stats"]["valid"] == 5
        assert first["sequences"] == second["sequences"]
        assert all(seq[-1] == [5, 0] for seq in first["sequences"])

    def test_width_above_vocabulary(self, client, checkpoint):
        assert client.get("/sample", params={"width": 9}).status_code == 400

    def test_sampling_is_not_a_coroutine(self):
        route = next(r for r in app.routes if getattr(r, "path", None) == "/sample")
        assert not inspect.iscoroutinefunction(route.endpoint)

    def test_no_checkpoint(self, client):
        assert client.get("/sample", params={"width": 6}).status_code == 404


async def main(base_url: str = "http://localhost:8080") -> int:
    print("🚀 Starting PrefixForge API Test Suite")
    tester = PrefixForgeTester(base_url)
    try:
        results = await tester.run_all_tests()
        print("\n" + "=" * 50)
        print("📊 Test Results Summary:")
        for test_name, result in results.items():
            print(f"{'✅ PASS' if result else '❌ FAIL'} {test_name}")
        passed = sum(1 for result in results.values() if result)
        print(f"\n🏆 Overall: {passed}/{len(results)} tests passed")
        return 0 if passed == len(results) else 1
    except KeyboardInterrupt:
        print("\n🛑 Tests interrupted by user")
        return 1
    finally:
        await tester.cleanup()


if __name__ == "__main__":
    sys.exit(asyncio.run(main(*sys.argv[1:2])))
