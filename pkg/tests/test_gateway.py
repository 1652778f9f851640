import json

import httpx
import pytest

from legalstyle.errors import BackendUnavailable, EmptyText, ProtocolError
from legalstyle.gateway import (
    ChatRequest,
    Gateway,
    HTTPBackend,
    MockBackend,
    mock_gateway,
    render_prompt,
)


class TestMockBackend:
    def test_same_request_same_reply(self):
        backend = MockBackend(seed=1)
        request = ChatRequest(system="s", user="写一段话")
        assert backend.complete(request) == backend.complete(request)

    def test_fresh_instances_agree(self):
        request = ChatRequest(system="s", user="写一段话")
        assert MockBackend(seed=9).complete(request) == MockBackend(seed=9).complete(request)

    def test_different_seeds_differ_somewhere(self):
        request = ChatRequest(system="s", user="写一段随便的话")
        a = MockBackend(seed=1).complete(request)
        b = MockBackend(seed=2).complete(request)
        assert a != b

    def test_embed_deterministic_unit_norm(self):
        backend = MockBackend(seed=3, embedding_dim=32)
        v1 = backend.embed("原告与被告")
        v2 = backend.embed("原告与被告")
        assert v1 == v2
        assert len(v1.values) == 32
        norm = sum(x * x for x in v1.values) ** 0.5
        assert norm == pytest.approx(1.0, abs=1e-12)

    def test_embed_empty_rejected(self):
        with pytest.raises(EmptyText):
            MockBackend().embed("  ")

    def test_structured_identify_reply_is_json(self):
        prompt = render_prompt("identify", gold="本院认为，证据确凿。", restored="我们觉得，证据很足。")
        reply = MockBackend(seed=0).complete(ChatRequest(system="s", user=prompt))
        data = json.loads(reply)
        assert isinstance(data, list) and data
        assert set(data[0]) == {"dimension", "description", "gold_span", "restored_span"}

    def test_query_reply_has_requested_count(self):
        prompt = render_prompt(
            "judge_queries", dimension_label="名词使用", x=7,
            analysis="分析", text="本院认为，证据确凿。",
        )
        reply = MockBackend(seed=0).complete(ChatRequest(system="s", user=prompt))
        assert len(json.loads(reply)) == 7

    def test_empty_prompt_rejected(self):
        with pytest.raises(EmptyText):
            ChatRequest(system="", user="x")


def _transport(script):
    """httpx transport driven by a list of (status, json_body | text)."""
    calls = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        index = min(calls["n"], len(script) - 1)
        calls["n"] += 1
        status, body = script[index]
        if isinstance(body, str):
            return httpx.Response(status, text=body)
        return httpx.Response(status, json=body)

    return httpx.MockTransport(handler), calls


def _chat_body(content="好的。"):
    return {"choices": [{"message": {"content": content}}]}


class TestHTTPBackend:
    def _backend(self, script, retries=2):
        transport, calls = _transport(script)
        backend = HTTPBackend(
            base_url="http://test/v1",
            api_key="key",
            chat_model="chat",
            embed_model="embed",
            max_retries=retries,
            backoff_base=0.0,
            transport=transport,
        )
        return backend, calls

    def test_success_after_rate_limit(self):
        backend, calls = self._backend([(429, {"error": "slow down"}), (200, _chat_body("回答"))])
        reply = backend.complete(ChatRequest(system="s", user="u"))
        assert reply == "回答"
        assert calls["n"] == 2

    def test_exhausted_retries(self):
        backend, calls = self._backend([(500, {"error": "down"})], retries=2)
        with pytest.raises(BackendUnavailable):
            backend.complete(ChatRequest(system="s", user="u"))
        assert calls["n"] == 3  # initial try + 2 retries

    def test_malformed_reply_is_protocol_error(self):
        backend, _ = self._backend([(200, {"unexpected": True})])
        with pytest.raises(ProtocolError):
            backend.complete(ChatRequest(system="s", user="u"))

    def test_non_json_reply_is_protocol_error(self):
        backend, _ = self._backend([(200, "<html>oops</html>")])
        with pytest.raises(ProtocolError):
            backend.complete(ChatRequest(system="s", user="u"))

    def test_client_error_does_not_retry(self):
        backend, calls = self._backend([(404, {"error": "missing"})])
        with pytest.raises(ProtocolError):
            backend.complete(ChatRequest(system="s", user="u"))
        assert calls["n"] == 1

    def test_embedding_parsing_and_dimension_guard(self):
        backend, _ = self._backend([
            (200, {"data": [{"embedding": [1.0, 2.0]}]}),
            (200, {"data": [{"embedding": [1.0, 2.0, 3.0]}]}),
        ])
        first = backend.embed("文本")
        assert first.values == (1.0, 2.0)
        with pytest.raises(ProtocolError):
            backend.embed("另一段")


class TestGateway:
    def test_pipeline_reproducible_across_instances(self):
        prompt = render_prompt("degrade", text="本院认为，原告的诉讼请求于法有据，予以支持。")
        request = ChatRequest(system="s", user=prompt)
        a = mock_gateway(seed=5).complete("degrade", request)
        b = mock_gateway(seed=5).complete("degrade", request)
        assert a == b

    def test_missing_role_falls_back_to_default(self, gw):
        assert gw.backend_for("judge") is gw.backend_for("degrade")

    def test_no_backend_raises(self):
        gateway = Gateway(backends={})
        with pytest.raises(BackendUnavailable):
            gateway.backend_for("judge")

    def test_rate_limit_spaces_out_calls(self):
        import time

        gateway = Gateway(backends={"default": MockBackend(seed=0)}, rate_limit_per_s=50.0)
        request = ChatRequest(system="s", user="u")
        start = time.monotonic()
        for _ in range(3):
            gateway.complete("judge", request)
        assert time.monotonic() - start >= 2 / 50.0

    def test_rate_limit_disabled_by_default(self):
        import time

        gateway = mock_gateway(seed=0)
        request = ChatRequest(system="s", user="u")
        start = time.monotonic()
        for _ in range(20):
            gateway.complete("judge", request)
        assert time.monotonic() - start < 0.5

    def test_audit_log_records_hashes(self, tmp_path):
        audit = tmp_path / "audit.jsonl"
        gateway = mock_gateway(seed=0, audit_path=audit)
        gateway.complete("judge", ChatRequest(system="s", user="写一段话"))
        gateway.embed("原告")
        lines = [json.loads(ln) for ln in audit.read_text().splitlines()]
        assert [entry["kind"] for entry in lines] == ["chat", "embed"]
        assert all(len(entry["request_sha256"]) == 64 for entry in lines)
        assert lines[0]["seq"] == 1 and lines[1]["seq"] == 2
