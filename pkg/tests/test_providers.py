import json

import pytest
import requests

from zerotree.providers import (
    AuthError,
    ChatClient,
    CompletionRecord,
    EmptyResponse,
    ExhaustedAttempts,
    MockProvider,
    NetworkError,
    ProviderConfig,
    ResponseCache,
    ScriptExhausted,
    completion_key,
)


def ok(text):
    return 200, {"choices": [{"message": {"content": text}}]}


class FakeTransport:
    """Scripted (status, payload) outcomes; exceptions in the list are raised."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, headers, body, timeout):
        self.calls.append({"url": url, "headers": headers, "body": body, "timeout": timeout})
        item = self.outcomes.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def make_client(tmp_path, outcomes, cache=True, offline=False, **config_kwargs):
    config = ProviderConfig(
        endpoint_url="https://llm.example/v1", model_name="test-model", **config_kwargs
    )
    transport = FakeTransport(outcomes)
    sleeps = []
    client = ChatClient(
        config,
        cache_dir=tmp_path / "cache" if cache else None,
        offline=offline,
        transport=transport,
        sleeper=sleeps.append,
    )
    return client, transport, sleeps


class TestCompletionKey:
    def test_deterministic_hex(self):
        a = completion_key("p", "m", 0.0, 0)
        assert a == completion_key("p", "m", 0.0, 0)
        assert len(a) == 64
        int(a, 16)

    def test_every_field_matters(self):
        base = completion_key("p", "m", 0.0, 0)
        assert completion_key("q", "m", 0.0, 0) != base
        assert completion_key("p", "n", 0.0, 0) != base
        assert completion_key("p", "m", 1.0, 0) != base
        assert completion_key("p", "m", 0.0, 1) != base


class TestResponseCache:
    def record(self, key, text):
        return CompletionRecord(
            prompt_hash=key,
            model_name="m",
            temperature=0.0,
            attempt_index=0,
            response_text=text,
            timestamp="2026-01-01T00:00:00+00:00",
        )

    def test_layout_is_two_level(self, tmp_path):
        cache = ResponseCache(tmp_path)
        key = completion_key("p", "m", 0.0, 0)
        assert cache.path(key) == tmp_path / key[:2] / f"{key}.json"

    def test_round_trip(self, tmp_path):
        cache = ResponseCache(tmp_path)
        key = completion_key("p", "m", 0.0, 0)
        cache.put(self.record(key, "hello"))
        assert cache.get(key).response_text == "hello"

    def test_miss_is_none(self, tmp_path):
        assert ResponseCache(tmp_path).get("0" * 64) is None

    def test_records_are_immutable(self, tmp_path):
        cache = ResponseCache(tmp_path)
        key = completion_key("p", "m", 0.0, 0)
        cache.put(self.record(key, "first"))
        cache.put(self.record(key, "second"))
        assert cache.get(key).response_text == "first"

    def test_no_tmp_files_left(self, tmp_path):
        cache = ResponseCache(tmp_path)
        cache.put(self.record(completion_key("p", "m", 0.0, 0), "x"))
        assert not list(tmp_path.rglob("*.tmp"))

    def test_file_is_readable_json(self, tmp_path):
        cache = ResponseCache(tmp_path)
        key = completion_key("p", "m", 0.0, 0)
        cache.put(self.record(key, "x"))
        with open(cache.path(key)) as handle:
            payload = json.load(handle)
        assert payload["response_text"] == "x"
        assert payload["attempt_index"] == 0


class TestChatClient:
    def test_completes_and_caches(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [ok("answer")])
        assert client.complete("prompt") == "answer"
        key = completion_key("prompt", "test-model", 0.0, 0)
        assert client.cache.get(key).response_text == "answer"

    def test_cache_hit_skips_network(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [ok("answer")])
        client.complete("prompt")
        again = client.complete("prompt")
        assert again == "answer"
        assert len(transport.calls) == 1

    def test_cache_survives_client_restart(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        first, _, _ = make_client(tmp_path, [ok("answer")])
        first.complete("prompt")
        fresh, transport, _ = make_client(tmp_path, [RuntimeError("should not be called")])
        assert fresh.complete("prompt") == "answer"
        assert transport.calls == []

    def test_attempts_occupy_distinct_slots(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [ok("first"), ok("second")])
        assert client.complete("prompt", attempt_index=0) == "first"
        assert client.complete("prompt", attempt_index=1) == "second"
        assert client.complete("prompt", attempt_index=0) == "first"
        assert len(transport.calls) == 2

    def test_offline_miss_raises(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [], offline=True)
        with pytest.raises(NetworkError):
            client.complete("prompt")
        assert transport.calls == []

    def test_offline_hit_succeeds(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        warm, _, _ = make_client(tmp_path, [ok("cached")])
        warm.complete("prompt")
        cold, transport, _ = make_client(tmp_path, [], offline=True)
        assert cold.complete("prompt") == "cached"
        assert transport.calls == []

    def test_retries_server_errors_with_backoff(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, sleeps = make_client(
            tmp_path, [(503, {}), (429, {}), ok("eventually")]
        )
        assert client.complete("prompt") == "eventually"
        assert len(transport.calls) == 3
        assert sleeps == [1.0, 2.0]

    def test_gives_up_after_transport_budget(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, sleeps = make_client(tmp_path, [(503, {})] * 4)
        with pytest.raises(NetworkError):
            client.complete("prompt")
        assert len(transport.calls) == 4
        assert sleeps == [1.0, 2.0, 4.0]

    def test_connection_errors_are_retried(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(
            tmp_path, [requests.ConnectionError("refused"), ok("back up")]
        )
        assert client.complete("prompt") == "back up"

    def test_auth_failure_is_not_retried(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [(401, {})])
        with pytest.raises(AuthError):
            client.complete("prompt")
        assert len(transport.calls) == 1

    def test_unexpected_status_is_not_retried(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [(404, {})])
        with pytest.raises(NetworkError):
            client.complete("prompt")
        assert len(transport.calls) == 1

    def test_empty_message_raises(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, _, _ = make_client(tmp_path, [ok("   ")])
        with pytest.raises(EmptyResponse):
            client.complete("prompt")

    def test_malformed_payload_raises(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, _, _ = make_client(tmp_path, [(200, {"choices": []})])
        with pytest.raises(EmptyResponse):
            client.complete("prompt")

    def test_failures_are_not_cached(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, _, _ = make_client(tmp_path, [(503, {})] * 4 + [ok("recovered")])
        with pytest.raises(NetworkError):
            client.complete("prompt")
        assert client.complete("prompt") == "recovered"

    def test_bearer_header_from_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-secret")
        client, transport, _ = make_client(tmp_path, [ok("x")])
        client.complete("prompt")
        assert transport.calls[0]["headers"]["Authorization"] == "Bearer sk-secret"

    def test_no_auth_header_without_key(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [ok("x")])
        client.complete("prompt")
        assert "Authorization" not in transport.calls[0]["headers"]

    def test_request_body_shape(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        client, transport, _ = make_client(tmp_path, [ok("x")], temperature=1.0)
        client.complete("the prompt")
        call = transport.calls[0]
        assert call["url"] == "https://llm.example/v1/chat/completions"
        assert call["body"]["model"] == "test-model"
        assert call["body"]["temperature"] == 1.0
        assert call["body"]["messages"] == [{"role": "user", "content": "the prompt"}]

    def test_temperature_bounds_enforced(self):
        with pytest.raises(ValueError):
            ProviderConfig(endpoint_url="u", model_name="m", temperature=2.5)
        with pytest.raises(ValueError):
            ProviderConfig(endpoint_url="u", model_name="m", temperature=-0.1)


class TestCompleteUntilValid:
    def test_first_valid_wins(self):
        provider = MockProvider(["good"])
        assert provider.complete_until_valid("p", lambda t: True) == "good"
        assert provider.calls == [("p", 0)]

    def test_rejections_consume_attempts_in_order(self):
        provider = MockProvider(["bad", "bad", "bad", "good"])
        text = provider.complete_until_valid("p", lambda t: t == "good")
        assert text == "good"
        assert [index for _, index in provider.calls] == [0, 1, 2, 3]

    def test_budget_is_one_plus_extras(self):
        provider = MockProvider(["bad"] * 10)
        with pytest.raises(ExhaustedAttempts) as info:
            provider.complete_until_valid("p", lambda t: False, max_extra_attempts=5)
        assert info.value.attempts == 6
        assert len(provider.calls) == 6

    def test_zero_extras_means_single_shot(self):
        provider = MockProvider(["bad", "good"])
        with pytest.raises(ExhaustedAttempts):
            provider.complete_until_valid("p", lambda t: t == "good", max_extra_attempts=0)
        assert len(provider.calls) == 1

    def test_negative_extras_rejected(self):
        with pytest.raises(ValueError):
            MockProvider(["x"]).complete_until_valid("p", lambda t: True, max_extra_attempts=-1)

    def test_offset_shifts_attempt_indices(self):
        provider = MockProvider(["bad", "good"])
        provider.complete_until_valid("p", lambda t: t == "good", attempt_offset=7)
        assert [index for _, index in provider.calls] == [7, 8]


class TestMockProvider:
    def test_plays_script_in_order(self):
        provider = MockProvider(["a", "b"])
        assert provider.complete("p") == "a"
        assert provider.complete("p") == "b"

    def test_exception_items_raise(self):
        provider = MockProvider([EmptyResponse("blank"), "after"])
        with pytest.raises(EmptyResponse):
            provider.complete("p")
        assert provider.complete("p") == "after"

    def test_exhaustion(self):
        provider = MockProvider([])
        with pytest.raises(ScriptExhausted):
            provider.complete("p")
