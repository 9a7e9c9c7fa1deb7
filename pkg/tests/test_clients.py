from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from preconsult.clients import (
    ChatMessage,
    ClientConfigError,
    ClientError,
    CyclingMockClient,
    HttpChatClient,
    HttpEmbeddingProvider,
    MockClient,
    ModelClientSpec,
    ScriptExhaustedError,
    call_with_retries,
    client_factory_from_config,
    messages_to_wire,
)


def test_chat_message_validation():
    with pytest.raises(ValueError):
        ChatMessage("narrator", "hi")
    with pytest.raises(ValueError):
        ChatMessage("system", "")
    assert ChatMessage("assistant", "").content == ""


def test_mock_client_replays_script_and_records_requests():
    client = MockClient(["one", "two"])
    request = [ChatMessage("system", "s"), ChatMessage("user", "u")]
    assert client.complete(request) == "one"
    assert client.complete(request) == "two"
    with pytest.raises(ScriptExhaustedError):
        client.complete(request)
    assert len(client.requests) == 3
    assert client.requests[0] == request


def test_mock_client_rejects_empty_script():
    with pytest.raises(ValueError):
        MockClient([])
    with pytest.raises(ValueError):
        CyclingMockClient([])


def test_cycling_mock_never_exhausts():
    client = CyclingMockClient(["a", "b"])
    outs = [client.complete([ChatMessage("user", "x")]) for _ in range(5)]
    assert outs == ["a", "b", "a", "b", "a"]


class _Flaky:
    def __init__(self, failures: int, response: str = "ok"):
        self.failures = failures
        self.calls = 0
        self.response = response

    def complete(self, messages):
        self.calls += 1
        if self.calls <= self.failures:
            raise ClientError(f"boom {self.calls}")
        return self.response


def test_call_with_retries_recovers_and_logs_attempts():
    client = _Flaky(failures=2)
    log = []
    result = call_with_retries(client, [ChatMessage("user", "q")], 3, 0.0,
                               lambda a, e, r, t: log.append((a, e, r)))
    assert result == "ok"
    assert client.calls == 3
    assert [entry[0] for entry in log] == [1, 2, 3]
    assert log[0][1] == "boom 1" and log[0][2] is None
    assert log[2][1] is None and log[2][2] == "ok"


def test_call_with_retries_exhausts():
    client = _Flaky(failures=5)
    with pytest.raises(ClientError, match="boom 3"):
        call_with_retries(client, [ChatMessage("user", "q")], 3, 0.0)
    assert client.calls == 3


def test_http_client_requires_credential(monkeypatch):
    monkeypatch.delenv("MISSING_KEY", raising=False)
    spec = ModelClientSpec(base_url="http://localhost:1/v1/chat", model="m",
                           api_key_env="MISSING_KEY")
    with pytest.raises(ClientConfigError, match="MISSING_KEY"):
        HttpChatClient(spec)


def test_client_factory_from_config_mock_is_fresh_per_call():
    factory = client_factory_from_config({"type": "mock", "script": ["x"]})
    a, b = factory(), factory()
    assert a is not b
    assert a.complete([ChatMessage("user", "u")]) == "x"
    assert b.complete([ChatMessage("user", "u")]) == "x"


def test_client_factory_rejects_bad_config():
    with pytest.raises(ClientConfigError):
        client_factory_from_config({"type": "mock"})
    with pytest.raises(ClientConfigError):
        client_factory_from_config({"type": "carrier-pigeon"})
    with pytest.raises(ClientConfigError):
        client_factory_from_config({"type": "http", "base_url": "x",
                                    "api_key_env": "K", "shoe_size": 9})


# -- wire protocol against a local stub --


class _StubHandler(BaseHTTPRequestHandler):
    fail_next = 0
    seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        type(self).seen.append({"path": self.path, "payload": payload,
                                "auth": self.headers.get("Authorization")})
        if type(self).fail_next > 0:
            type(self).fail_next -= 1
            self.send_response(503)
            self.end_headers()
            self.wfile.write(b"overloaded")
            return
        if self.path == "/v1/chat/completions":
            body = {"choices": [{"message": {
                "content": f"echo:{payload['messages'][-1]['content']}"}}]}
        else:
            body = {"data": [{"embedding": [1.0, 2.0, 2.0]}]}
        data = json.dumps(body).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.seen = []
    _StubHandler.fail_next = 0
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=5)


def test_http_chat_client_round_trip(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "sekrit")
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/chat/completions",
                           model="stub-model", temperature=0.3,
                           api_key_env="STUB_KEY", timeout=5.0)
    client = HttpChatClient(spec)
    messages = [ChatMessage("system", "sys"), ChatMessage("user", "hello")]
    assert client.complete(messages) == "echo:hello"
    request = _StubHandler.seen[-1]
    assert request["auth"] == "Bearer sekrit"
    assert request["payload"]["model"] == "stub-model"
    assert request["payload"]["temperature"] == 0.3
    assert request["payload"]["messages"] == messages_to_wire(messages)


def test_http_chat_client_sends_sampling_seed(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/chat/completions",
                           model="m", seed=31337, api_key_env="STUB_KEY",
                           timeout=5.0)
    HttpChatClient(spec).complete([ChatMessage("user", "hi")])
    assert _StubHandler.seen[-1]["payload"]["seed"] == 31337
    # absent when unset
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/chat/completions",
                           model="m", api_key_env="STUB_KEY", timeout=5.0)
    HttpChatClient(spec).complete([ChatMessage("user", "hi")])
    assert "seed" not in _StubHandler.seen[-1]["payload"]


def test_http_chat_client_retry_on_503(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/chat/completions",
                           model="m", api_key_env="STUB_KEY", timeout=5.0)
    client = HttpChatClient(spec)
    _StubHandler.fail_next = 2
    result = call_with_retries(client, [ChatMessage("user", "hi")], 3, 0.0)
    assert result == "echo:hi"


def test_http_embedding_provider(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/embeddings",
                           model="embed", api_key_env="STUB_KEY", timeout=5.0)
    provider = HttpEmbeddingProvider(spec)
    assert provider("chest pain") == [1.0, 2.0, 2.0]
    assert _StubHandler.seen[-1]["payload"] == {"model": "embed",
                                                "input": "chest pain"}


def test_http_chat_client_reports_http_errors(stub_server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    spec = ModelClientSpec(base_url=f"{stub_server}/v1/chat/completions",
                           model="m", api_key_env="STUB_KEY", timeout=5.0)
    client = HttpChatClient(spec)
    _StubHandler.fail_next = 1
    with pytest.raises(ClientError, match="HTTP 503"):
        client.complete([ChatMessage("user", "hi")])
