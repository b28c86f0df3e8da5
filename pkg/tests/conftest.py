"""Shared fixtures: a scripted fake OpenAI-style server for client tests."""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class FakeApiServer:
    """Tiny scripted chat/embeddings server with concurrency accounting.

    ``script`` is a queue of (status, body) pairs consumed one per request;
    once empty, requests get a default well-formed response. The handler
    records request payloads and tracks the in-flight high-water mark.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.script: list[tuple[int, dict | None]] = []
        self.requests: list[dict] = []
        self.delay = 0.0
        self.active = 0
        self.high_water = 0
        self._counter = 0

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                with server._lock:
                    server.active += 1
                    server.high_water = max(server.high_water, server.active)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    with server._lock:
                        server.requests.append(
                            {"path": self.path, "payload": payload,
                             "auth": self.headers.get("Authorization", "")}
                        )
                        scripted = server.script.pop(0) if server.script else None
                        server._counter += 1
                        n = server._counter
                    if server.delay:
                        time.sleep(server.delay)
                    if scripted is not None:
                        status, body = scripted
                        if body is None:
                            body = {"error": f"scripted {status}"}
                    else:
                        status, body = 200, server.default_body(self.path, payload, n)
                    raw = json.dumps(body).encode()
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(raw)))
                    self.end_headers()
                    self.wfile.write(raw)
                finally:
                    with server._lock:
                        server.active -= 1

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def default_body(self, path: str, payload: dict, n: int) -> dict:
        if "embeddings" in path:
            return {
                "data": [
                    {"index": i, "embedding": [float(len(t)), 1.0, float(i)]}
                    for i, t in enumerate(payload.get("input", []))
                ]
            }
        return {"choices": [{"message": {"content": f"ok {n}"}}]}

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def fake_server():
    server = FakeApiServer()
    yield server
    server.close()
