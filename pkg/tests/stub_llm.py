"""A local chat-completions endpoint for tests; no network beyond loopback."""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def reply(content, prompt_tokens=11, completion_tokens=7):
    return 200, {
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }


def fenced(code):
    return f"Here you go:\n```\n{code}\n```\n"


class StubServer:
    """Serves scripted responses.

    ``script`` maps (call index, request json) to (status, body); a body that
    is a str is sent verbatim, anything else as JSON.
    """

    def __init__(self, script, delay_s=0.0):
        self.script = script
        self.delay_s = delay_s
        self.requests = []
        self.lock = threading.Lock()
        self.active = 0
        self.max_active = 0
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub.lock:
                    n = len(stub.requests)
                    stub.requests.append({"path": self.path, "headers": dict(self.headers), "json": body})
                    stub.active += 1
                    stub.max_active = max(stub.max_active, stub.active)
                try:
                    if stub.delay_s:
                        time.sleep(stub.delay_s)
                    status, payload = stub.script(n, body)
                finally:
                    with stub.lock:
                        stub.active -= 1
                data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
