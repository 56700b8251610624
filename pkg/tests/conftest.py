import numpy as np
import pytest

from mtattack.substitute import TrainingConfig, train

FILLER = "the a movie was is and it this of with story plot scene good bad very".split()


def marker_corpus(n=100, seed=0):
    """Label 1 texts carry "zebra", label 0 texts carry "giraffe"; the rest is shared filler."""
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        words = list(rng.choice(FILLER, size=7))
        y = i % 2
        words.insert(int(rng.integers(0, 8)), "zebra" if y else "giraffe")
        data.append((" ".join(words), y))
    return data


@pytest.fixture(scope="session")
def corpus():
    return marker_corpus()


@pytest.fixture(scope="session")
def marker_model(corpus):
    return train(corpus, TrainingConfig(seed=0))


@pytest.fixture(scope="session")
def confident_model(corpus):
    # more epochs than the default recipe so probabilities saturate
    return train(corpus, TrainingConfig(seed=0, epochs=40))


class _Server:
    """Loopback JSON server; ``routes`` maps (method, path) to a callable
    returning (status, body) from the decoded request payload."""

    def __init__(self, routes):
        import json
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        self.hits = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def _reply(self, method):
                n = int(self.headers.get("Content-Length") or 0)
                payload = json.loads(self.rfile.read(n)) if n else None
                server.hits.append((method, self.path))
                fn = routes.get((method, self.path))
                status, body = fn(payload) if fn else (404, {"error": "no route"})
                raw = body if isinstance(body, bytes) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def do_GET(self):
                self._reply("GET")

            def do_POST(self):
                self._reply("POST")

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def serve():
    servers = []

    def start(routes):
        s = _Server(routes)
        servers.append(s)
        return s

    yield start
    for s in servers:
        s.close()
