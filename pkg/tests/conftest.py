import threading
import time
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tourmonitor import _pykernels, kernels
from tourmonitor.listing import AccommodationRecord

BACKENDS = {"python": _pykernels}
try:
    from tourmonitor import _ckernels

    BACKENDS["cython"] = _ckernels
except ImportError:
    pass


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


def make_record(i=0, **kw):
    base = dict(
        accommodation_id=f"acc-{i:05d}",
        name=f"Hotel {i}",
        country="MA",
        unit_type="room",
        star_class=None,
        price_eur=None,
        tax_eur=None,
        tax_unknown=False,
        latitude=31.6,
        longitude=-8.0,
        rating_overall=None,
        rating_themes={},
        review_count=0,
        snapshot_id=f"snap-{i:05d}",
        fetched_at=datetime(2020, 2, 3, tzinfo=timezone.utc) + timedelta(seconds=i),
    )
    base.update(kw)
    return AccommodationRecord(**base)


@pytest.fixture
def record_factory():
    return make_record


class ScriptedServer:
    """Local HTTP server: per-path scripted responses and a hit log."""

    def __init__(self):
        self.routes = {}
        self.hits = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                with server.lock:
                    server.hits.append((self.path, time.monotonic()))
                    script = server.routes.get(self.path)
                    if isinstance(script, list):
                        status, body = script.pop(0) if len(script) > 1 else script[0]
                    elif script is None:
                        status, body = 404, b"not found"
                    else:
                        status, body = script
                self.send_response(status)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def page_hits(self, path=None):
        return [h for h in self.hits if h[0] != "/robots.txt" and (path is None or h[0] == path)]

    def start(self):
        self.thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def http_server():
    server = ScriptedServer().start()
    yield server
    server.stop()
