"""Local stand-in for the search-volume endpoint.

Serves ``date,value`` CSV files from a fixtures directory over HTTP so the
fetch client can be exercised without any network dependency. Fault modes
(throttling, transient failures) are configurable for tests.

Endpoint shape: ``GET /trends?term=<text>&start=YYYY-MM&end=YYYY-MM&geo=CC``.
The response is the fixture series clipped to the requested span.
"""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .ingest import parse_raw_series, slugify
from .series import parse_month


class MockTrendsServer:
    """Fixture-backed HTTP server on an ephemeral localhost port.

    ``fail_first`` makes the first N requests return HTTP 500 (to exercise
    retry logic); ``throttle_after`` makes every request past the Nth
    return HTTP 429.
    """

    def __init__(self, fixtures_dir: str | Path, fail_first: int = 0,
                 throttle_after: int | None = None):
        self.fixtures_dir = Path(fixtures_dir)
        self.fail_first = fail_first
        self.throttle_after = throttle_after
        self.request_count = 0
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _make_handler(self))
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockTrendsServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "MockTrendsServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def lookup(self, term: str, start: int, end: int) -> str | None:
        """Fixture payload for a term clipped to [start, end], or None."""
        path = self.fixtures_dir / f"{slugify(term)}.csv"
        if not path.exists():
            return None
        series = parse_raw_series(path.read_bytes(), term=term)
        rows = [(m, v) for m, v in series.observations if start <= m <= end]
        lines = ["date,value"] + [
            f"{_fmt(m)},{v:.12g}" for m, v in rows
        ]
        return "\n".join(lines) + "\n"


def _fmt(month: int) -> str:
    return f"{month // 12:04d}-{month % 12 + 1:02d}"


def _make_handler(server: MockTrendsServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output quiet
            pass

        def do_GET(self):
            with server._lock:
                server.request_count += 1
                count = server.request_count
            if server.throttle_after is not None and count > server.throttle_after:
                self._send(429, "rate limit exceeded\n")
                return
            if count <= server.fail_first:
                self._send(500, "transient failure\n")
                return

            parsed = urlparse(self.path)
            if parsed.path != "/trends":
                self._send(404, "not found\n")
                return
            query = parse_qs(parsed.query)
            term = query.get("term", [""])[0]
            try:
                start = parse_month(query.get("start", [""])[0])
                end = parse_month(query.get("end", [""])[0])
            except ValueError:
                self._send(400, "bad span\n")
                return
            if not term or end < start:
                self._send(400, "bad request\n")
                return
            payload = server.lookup(term, start, end)
            if payload is None:
                self._send(404, f"unknown term {term}\n")
                return
            self._send(200, payload, content_type="text/csv")

        def _send(self, status: int, body: str, content_type: str = "text/plain"):
            data = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler
