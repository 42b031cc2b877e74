"""HTTP service: corpus ingestion, live completion, and the static typing UI.

Endpoints (JSON over HTTP/1.1, UTF-8, CORS open):

    POST /v1/documents   ingest or replace one DocumentRecord
    GET  /v1/complete    ?doc_id=&prefix=&mode=&k=&alpha=&beta=&bias=&lambda=
                         &context=&trie=&beam=
    GET  /v1/documents   indexed doc ids and titles
    GET  /v1/health      version and corpus size

Errors are ``{"error": {"code": ..., "message": ...}}``. Anything outside
/v1/ serves static files from the configured UI directory.

Completion handlers never hold locks: the engine swaps corpus state
atomically, so concurrent readers see either the old or the new epoch.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import time
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import __version__
from .engine import Engine
from .errors import (
    InvalidInputError,
    NotFoundError,
    QacError,
    UnavailableContextError,
)
from .models import DocumentRecord, WeightedQuery

LOG = logging.getLogger(__name__)

ENV_PORT = "QAC_PORT"
ENV_CORPUS = "QAC_CORPUS"


def _error_payload(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def parse_document(payload: dict) -> DocumentRecord:
    if not isinstance(payload, dict):
        raise InvalidInputError("body must be a JSON object")
    doc_id = payload.get("doc_id")
    if not doc_id or not isinstance(doc_id, str):
        raise InvalidInputError("field 'doc_id' must be a non-empty string")
    queries = []
    for i, q in enumerate(payload.get("queries", [])):
        if not isinstance(q, dict) or "text" not in q:
            raise InvalidInputError(f"field 'queries[{i}]' needs a 'text'")
        queries.append(
            WeightedQuery(str(q["text"]), float(q.get("clicks", 1.0)))
        )
    for name in ("url", "title", "body"):
        if name in payload and not isinstance(payload[name], str):
            raise InvalidInputError(f"field '{name}' must be a string")
    return DocumentRecord(
        doc_id=doc_id,
        url=payload.get("url", ""),
        title=payload.get("title", ""),
        body=payload.get("body", ""),
        queries=queries,
    )


class QacRequestHandler(BaseHTTPRequestHandler):
    server: "QacServer"
    protocol_version = "HTTP/1.1"

    # -- plumbing --------------------------------------------------------

    def log_message(self, fmt, *args):
        LOG.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_error_response(self, exc: Exception) -> None:
        if isinstance(exc, NotFoundError):
            self._send_json(404, _error_payload("not_found", str(exc)))
        elif isinstance(exc, (InvalidInputError, UnavailableContextError)):
            self._send_json(400, _error_payload("invalid_input", str(exc)))
        elif isinstance(exc, QacError):
            self._send_json(500, _error_payload("internal", str(exc)))
        else:
            LOG.exception("unhandled error")
            self._send_json(500, _error_payload("internal", str(exc)))

    # -- routes ----------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parsed = urllib.parse.urlparse(self.path)
        try:
            if parsed.path == "/v1/health":
                self._send_json(
                    200,
                    {
                        "status": "ok",
                        "version": __version__,
                        "corpus_size": len(self.server.engine.state.documents),
                    },
                )
            elif parsed.path == "/v1/documents":
                self._send_json(
                    200, {"documents": self.server.engine.list_documents()}
                )
            elif parsed.path == "/v1/complete":
                self._handle_complete(parsed)
            elif parsed.path.startswith("/v1/"):
                self._send_json(404, _error_payload("not_found", parsed.path))
            else:
                self._serve_static(parsed.path)
        except Exception as exc:  # noqa: BLE001 - mapped to HTTP errors
            self._send_error_response(exc)

    def do_POST(self):
        parsed = urllib.parse.urlparse(self.path)
        try:
            if parsed.path != "/v1/documents":
                self._send_json(404, _error_payload("not_found", parsed.path))
                return
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                payload = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise InvalidInputError(f"body is not valid JSON: {exc}")
            record = parse_document(payload)
            stats = self.server.engine.ingest_document(record)
            self._send_json(200, stats)
        except Exception as exc:  # noqa: BLE001
            self._send_error_response(exc)

    # -- handlers ---------------------------------------------------------

    def _handle_complete(self, parsed) -> None:
        params = urllib.parse.parse_qs(parsed.query)

        def one(name: str, default=None):
            values = params.get(name)
            return values[0] if values else default

        prefix = one("prefix")
        if prefix is None or not prefix.strip():
            raise InvalidInputError("query parameter 'prefix' is required")
        mode = one("mode", "guided")

        def num(name, cast):
            raw = one(name)
            if raw is None or raw == "":
                return None
            try:
                return cast(raw)
            except ValueError:
                raise InvalidInputError(f"parameter {name!r} must be {cast.__name__}")

        k = num("k", int)
        if k is None:
            k = 10
        started = time.perf_counter()
        suggestions = self.server.engine.complete(
            mode,
            one("doc_id"),
            prefix,
            k,
            alpha=num("alpha", float),
            beta=num("beta", float),
            bias=num("bias", float),
            lam=num("lambda", float),
            context_mode=one("context"),
            trie_source=one("trie"),
            beam_size=num("beam", int),
        )
        latency_ms = (time.perf_counter() - started) * 1000.0
        self._send_json(
            200,
            {
                "prefix": prefix,
                "mode": mode,
                "latency_ms": latency_ms,
                "suggestions": [
                    {
                        "text": s.text,
                        "score": s.score,
                        "rank": s.rank,
                        "source": s.source,
                        "trie_conforming": s.trie_conforming,
                    }
                    for s in suggestions
                ],
            },
        )

    def _serve_static(self, path: str) -> None:
        root = self.server.ui_dir
        if root is None:
            self._send_json(
                404, _error_payload("not_found", "no UI directory configured")
            )
            return
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json(404, _error_payload("not_found", path))
            return
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)


class QacServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, engine: Engine, port: int = 0, ui_dir: str | None = None):
        super().__init__(("127.0.0.1", port), QacRequestHandler)
        self.engine = engine
        self.ui_dir = Path(ui_dir) if ui_dir else None


def create_server(
    engine: Engine, port: int | None = None, ui_dir: str | None = None
) -> QacServer:
    if port is None:
        port = int(os.environ.get(ENV_PORT, "8634"))
    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        if (candidate / "index.html").is_file():
            ui_dir = str(candidate)
    return QacServer(engine, port, ui_dir)
