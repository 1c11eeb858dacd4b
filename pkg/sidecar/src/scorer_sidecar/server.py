"""Newline-delimited JSON protocol loop over stdio or TCP.

One request object per line, one response line per request, ids echoed
back. Score requests carry {"id", "context", "passages", "target",
"want_embedding"}; embedding requests carry {"id", "texts"}; health
requests carry {"id", "health": true}. Requests are executed at most once
per id: replays answer from a bounded response cache.
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import sys
from collections import OrderedDict

logger = logging.getLogger(__name__)

_REPLAY_CACHE_SIZE = 1024


class RequestHandler:
    def __init__(self, backend):
        self.backend = backend
        self._seen: OrderedDict[str, str] = OrderedDict()

    def _remember(self, request_id, line: str) -> str:
        if isinstance(request_id, str):
            self._seen[request_id] = line
            if len(self._seen) > _REPLAY_CACHE_SIZE:
                self._seen.popitem(last=False)
        return line

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"id": None, "error": f"request is not JSON: {exc}"})
        if not isinstance(request, dict):
            return json.dumps({"id": None, "error": "request is not an object"})
        request_id = request.get("id")
        if isinstance(request_id, str) and request_id in self._seen:
            return self._seen[request_id]
        try:
            response = self._dispatch(request)
        except Exception as exc:
            logger.exception("request %r failed", request_id)
            return json.dumps({"id": request_id, "error": str(exc)})
        return self._remember(request_id, json.dumps(response))

    def _dispatch(self, request: dict) -> dict:
        request_id = request.get("id")
        if request.get("health"):
            return {"id": request_id, "status": "ok", "fingerprint": self.backend.fingerprint}
        if "texts" in request:
            texts = request["texts"]
            if not isinstance(texts, list) or not texts:
                raise ValueError("'texts' must be a non-empty list")
            embeddings, truncated = self.backend.embed([str(t) for t in texts])
            response = {
                "id": request_id,
                "embeddings": embeddings,
                "fingerprint": self.backend.fingerprint,
            }
            if truncated:
                response["truncated"] = True
            return response
        for field in ("context", "target"):
            if not isinstance(request.get(field), str):
                raise ValueError(f"'{field}' must be a string")
        passages = request.get("passages", [])
        if not isinstance(passages, list):
            raise ValueError("'passages' must be a list")
        want_embedding = bool(request.get("want_embedding", False))
        rows, token_count, embeddings, truncated = self.backend.score(
            request["context"], [str(p) for p in passages], request["target"], want_embedding
        )
        response = {
            "id": request_id,
            "logprobs": rows,
            "token_count": token_count,
            "embeddings": embeddings if want_embedding else None,
            "fingerprint": self.backend.fingerprint,
        }
        if truncated:
            response["truncated"] = True
        return response


def serve_stdio(backend, stdin=None, stdout=None) -> int:
    handler = RequestHandler(backend)
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(handler.handle_line(line) + "\n")
        stdout.flush()
    return 0


def serve_tcp(backend, host: str, port: int, ready_callback=None) -> int:
    handler = RequestHandler(backend)

    class _Connection(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                line = raw.decode("utf-8").strip()
                if not line:
                    continue
                reply = handler.handle_line(line) + "\n"
                self.wfile.write(reply.encode("utf-8"))
                self.wfile.flush()

    class _Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with _Server((host, port), _Connection) as server:
        if ready_callback is not None:
            ready_callback(server.server_address[1])
        logger.info("serving on %s:%d", *server.server_address)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0
