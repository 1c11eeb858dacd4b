"""Client for the scorer wire protocol (newline-delimited JSON).

One JSON object per line in each direction. Score requests carry
``{"id", "context", "passages", "target", "want_embedding"}`` and answers
carry ``{"id", "logprobs", "token_count", "embeddings", "fingerprint"}``.
Embedding requests carry ``{"id", "texts"}`` and answer with
``{"id", "embeddings", "fingerprint"}``. Transports: TCP (``host:port``) or
a sidecar subprocess over stdio (``stdio:<command line>``).
"""
from __future__ import annotations

import json
import shlex
import socket
import subprocess
import warnings

import numpy as np

from .errors import ProtocolError, ScorerUnavailableError, TruncationWarning
from .scoring import ScoreRequest, ScoreResponse


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._reader = None

    def _connect(self):
        if self._sock is not None:
            return
        sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        sock.settimeout(self.timeout)
        self._sock = sock
        self._reader = sock.makefile("r", encoding="utf-8", newline="\n")

    def close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._reader = None

    def round_trip(self, line: str) -> str:
        self._connect()
        self._sock.sendall(line.encode("utf-8") + b"\n")
        reply = self._reader.readline()
        if not reply:
            raise ConnectionError("scorer closed the connection")
        return reply


class _StdioTransport:
    def __init__(self, command: str, timeout: float):
        self.command = command
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None

    def _spawn(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            shlex.split(self.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def round_trip(self, line: str) -> str:
        self._spawn()
        self._proc.stdin.write(line + "\n")
        self._proc.stdin.flush()
        reply = self._proc.stdout.readline()
        if not reply:
            raise ConnectionError("sidecar process closed stdout")
        return reply


def _make_transport(endpoint: str, timeout: float):
    if endpoint.startswith("stdio:"):
        return _StdioTransport(endpoint[len("stdio:"):], timeout)
    if endpoint.startswith("tcp:"):
        endpoint = endpoint[len("tcp:"):]
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint '{endpoint}' is not host:port or stdio:<command>")
    return _TcpTransport(host, int(port), timeout)


class RemoteScorer:
    """Scorer handle backed by a sidecar process or service.

    Requests are idempotent by id, so transport failures retry up to
    ``max_retries`` times before raising ScorerUnavailableError.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_retries: int = 2):
        self.endpoint = endpoint
        self._transport = _make_transport(endpoint, timeout)
        self.max_retries = max_retries
        self._counter = 0
        self._fingerprint: str | None = None

    @property
    def fingerprint(self) -> str:
        return self._fingerprint or f"remote:{self.endpoint}"

    def close(self):
        self._transport.close()

    def _next_id(self) -> str:
        self._counter += 1
        return f"r{self._counter:08d}"

    def _exchange(self, payload: dict) -> dict:
        line = json.dumps(payload, sort_keys=True)
        last_error: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                reply = self._transport.round_trip(line)
                break
            except (OSError, ConnectionError, socket.timeout) as exc:
                last_error = exc
                self._transport.close()
        else:
            raise ScorerUnavailableError(
                f"scorer at '{self.endpoint}' unreachable: {last_error}"
            ) from last_error
        try:
            response = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ProtocolError("line", f"response is not JSON: {exc}") from exc
        if not isinstance(response, dict):
            raise ProtocolError("line", "response is not an object")
        if response.get("id") != payload["id"]:
            raise ProtocolError("id", f"expected {payload['id']!r}, got {response.get('id')!r}")
        if response.get("truncated"):
            warnings.warn(
                f"scorer truncated request {payload['id']}", TruncationWarning, stacklevel=3
            )
        if self._fingerprint is None and isinstance(response.get("fingerprint"), str):
            self._fingerprint = response["fingerprint"]
        return response

    def score(self, request: ScoreRequest) -> ScoreResponse:
        payload = {
            "id": self._next_id(),
            "context": request.context_text,
            "passages": list(request.passages),
            "target": request.target_text,
            "want_embedding": request.want_embedding,
        }
        response = self._exchange(payload)
        logprobs = response.get("logprobs")
        expected_rows = max(1, len(request.passages))
        if (
            not isinstance(logprobs, list)
            or len(logprobs) != expected_rows
            or not all(isinstance(row, list) for row in logprobs)
        ):
            raise ProtocolError("logprobs", f"expected {expected_rows} rows of floats")
        token_count = response.get("token_count")
        if not isinstance(token_count, int) or token_count < 0:
            raise ProtocolError("token_count", "expected a non-negative integer")
        if any(len(row) != token_count for row in logprobs):
            raise ProtocolError("logprobs", f"row lengths differ from token_count {token_count}")
        matrix = np.asarray(logprobs, dtype=np.float64)
        if matrix.size and (not np.all(np.isfinite(matrix)) or matrix.max() > 0.0):
            raise ProtocolError("logprobs", "entries must be finite and <= 0")
        embeddings = None
        raw_embeddings = response.get("embeddings")
        if request.want_embedding:
            if not isinstance(raw_embeddings, list) or len(raw_embeddings) != expected_rows:
                raise ProtocolError("embeddings", f"expected {expected_rows} vectors")
            embeddings = np.asarray(raw_embeddings, dtype=np.float64)
        fingerprint = response.get("fingerprint")
        if not isinstance(fingerprint, str) or not fingerprint:
            raise ProtocolError("fingerprint", "expected a non-empty string")
        return ScoreResponse(
            logprobs=matrix,
            target_token_count=token_count,
            embeddings=embeddings,
            fingerprint=fingerprint,
        )

    def count_tokens(self, text: str) -> int:
        """Token count under the scorer's own tokenizer, via a bare request."""
        if not text.strip():
            return 0
        response = self.score(ScoreRequest("", (), text, want_embedding=False))
        return response.target_token_count

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        payload = {"id": self._next_id(), "texts": list(texts)}
        response = self._exchange(payload)
        embeddings = response.get("embeddings")
        if not isinstance(embeddings, list) or len(embeddings) != len(texts):
            raise ProtocolError("embeddings", f"expected {len(texts)} vectors")
        return np.asarray(embeddings, dtype=np.float64)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]
