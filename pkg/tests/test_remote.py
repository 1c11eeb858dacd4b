"""Remote scorer client: transport, validation, retries."""
import json
import socket
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from storysalience.errors import ProtocolError, ScorerUnavailableError, TruncationWarning
from storysalience.remote import RemoteScorer
from storysalience.scoring import ScoreRequest

FAKE = Path(__file__).parent / "fake_sidecar.py"


def stdio_endpoint(mode="echo"):
    return f"stdio:{sys.executable} {FAKE} {mode}"


class TestStdioTransport:
    def test_echo_logprobs_surface_unchanged(self):
        scorer = RemoteScorer(stdio_endpoint())
        try:
            got = scorer.score(ScoreRequest("ctx", ("p1", "p2"), "three word target", True))
            assert got.logprobs.shape == (2, 3)
            assert np.all(got.logprobs == -1.0)
            assert got.target_token_count == 3
            assert got.embeddings.shape == (2, 2)
            assert got.fingerprint == "fake-sidecar:1"
            assert scorer.fingerprint == "fake-sidecar:1"
        finally:
            scorer.close()

    def test_no_passages_single_row(self):
        scorer = RemoteScorer(stdio_endpoint())
        try:
            got = scorer.score(ScoreRequest("ctx", (), "two words", False))
            assert got.logprobs.shape == (1, 2)
        finally:
            scorer.close()

    def test_embed_batch(self):
        scorer = RemoteScorer(stdio_endpoint())
        try:
            vectors = scorer.embed_batch(["a", "b", "c"])
            assert vectors.shape == (3, 2)
            assert np.array_equal(scorer.embed_text("a"), vectors[0])
        finally:
            scorer.close()

    def test_count_tokens_matches_sidecar(self):
        scorer = RemoteScorer(stdio_endpoint())
        try:
            paragraph = "a long paragraph of exactly eight words here"
            assert scorer.count_tokens(paragraph) == 8
            assert scorer.count_tokens("   ") == 0
        finally:
            scorer.close()

    def test_malformed_names_field(self):
        scorer = RemoteScorer(stdio_endpoint("malformed"))
        try:
            with pytest.raises(ProtocolError, match="token_count"):
                scorer.score(ScoreRequest("ctx", (), "two words", False))
        finally:
            scorer.close()

    def test_truncation_warning_but_accepted(self):
        scorer = RemoteScorer(stdio_endpoint("truncate"))
        try:
            with pytest.warns(TruncationWarning):
                got = scorer.score(ScoreRequest("ctx", (), "a b c", False))
            assert got.target_token_count == 3
        finally:
            scorer.close()

    def test_unreachable_after_retries(self):
        scorer = RemoteScorer(f"stdio:{sys.executable} -c 'pass'", max_retries=1)
        try:
            with pytest.raises(ScorerUnavailableError):
                scorer.score(ScoreRequest("ctx", (), "x", False))
        finally:
            scorer.close()


def _serve_once(server: socket.socket, reply_builder):
    conn, _ = server.accept()
    with conn, conn.makefile("r", encoding="utf-8") as reader:
        for line in reader:
            request = json.loads(line)
            conn.sendall((json.dumps(reply_builder(request)) + "\n").encode("utf-8"))


class TestTcpTransport:
    def test_round_trip(self):
        def reply(request):
            count = len(request["target"].split())
            return {
                "id": request["id"],
                "logprobs": [[-0.5] * count],
                "token_count": count,
                "embeddings": None,
                "fingerprint": "tcp-fake:1",
            }

        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]
        thread = threading.Thread(target=_serve_once, args=(server, reply), daemon=True)
        thread.start()
        scorer = RemoteScorer(f"127.0.0.1:{port}", timeout=5.0)
        try:
            got = scorer.score(ScoreRequest("ctx", (), "one two", False))
            assert got.logprobs.tolist() == [[-0.5, -0.5]]
        finally:
            scorer.close()
            server.close()

    def test_id_mismatch_rejected(self):
        def reply(request):
            return {
                "id": "wrong",
                "logprobs": [[-0.5]],
                "token_count": 1,
                "embeddings": None,
                "fingerprint": "tcp-fake:1",
            }

        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]
        thread = threading.Thread(target=_serve_once, args=(server, reply), daemon=True)
        thread.start()
        scorer = RemoteScorer(f"127.0.0.1:{port}", timeout=5.0)
        try:
            with pytest.raises(ProtocolError, match="id"):
                scorer.score(ScoreRequest("ctx", (), "x", False))
        finally:
            scorer.close()
            server.close()

    def test_connection_refused(self):
        scorer = RemoteScorer("127.0.0.1:1", timeout=0.2, max_retries=1)
        with pytest.raises(ScorerUnavailableError):
            scorer.score(ScoreRequest("ctx", (), "x", False))


class TestEndpointParsing:
    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            RemoteScorer("not-an-endpoint")

    def test_positive_logprob_rejected(self):
        def reply(request):
            return {
                "id": request["id"],
                "logprobs": [[0.5]],
                "token_count": 1,
                "embeddings": None,
                "fingerprint": "tcp-fake:1",
            }

        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]
        thread = threading.Thread(target=_serve_once, args=(server, reply), daemon=True)
        thread.start()
        scorer = RemoteScorer(f"127.0.0.1:{port}", timeout=5.0)
        try:
            with pytest.raises(ProtocolError, match="logprobs"):
                scorer.score(ScoreRequest("ctx", (), "x", False))
        finally:
            scorer.close()
            server.close()
