"""Backend behavior: determinism, embeddings, golden capture."""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from scorer_sidecar.backends import HashedBackend, make_backend
from scorer_sidecar.config import SidecarConfig

GOLDEN = Path(__file__).parent / "golden" / "hashed_fixture.json"


def backend(**kwargs):
    return HashedBackend(SidecarConfig(**kwargs))


class TestHashedBackend:
    def test_deterministic(self):
        b = backend()
        first = b.score("ctx words", ["p one", "p two"], "t u v", True)
        second = b.score("ctx words", ["p one", "p two"], "t u v", True)
        assert first == second

    def test_rows_negative_and_shaped(self):
        rows, count, embeddings, truncated = backend().score(
            "some context", ["alpha", "beta", "gamma"], "four token target here", True
        )
        assert len(rows) == 3
        assert count == 4
        assert all(len(r) == 4 for r in rows)
        assert all(v < 0 for row in rows for v in row)
        assert len(embeddings) == 3
        assert truncated is False

    def test_rows_differ_across_passages(self):
        rows, _, _, _ = backend().score("ctx", ["one passage", "another"], "a b", False)
        assert rows[0] != rows[1]

    def test_embed_identical_texts_identical_vectors(self):
        vectors, _ = backend().embed(["same text", "same text", "other"])
        assert vectors[0] == vectors[1]
        assert vectors[0] != vectors[2]

    def test_embed_batch_independence(self):
        single, _ = backend().embed(["lonely text"])
        batch, _ = backend().embed(["lonely text", "company"])
        assert single[0] == batch[0]

    def test_embed_l2_normalized(self):
        vectors, _ = backend().embed(["normalize me please"])
        assert math.isclose(float(np.linalg.norm(vectors[0])), 1.0, abs_tol=1e-12)

    def test_context_truncation_flag(self):
        b = backend(max_context_tokens=3)
        _, _, _, truncated = b.score("one two three four", [], "t", False)
        assert truncated is True

    def test_golden_capture(self):
        """First pinned run captures the golden; later runs must match it."""
        b = backend()
        rows, count, embeddings, _ = b.score(
            "the golden context", ["the golden passage"], "golden target tokens", True
        )
        got = {
            "fingerprint": b.fingerprint,
            "logprobs": rows,
            "token_count": count,
            "embeddings": embeddings,
        }
        if not GOLDEN.exists():
            GOLDEN.parent.mkdir(parents=True, exist_ok=True)
            GOLDEN.write_text(json.dumps(got, indent=2, sort_keys=True))
        stored = json.loads(GOLDEN.read_text())
        assert got == stored


class TestMakeBackend:
    def test_hashed(self):
        assert make_backend("hashed", SidecarConfig()).fingerprint.startswith("hashed:")

    def test_auto_falls_back_without_weights(self):
        b = make_backend("auto", SidecarConfig(generator_model="definitely/not-a-model"))
        assert b.fingerprint.startswith("hashed:")

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            make_backend("nope", SidecarConfig())
