"""Permanent knowledgebase index, transitory memory cache, and retrieval.

Search is exact maximum-inner-product over dense vectors: corpora at desk
scale do not need approximate indices, and exactness lets tests compare
against brute-force scans. Ordering ties are broken memory-first, then by
smaller memory id, then by passage id.
"""
from __future__ import annotations

import enum
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DuplicatePassageError, EmptyScoresError

_CHUNK_ROWS = 65536


class PassageSource(enum.Enum):
    KB = "kb"
    MEMORY = "memory"


class RetrievalMode(enum.Enum):
    KB_AND_MEM = "kb_and_mem"
    KB_ONLY = "kb_only"
    MEM_ONLY = "mem_only"
    OFF = "off"
    SCRAMBLED = "scrambled"


@dataclass(frozen=True)
class PassageRecord:
    passage_id: str
    text: str
    embedding: np.ndarray
    source: PassageSource
    memory_id: int | None = None

    def __post_init__(self):
        if (self.memory_id is not None) != (self.source is PassageSource.MEMORY):
            raise ValueError("memory_id must be present iff source is MEMORY")


@dataclass(frozen=True)
class RetrievedItem:
    record: PassageRecord
    score: float
    weight: float


@dataclass(frozen=True)
class RetrievedSet:
    items: tuple[RetrievedItem, ...]

    def __len__(self) -> int:
        return len(self.items)

    def texts(self) -> list[str]:
        return [item.record.text for item in self.items]

    def weights(self) -> list[float]:
        return [item.weight for item in self.items]


EMPTY_RETRIEVAL = RetrievedSet(items=())


def _sort_key(record: PassageRecord, score: float):
    in_memory = 0 if record.source is PassageSource.MEMORY else 1
    memory_id = record.memory_id if record.memory_id is not None else -1
    return (-score, in_memory, memory_id, record.passage_id)


def marginal_weights(scores: list[float]) -> list[float]:
    """Softmax over retrieval scores with max-subtraction for stability."""
    if len(scores) == 0:
        raise EmptyScoresError("cannot normalize an empty score list")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    shifted = arr - arr.max()
    exp = np.exp(shifted)
    return list(exp / exp.sum())


class KnowledgeBase:
    """Immutable exact inner-product index over embedded passages."""

    MAGIC = b"SALKB1"

    def __init__(self, passage_ids: list[str], texts: list[str], matrix: np.ndarray):
        if matrix.ndim != 2 or len(passage_ids) != matrix.shape[0]:
            raise ValueError("matrix rows must match passage count")
        self.passage_ids = list(passage_ids)
        self.texts = list(texts)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        # lexicographic rank per row, for vectorized tie-breaking
        order = sorted(range(len(passage_ids)), key=lambda i: passage_ids[i])
        self._id_rank = np.empty(len(passage_ids), dtype=np.int64)
        for rank, row in enumerate(order):
            self._id_rank[row] = rank

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @classmethod
    def build(cls, passages: Iterable[tuple[str, str]], embedder) -> "KnowledgeBase":
        ids: list[str] = []
        texts: list[str] = []
        seen: set[str] = set()
        rows: list[np.ndarray] = []
        for passage_id, text in passages:
            if passage_id in seen:
                raise DuplicatePassageError(f"duplicate passage id '{passage_id}'")
            seen.add(passage_id)
            ids.append(passage_id)
            texts.append(text)
            rows.append(np.asarray(embedder.embed(text), dtype=np.float32))
        if rows:
            matrix = np.stack(rows)
        else:
            matrix = np.zeros((0, embedder.dim), dtype=np.float32)
        return cls(ids, texts, matrix)

    def record(self, row: int) -> PassageRecord:
        return PassageRecord(
            passage_id=self.passage_ids[row],
            text=self.texts[row],
            embedding=self.matrix[row].astype(np.float64),
            source=PassageSource.KB,
        )

    def scores(self, query: np.ndarray) -> np.ndarray:
        """Inner product of every row with the query, in float64, chunked."""
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query dimension {q.shape} != index dimension ({self.dim},)")
        out = np.empty(len(self), dtype=np.float64)
        for start in range(0, len(self), _CHUNK_ROWS):
            stop = min(start + _CHUNK_ROWS, len(self))
            out[start:stop] = self.matrix[start:stop].astype(np.float64) @ q
        return out

    def query(self, query: np.ndarray, k: int) -> list[tuple[PassageRecord, float]]:
        if len(self) == 0 or k < 1:
            return []
        scores = self.scores(query)
        rows = _top_rows(scores, self._id_rank, k)
        return [(self.record(r), float(scores[r])) for r in rows]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "kb.bin", "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<I", self.dim))
            fh.write(struct.pack("<Q", len(self)))
            fh.write(self.matrix.astype("<f4").tobytes(order="C"))
        with open(directory / "passages.jsonl", "w", encoding="utf-8") as fh:
            for passage_id, text in zip(self.passage_ids, self.texts):
                fh.write(json.dumps({"passage_id": passage_id, "text": text}, sort_keys=True))
                fh.write("\n")

    @classmethod
    def load(cls, directory: str | Path) -> "KnowledgeBase":
        directory = Path(directory)
        with open(directory / "kb.bin", "rb") as fh:
            magic = fh.read(len(cls.MAGIC))
            if magic != cls.MAGIC:
                raise ValueError(f"bad KB magic {magic!r}")
            (dim,) = struct.unpack("<I", fh.read(4))
            (count,) = struct.unpack("<Q", fh.read(8))
            data = fh.read(count * dim * 4)
            matrix = np.frombuffer(data, dtype="<f4").reshape(count, dim).copy()
        ids: list[str] = []
        texts: list[str] = []
        with open(directory / "passages.jsonl", "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                ids.append(rec["passage_id"])
                texts.append(rec["text"])
        if len(ids) != count:
            raise ValueError(f"sidecar has {len(ids)} passages, header says {count}")
        return cls(ids, texts, matrix)


def _top_rows(scores: np.ndarray, id_rank: np.ndarray, k: int) -> list[int]:
    """Rows of the k best scores, ordered by (-score, id_rank); exact under ties."""
    n = scores.shape[0]
    if n <= k:
        candidates = np.arange(n)
    else:
        part = np.argpartition(-scores, k - 1)[:k]
        kth = scores[part].min()
        candidates = np.nonzero(scores >= kth)[0]
    order = np.lexsort((id_rank[candidates], -scores[candidates]))
    return [int(candidates[i]) for i in order[:k]]


class MemoryCache:
    """Bounded per-story passage pool with FIFO or LRU eviction.

    LRU recency is refreshed both by insertion and by retrieval hits
    (``touch``); FIFO ignores touches. Embeddings live in a slot matrix that
    grows geometrically and reuses evicted rows, so queries are one matrix
    product with no per-query restacking. Not thread-safe: one writer per
    story.
    """

    def __init__(self, capacity: int = 131072, policy: str = "lru"):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if policy not in ("lru", "fifo"):
            raise ValueError(f"unknown eviction policy '{policy}'")
        self.capacity = capacity
        self.policy = policy
        self._records: OrderedDict[str, PassageRecord] = OrderedDict()
        self._matrix: np.ndarray | None = None
        self._slot_of: dict[str, int] = {}
        self._pid_by_slot: list[str | None] = []
        self._used_slots = 0
        self._free_slots: list[int] = []

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._records

    def records(self) -> list[PassageRecord]:
        return list(self._records.values())

    def passage_ids(self) -> list[str]:
        return list(self._records.keys())

    def clone(self) -> "MemoryCache":
        other = MemoryCache(capacity=self.capacity, policy=self.policy)
        other._records = OrderedDict(self._records)
        other._matrix = None if self._matrix is None else self._matrix.copy()
        other._slot_of = dict(self._slot_of)
        other._pid_by_slot = list(self._pid_by_slot)
        other._used_slots = self._used_slots
        other._free_slots = list(self._free_slots)
        return other

    def _assign_slot(self, record: PassageRecord) -> None:
        vec = np.asarray(record.embedding, dtype=np.float64)
        if self._matrix is None:
            rows = min(self.capacity, max(16, 1))
            self._matrix = np.zeros((rows, vec.shape[0]), dtype=np.float64)
        if vec.shape[0] != self._matrix.shape[1]:
            raise ValueError(
                f"embedding dimension {vec.shape[0]} != cache dimension {self._matrix.shape[1]}"
            )
        if self._free_slots:
            slot = self._free_slots.pop()
        else:
            slot = self._used_slots
            self._used_slots += 1
            self._pid_by_slot.append(None)
            if slot >= self._matrix.shape[0]:
                grown = np.zeros(
                    (min(self.capacity, self._matrix.shape[0] * 2), self._matrix.shape[1]),
                    dtype=np.float64,
                )
                grown[: self._matrix.shape[0]] = self._matrix
                self._matrix = grown
        self._matrix[slot] = vec
        self._slot_of[record.passage_id] = slot
        self._pid_by_slot[slot] = record.passage_id

    def insert(self, record: PassageRecord) -> PassageRecord | None:
        """Add a passage; returns the evicted record when the pool was full."""
        if record.source is not PassageSource.MEMORY:
            raise ValueError("memory cache only holds MEMORY passages")
        if record.passage_id in self._records:
            self._records[record.passage_id] = record
            slot = self._slot_of[record.passage_id]
            self._matrix[slot] = np.asarray(record.embedding, dtype=np.float64)
            if self.policy == "lru":
                self._records.move_to_end(record.passage_id)
            return None
        evicted = None
        if len(self._records) >= self.capacity:
            _, evicted = self._records.popitem(last=False)
            slot = self._slot_of.pop(evicted.passage_id)
            self._matrix[slot] = 0.0
            self._pid_by_slot[slot] = None
            self._free_slots.append(slot)
        self._assign_slot(record)
        self._records[record.passage_id] = record
        return evicted

    def touch(self, passage_id: str) -> None:
        """Mark a retrieval hit; refreshes recency under LRU."""
        if self.policy == "lru" and passage_id in self._records:
            self._records.move_to_end(passage_id)

    def query(self, query: np.ndarray, k: int) -> list[tuple[PassageRecord, float]]:
        if not self._records or k < 1:
            return []
        scores = self._matrix[: self._used_slots] @ np.asarray(query, dtype=np.float64)
        if self._free_slots:
            scores = scores.copy()
            scores[self._free_slots] = -np.inf
        n = len(self._records)
        if n > k:
            # exact top-k: partition on score, tie-break only the boundary set
            kth = np.partition(-scores, k - 1)[:k].max()
            candidate_slots = np.nonzero(scores >= -kth)[0]
        else:
            candidate_slots = np.nonzero(np.isfinite(scores))[0]
        entries = [
            (self._records[self._pid_by_slot[slot]], float(scores[slot]))
            for slot in candidate_slots
        ]
        entries.sort(key=lambda pair: _sort_key(pair[0], pair[1]))
        return entries[:k]


def _candidate_pool(
    kb: KnowledgeBase | None, cache: MemoryCache | None, mode: RetrievalMode
) -> tuple[bool, bool]:
    use_kb = mode in (RetrievalMode.KB_AND_MEM, RetrievalMode.KB_ONLY, RetrievalMode.SCRAMBLED)
    use_mem = mode in (RetrievalMode.KB_AND_MEM, RetrievalMode.MEM_ONLY, RetrievalMode.SCRAMBLED)
    return use_kb and kb is not None and len(kb) > 0, use_mem and cache is not None and len(cache) > 0


def retrieve(
    query_embedding: np.ndarray,
    kb: KnowledgeBase | None,
    cache: MemoryCache | None,
    k: int,
    mode: RetrievalMode = RetrievalMode.KB_AND_MEM,
    rng: np.random.Generator | None = None,
) -> RetrievedSet:
    """Top-k passages from the enabled sources with softmax marginal weights.

    SCRAMBLED draws k uniform passages from the enabled sources (requires a
    seeded ``rng``) and keeps their true dot-product scores. Memory records
    returned from any mode count as retrieval hits for LRU bookkeeping,
    touched from weakest to strongest so the best hit ends most recent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode is RetrievalMode.OFF:
        return EMPTY_RETRIEVAL
    use_kb, use_mem = _candidate_pool(kb, cache, mode)
    if not use_kb and not use_mem:
        return EMPTY_RETRIEVAL

    scored: list[tuple[PassageRecord, float]]
    if mode is RetrievalMode.SCRAMBLED:
        if rng is None:
            raise ValueError("scrambled retrieval requires a seeded rng")
        kb_count = len(kb) if use_kb else 0
        # index memory by memory_id, not recency, so seeded draws are stable
        mem_records = sorted(cache.records(), key=lambda r: r.memory_id) if use_mem else []
        total = kb_count + len(mem_records)
        take = min(k, total)
        picks = rng.choice(total, size=take, replace=False)
        q = np.asarray(query_embedding, dtype=np.float64)
        scored = []
        for pick in sorted(int(p) for p in picks):
            if pick < kb_count:
                record = kb.record(pick)
            else:
                record = mem_records[pick - kb_count]
            score = float(np.asarray(record.embedding, dtype=np.float64) @ q)
            scored.append((record, score))
        scored.sort(key=lambda pair: _sort_key(pair[0], pair[1]))
    else:
        candidates: list[tuple[PassageRecord, float]] = []
        if use_kb:
            candidates.extend(kb.query(query_embedding, k))
        if use_mem:
            candidates.extend(cache.query(query_embedding, k))
        candidates.sort(key=lambda pair: _sort_key(pair[0], pair[1]))
        scored = candidates[:k]

    if not scored:
        return EMPTY_RETRIEVAL
    weights = marginal_weights([score for _, score in scored])
    items = tuple(
        RetrievedItem(record=record, score=score, weight=weight)
        for (record, score), weight in zip(scored, weights)
    )
    if cache is not None:
        for item in reversed(items):
            if item.record.source is PassageSource.MEMORY:
                cache.touch(item.record.passage_id)
    return RetrievedSet(items=items)
