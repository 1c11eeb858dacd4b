"""Unsupervised narrative event-salience scoring.

Scores every sentence of a story by how much deleting it (or swapping it, or
removing retrieved knowledge) degrades a retrieval-augmented language
model's prediction of the following text, builds silver salience labels by
aligning expert summaries to the full text, and evaluates measures against
those labels.
"""

from .alignment import AlignmentConfig, SilverLabelSet, align_chapter, label_corpus
from .baselines import ClusterConfig, PositionalKind, cluster_salience, positional_baseline
from .config import RunConfig
from .corpus import (
    Block,
    Chapter,
    Sentence,
    Story,
    WindowSpec,
    count_tokens,
    ingest,
    make_blocks,
    split_sentences,
)
from .embeddings import HashedBowEmbedder, cosine_distance, cosine_similarity
from .evaluation import average_precision, evaluate, recall_at_k, rouge_l
from .remote import RemoteScorer
from .retrieval import (
    KnowledgeBase,
    MemoryCache,
    PassageRecord,
    PassageSource,
    RetrievalMode,
    RetrievedSet,
    marginal_weights,
    retrieve,
)
from .salience import (
    MeasureId,
    SalienceProfile,
    SalienceSettings,
    combine_like_clus,
    deletion_salience,
    ely_surprise,
    embedding_salience,
    knowledge_salience,
    profile_chapter,
    sentiment_adjust,
    swap_salience,
)
from .scoring import (
    CoherenceResult,
    ReferenceScorer,
    ScoreRequest,
    ScoreResponse,
    UniformScorer,
    coherence,
    marginalize,
    perplexity,
)

__version__ = "0.1.0"
