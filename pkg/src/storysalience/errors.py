"""Exception and warning types shared across the package."""


class EmptyStoryError(ValueError):
    """Raised when ingestion produces no sentences."""


class EmptyCorpusError(ValueError):
    """Raised when a scorer is built from a corpus with no tokens."""


class EmptyScoresError(ValueError):
    """Raised when marginal weights are requested for an empty score list."""


class DuplicatePassageError(ValueError):
    """Raised when a knowledgebase is built with repeated passage ids."""


class ShapeError(ValueError):
    """Raised when paired inputs disagree in length or matrix shape."""


class ScorerUnavailableError(RuntimeError):
    """Raised when a scorer backend cannot produce a response."""


class ProtocolError(RuntimeError):
    """Raised when a scorer wire response is malformed; names the bad field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"malformed scorer response field '{field}'"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class TruncationWarning(UserWarning):
    """Emitted when a scorer truncated an over-length request but answered."""
