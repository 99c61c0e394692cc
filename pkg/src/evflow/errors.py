"""Exception hierarchy shared by all evflow modules."""


class EvflowError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(EvflowError):
    """A configuration key violates its constraints."""

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"invalid config value for {key!r}: {reason}")


class ConfigConflict(EvflowError):
    """Two configuration settings cannot be combined."""


class TransportError(EvflowError):
    """The HTTP request could not complete (timeout, connection failure)."""


class ProtocolError(EvflowError):
    """A request or response does not follow the wire contract."""


class ModelError(EvflowError):
    """The backend answered with an HTTP error status."""

    def __init__(self, status: int, body: str = ""):
        self.status = status
        self.body = body
        super().__init__(f"model backend returned HTTP {status}: {body[:200]}")


class DimensionMismatch(EvflowError):
    """Embedding vectors of different sizes were mixed in one session."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")


class ZeroVector(EvflowError):
    """Cosine similarity is undefined for a zero-norm vector."""


class EmptyDirectory(EvflowError):
    """A frame directory contains no decodable images."""


class DecodeError(EvflowError):
    """An image file could not be decoded."""

    def __init__(self, path: str, reason: str = ""):
        self.path = path
        super().__init__(f"cannot decode {path}: {reason}" if reason else f"cannot decode {path}")


class PlanParseError(EvflowError):
    """No usable sub-query JSON could be recovered from the model reply."""

    def __init__(self, raw_text: str, reason: str = "no JSON recoverable"):
        self.raw_text = raw_text
        super().__init__(f"{reason}; reply started with: {raw_text[:120]!r}")


class EmptyPlan(EvflowError):
    """The model reply parsed to an empty sub-query list."""


class RefinementBudgetExhausted(EvflowError):
    """A sub-query has already used all of its refinement attempts."""


class InvalidKernel(EvflowError):
    """Temporal smoothing requires an odd, positive kernel size."""


class AllCandidatesExhausted(EvflowError):
    """Every (frame, patch) candidate has already been tried for this lineage."""


class ArbitrationParseError(EvflowError):
    """No arbitration JSON could be recovered from the model reply."""

    def __init__(self, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"unparseable arbitration reply: {raw_text[:120]!r}")


class ManifestError(EvflowError):
    """A task manifest file is malformed."""


class TraceError(EvflowError):
    """A trace file could not be read back."""


class UsageError(EvflowError):
    """Bad command-line invocation."""
