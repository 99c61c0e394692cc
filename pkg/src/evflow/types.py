"""Core domain types: rasters, frame sequences, sub-queries, embeddings.

Everything here is immutable after construction and safe to share across
concurrent tasks.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvflowError

CHANNELS = 3  # fixed RGB, 8-bit


@dataclass(frozen=True)
class Raster:
    """A row-major RGB8 image buffer.

    `data` holds exactly width * height * 3 bytes. Grayscale or alpha
    sources must be converted before construction; there is only one
    pixel model in the pipeline.
    """

    width: int
    height: int
    data: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise EvflowError(f"raster dimensions must be >= 1, got {self.width}x{self.height}")
        expected = self.width * self.height * CHANNELS
        if len(self.data) != expected:
            raise EvflowError(
                f"raster buffer length {len(self.data)} != {expected} "
                f"for {self.width}x{self.height} RGB"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Raster":
        """Build from an (H, W, 3) uint8 array."""
        if arr.ndim != 3 or arr.shape[2] != CHANNELS:
            raise EvflowError(f"expected (H, W, 3) array, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr.tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, CHANNELS)

    def crop(self, x: int, y: int, w: int, h: int) -> "Raster":
        """Extract the [x, x+w) x [y, y+h) pixel rectangle."""
        if x < 0 or y < 0 or w < 1 or h < 1 or x + w > self.width or y + h > self.height:
            raise EvflowError(
                f"crop rect ({x},{y},{w},{h}) outside {self.width}x{self.height} frame"
            )
        return Raster.from_array(self.to_array()[y : y + h, x : x + w])

    @property
    def digest(self) -> str:
        """Stable content key used by scripted embedding tables."""
        head = f"{self.width}x{self.height}:".encode()
        return hashlib.sha256(head + self.data).hexdigest()


@dataclass(frozen=True)
class Frame:
    """One decoded frame plus its ordinal in the source video."""

    index: int
    raster: Raster


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames of one video after budget sampling."""

    frames: tuple[Frame, ...]
    source_id: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.frames:
            raise EvflowError("frame sequence must contain at least one frame")
        indices = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise EvflowError(f"frame indices must be strictly increasing, got {indices}")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, position: int) -> Frame:
        return self.frames[position]

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for f in self.frames:
            h.update(f"{f.index}:{f.raster.digest};".encode())
        return h.hexdigest()


@dataclass(frozen=True)
class SubQuery:
    """A verifiable hypothesis: a logical question plus a visual matching phrase.

    generation 0 is an original plan entry; each refinement bumps the
    generation and records its parent.
    """

    id: str
    q_text: str
    q_vis: str
    generation: int = 0
    parent_id: str | None = None

    def __post_init__(self):
        if not self.q_text.strip():
            raise EvflowError(f"sub-query {self.id}: q_text empty")
        if not self.q_vis.strip():
            raise EvflowError(f"sub-query {self.id}: q_vis empty")
        if self.generation < 0:
            raise EvflowError(f"sub-query {self.id}: negative generation")
        if self.generation > 0 and not self.parent_id:
            raise EvflowError(f"sub-query {self.id}: refinement without parent_id")


@dataclass(frozen=True)
class ReasoningPlan:
    """The ordered sub-queries produced for one question."""

    subqueries: tuple[SubQuery, ...]
    original_question: str

    def __post_init__(self):
        if not self.subqueries:
            raise EvflowError("plan must contain at least one sub-query")
        if any(sq.generation != 0 for sq in self.subqueries):
            raise EvflowError("freshly planned sub-queries must have generation 0")

    def __len__(self) -> int:
        return len(self.subqueries)

    def __iter__(self):
        return iter(self.subqueries)


NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbeddingVector:
    """A finite real vector, optionally L2-normalized."""

    values: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self):
        if not self.values:
            raise EvflowError("embedding vector must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise EvflowError("embedding vector contains non-finite values")
        if self.normalized:
            norm = math.sqrt(sum(v * v for v in self.values))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise EvflowError(f"vector flagged normalized but has L2 norm {norm}")

    @property
    def dims(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def normalize(self) -> "EmbeddingVector":
        """Return the unit-norm version of this vector."""
        from .errors import ZeroVector

        arr = self.as_array()
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ZeroVector("cannot normalize a zero vector")
        return EmbeddingVector(values=tuple((arr / norm).tolist()), normalized=True)
