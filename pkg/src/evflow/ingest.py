"""Frame ingestion: scan a directory of pre-extracted frames and sample
them down to the frame budget.

Videos arrive as directories of zero-padded image files; actual video
decoding is an external extraction step (see README). The loader is
read-only and its output immutable.
"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, EmptyDirectory, InvalidConfig
from .types import Frame, FrameSequence, Raster

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class FrameManifest:
    directory: str
    files: tuple[str, ...]
    total_source_frames: int


def scan_directory(directory: str) -> FrameManifest:
    """List the frame files in lexicographic order (zero-padded names sort
    numerically)."""
    try:
        names = os.listdir(directory)
    except OSError as exc:
        raise EmptyDirectory(f"cannot list {directory}: {exc}") from exc
    files = sorted(n for n in names if n.lower().endswith(IMAGE_SUFFIXES))
    if not files:
        raise EmptyDirectory(f"no image files in {directory}")
    return FrameManifest(directory=directory, files=tuple(files), total_source_frames=len(files))


def sample_positions(n: int, budget: int) -> list[int]:
    """Uniform sampling positions: all of 0..n-1 when n <= budget, else
    floor(i*n/budget) for i in 0..budget-1."""
    if n <= budget:
        return list(range(n))
    return [i * n // budget for i in range(budget)]


def _decode(path: str) -> Raster:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return Raster.from_array(np.asarray(rgb, dtype=np.uint8))
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(path, str(exc)) from exc


def _read_meta(directory: str) -> dict:
    path = os.path.join(directory, "meta.json")
    if not os.path.isfile(path):
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        logger.warning("ignoring unreadable meta.json in %s: %s", directory, exc)
        return {}
    return meta if isinstance(meta, dict) else {}


def load_frames(directory: str, budget: int) -> FrameSequence:
    """Load at most `budget` frames, uniformly spaced over the source.

    Frame.index keeps the source ordinal so traces refer to the original
    frame numbering, not the sampled one.
    """
    if budget < 1:
        raise InvalidConfig("frame_budget", f"must be >= 1, got {budget}")
    manifest = scan_directory(directory)
    positions = sample_positions(manifest.total_source_frames, budget)
    frames = tuple(
        Frame(index=pos, raster=_decode(os.path.join(directory, manifest.files[pos])))
        for pos in positions
    )
    return FrameSequence(frames=frames, source_id=directory, meta=_read_meta(directory))
