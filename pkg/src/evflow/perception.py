"""Active evidence retrieval: temporal scouting then spatial focusing.

For one sub-query this module scores every sampled frame against the
visual phrase, smooths the score curve, picks top-K non-overlapping
windows, takes each window's raw-score peak as a keyframe, tiles the
keyframes into grid patches plus a global view, and returns the single
best-matching crop as evidence.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .config import PipelineConfig
from .errors import AllCandidatesExhausted, EvflowError, InvalidKernel
from .gateway import cosine_similarity
from .ingest import sample_positions
from .types import FrameSequence, Raster, SubQuery

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def to_dict(self) -> dict[str, int]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class PatchRef:
    """One candidate region: the full-frame Global view or a grid cell."""

    kind: str
    rect: Rect
    row: int | None = None
    col: int | None = None
    score: float | None = None

    def __post_init__(self):
        if self.kind not in ("Global", "GridCell"):
            raise EvflowError(f"unknown patch kind {self.kind!r}")
        if self.kind == "GridCell" and (self.row is None or self.col is None):
            raise EvflowError("grid cell patch needs row and col")

    @property
    def label(self) -> str:
        if self.kind == "Global":
            return "Global"
        return f"GridCell({self.row},{self.col})"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "rect": self.rect.to_dict()}
        if self.kind == "GridCell":
            out["row"] = self.row
            out["col"] = self.col
        if self.score is not None:
            out["score"] = self.score
        return out


@dataclass(frozen=True)
class TemporalWindow:
    """Inclusive [start, end] positions in the sampled sequence."""

    start: int
    end: int
    score: float
    peak: int

    def __post_init__(self):
        if not 0 <= self.start <= self.peak <= self.end:
            raise EvflowError(f"window positions out of order: {self}")

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "score": self.score, "peak": self.peak}


@dataclass(frozen=True)
class Evidence:
    """The selected crop for one sub-query attempt, with provenance."""

    subquery_id: str
    frame_position: int
    frame_index: int
    patch: PatchRef
    crop: Raster
    similarity: float
    exhausted_candidates: frozenset[tuple[int, str]] = frozenset()

    def __post_init__(self):
        if self.patch.score is None or abs(self.patch.score - self.similarity) > 1e-12:
            raise EvflowError("evidence similarity must equal its patch score")
        if (self.crop.width, self.crop.height) != (self.patch.rect.w, self.patch.rect.h):
            raise EvflowError("evidence crop dimensions must match the patch rect")


def _check_kernel(k: int):
    if not isinstance(k, int) or isinstance(k, bool) or k < 1 or k % 2 == 0:
        raise InvalidKernel(f"kernel must be an odd integer >= 1, got {k!r}")


def score_frames(frames: FrameSequence, q_vis: str, embedder) -> list[float]:
    """Cosine similarity of every sampled frame against the visual phrase."""
    query = embedder.embed_text(q_vis)
    return [cosine_similarity(embedder.embed_image(f.raster), query) for f in frames]


def smooth_scores(scores, k: int) -> list[float]:
    """Centered moving average with truncated boundaries; k=1 is identity."""
    _check_kernel(k)
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise EvflowError("scores must be a non-empty 1-d sequence")
    n = s.size
    h = (k - 1) // 2
    prefix = np.concatenate(([0.0], np.cumsum(s)))
    t = np.arange(n)
    lo = np.maximum(0, t - h)
    hi = np.minimum(n - 1, t + h)
    out = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1)
    return out.tolist()


def _window_at(center: int, n: int, k: int) -> tuple[int, int]:
    """The length-min(k,n) window containing `center`, shifted (not
    truncated) when it would cross a boundary."""
    h = (k - 1) // 2
    lo = center - h
    hi = lo + k - 1
    if lo < 0:
        lo, hi = 0, min(n - 1, k - 1)
    if hi > n - 1:
        hi = n - 1
        lo = max(0, hi - k + 1)
    return lo, hi


def select_windows(smoothed, top_k: int, k: int, raw=None) -> list[TemporalWindow]:
    """Greedy top-K window selection with interval suppression.

    Repeatedly take the highest remaining smoothed value (ties break to
    the smaller index), fix its window, then suppress every position
    whose own window would intersect it, so results are pairwise
    disjoint. Fewer than top_k windows come back when positions run out.
    `raw`, when given, supplies the scores used for the in-window peak.
    """
    _check_kernel(k)
    if top_k < 1:
        raise EvflowError(f"top_k must be >= 1, got {top_k}")
    s = np.asarray(smoothed, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise EvflowError("smoothed scores must be a non-empty 1-d sequence")
    r = s if raw is None else np.asarray(raw, dtype=np.float64)
    if r.shape != s.shape:
        raise EvflowError("raw scores must match smoothed length")

    n = s.size
    available = np.ones(n, dtype=bool)
    windows: list[TemporalWindow] = []
    while len(windows) < top_k and available.any():
        masked = np.where(available, s, -np.inf)
        center = int(np.argmax(masked))
        lo, hi = _window_at(center, n, k)
        peak = lo + int(np.argmax(r[lo : hi + 1]))
        windows.append(
            TemporalWindow(start=lo, end=hi, score=float(np.mean(s[lo : hi + 1])), peak=peak)
        )
        for p in np.flatnonzero(available):
            plo, phi = _window_at(int(p), n, k)
            if plo <= hi and phi >= lo:
                available[p] = False
    return windows


def build_patch_set(frame: Raster, n_grid: int) -> list[tuple[PatchRef, Raster | None]]:
    """Global view plus the N x N grid cells, N*N + 1 entries.

    Cell boundaries are floor(c*W/N); the last row/column absorbs any
    remainder so the cells tile the frame exactly. Cells that collapse
    to zero width/height (N larger than the frame) keep their PatchRef
    but carry no raster and cannot be scored.
    """
    if n_grid < 1:
        raise EvflowError(f"grid size must be >= 1, got {n_grid}")
    xs = [c * frame.width // n_grid for c in range(n_grid + 1)]
    ys = [r * frame.height // n_grid for r in range(n_grid + 1)]
    full = Rect(x=0, y=0, w=frame.width, h=frame.height)
    patches: list[tuple[PatchRef, Raster | None]] = [
        (PatchRef(kind="Global", rect=full), frame)
    ]
    for row in range(n_grid):
        for col in range(n_grid):
            rect = Rect(x=xs[col], y=ys[row], w=xs[col + 1] - xs[col], h=ys[row + 1] - ys[row])
            ref = PatchRef(kind="GridCell", rect=rect, row=row, col=col)
            crop = frame.crop(rect.x, rect.y, rect.w, rect.h) if rect.w > 0 and rect.h > 0 else None
            patches.append((ref, crop))
    return patches


def select_evidence_patch(
    candidates,
    q_vis: str,
    embedder,
    exhausted: frozenset[tuple[int, str]],
    subquery_id: str,
    tracer=None,
) -> Evidence:
    """Joint argmax over every scorable (keyframe, patch) pair.

    `candidates` is a list of (frame_position, frame_index, patches)
    triples, patches as returned by build_patch_set. Ties break to the
    earlier frame, then Global before grid cells in row-major order,
    which is the iteration order here; strict > keeps the first winner.
    """
    query = embedder.embed_text(q_vis)
    best = None
    scored = []
    for frame_position, frame_index, patches in candidates:
        for ref, crop in patches:
            if crop is None or (frame_position, ref.label) in exhausted:
                continue
            sim = cosine_similarity(embedder.embed_image(crop), query)
            scored.append(
                {"frame_position": frame_position, "patch": ref.label, "score": sim}
            )
            if best is None or sim > best[0]:
                best = (sim, frame_position, frame_index, ref, crop)
    if tracer is not None:
        tracer.emit("scout.patch_scores", {"subquery_id": subquery_id, "scores": scored})
    if best is None:
        raise AllCandidatesExhausted(f"no un-tried patches left for {subquery_id}")
    sim, frame_position, frame_index, ref, crop = best
    return Evidence(
        subquery_id=subquery_id,
        frame_position=frame_position,
        frame_index=frame_index,
        patch=replace(ref, score=sim),
        crop=crop,
        similarity=sim,
        exhausted_candidates=frozenset(exhausted | {(frame_position, ref.label)}),
    )


def scout(
    frames: FrameSequence,
    sq: SubQuery,
    cfg: PipelineConfig,
    embedder,
    exhausted: frozenset[tuple[int, str]] = frozenset(),
    tracer=None,
) -> Evidence:
    """Full retrieval pass for one sub-query: temporal scouting, then
    grid-pyramid focusing over the window peaks."""
    scores = score_frames(frames, sq.q_vis, embedder)
    if tracer is not None:
        tracer.emit("scout.scores", {"subquery_id": sq.id, "scores": scores})
    smoothed = smooth_scores(scores, cfg.smooth_kernel)

    if "no_temporal" in cfg.ablations:
        positions = sample_positions(len(frames), cfg.top_k)
        windows = [
            TemporalWindow(start=p, end=p, score=smoothed[p], peak=p) for p in positions
        ]
        mode = "uniform"
    else:
        windows = select_windows(smoothed, cfg.top_k, cfg.smooth_kernel, raw=scores)
        mode = "scouted"
    if tracer is not None:
        tracer.emit(
            "scout.windows",
            {"subquery_id": sq.id, "mode": mode, "windows": [w.to_dict() for w in windows]},
        )

    candidates = []
    for window in windows:
        frame = frames[window.peak]
        if "no_spatial" in cfg.ablations:
            full = Rect(x=0, y=0, w=frame.raster.width, h=frame.raster.height)
            patches = [(PatchRef(kind="Global", rect=full), frame.raster)]
        else:
            patches = build_patch_set(frame.raster, cfg.grid_n)
        candidates.append((window.peak, frame.index, patches))

    evidence = select_evidence_patch(candidates, sq.q_vis, embedder, exhausted, sq.id, tracer)
    if tracer is not None:
        tracer.emit(
            "scout.selected",
            {
                "subquery_id": sq.id,
                "frame_position": evidence.frame_position,
                "frame_index": evidence.frame_index,
                "patch": evidence.patch.to_dict(),
                "similarity": evidence.similarity,
            },
        )
    return evidence
