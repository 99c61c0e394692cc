import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evflow.config import PipelineConfig
from evflow.errors import AllCandidatesExhausted, EvflowError, InvalidKernel
from evflow.gateway import ScriptedEmbedder
from evflow.perception import (
    Evidence,
    PatchRef,
    Rect,
    TemporalWindow,
    build_patch_set,
    scout,
    select_evidence_patch,
    select_windows,
    smooth_scores,
)
from evflow.types import Frame, FrameSequence, Raster, SubQuery

scores_strategy = st.lists(st.floats(-1, 1), min_size=1, max_size=64)
kernel_strategy = st.integers(0, 5).map(lambda i: 2 * i + 1)


def brute_force_smooth(scores, k):
    h = (k - 1) // 2
    out = []
    for t in range(len(scores)):
        lo, hi = max(0, t - h), min(len(scores) - 1, t + h)
        out.append(sum(scores[lo : hi + 1]) / (hi - lo + 1))
    return out


class TestSmoothScores:
    def test_worked_example(self):
        got = smooth_scores([0, 0, 1, 0, 0], k=3)
        assert got == pytest.approx([0, 1 / 3, 1 / 3, 1 / 3, 0])

    def test_k1_is_identity(self):
        scores = [0.3, -0.1, 0.9]
        assert smooth_scores(scores, k=1) == pytest.approx(scores)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidKernel):
            smooth_scores([1.0], k=2)

    def test_nonpositive_kernel_rejected(self):
        with pytest.raises(InvalidKernel):
            smooth_scores([1.0], k=-3)

    def test_empty_rejected(self):
        with pytest.raises(EvflowError):
            smooth_scores([], k=3)

    def test_kernel_wider_than_input(self):
        # every window truncates to the whole sequence
        got = smooth_scores([1.0, 3.0], k=9)
        assert got == pytest.approx([2.0, 2.0])

    @given(scores_strategy, kernel_strategy)
    def test_matches_brute_force(self, scores, k):
        assert smooth_scores(scores, k) == pytest.approx(
            brute_force_smooth(scores, k), abs=1e-12
        )

    @given(scores_strategy, kernel_strategy)
    def test_preserves_constant_sequences(self, scores, k):
        const = [0.25] * len(scores)
        assert smooth_scores(const, k) == pytest.approx(const)


def windows_disjoint(windows):
    spans = sorted((w.start, w.end) for w in windows)
    return all(a[1] < b[0] for a, b in zip(spans, spans[1:]))


class TestSelectWindows:
    def test_worked_example_two_peaks(self):
        raw = [0.1, 0.9, 0.8, 0.2, 0.7, 0.75, 0.1, 0.05]
        got = select_windows(raw, top_k=2, k=3, raw=raw)
        assert [(w.start, w.end) for w in got] == [(0, 2), (4, 6)]

    def test_constant_scores_take_leftmost(self):
        got = select_windows([0.5] * 9, top_k=1, k=3)
        assert [(w.start, w.end) for w in got] == [(0, 2)]

    def test_short_sequence_single_window(self):
        got = select_windows([0.2, 0.4], top_k=3, k=5)
        assert [(w.start, w.end) for w in got] == [(0, 1)]
        assert len(got) == 1

    def test_peak_is_raw_argmax_inside_window(self):
        raw = [0.0, 1.0, 0.0, 0.0, 0.0]
        smoothed = smooth_scores(raw, 3)
        got = select_windows(smoothed, top_k=1, k=3, raw=raw)
        assert got[0].peak == 1

    def test_window_score_is_smoothed_mean(self):
        smoothed = [0.2, 0.4, 0.6, 0.1]
        got = select_windows(smoothed, top_k=1, k=3)
        lo, hi = got[0].start, got[0].end
        assert got[0].score == pytest.approx(
            float(np.mean(smoothed[lo : hi + 1]))
        )

    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=48),
        st.integers(1, 5),
        kernel_strategy,
    )
    @settings(max_examples=200)
    def test_invariants(self, scores, top_k, k):
        windows = select_windows(scores, top_k=top_k, k=k, raw=scores)
        n = len(scores)
        assert 1 <= len(windows) <= top_k
        assert windows_disjoint(windows)
        for w in windows:
            assert 0 <= w.start <= w.peak <= w.end < n
            assert w.end - w.start + 1 == min(k, n)


class TestBuildPatchSet:
    def test_even_tiling(self):
        frame = Raster(width=300, height=300, data=b"\x00" * (300 * 300 * 3))
        patches = build_patch_set(frame, 3)
        assert len(patches) == 10
        assert patches[0][0].kind == "Global"
        center = patches[1 + 3 * 1 + 1][0]  # row 1, col 1
        assert (center.rect.x, center.rect.y, center.rect.w, center.rect.h) == (
            100,
            100,
            100,
            100,
        )

    def test_remainder_goes_to_last_cells(self):
        frame = Raster(width=301, height=301, data=b"\x00" * (301 * 301 * 3))
        patches = build_patch_set(frame, 3)
        last = patches[-1][0]
        assert last.rect.w == 101 and last.rect.h == 101
        first = patches[1][0]
        assert first.rect.w == 100 and first.rect.h == 100

    def test_global_first_then_row_major(self):
        frame = Raster(width=6, height=6, data=b"\x00" * (6 * 6 * 3))
        patches = build_patch_set(frame, 2)
        labels = [ref.label for ref, _ in patches]
        assert labels == [
            "Global",
            "GridCell(0,0)",
            "GridCell(0,1)",
            "GridCell(1,0)",
            "GridCell(1,1)",
        ]

    def test_oversized_grid_yields_unscorable_cells(self):
        frame = Raster(width=2, height=2, data=b"\x00" * 12)
        patches = build_patch_set(frame, 3)
        assert len(patches) == 10
        rasterless = [ref for ref, crop in patches if crop is None]
        assert rasterless  # some cells collapsed
        # scorable crops still tile the frame
        area = sum(
            ref.rect.w * ref.rect.h for ref, crop in patches[1:] if crop is not None
        )
        assert area == 4

    @given(st.integers(3, 64), st.integers(3, 64), st.integers(1, 6))
    @settings(max_examples=100)
    def test_cells_tile_exactly(self, w, h, n):
        frame = Raster(width=w, height=h, data=b"\x00" * (w * h * 3))
        patches = build_patch_set(frame, n)
        assert len(patches) == n * n + 1
        cells = [ref.rect for ref, _ in patches[1:]]
        assert sum(r.w * r.h for r in cells) == w * h
        covered = np.zeros((h, w), dtype=int)
        for r in cells:
            covered[r.y : r.y + r.h, r.x : r.x + r.w] += 1
        assert covered.min() == 1 and covered.max() == 1


def frame_of(color, w=6, h=6):
    return Raster(width=w, height=h, data=bytes(color) * (w * h))


def make_sequence(colors):
    frames = tuple(
        Frame(index=i, raster=frame_of(c)) for i, c in enumerate(colors)
    )
    return FrameSequence(frames=frames, source_id="test")


class TestSelectEvidencePatch:
    def embedder_for(self, table, default=(0.0, 1.0)):
        return ScriptedEmbedder(table=table, default=default)

    def test_joint_argmax_across_frames(self):
        f0 = frame_of((1, 1, 1))
        f1 = frame_of((2, 2, 2))
        table = {"q": (1.0, 0.0), f1.digest: (1.0, 0.0)}
        candidates = [
            (0, 0, build_patch_set(f0, 1)),
            (1, 1, build_patch_set(f1, 1)),
        ]
        ev = select_evidence_patch(
            candidates, "q", self.embedder_for(table), frozenset(), "sq1"
        )
        assert ev.frame_position == 1
        assert ev.similarity == pytest.approx(1.0)
        assert ev.patch.score == pytest.approx(1.0)

    def test_tie_breaks_to_earlier_frame_and_global(self):
        f0, f1 = frame_of((1, 1, 1)), frame_of((2, 2, 2))
        # every patch scores the same
        table = {"q": (0.0, 1.0)}
        candidates = [
            (0, 0, build_patch_set(f0, 2)),
            (1, 1, build_patch_set(f1, 2)),
        ]
        ev = select_evidence_patch(
            candidates, "q", self.embedder_for(table), frozenset(), "sq1"
        )
        assert ev.frame_position == 0
        assert ev.patch.kind == "Global"

    def test_exhausted_pairs_skipped(self):
        f0 = frame_of((1, 1, 1))
        candidates = [(0, 0, build_patch_set(f0, 1))]
        exhausted = frozenset({(0, "Global")})
        table = {"q": (0.0, 1.0), f0.digest: (0.0, 1.0)}
        embedder = self.embedder_for(table)
        ev = select_evidence_patch(candidates, "q", embedder, exhausted, "sq1")
        # only the grid cell remains (N=1 grid cell == full frame)
        assert ev.patch.kind == "GridCell"

    def test_everything_exhausted_raises(self):
        f0 = frame_of((1, 1, 1))
        candidates = [(0, 0, build_patch_set(f0, 1))]
        exhausted = frozenset({(0, "Global"), (0, "GridCell(0,0)")})
        with pytest.raises(AllCandidatesExhausted):
            select_evidence_patch(
                candidates, "q", self.embedder_for({"q": (0.0, 1.0)}), exhausted, "sq1"
            )

    def test_winner_recorded_as_exhausted(self):
        f0 = frame_of((1, 1, 1))
        candidates = [(0, 0, build_patch_set(f0, 1))]
        ev = select_evidence_patch(
            candidates, "q", self.embedder_for({"q": (0.0, 1.0)}), frozenset(), "sq1"
        )
        assert (0, ev.patch.label) in ev.exhausted_candidates


class TestScout:
    def test_picks_planted_frame(self, default_cfg):
        colors = [(i, 0, 0) for i in range(8)]
        seq = make_sequence(colors)
        target = seq[5].raster
        table = {"q": (1.0, 0.0), target.digest: (1.0, 0.0)}
        # every crop of the target also matches
        for ref, crop in build_patch_set(target, default_cfg.grid_n):
            if crop is not None:
                table[crop.digest] = (1.0, 0.0)
        embedder = ScriptedEmbedder(table=table, default=(0.0, 1.0))
        sq = SubQuery(id="sq1", q_text="t", q_vis="q")
        ev = scout(seq, sq, default_cfg, embedder)
        assert ev.frame_position == 5
        assert ev.similarity == pytest.approx(1.0)

    def test_no_spatial_scores_global_only(self, default_cfg):
        cfg = dataclasses.replace(default_cfg, ablations=frozenset({"no_spatial"}))
        seq = make_sequence([(i, 0, 0) for i in range(6)])
        embedder = ScriptedEmbedder(table={"q": (0.0, 1.0)}, default=(0.0, 1.0))
        sq = SubQuery(id="sq1", q_text="t", q_vis="q")
        ev = scout(seq, sq, cfg, embedder)
        assert ev.patch.kind == "Global"
        # 6 frame embeds + 1 patch embed per window peak
        assert embedder.image_calls == 6 + 1

    def test_no_temporal_uses_uniform_positions(self, default_cfg):
        cfg = dataclasses.replace(default_cfg, ablations=frozenset({"no_temporal"}))
        seq = make_sequence([(i, 0, 0) for i in range(30)])
        embedder = ScriptedEmbedder(table={"q": (0.0, 1.0)}, default=(0.0, 1.0))
        sq = SubQuery(id="sq1", q_text="t", q_vis="q")
        from evflow.trace import TraceRecorder

        tracer = TraceRecorder()
        scout(seq, sq, cfg, embedder, tracer=tracer)
        windows_event = next(e for e in tracer.events if e.stage == "scout.windows")
        assert windows_event.payload["mode"] == "uniform"
        peaks = [w["peak"] for w in windows_event.payload["windows"]]
        assert peaks == [0, 10, 20]
