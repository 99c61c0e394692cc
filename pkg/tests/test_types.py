import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evflow.errors import EvflowError, ZeroVector
from evflow.types import EmbeddingVector, Frame, FrameSequence, Raster, ReasoningPlan, SubQuery


def solid(w, h, rgb=(10, 20, 30)):
    return Raster(width=w, height=h, data=bytes(rgb) * (w * h))


class TestRaster:
    def test_buffer_length_must_match_dims(self):
        with pytest.raises(EvflowError):
            Raster(width=2, height=2, data=b"\x00" * 11)

    def test_rejects_zero_dims(self):
        with pytest.raises(EvflowError):
            Raster(width=0, height=1, data=b"")

    def test_array_round_trip(self):
        arr = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(3, 2, 3)
        r = Raster.from_array(arr)
        assert r.width == 2 and r.height == 3
        assert np.array_equal(r.to_array(), arr)

    def test_crop_extracts_exact_region(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[1, 2] = [9, 9, 9]
        r = Raster.from_array(arr)
        c = r.crop(2, 1, 2, 2)
        assert (c.width, c.height) == (2, 2)
        assert c.to_array()[0, 0].tolist() == [9, 9, 9]

    def test_crop_out_of_bounds(self):
        with pytest.raises(EvflowError):
            solid(4, 4).crop(3, 0, 2, 2)

    def test_digest_differs_with_shape(self):
        # same bytes, different shape: digests must not collide
        a = Raster(width=2, height=3, data=b"\x01" * 18)
        b = Raster(width=3, height=2, data=b"\x01" * 18)
        assert a.digest != b.digest

    @given(st.integers(1, 8), st.integers(1, 8))
    def test_digest_stable(self, w, h):
        r = solid(w, h)
        assert r.digest == Raster(width=w, height=h, data=r.data).digest


class TestFrameSequence:
    def test_indices_strictly_increasing(self):
        frames = [Frame(index=i, raster=solid(2, 2)) for i in (0, 2, 2)]
        with pytest.raises(EvflowError):
            FrameSequence(frames=tuple(frames), source_id="x")

    def test_empty_rejected(self):
        with pytest.raises(EvflowError):
            FrameSequence(frames=(), source_id="x")

    def test_iteration_and_len(self):
        frames = tuple(Frame(index=i * 2, raster=solid(2, 2)) for i in range(3))
        seq = FrameSequence(frames=frames, source_id="clip")
        assert len(seq) == 3
        assert [f.index for f in seq] == [0, 2, 4]
        assert seq[1].index == 2


class TestSubQuery:
    def test_blank_text_rejected(self):
        with pytest.raises(EvflowError):
            SubQuery(id="sq1", q_text="  ", q_vis="car")

    def test_refined_needs_parent(self):
        with pytest.raises(EvflowError):
            SubQuery(id="sq1.r1", q_text="a", q_vis="b", generation=1)

    def test_plan_requires_fresh_subqueries(self):
        sq = SubQuery(id="sq1.r1", q_text="a", q_vis="b", generation=1, parent_id="sq1")
        with pytest.raises(EvflowError):
            ReasoningPlan(subqueries=(sq,), original_question="q")

    def test_empty_plan_rejected(self):
        with pytest.raises(EvflowError):
            ReasoningPlan(subqueries=(), original_question="q")


class TestEmbeddingVector:
    def test_normalize_unit_length(self):
        v = EmbeddingVector(values=(3.0, 4.0)).normalize()
        assert v.values == pytest.approx((0.6, 0.8))
        assert v.normalized

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVector):
            EmbeddingVector(values=(0.0, 0.0)).normalize()

    def test_non_finite_rejected(self):
        with pytest.raises(EvflowError):
            EmbeddingVector(values=(1.0, float("nan")))

    def test_normalized_flag_checked(self):
        with pytest.raises(EvflowError):
            EmbeddingVector(values=(3.0, 4.0), normalized=True)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=16))
    def test_normalize_idempotent(self, values):
        norm = math.sqrt(sum(v * v for v in values))
        if norm < 1e-9:
            return
        v = EmbeddingVector(values=tuple(values)).normalize()
        again = v.normalize()
        assert math.isclose(
            math.sqrt(sum(x * x for x in again.values)), 1.0, abs_tol=1e-9
        )
