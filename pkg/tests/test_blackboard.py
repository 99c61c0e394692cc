import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evflow.blackboard import (
    ArbitrationResult,
    Blackboard,
    Decision,
    apply_arbitration,
    arbitrate,
    classify_error,
)
from evflow.config import PipelineConfig
from evflow.errors import ArbitrationParseError, EvflowError
from evflow.gateway import ChatRule, ScriptedChat
from evflow.perception import Evidence, PatchRef, Rect
from evflow.planner import OBJECT_REPAIR_SENTENCE, ErrorType
from evflow.trace import TraceRecorder
from evflow.types import Raster, SubQuery

SQ = SubQuery(id="sq1", q_text="Is the door open?", q_vis="open door")


def evidence(similarity=0.8):
    crop = Raster(width=2, height=2, data=b"\x01" * 12)
    return Evidence(
        subquery_id="sq1",
        frame_position=3,
        frame_index=6,
        patch=PatchRef(kind="Global", rect=Rect(x=0, y=0, w=2, h=2), score=similarity),
        crop=crop,
        similarity=similarity,
        exhausted_candidates=frozenset({(3, "Global")}),
    )


def result(observation="the door is open", confidence=0.9, conflict=False, hint=None):
    return ArbitrationResult(
        observation=observation,
        confidence=confidence,
        conflict=conflict,
        raw_text="{}",
        error_hint=hint,
    )


class TestBlackboard:
    def test_starts_empty(self):
        board = Blackboard()
        assert board.facts == ()
        assert board.serialize() == "None yet."

    def test_with_fact_returns_new_board(self):
        board = Blackboard()
        board2, fact = board.with_fact("obs", "sq1", 4, "Global", 0.9)
        assert board.facts == ()
        assert [f.observation for f in board2.facts] == ["obs"]
        assert fact.step == 0

    def test_steps_monotone(self):
        board = Blackboard()
        board, a = board.with_fact("one", "sq1", 0, "Global", 0.9)
        board, b = board.with_fact("two", "sq2", 1, "Global", 0.8)
        assert (a.step, b.step) == (0, 1)

    def test_serialize_numbers_facts(self):
        board = Blackboard()
        board, _ = board.with_fact("first", "sq1", 0, "Global", 0.9)
        board, _ = board.with_fact("second", "sq2", 1, "Global", 0.8)
        assert board.serialize() == "1. first\n2. second"


class TestDecision:
    def test_exactly_one_payload(self):
        with pytest.raises(EvflowError):
            Decision(kind="accept")
        with pytest.raises(EvflowError):
            Decision(kind="drop", reason="x", fact=Blackboard().with_fact("o", "s", 0, "G", 1.0)[1])

    def test_unknown_kind(self):
        with pytest.raises(EvflowError):
            Decision(kind="maybe", reason="x")


class TestArbitrate:
    def reply(self, **kw):
        doc = {"observation": "door open", "confidence": 0.95, "conflict": False}
        doc.update(kw)
        return json.dumps(doc)

    def test_happy_path(self, default_cfg):
        chat = ScriptedChat(rules=[ChatRule(reply=self.reply(), repeat=True)])
        res = arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)
        assert res.observation == "door open"
        assert res.confidence == pytest.approx(0.95)
        assert res.conflict is False

    def test_conflict_as_int(self, default_cfg):
        chat = ScriptedChat(rules=[ChatRule(reply=self.reply(conflict=1), repeat=True)])
        res = arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)
        assert res.conflict is True

    def test_error_type_hint_parsed(self, default_cfg):
        chat = ScriptedChat(
            rules=[ChatRule(reply=self.reply(error_type="Temporal Mismatch"), repeat=True)]
        )
        res = arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)
        assert res.error_hint is ErrorType.TEMPORAL_MISMATCH

    def test_confidence_clamped_with_warning(self, default_cfg):
        chat = ScriptedChat(rules=[ChatRule(reply=self.reply(confidence=1.4), repeat=True)])
        tracer = TraceRecorder()
        res = arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg, tracer)
        assert res.confidence == 1.0
        kinds = [e.payload["kind"] for e in tracer.events if e.stage == "warning"]
        assert "confidence_clamped" in kinds

    def test_repair_then_success(self, default_cfg):
        chat = ScriptedChat(
            rules=[
                ChatRule(reply="hmm, let me think", at=0),
                ChatRule(reply=self.reply(), match=OBJECT_REPAIR_SENTENCE),
            ]
        )
        res = arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)
        assert res.observation == "door open"
        assert chat.calls == 2

    def test_two_failures_raise(self, default_cfg):
        chat = ScriptedChat(rules=[ChatRule(reply="nope", repeat=True)])
        with pytest.raises(ArbitrationParseError):
            arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)

    def test_board_rendered_into_prompt(self, default_cfg):
        board, _ = Blackboard().with_fact("a light is on", "sq0", 0, "Global", 0.9)
        chat = ScriptedChat(
            rules=[ChatRule(reply=self.reply(), match="1. a light is on", repeat=True)]
        )
        arbitrate(evidence(), SQ, board, chat, default_cfg)
        assert chat.calls == 1

    def test_boolean_confidence_rejected(self, default_cfg):
        chat = ScriptedChat(
            rules=[ChatRule(reply=json.dumps({"observation": "x", "confidence": True, "conflict": False}), repeat=True)]
        )
        with pytest.raises(ArbitrationParseError):
            arbitrate(evidence(), SQ, Blackboard(), chat, default_cfg)


class TestClassifyError:
    def test_hint_wins(self):
        res = result(conflict=True, hint=ErrorType.OBJECT_OCCLUSION)
        assert classify_error(res, evidence()) is ErrorType.OBJECT_OCCLUSION

    def test_conflict_contradicts(self):
        assert (
            classify_error(result(conflict=True), evidence())
            is ErrorType.CONTRADICTORY_EVIDENCE
        )

    def test_low_similarity_is_temporal(self):
        assert (
            classify_error(result(), evidence(similarity=0.1))
            is ErrorType.TEMPORAL_MISMATCH
        )

    @pytest.mark.parametrize(
        "obs",
        [
            "the object is occluded by a pole",
            "too blurry to tell",
            "the cat is hidden behind the couch",
            "view is blocked",
        ],
    )
    def test_occlusion_markers(self, obs):
        assert (
            classify_error(result(observation=obs), evidence())
            is ErrorType.OBJECT_OCCLUSION
        )

    def test_default_low_confidence(self):
        assert classify_error(result(), evidence()) is ErrorType.LOW_CONFIDENCE


class TestApplyArbitration:
    def test_accept_above_tau(self):
        board, decision = apply_arbitration(
            Blackboard(), result(confidence=0.9), evidence(), SQ, tau=0.7, budget_left=2
        )
        assert decision.kind == "accept"
        assert len(board.facts) == 1

    def test_boundary_accepts(self):
        _, decision = apply_arbitration(
            Blackboard(), result(confidence=0.7), evidence(), SQ, tau=0.7, budget_left=2
        )
        assert decision.kind == "accept"

    def test_conflict_blocks_accept(self):
        board, decision = apply_arbitration(
            Blackboard(),
            result(confidence=0.9, conflict=True),
            evidence(),
            SQ,
            tau=0.7,
            budget_left=1,
        )
        assert decision.kind == "refine"
        assert board.facts == ()

    def test_low_confidence_refines_when_budget(self):
        _, decision = apply_arbitration(
            Blackboard(), result(confidence=0.3), evidence(), SQ, tau=0.7, budget_left=1
        )
        assert decision.kind == "refine"
        assert decision.signal.error_type is ErrorType.LOW_CONFIDENCE

    def test_no_budget_drops(self):
        board, decision = apply_arbitration(
            Blackboard(), result(confidence=0.3), evidence(), SQ, tau=0.7, budget_left=0
        )
        assert decision.kind == "drop"
        assert board.facts == ()

    def test_accept_all_bypasses_gate(self):
        _, decision = apply_arbitration(
            Blackboard(),
            result(confidence=0.0, conflict=True),
            evidence(),
            SQ,
            tau=0.7,
            budget_left=0,
            accept_all=True,
        )
        assert decision.kind == "accept"

    @given(
        confidence=st.floats(0, 1),
        tau=st.floats(0, 1),
        conflict=st.booleans(),
        budget=st.integers(0, 3),
    )
    def test_rule_is_total_and_consistent(self, confidence, tau, conflict, budget):
        board, decision = apply_arbitration(
            Blackboard(),
            result(confidence=confidence, conflict=conflict),
            evidence(),
            SQ,
            tau=tau,
            budget_left=budget,
        )
        if confidence >= tau and not conflict:
            assert decision.kind == "accept"
            assert len(board.facts) == 1
        elif budget > 0:
            assert decision.kind == "refine"
            assert board.facts == ()
        else:
            assert decision.kind == "drop"
            assert board.facts == ()
