"""Evidence arbitration and the append-only fact board.

Each retrieved crop is judged by the arbitrator model against the facts
accepted so far. High-confidence, non-conflicting observations are
appended; anything else is routed back to the planner as a typed
refinement signal while budget remains, then dropped.
"""

import logging
from dataclasses import dataclass

from . import prompts
from .config import PipelineConfig
from .errors import ArbitrationParseError, EvflowError, PlanParseError
from .gateway import ChatMessage, ImagePart, TextPart
from .perception import Evidence
from .planner import OBJECT_REPAIR_SENTENCE, ErrorType, RefinementSignal, extract_json
from .types import SubQuery

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArbitrationResult:
    """The arbitrator's verdict on one evidence crop."""

    observation: str
    confidence: float
    conflict: bool
    raw_text: str
    error_hint: ErrorType | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise EvflowError(f"confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class Fact:
    observation: str
    subquery_id: str
    frame_index: int
    patch_kind: str
    confidence: float
    step: int

    def to_dict(self) -> dict:
        return {
            "observation": self.observation,
            "subquery_id": self.subquery_id,
            "frame_index": self.frame_index,
            "patch_kind": self.patch_kind,
            "confidence": self.confidence,
            "step": self.step,
        }


@dataclass(frozen=True)
class Blackboard:
    """Ordered accepted facts; append returns a new board."""

    facts: tuple[Fact, ...] = ()
    step_counter: int = 0

    def with_fact(
        self,
        observation: str,
        subquery_id: str,
        frame_index: int,
        patch_kind: str,
        confidence: float,
    ) -> tuple["Blackboard", Fact]:
        fact = Fact(
            observation=observation,
            subquery_id=subquery_id,
            frame_index=frame_index,
            patch_kind=patch_kind,
            confidence=confidence,
            step=self.step_counter,
        )
        return Blackboard(facts=self.facts + (fact,), step_counter=self.step_counter + 1), fact

    def serialize(self) -> str:
        """Prompt rendering: numbered observations, or the literal
        placeholder when nothing is verified yet."""
        if not self.facts:
            return "None yet."
        return "\n".join(f"{i + 1}. {fact.observation}" for i, fact in enumerate(self.facts))


@dataclass(frozen=True)
class Decision:
    """Exactly one of: accept a fact, refine the sub-query, drop it."""

    kind: str
    fact: Fact | None = None
    signal: RefinementSignal | None = None
    reason: str | None = None

    def __post_init__(self):
        expected = {"accept": self.fact, "refine": self.signal, "drop": self.reason}
        if self.kind not in expected:
            raise EvflowError(f"unknown decision kind {self.kind!r}")
        if expected[self.kind] is None:
            raise EvflowError(f"{self.kind} decision missing its payload")
        others = [v for key, v in expected.items() if key != self.kind]
        if any(v is not None for v in others):
            raise EvflowError("decision must carry exactly one variant payload")


def _parse_arbitration_json(text: str) -> dict:
    try:
        value = extract_json(text, "{")
    except PlanParseError as exc:
        raise ArbitrationParseError(text) from exc
    observation = value.get("observation")
    confidence = value.get("confidence")
    conflict = value.get("conflict")
    if not isinstance(observation, str):
        raise ArbitrationParseError(text)
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
        raise ArbitrationParseError(text)
    if isinstance(conflict, int) and not isinstance(conflict, bool) and conflict in (0, 1):
        conflict = bool(conflict)
    if not isinstance(conflict, bool):
        raise ArbitrationParseError(text)
    out = {"observation": observation, "confidence": float(confidence), "conflict": conflict}
    hint = value.get("error_type")
    if isinstance(hint, str):
        out["error_hint"] = ErrorType.from_label(hint)
    return out


def arbitrate(
    evidence: Evidence, sq: SubQuery, board: Blackboard, chat, cfg: PipelineConfig, tracer=None
) -> ArbitrationResult:
    """Ask the arbitrator model to judge one crop against the board."""
    template = prompts.load_template("arbitration", cfg.prompt_dir)
    filled = prompts.fill(template, {"<BLACKBOARD>": board.serialize(), "<q_text>": sq.q_text})
    message = ChatMessage(role="user", parts=(ImagePart(evidence.crop), TextPart(filled)))
    response = chat.chat([message], temperature=cfg.temperature, max_tokens=cfg.max_tokens_arbitration)
    try:
        parsed = _parse_arbitration_json(response.text)
        raw = response.text
    except ArbitrationParseError:
        if tracer is not None:
            tracer.emit("warning", {"kind": "parse_repair", "sentence": OBJECT_REPAIR_SENTENCE})
        retry = ChatMessage(
            role="user", parts=(ImagePart(evidence.crop), TextPart(filled + "\n" + OBJECT_REPAIR_SENTENCE))
        )
        second = chat.chat([retry], temperature=cfg.temperature, max_tokens=cfg.max_tokens_arbitration)
        parsed = _parse_arbitration_json(second.text)
        raw = second.text

    confidence = parsed["confidence"]
    if not 0.0 <= confidence <= 1.0:
        clamped = min(1.0, max(0.0, confidence))
        if tracer is not None:
            tracer.emit(
                "warning",
                {"kind": "confidence_clamped", "got": confidence, "clamped": clamped},
            )
        confidence = clamped
    return ArbitrationResult(
        observation=parsed["observation"],
        confidence=confidence,
        conflict=parsed["conflict"],
        raw_text=raw,
        error_hint=parsed.get("error_hint"),
    )


def classify_error(result: ArbitrationResult, evidence: Evidence) -> ErrorType:
    """Deterministic failure diagnosis for a rejected arbitration.

    The arbitration schema carries no error field, so the type is
    derived locally; an explicit valid error_type key in the reply wins
    when the model volunteers one.
    """
    if result.error_hint is not None:
        return result.error_hint
    if result.conflict:
        return ErrorType.CONTRADICTORY_EVIDENCE
    if evidence.similarity < 0.2:
        return ErrorType.TEMPORAL_MISMATCH
    lowered = result.observation.lower()
    if any(marker in lowered for marker in ("occlud", "blur", "hidden", "blocked")):
        return ErrorType.OBJECT_OCCLUSION
    return ErrorType.LOW_CONFIDENCE


def apply_arbitration(
    board: Blackboard,
    result: ArbitrationResult,
    evidence: Evidence,
    sq: SubQuery,
    tau: float,
    budget_left: int,
    accept_all: bool = False,
) -> tuple[Blackboard, Decision]:
    """The accept / refine / drop rule.

    Accept iff confidence >= tau and no conflict (the boundary s == tau
    accepts); otherwise refine while budget remains, else drop without
    touching the board. accept_all bypasses the gate entirely.
    """
    if accept_all or (result.confidence >= tau and not result.conflict):
        new_board, fact = board.with_fact(
            observation=result.observation,
            subquery_id=sq.id,
            frame_index=evidence.frame_index,
            patch_kind=evidence.patch.label,
            confidence=result.confidence,
        )
        return new_board, Decision(kind="accept", fact=fact)
    if budget_left > 0:
        signal = RefinementSignal(
            subquery_id=sq.id,
            error_type=classify_error(result, evidence),
            note=result.observation,
        )
        return board, Decision(kind="refine", signal=signal)
    return board, Decision(kind="drop", reason="budget exhausted")
