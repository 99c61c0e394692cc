"""The per-question reasoning loop.

Plan the question into sub-queries, resolve each one through the
scout / arbitrate / refine cycle against a shared blackboard, then
synthesize the final option letter from the accepted facts.
"""

import logging
import os
import re
import threading
from dataclasses import dataclass, replace
from typing import Any

from . import prompts
from .blackboard import Blackboard, apply_arbitration, arbitrate
from .config import PipelineConfig
from .errors import AllCandidatesExhausted, EvflowError
from .gateway import ChatMessage, ImagePart, TextPart
from .ingest import sample_positions
from .perception import Evidence, PatchRef, Rect, scout
from .planner import decompose, refine_subquery
from .trace import TraceRecorder, write_trace
from .types import FrameSequence, Raster, SubQuery

logger = logging.getLogger(__name__)

UNPARSED = "UNPARSED"

_STANDALONE_LETTER = re.compile(r"(?<![A-Za-z0-9])([A-Za-z])(?![A-Za-z0-9])")


class CountingChat:
    """Pass-through wrapper counting calls for the answer record."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def chat(self, messages, temperature, max_tokens):
        with self._lock:
            self.calls += 1
        return self.inner.chat(messages, temperature, max_tokens)


class CountingEmbedder:
    def __init__(self, inner):
        self.inner = inner
        self.text_calls = 0
        self.image_calls = 0
        self._lock = threading.Lock()

    def embed_text(self, text):
        with self._lock:
            self.text_calls += 1
        return self.inner.embed_text(text)

    def embed_image(self, raster):
        with self._lock:
            self.image_calls += 1
        return self.inner.embed_image(raster)


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    question: str
    predicted: str
    raw_synthesis: str
    outcomes: tuple[dict, ...]
    chat_calls: int
    embed_text_calls: int
    embed_image_calls: int
    config: dict
    board: tuple[dict, ...]
    error: str | None = None
    trace_path: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "question": self.question,
            "predicted": self.predicted,
            "raw_synthesis": self.raw_synthesis,
            "outcomes": list(self.outcomes),
            "chat_calls": self.chat_calls,
            "embed_text_calls": self.embed_text_calls,
            "embed_image_calls": self.embed_image_calls,
            "config": self.config,
            "board": list(self.board),
            "error": self.error,
            "trace_path": self.trace_path,
        }


def parse_option_letter(reply: str, options: list[tuple[str, str]]) -> str:
    """First standalone letter matching an option; otherwise the option
    whose text shares the most tokens with the reply; otherwise UNPARSED."""
    canonical = {letter.upper(): letter for letter, _ in options}
    for match in _STANDALONE_LETTER.finditer(reply):
        letter = match.group(1).upper()
        if letter in canonical:
            return canonical[letter]
    reply_tokens = set(re.findall(r"[a-z0-9]+", reply.lower()))
    if reply_tokens:
        overlaps = [
            (len(reply_tokens & set(re.findall(r"[a-z0-9]+", text.lower()))), letter)
            for letter, text in options
        ]
        best = max(count for count, _ in overlaps)
        winners = [letter for count, letter in overlaps if count == best]
        if best > 0 and len(winners) == 1:
            return winners[0]
    return UNPARSED


def _render_question(question: str, options: list[tuple[str, str]]) -> str:
    lines = [question]
    lines.extend(f"{letter}. {text}" for letter, text in options)
    return "\n".join(lines)


def synthesize_answer(
    question: str,
    options: list[tuple[str, str]],
    board: Blackboard,
    frames: FrameSequence,
    cfg: PipelineConfig,
    chat,
    tracer=None,
    evidence_crops: tuple[Raster, ...] = (),
) -> tuple[str, str]:
    """Fill the final prompt with the sampled frames and the verified
    facts, then extract the chosen option letter from the reply."""
    template = prompts.load_template("synthesis", cfg.prompt_dir)
    if "<VIDEO>" not in template:
        raise EvflowError("synthesis template must contain a <VIDEO> slot")
    prefix, suffix = template.split("<VIDEO>", 1)
    suffix = prompts.fill(
        suffix,
        {"<QUESTION>": _render_question(question, options), "<BLACKBOARD>": board.serialize()},
    )
    parts: list = [TextPart(prefix)]
    parts.extend(ImagePart(f.raster) for f in frames)
    parts.extend(ImagePart(crop) for crop in evidence_crops)
    parts.append(TextPart(suffix))
    message = ChatMessage(role="user", parts=tuple(parts))
    response = chat.chat([message], temperature=cfg.temperature, max_tokens=cfg.max_tokens_synthesis)
    letter = parse_option_letter(response.text, options)
    if tracer is not None:
        tracer.emit(
            "synthesis",
            {
                "question": question,
                "facts": [fact.observation for fact in board.facts],
                "prompt_text": prefix + suffix,
                "reply": response.text,
                "letter": letter,
            },
        )
    return letter, response.text


def _full_frame_evidence(frames: FrameSequence, position: int, sq: SubQuery) -> Evidence:
    frame = frames[position]
    rect = Rect(x=0, y=0, w=frame.raster.width, h=frame.raster.height)
    patch = PatchRef(kind="Global", rect=rect, score=0.0)
    return Evidence(
        subquery_id=sq.id,
        frame_position=position,
        frame_index=frame.index,
        patch=patch,
        crop=frame.raster,
        similarity=0.0,
    )


def _emit_arbitration(tracer, sq, evidence, result, decision):
    tracer.emit(
        "arbitration",
        {
            "subquery_id": sq.id,
            "generation": sq.generation,
            "observation": result.observation,
            "confidence": result.confidence,
            "conflict": result.conflict,
            "raw_text": result.raw_text,
            "similarity": evidence.similarity,
            "decision": decision.kind,
        },
    )


def _resolve_subquery(
    frames: FrameSequence,
    sq: SubQuery,
    board: Blackboard,
    cfg: PipelineConfig,
    chat,
    embedder,
    tracer,
) -> tuple[Blackboard, dict, tuple[Raster, ...]]:
    """Run one sub-query to an accepted fact or a drop. Returns the new
    board, an outcome summary, and any accepted evidence crops."""
    accept_all = "no_eba" in cfg.ablations
    crops: list[Raster] = []

    if "no_hap" in cfg.ablations:
        # uniform full frames straight to arbitration, no retrieval and
        # no refinement budget: each frame is judged exactly once
        accepted = 0
        for position in sample_positions(len(frames), cfg.top_k):
            evidence = _full_frame_evidence(frames, position, sq)
            result = arbitrate(evidence, sq, board, chat, cfg, tracer)
            board, decision = apply_arbitration(
                board, result, evidence, sq, cfg.tau, budget_left=0, accept_all=accept_all
            )
            _emit_arbitration(tracer, sq, evidence, result, decision)
            if decision.kind == "accept":
                accepted += 1
                crops.append(evidence.crop)
                tracer.emit("board.update", {"subquery_id": sq.id, "fact": decision.fact.to_dict()})
            else:
                tracer.emit("board.drop", {"subquery_id": sq.id, "reason": decision.reason})
        outcome = {
            "id": sq.id,
            "outcome": "accepted" if accepted else "dropped",
            "refinements": 0,
            "attempts": min(len(frames), cfg.top_k),
        }
        return board, outcome, tuple(crops)

    current = sq
    exhausted: frozenset = frozenset()
    refinements = 0
    while True:
        budget_left = cfg.max_refinements - current.generation
        try:
            evidence = scout(frames, current, cfg, embedder, exhausted, tracer)
        except AllCandidatesExhausted:
            tracer.emit("board.drop", {"subquery_id": current.id, "reason": "candidates exhausted"})
            outcome = {
                "id": sq.id,
                "outcome": "dropped",
                "refinements": refinements,
                "attempts": refinements + 1,
            }
            return board, outcome, tuple(crops)
        exhausted = evidence.exhausted_candidates
        result = arbitrate(evidence, current, board, chat, cfg, tracer)
        board, decision = apply_arbitration(
            board, result, evidence, current, cfg.tau, budget_left, accept_all=accept_all
        )
        _emit_arbitration(tracer, current, evidence, result, decision)
        if decision.kind == "accept":
            crops.append(evidence.crop)
            tracer.emit("board.update", {"subquery_id": current.id, "fact": decision.fact.to_dict()})
            outcome = {
                "id": sq.id,
                "outcome": "accepted",
                "refinements": refinements,
                "attempts": refinements + 1,
            }
            return board, outcome, tuple(crops)
        if decision.kind == "refine":
            child = refine_subquery(current, decision.signal, chat, cfg, tracer)
            tracer.emit(
                "refine",
                {
                    "parent": current.id,
                    "child": child.id,
                    "error_type": decision.signal.error_type.value,
                    "note": decision.signal.note,
                },
            )
            current = child
            refinements += 1
            continue
        tracer.emit("board.drop", {"subquery_id": current.id, "reason": decision.reason})
        outcome = {
            "id": sq.id,
            "outcome": "dropped",
            "refinements": refinements,
            "attempts": refinements + 1,
        }
        return board, outcome, tuple(crops)


def answer_question(
    frames: FrameSequence,
    question: str,
    options: list[tuple[str, str]],
    cfg: PipelineConfig,
    chat,
    embedder,
    question_id: str = "q0",
    trace_dir: str | None = None,
) -> AnswerRecord:
    """End-to-end pipeline for one question. Never raises on pipeline
    errors: failures come back inside the record with a partial trace."""
    if not options:
        raise EvflowError("options must be non-empty")
    letters = [letter for letter, _ in options]
    if len(set(letters)) != len(letters):
        raise EvflowError(f"duplicate option letters: {letters}")

    tracer = TraceRecorder()
    chat = CountingChat(chat)
    embedder = CountingEmbedder(embedder)
    board = Blackboard()
    outcomes: list[dict] = []
    predicted = UNPARSED
    raw_synthesis = ""
    error: str | None = None

    try:
        plan = decompose(question, chat, cfg, tracer)
        tracer.emit(
            "plan",
            {
                "question": question,
                "ablated": "no_hdd" in cfg.ablations,
                "subqueries": [
                    {"id": sq.id, "q_text": sq.q_text, "q_vis": sq.q_vis} for sq in plan
                ],
            },
        )
        all_crops: list[Raster] = []
        for sq in plan:
            board, outcome, crops = _resolve_subquery(frames, sq, board, cfg, chat, embedder, tracer)
            outcomes.append(outcome)
            all_crops.extend(crops)
        evidence_crops = tuple(all_crops) if cfg.include_evidence_crops else ()
        predicted, raw_synthesis = synthesize_answer(
            question, options, board, frames, cfg, chat, tracer, evidence_crops
        )
    except Exception as exc:
        logger.exception("question %s aborted", question_id)
        error = f"{type(exc).__name__}: {exc}"
        tracer.emit("warning", {"kind": "aborted", "error": error})

    record = AnswerRecord(
        question_id=question_id,
        question=question,
        predicted=predicted,
        raw_synthesis=raw_synthesis,
        outcomes=tuple(outcomes),
        chat_calls=chat.calls,
        embed_text_calls=embedder.text_calls,
        embed_image_calls=embedder.image_calls,
        config=cfg.to_dict(),
        board=tuple(fact.to_dict() for fact in board.facts),
        error=error,
    )
    tracer.emit("answer", record.to_dict())

    trace_path = None
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        trace_path = os.path.join(trace_dir, f"{question_id}.trace.jsonl")
        write_trace(tracer.events, trace_path)
    return replace(record, trace_path=trace_path)
