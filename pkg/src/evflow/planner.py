"""Question decomposition and sub-query refinement.

The planner turns one multiple-choice question into an ordered list of
(q_text, q_vis) sub-queries, and regenerates a more granular sub-query
whenever arbitration sends back a typed failure diagnosis.
"""

import enum
import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Callable

from . import prompts
from .config import PipelineConfig
from .errors import EmptyPlan, EvflowError, PlanParseError, RefinementBudgetExhausted
from .gateway import user_message
from .types import ReasoningPlan, SubQuery

logger = logging.getLogger(__name__)

PLAN_REPAIR_SENTENCE = "Reply with only the JSON list."
OBJECT_REPAIR_SENTENCE = "Reply with only the JSON object."

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)


class ErrorType(enum.Enum):
    """Closed failure vocabulary routed from arbitration to refinement.

    Values are the literal labels inserted into the refinement prompt.
    """

    OBJECT_OCCLUSION = "Object Occlusion"
    TEMPORAL_MISMATCH = "Temporal Mismatch"
    LOW_CONFIDENCE = "Low Confidence"
    CONTRADICTORY_EVIDENCE = "Contradictory Evidence"

    @classmethod
    def from_label(cls, label: str) -> "ErrorType | None":
        normalized = label.strip().lower().replace("_", " ")
        for member in cls:
            if member.value.lower() == normalized:
                return member
        return None


@dataclass(frozen=True)
class RefinementSignal:
    subquery_id: str
    error_type: ErrorType
    note: str = ""


def _json_candidates(text: str) -> list[str]:
    """Candidate JSON source strings, most specific first."""
    candidates = [text.strip()]
    candidates.extend(m.group(1).strip() for m in _FENCE_RE.finditer(text))
    return candidates


def _scan_decode(text: str, opener: str) -> Any | None:
    """Try raw_decode from every occurrence of the opening bracket."""
    decoder = json.JSONDecoder()
    pos = text.find(opener)
    while pos != -1:
        try:
            value, _ = decoder.raw_decode(text, pos)
            return value
        except json.JSONDecodeError:
            pos = text.find(opener, pos + 1)
    return None


def extract_json(text: str, opener: str) -> Any:
    """Recover the first well-formed JSON value opening with `opener`
    ('[' or '{'), tolerating code fences and surrounding prose."""
    expected = list if opener == "[" else dict
    for candidate in _json_candidates(text):
        if candidate.startswith(opener):
            try:
                value = json.loads(candidate)
                if isinstance(value, expected):
                    return value
            except json.JSONDecodeError:
                pass
    for candidate in _json_candidates(text):
        value = _scan_decode(candidate, opener)
        if isinstance(value, expected):
            return value
    raise PlanParseError(text, f"no JSON value opening with {opener!r} recoverable")


def parse_plan_json(
    text: str, on_warning: Callable[[str], None] | None = None
) -> list[dict[str, str]]:
    """Extract the sub-query list from a planner reply.

    Elements missing a non-empty q_text or q_vis are dropped with a
    warning rather than failing the whole plan.
    """
    value = extract_json(text, "[")
    items: list[dict[str, str]] = []
    for i, element in enumerate(value):
        if (
            isinstance(element, dict)
            and isinstance(element.get("q_text"), str)
            and isinstance(element.get("q_vis"), str)
            and element["q_text"].strip()
            and element["q_vis"].strip()
        ):
            items.append({"q_text": element["q_text"].strip(), "q_vis": element["q_vis"].strip()})
        elif on_warning is not None:
            on_warning(f"plan element {i} dropped: needs non-empty q_text and q_vis")
    return items


def _chat_with_repair(chat, filled: str, repair_sentence: str, cfg: PipelineConfig, parse, tracer=None):
    """One model call, then at most one repair re-prompt when parsing fails."""
    messages = [user_message(filled)]
    response = chat.chat(messages, temperature=cfg.temperature, max_tokens=cfg.max_tokens_plan)
    try:
        return parse(response.text), response.text
    except PlanParseError:
        if tracer is not None:
            tracer.emit("warning", {"kind": "parse_repair", "sentence": repair_sentence})
        retry = [user_message(filled + "\n" + repair_sentence)]
        second = chat.chat(retry, temperature=cfg.temperature, max_tokens=cfg.max_tokens_plan)
        return parse(second.text), second.text


def decompose(question: str, chat, cfg: PipelineConfig, tracer=None) -> ReasoningPlan:
    """Build the reasoning plan for one question.

    With the no_hdd ablation the question passes through unchanged as a
    single sub-query and no model call happens.
    """
    if not question.strip():
        raise EvflowError("cannot plan an empty question")
    if "no_hdd" in cfg.ablations:
        sq = SubQuery(id="sq1", q_text=question, q_vis=question)
        return ReasoningPlan(subqueries=(sq,), original_question=question)

    template = prompts.load_template("planner", cfg.prompt_dir)
    filled = prompts.fill(template, {"<QUESTION>": question})

    def warn(message: str):
        if tracer is not None:
            tracer.emit("warning", {"kind": "plan_element_dropped", "detail": message})

    items, _raw = _chat_with_repair(
        chat, filled, PLAN_REPAIR_SENTENCE, cfg, lambda t: parse_plan_json(t, warn), tracer
    )
    if not items:
        raise EmptyPlan("planner returned an empty sub-query list")
    if len(items) > cfg.max_subqueries:
        if tracer is not None:
            tracer.emit(
                "warning",
                {"kind": "plan_truncated", "kept": cfg.max_subqueries, "got": len(items)},
            )
        items = items[: cfg.max_subqueries]
    subqueries = tuple(
        SubQuery(id=f"sq{i + 1}", q_text=item["q_text"], q_vis=item["q_vis"])
        for i, item in enumerate(items)
    )
    return ReasoningPlan(subqueries=subqueries, original_question=question)


def parse_refined_json(text: str) -> dict[str, str]:
    value = extract_json(text, "{")
    q_text = value.get("q_text")
    q_vis = value.get("q_vis")
    if not (isinstance(q_text, str) and q_text.strip() and isinstance(q_vis, str) and q_vis.strip()):
        raise PlanParseError(text, "refined object needs non-empty q_text and q_vis")
    return {"q_text": q_text.strip(), "q_vis": q_vis.strip()}


def refine_subquery(
    sq: SubQuery, signal: RefinementSignal, chat, cfg: PipelineConfig, tracer=None
) -> SubQuery:
    """Regenerate a more granular sub-query targeting the diagnosed error."""
    if sq.generation >= cfg.max_refinements:
        raise RefinementBudgetExhausted(
            f"{sq.id} already at generation {sq.generation} of {cfg.max_refinements}"
        )
    template = prompts.load_template("refinement", cfg.prompt_dir)
    filled = prompts.fill(
        template,
        {"<q_text>": sq.q_text, "<q_vis>": sq.q_vis, "<error_type>": signal.error_type.value},
    )
    item, _raw = _chat_with_repair(chat, filled, OBJECT_REPAIR_SENTENCE, cfg, parse_refined_json, tracer)
    return SubQuery(
        id=f"{sq.id}.r{sq.generation + 1}",
        q_text=item["q_text"],
        q_vis=item["q_vis"],
        generation=sq.generation + 1,
        parent_id=sq.id,
    )
