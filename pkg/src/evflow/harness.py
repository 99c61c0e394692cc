"""Batch evaluation, parameter sweeps, and the oracle evidence study.

The manifest is JSONL, one task per line:
  {"id", "frames_dir", "question", "options": [{"letter", "text"}], "answer"}
"""

import json
import logging
import os
import random
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable

from . import prompts
from .config import PipelineConfig, validate_config
from .errors import InvalidConfig, ManifestError
from .gateway import ChatMessage, ImagePart, TextPart
from .ingest import load_frames
from .orchestrator import UNPARSED, AnswerRecord, answer_question
from .perception import scout
from .planner import decompose
from .types import SubQuery

logger = logging.getLogger(__name__)

ORACLE_BASELINE_FRAMES = 16

# sweep parameter names, as used in the experiment grids
SWEEP_PARAMS = {"k": "smooth_kernel", "K": "top_k", "N": "grid_n", "tau": "tau"}
DEFAULT_GRIDS = {"k": [1, 3, 5, 7, 9], "tau": [0.5, 0.6, 0.7, 0.8, 0.9]}


@dataclass(frozen=True)
class TaskManifestEntry:
    id: str
    frames_dir: str
    question: str
    options: tuple[tuple[str, str], ...]
    answer: str

    def __post_init__(self):
        letters = [letter for letter, _ in self.options]
        if len(self.options) < 2:
            raise ManifestError(f"task {self.id}: needs at least 2 options")
        if len(set(letters)) != len(letters):
            raise ManifestError(f"task {self.id}: duplicate option letters {letters}")
        if self.answer not in letters:
            raise ManifestError(f"task {self.id}: answer {self.answer!r} not among options {letters}")


def load_manifest(path: str) -> list[TaskManifestEntry]:
    entries: list[TaskManifestEntry] = []
    seen: dict[str, int] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                options = tuple((o["letter"], o["text"]) for o in data["options"])
                entry = TaskManifestEntry(
                    id=str(data["id"]),
                    frames_dir=data["frames_dir"],
                    question=data["question"],
                    options=options,
                    answer=data["answer"],
                )
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed entry: {exc}") from exc
            if entry.id in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate id {entry.id!r} (first at line {seen[entry.id]})"
                )
            seen[entry.id] = lineno
            entries.append(entry)
    if not entries:
        raise ManifestError(f"manifest {path} contains no tasks")
    return entries


@dataclass(frozen=True)
class EvalReport:
    label: str
    results: tuple[dict, ...]
    accuracy: float
    correct: int
    total: int
    parsed: int
    unparsed: int
    errored: int
    config: dict

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "results": list(self.results),
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "parsed": self.parsed,
            "unparsed": self.unparsed,
            "errored": self.errored,
            "config": self.config,
        }


BackendFactory = Callable[[], tuple[Any, Any]]


def _run_one(
    entry: TaskManifestEntry,
    cfg: PipelineConfig,
    backend_factory: BackendFactory,
    out_dir: str | None,
) -> AnswerRecord:
    try:
        chat, embedder = backend_factory()
        frames = load_frames(entry.frames_dir, cfg.frame_budget)
        return answer_question(
            frames,
            entry.question,
            list(entry.options),
            cfg,
            chat,
            embedder,
            question_id=entry.id,
            trace_dir=out_dir,
        )
    except Exception as exc:
        logger.exception("task %s failed before the pipeline could run", entry.id)
        return AnswerRecord(
            question_id=entry.id,
            question=entry.question,
            predicted=UNPARSED,
            raw_synthesis="",
            outcomes=(),
            chat_calls=0,
            embed_text_calls=0,
            embed_image_calls=0,
            config=cfg.to_dict(),
            board=(),
            error=f"{type(exc).__name__}: {exc}",
        )


def evaluate(
    entries: list[TaskManifestEntry],
    cfg: PipelineConfig,
    backend_factory: BackendFactory,
    out_dir: str | None = None,
    label: str = "default",
) -> EvalReport:
    """Run every task through the pipeline and score the predictions.

    Unparsed or errored answers count as wrong. Questions run on a
    bounded worker pool; the backend factory is invoked once per task so
    scripted backends are never shared across threads.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        records = list(pool.map(lambda e: _run_one(e, cfg, backend_factory, out_dir), entries))

    results = []
    correct = parsed = unparsed = errored = 0
    for entry, record in zip(entries, records):
        ok = record.predicted == entry.answer
        correct += ok
        if record.error is not None:
            errored += 1
        elif record.predicted == UNPARSED:
            unparsed += 1
        else:
            parsed += 1
        results.append(
            {
                "id": entry.id,
                "predicted": record.predicted,
                "answer": entry.answer,
                "correct": ok,
                "error": record.error,
            }
        )
    report = EvalReport(
        label=label,
        results=tuple(results),
        accuracy=correct / len(entries),
        correct=correct,
        total=len(entries),
        parsed=parsed,
        unparsed=unparsed,
        errored=errored,
        config=cfg.to_dict(),
    )
    if out_dir is not None:
        with open(os.path.join(out_dir, "answers.jsonl"), "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


def sweep(
    entries: list[TaskManifestEntry],
    cfg: PipelineConfig,
    grid: dict[str, list] | None,
    backend_factory: BackendFactory,
    out_dir: str | None = None,
) -> list[EvalReport]:
    """One evaluation per grid point, each parameter swept independently.

    All grid values are validated against the config rules before any
    evaluation runs.
    """
    grid = dict(grid) if grid else dict(DEFAULT_GRIDS)
    plans: list[tuple[str, Any, PipelineConfig]] = []
    for param, values in grid.items():
        if param not in SWEEP_PARAMS:
            raise InvalidConfig(param, f"not a sweepable parameter, pick from {sorted(SWEEP_PARAMS)}")
        if not values:
            raise InvalidConfig(param, "empty value list")
        for value in values:
            point = validate_config(replace(cfg, **{SWEEP_PARAMS[param]: value}))
            plans.append((f"{param}={value}", param, point))

    reports = []
    for label, _param, point_cfg in plans:
        point_dir = os.path.join(out_dir, label) if out_dir is not None else None
        reports.append(evaluate(entries, point_cfg, backend_factory, point_dir, label=label))
    if out_dir is not None:
        summary = [
            {"label": r.label, "accuracy": r.accuracy, "correct": r.correct, "total": r.total}
            for r in reports
        ]
        with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return reports


@dataclass(frozen=True)
class OracleReport:
    samples: tuple[dict, ...]
    skipped: tuple[str, ...]
    avg_baseline: float
    avg_hap: float
    hsr_baseline: float
    hsr_hap: float
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "samples": list(self.samples),
            "skipped": list(self.skipped),
            "avg_baseline": self.avg_baseline,
            "avg_hap": self.avg_hap,
            "hsr_baseline": self.hsr_baseline,
            "hsr_hap": self.hsr_hap,
            "seed": self.seed,
        }


_SCORE_RE = re.compile(r"(?<!\d)([1-5])(?!\d)")


def parse_judge_score(text: str) -> int | None:
    """First standalone integer in 1..5, or None."""
    match = _SCORE_RE.search(text)
    return int(match.group(1)) if match else None


def _judge_image(judge, raster, query: str, context_note: str | None, cfg: PipelineConfig) -> int | None:
    system = ChatMessage(role="system", parts=(TextPart(prompts.load_template("oracle_system", cfg.prompt_dir).strip()),))
    user_text = prompts.oracle_user_prompt(query, context_note, cfg.prompt_dir)
    user = ChatMessage(role="user", parts=(TextPart(user_text), ImagePart(raster)))
    response = judge.chat([system, user], temperature=cfg.temperature, max_tokens=64)
    return parse_judge_score(response.text)


def oracle_assess(
    entries: list[TaskManifestEntry],
    cfg: PipelineConfig,
    judge,
    embedder,
    planner_chat=None,
) -> OracleReport:
    """Evidence-quality study: 16 uniform frames scored individually
    versus the single retrieved crop scored with the zoom context note.

    A sample with any unparseable judge reply is skipped entirely and
    listed in the report. With oracle_use_plan the question is first
    decomposed (planner_chat required) and the per-sub-query crops are
    scored and averaged; otherwise the original question doubles as the
    visual query.
    """
    chosen = list(entries)
    if cfg.oracle_sample_size is not None and cfg.oracle_sample_size < len(chosen):
        rng = random.Random(cfg.seed)
        chosen = rng.sample(chosen, cfg.oracle_sample_size)

    samples: list[dict] = []
    skipped: list[str] = []
    for entry in chosen:
        baseline_frames = load_frames(entry.frames_dir, ORACLE_BASELINE_FRAMES)
        baseline_scores = []
        bad = False
        for frame in baseline_frames:
            score = _judge_image(judge, frame.raster, entry.question, None, cfg)
            if score is None:
                bad = True
                break
            baseline_scores.append(score)
        if bad:
            logger.warning("sample %s skipped: unparseable baseline judge reply", entry.id)
            skipped.append(entry.id)
            continue

        hap_frames = load_frames(entry.frames_dir, cfg.frame_budget)
        if cfg.oracle_use_plan:
            if planner_chat is None:
                raise InvalidConfig("oracle_use_plan", "requires a planner chat client")
            plan = decompose(entry.question, planner_chat, cfg)
            subqueries = list(plan)
        else:
            subqueries = [SubQuery(id="oracle", q_text=entry.question, q_vis=entry.question)]
        crop_scores = []
        for sq in subqueries:
            evidence = scout(hap_frames, sq, cfg, embedder)
            score = _judge_image(judge, evidence.crop, entry.question, prompts.CONTEXT_NOTE, cfg)
            if score is None:
                bad = True
                break
            crop_scores.append(score)
        if bad:
            logger.warning("sample %s skipped: unparseable crop judge reply", entry.id)
            skipped.append(entry.id)
            continue

        samples.append(
            {
                "id": entry.id,
                "baseline_scores": baseline_scores,
                "baseline_mean": statistics.fmean(baseline_scores),
                "hap_score": statistics.fmean(crop_scores),
            }
        )

    if samples:
        avg_baseline = statistics.fmean(s["baseline_mean"] for s in samples)
        avg_hap = statistics.fmean(s["hap_score"] for s in samples)
        hsr_baseline = sum(s["baseline_mean"] >= 4 for s in samples) / len(samples)
        hsr_hap = sum(s["hap_score"] >= 4 for s in samples) / len(samples)
    else:
        avg_baseline = avg_hap = hsr_baseline = hsr_hap = 0.0
    return OracleReport(
        samples=tuple(samples),
        skipped=tuple(skipped),
        avg_baseline=avg_baseline,
        avg_hap=avg_hap,
        hsr_baseline=hsr_baseline,
        hsr_hap=hsr_hap,
        seed=cfg.seed,
    )


def render_oracle_table(report: OracleReport) -> str:
    """Plain-text rendering of the evidence-quality comparison."""
    rows = [
        ("Method", "Avg. Score (1-5)", "High-Sufficiency Rate"),
        ("Uniform Sampling", f"{report.avg_baseline:.2f}", f"{report.hsr_baseline * 100:.1f}%"),
        ("HAP (Ours)", f"{report.avg_hap:.2f}", f"{report.hsr_hap * 100:.1f}%"),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(3)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
