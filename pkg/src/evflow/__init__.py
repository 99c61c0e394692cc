"""Training-free video question answering by decomposing questions into
verifiable sub-queries, actively retrieving zoomed spatiotemporal
evidence, and arbitrating it on a blackboard before synthesis."""

from .blackboard import (
    ArbitrationResult,
    Blackboard,
    Decision,
    Fact,
    apply_arbitration,
    arbitrate,
    classify_error,
)
from .config import PipelineConfig, load_config, validate_config
from .errors import EvflowError
from .gateway import (
    BackendScript,
    ChatMessage,
    ChatResponse,
    ChatRule,
    HttpChatClient,
    HttpEmbeddingClient,
    ImagePart,
    ScriptedChat,
    ScriptedEmbedder,
    TextPart,
    cosine_similarity,
)
from .harness import (
    EvalReport,
    OracleReport,
    TaskManifestEntry,
    evaluate,
    load_manifest,
    oracle_assess,
    render_oracle_table,
    sweep,
)
from .ingest import FrameManifest, load_frames, scan_directory
from .orchestrator import AnswerRecord, answer_question, parse_option_letter, synthesize_answer
from .perception import (
    Evidence,
    PatchRef,
    Rect,
    TemporalWindow,
    build_patch_set,
    score_frames,
    scout,
    select_evidence_patch,
    select_windows,
    smooth_scores,
)
from .planner import (
    ErrorType,
    RefinementSignal,
    decompose,
    parse_plan_json,
    refine_subquery,
)
from .stubserver import StubServer
from .trace import TraceEvent, TraceRecorder, read_trace, without_wall_time, write_trace
from .types import EmbeddingVector, Frame, FrameSequence, Raster, ReasoningPlan, SubQuery

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord",
    "ArbitrationResult",
    "BackendScript",
    "Blackboard",
    "ChatMessage",
    "ChatResponse",
    "ChatRule",
    "Decision",
    "EmbeddingVector",
    "ErrorType",
    "EvalReport",
    "Evidence",
    "EvflowError",
    "Fact",
    "Frame",
    "FrameManifest",
    "FrameSequence",
    "HttpChatClient",
    "HttpEmbeddingClient",
    "ImagePart",
    "OracleReport",
    "PatchRef",
    "PipelineConfig",
    "Raster",
    "ReasoningPlan",
    "Rect",
    "RefinementSignal",
    "ScriptedChat",
    "ScriptedEmbedder",
    "StubServer",
    "SubQuery",
    "TaskManifestEntry",
    "TemporalWindow",
    "TextPart",
    "TraceEvent",
    "TraceRecorder",
    "answer_question",
    "apply_arbitration",
    "arbitrate",
    "build_patch_set",
    "classify_error",
    "cosine_similarity",
    "decompose",
    "evaluate",
    "load_config",
    "load_frames",
    "load_manifest",
    "oracle_assess",
    "parse_option_letter",
    "parse_plan_json",
    "read_trace",
    "refine_subquery",
    "render_oracle_table",
    "scan_directory",
    "score_frames",
    "scout",
    "select_evidence_patch",
    "select_windows",
    "smooth_scores",
    "sweep",
    "synthesize_answer",
    "validate_config",
    "without_wall_time",
    "write_trace",
]
