"""Pipeline configuration: defaults, validation, layered loading.

Precedence, highest first: explicit overrides (CLI), environment
variables prefixed EVFLOW_, a flat JSON config file, built-in defaults.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigConflict, InvalidConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "EVFLOW_"

ABLATION_NAMES = frozenset({"no_hdd", "no_hap", "no_eba", "no_spatial", "no_temporal"})


@dataclass(frozen=True)
class PipelineConfig:
    # retrieval geometry
    frame_budget: int = 32
    smooth_kernel: int = 5
    top_k: int = 3
    grid_n: int = 3
    # arbitration
    tau: float = 0.7
    max_refinements: int = 2
    # planning
    max_subqueries: int = 6
    # ablation switches, see ABLATION_NAMES
    ablations: frozenset[str] = frozenset()
    # backends
    chat_endpoint: str = ""
    embed_endpoint: str = ""
    chat_model: str = "default-chat"
    embed_model: str = "default-embed"
    api_key: str | None = None
    request_timeout: float = 60.0
    # generation
    temperature: float = 0.0
    max_tokens_plan: int = 1024
    max_tokens_arbitration: int = 256
    max_tokens_synthesis: int = 512
    include_evidence_crops: bool = False
    # misc
    seed: int = 0
    workers: int = 4
    prompt_dir: str | None = None
    # oracle study
    oracle_use_plan: bool = False
    oracle_sample_size: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["ablations"] = sorted(self.ablations)
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}

_INT_FIELDS = frozenset({
    "frame_budget", "smooth_kernel", "top_k", "grid_n", "max_refinements",
    "max_subqueries", "seed", "workers", "max_tokens_plan",
    "max_tokens_arbitration", "max_tokens_synthesis",
})
_FLOAT_FIELDS = frozenset({"tau", "request_timeout", "temperature"})
_BOOL_FIELDS = frozenset({"include_evidence_crops", "oracle_use_plan"})
_OPTIONAL_STR_FIELDS = frozenset({"api_key", "prompt_dir"})
_OPTIONAL_INT_FIELDS = frozenset({"oracle_sample_size"})

_POSITIVE_INT = ("frame_budget", "top_k", "max_subqueries", "workers")
_NONNEG_INT = ("max_refinements", "seed", "max_tokens_plan", "max_tokens_arbitration", "max_tokens_synthesis")


def validate_config(cfg: PipelineConfig) -> PipelineConfig:
    """Check every field; raise InvalidConfig or ConfigConflict on the first problem."""
    for key in _POSITIVE_INT:
        v = getattr(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise InvalidConfig(key, f"must be an integer >= 1, got {v!r}")
    for key in _NONNEG_INT:
        v = getattr(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise InvalidConfig(key, f"must be an integer >= 0, got {v!r}")
    if not isinstance(cfg.smooth_kernel, int) or isinstance(cfg.smooth_kernel, bool):
        raise InvalidConfig("smooth_kernel", f"must be an integer, got {cfg.smooth_kernel!r}")
    if cfg.smooth_kernel < 1 or cfg.smooth_kernel % 2 == 0:
        raise InvalidConfig("smooth_kernel", f"must be odd and >= 1, got {cfg.smooth_kernel}")
    if not isinstance(cfg.grid_n, int) or isinstance(cfg.grid_n, bool) or cfg.grid_n < 1:
        raise InvalidConfig("grid_n", f"must be an integer >= 1, got {cfg.grid_n!r}")
    if not isinstance(cfg.tau, (int, float)) or isinstance(cfg.tau, bool) or not 0.0 <= cfg.tau <= 1.0:
        raise InvalidConfig("tau", f"out of [0, 1]: {cfg.tau!r}")
    if not isinstance(cfg.temperature, (int, float)) or cfg.temperature < 0.0:
        raise InvalidConfig("temperature", f"must be >= 0, got {cfg.temperature!r}")
    if not isinstance(cfg.request_timeout, (int, float)) or cfg.request_timeout <= 0.0:
        raise InvalidConfig("request_timeout", f"must be > 0, got {cfg.request_timeout!r}")
    if cfg.oracle_sample_size is not None:
        v = cfg.oracle_sample_size
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise InvalidConfig("oracle_sample_size", f"must be an integer >= 1 or null, got {v!r}")

    unknown = set(cfg.ablations) - ABLATION_NAMES
    if unknown:
        raise InvalidConfig("ablations", f"unknown ablation names: {sorted(unknown)}")
    if "no_hap" in cfg.ablations and ("no_spatial" in cfg.ablations or "no_temporal" in cfg.ablations):
        raise ConfigConflict("no_hap disables retrieval entirely; no_spatial/no_temporal cannot combine with it")
    return cfg


def _coerce(key: str, raw: str) -> Any:
    """Convert an environment/file string to the declared field type."""
    if key == "ablations":
        parts = [p.strip() for p in raw.split(",")]
        return frozenset(p for p in parts if p)
    if key in _BOOL_FIELDS:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(key, f"cannot parse boolean from {raw!r}")
    if key in _OPTIONAL_STR_FIELDS:
        return None if raw.strip().lower() in ("", "null", "none") else raw
    if key in _OPTIONAL_INT_FIELDS and raw.strip().lower() in ("", "null", "none"):
        return None
    try:
        if key in _INT_FIELDS or key in _OPTIONAL_INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as exc:
        raise InvalidConfig(key, f"cannot parse {raw!r}: {exc}") from exc
    return raw


def _normalize_value(key: str, value: Any) -> Any:
    if key == "ablations" and not isinstance(value, frozenset):
        if isinstance(value, str):
            return _coerce(key, value)
        if isinstance(value, (list, tuple, set)):
            return frozenset(str(v) for v in value)
        raise InvalidConfig(key, f"expected list of names, got {value!r}")
    return value


def load_config(
    file_path: str | None = None,
    env: dict[str, str] | None = None,
    overrides: dict[str, Any] | None = None,
) -> PipelineConfig:
    """Merge the three layers over the defaults and validate the result.

    Unknown keys in any layer are rejected rather than ignored so typos
    surface immediately.
    """
    merged: dict[str, Any] = {}

    if file_path:
        try:
            with open(file_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InvalidConfig("config_file", f"cannot read {file_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig("config_file", f"invalid JSON in {file_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfig("config_file", "top level must be a JSON object")
        for key, value in data.items():
            if key not in _FIELDS:
                raise InvalidConfig(key, "unknown configuration key in file")
            merged[key] = _normalize_value(key, value)

    env_map = os.environ if env is None else env
    for raw_key, raw_value in env_map.items():
        if not raw_key.startswith(ENV_PREFIX):
            continue
        key = raw_key[len(ENV_PREFIX) :].lower()
        if key not in _FIELDS:
            raise InvalidConfig(key, f"unknown configuration key from {raw_key}")
        merged[key] = _coerce(key, raw_value)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise InvalidConfig(key, "unknown configuration override")
        merged[key] = _normalize_value(key, value)

    cfg = PipelineConfig(**merged)
    return validate_config(cfg)
