"""Prompt template loading and slot filling.

Templates ship with the package as plain text files; a config-provided
directory overrides any of them by filename. Slot markers are literal
tokens replaced by str.replace, no templating engine.
"""

import os

from .errors import EvflowError

_BUILTIN_DIR = os.path.join(os.path.dirname(__file__), "templates")

TEMPLATE_NAMES = (
    "planner",
    "refinement",
    "arbitration",
    "synthesis",
    "oracle_system",
    "oracle_user",
)

# Inserted into the oracle user prompt only when judging a zoomed crop.
CONTEXT_NOTE = "Note: This image is a zoomed-in crop focusing on specific fine-grained details."


def load_template(name: str, prompt_dir: str | None = None) -> str:
    if name not in TEMPLATE_NAMES:
        raise EvflowError(f"unknown prompt template {name!r}")
    filename = f"{name}.txt"
    if prompt_dir:
        override = os.path.join(prompt_dir, filename)
        if os.path.isfile(override):
            with open(override, encoding="utf-8") as fh:
                return fh.read()
    with open(os.path.join(_BUILTIN_DIR, filename), encoding="utf-8") as fh:
        return fh.read()


def fill(template: str, slots: dict[str, str]) -> str:
    """Replace each literal marker with its value. Unknown markers in the
    template are left as-is; every provided slot must exist."""
    out = template
    for marker, value in slots.items():
        if marker not in out:
            raise EvflowError(f"template has no slot {marker!r}")
        out = out.replace(marker, value)
    return out


def oracle_user_prompt(query: str, context_note: str | None, prompt_dir: str | None = None) -> str:
    """The oracle judge's user turn. Without a context note the whole
    Image Context line is dropped, matching the baseline protocol."""
    template = load_template("oracle_user", prompt_dir)
    template = template.replace("{q_txt}", query)
    if context_note is None:
        lines = [ln for ln in template.splitlines() if "{Context_Note}" not in ln]
        return "\n".join(lines) + ("\n" if template.endswith("\n") else "")
    return template.replace("{Context_Note}", context_note)
