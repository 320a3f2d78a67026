"""Loading of the packaged agent system prompts.

Prompts live as plain text files under ``assets/prompts`` so that they can be
inspected and edited without touching code. Deployments may override any of
them by pointing ``prompt_dir`` at a directory containing files with the same
names.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ValidationError

PROMPT_NAMES = (
    "manager",
    "code_writer",
    "data_visualiser",
    "plot_analyser",
    "pipeline_summariser",
    "rag_agent",
)


def load_prompt(name: str, prompt_dir: str | Path | None = None) -> str:
    """Return the system prompt text for ``name``.

    When ``prompt_dir`` is given, ``{prompt_dir}/{name}.txt`` takes precedence
    over the packaged asset. A missing override file falls back to the packaged
    copy; a name that exists in neither place raises ``ValidationError``.
    """
    if prompt_dir is not None:
        candidate = Path(prompt_dir) / f"{name}.txt"
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    try:
        ref = resources.files("phenoflow.assets.prompts") / f"{name}.txt"
        return ref.read_text(encoding="utf-8")
    except (FileNotFoundError, ModuleNotFoundError):
        raise ValidationError(f"unknown prompt: {name!r}") from None
