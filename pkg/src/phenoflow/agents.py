"""Provider-driven helpers: script tasks, visualisation, table and plot Q&A.

A script task asks the chat provider for a complete Python script, runs it in
the sandbox, and feeds failures back for another attempt, up to a bounded
number of tries. Success means the last attempt exited 0; a sandbox violation
aborts immediately.
"""
from __future__ import annotations

import json
import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import ProviderError, SandboxViolation, ScriptTaskError, ValidationError
from .llm import ChatMessage, ChatProvider, has_terminate
from .prompts import load_prompt
from .sandbox import InterpreterProfile, SandboxResult, run_sandboxed

log = logging.getLogger(__name__)

_CODE_BLOCK_RE = re.compile(r"```(?:python)?[ \t]*\n(.*?)```", re.S)

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")


@dataclass
class ScriptTask:
    goal: str
    context_paths: list[str] = field(default_factory=list)
    max_attempts: int = 3
    profile: InterpreterProfile = field(default_factory=InterpreterProfile)
    system_prompt: str | None = None


@dataclass
class ScriptAttempt:
    script: str
    exit_code: int | None
    stdout: str
    stderr: str
    timed_out: bool = False


@dataclass
class ScriptOutcome:
    attempts: list[ScriptAttempt]
    success: bool
    artifacts: list[str]

    @property
    def final_script(self) -> str | None:
        return self.attempts[-1].script if self.attempts else None

    @property
    def stdout(self) -> str:
        return self.attempts[-1].stdout if self.attempts else ""


def extract_code_block(text: str | None) -> str | None:
    if not text:
        return None
    m = _CODE_BLOCK_RE.search(text)
    return m.group(1) if m else None


def snapshot_tree(workdir: Path) -> dict[str, tuple[int, int]]:
    """Relative file path -> (mtime_ns, size), used to spot files a run changed."""
    out = {}
    for p in workdir.rglob("*"):
        if any(part.startswith(".") for part in p.relative_to(workdir).parts):
            continue
        if p.is_file():
            st = p.stat()
            out[str(p.relative_to(workdir))] = (st.st_mtime_ns, st.st_size)
    return out


def run_script_task(
    task: ScriptTask, provider: ChatProvider, workdir: str | Path
) -> ScriptOutcome:
    """Drive the code-writing loop until success, terminate, or attempts run out."""
    wd = Path(workdir)
    if not wd.is_dir():
        raise ValidationError(f"script task working directory does not exist: {wd}")
    missing = [p for p in task.context_paths if not (wd / p).exists() and not Path(p).exists()]
    if missing:
        raise ValidationError(f"script task context paths not found: {missing}")

    system = task.system_prompt or load_prompt("code_writer")
    user_lines = [task.goal]
    if task.context_paths:
        user_lines.append("Input files: " + ", ".join(str(p) for p in task.context_paths))
    user_lines.append(
        "The script runs with its working directory set to the session folder; "
        "use relative paths."
    )
    messages: list[ChatMessage] = [
        ChatMessage(role="system", content=system),
        ChatMessage(role="user", content="\n".join(user_lines)),
    ]

    attempts: list[ScriptAttempt] = []
    artifacts: list[str] = []
    before = snapshot_tree(wd)
    for attempt_no in range(1, task.max_attempts + 1):
        turn = provider.chat(messages)
        code = extract_code_block(turn.text)
        if code is None:
            if has_terminate(turn.text):
                break
            attempts.append(
                ScriptAttempt(script="", exit_code=None, stdout="", stderr="no code block found")
            )
            messages.append(ChatMessage(role="assistant", content=turn.text))
            messages.append(
                ChatMessage(
                    role="user",
                    content="No fenced code block found; reply with one complete Python script.",
                )
            )
            continue
        result: SandboxResult = run_sandboxed(
            code, wd, task.profile, script_name=f"attempt_{attempt_no}.py"
        )
        if result.violation is not None:
            raise SandboxViolation(f"script tried to access {result.violation}")
        attempts.append(
            ScriptAttempt(
                script=code,
                exit_code=result.exit_code,
                stdout=result.stdout,
                stderr=result.stderr,
                timed_out=result.timed_out,
            )
        )
        if result.ok:
            break
        messages.append(ChatMessage(role="assistant", content=turn.text))
        feedback = result.stderr.strip() or result.stdout.strip() or "no output"
        if result.timed_out:
            feedback = f"the script timed out after {task.profile.timeout_s}s\n" + feedback
        messages.append(
            ChatMessage(
                role="user",
                content="The script failed. Fix it and return the complete script.\n" + feedback[-4000:],
            )
        )

    after = snapshot_tree(wd)
    for rel, meta in after.items():
        if before.get(rel) != meta:
            artifacts.append(rel)
    artifacts.sort()
    success = bool(attempts) and attempts[-1].exit_code == 0 and not attempts[-1].timed_out
    return ScriptOutcome(attempts=attempts, success=success, artifacts=artifacts)


def _png_dimensions(path: Path) -> tuple[int, int]:
    data = path.read_bytes()
    if len(data) < 24 or data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValidationError(f"{path} is not a PNG file")
    width, height = struct.unpack(">II", data[16:24])
    return width, height


def visualise(
    goal: str,
    data_paths: Sequence[str],
    output_path: str,
    provider: ChatProvider,
    workdir: str | Path,
    style: str | None = None,
    max_attempts: int = 3,
    profile: InterpreterProfile | None = None,
) -> str:
    """Produce a plot at ``output_path`` via a script task; validates the PNG."""
    path, _ = run_visualise_task(
        goal, data_paths, output_path, provider, workdir,
        style=style, max_attempts=max_attempts, profile=profile,
    )
    return path


def run_visualise_task(
    goal: str,
    data_paths: Sequence[str],
    output_path: str,
    provider: ChatProvider,
    workdir: str | Path,
    style: str | None = None,
    max_attempts: int = 3,
    profile: InterpreterProfile | None = None,
) -> tuple[str, ScriptOutcome]:
    """Like visualise, but also hands back the script outcome."""
    wd = Path(workdir)
    for p in data_paths:
        if not (wd / p).exists() and not Path(p).exists():
            raise ValidationError(f"visualise input not found: {p}")
    lines = [goal, f"Save the figure to {output_path} (PNG)."]
    if style:
        lines.append("Style requirements: " + style)
    task = ScriptTask(
        goal="\n".join(lines),
        context_paths=list(data_paths),
        max_attempts=max_attempts,
        system_prompt=load_prompt("data_visualiser"),
        profile=profile or InterpreterProfile(),
    )
    outcome = run_script_task(task, provider, wd)
    if not outcome.success:
        detail = outcome.attempts[-1].stderr[-500:] if outcome.attempts else "no attempts"
        raise ScriptTaskError(f"visualisation script did not succeed: {detail}")
    out = wd / output_path if not Path(output_path).is_absolute() else Path(output_path)
    if not out.is_file():
        raise ScriptTaskError(f"declared output image was not created: {output_path}")
    width, height = _png_dimensions(out)
    if width == 0 or height == 0:
        raise ScriptTaskError(f"output image has empty dimensions: {output_path}")
    return str(out), outcome


@dataclass
class TableAnswer:
    text: str
    values: list[float]
    stdout: str
    script: str = ""


def analyse_table(
    csv_path: str,
    question: str,
    provider: ChatProvider,
    workdir: str | Path,
    max_attempts: int = 3,
    profile: InterpreterProfile | None = None,
) -> TableAnswer:
    """Answer a question about a CSV by generating and running a script.

    The script is asked to print a line starting with ``ANSWER:``; numbers on
    that line are extracted into the structured values field.
    """
    wd = Path(workdir)
    target = wd / csv_path if not Path(csv_path).is_absolute() else Path(csv_path)
    if not target.is_file():
        raise ValidationError(f"csv file not found: {csv_path}")
    with open(target) as fh:
        header = fh.readline()
    if not header.strip() or "," not in header and len(header.split()) > 1:
        raise ValidationError(f"{csv_path} does not look like a CSV table")

    goal = (
        f"Answer the following question about the table {csv_path}:\n{question}\n"
        "Print exactly one line starting with 'ANSWER:' containing the answer "
        "and the computed values."
    )
    task = ScriptTask(
        goal=goal,
        context_paths=[csv_path],
        max_attempts=max_attempts,
        profile=profile or InterpreterProfile(),
    )
    outcome = run_script_task(task, provider, wd)
    if not outcome.success:
        detail = outcome.attempts[-1].stderr[-800:] if outcome.attempts else "no attempts"
        raise ScriptTaskError(f"table analysis failed: {detail}")
    answer_lines = [l for l in outcome.stdout.splitlines() if l.startswith("ANSWER:")]
    text = answer_lines[-1][len("ANSWER:") :].strip() if answer_lines else outcome.stdout.strip()
    values = [float(v) for v in _NUMBER_RE.findall(text)]
    return TableAnswer(
        text=text, values=values, stdout=outcome.stdout, script=outcome.final_script or ""
    )


def analyse_plot(
    image_path: str, question: str, provider: ChatProvider, workdir: str | Path | None = None
) -> str:
    """Ask a vision-capable provider about a figure; returns its text verbatim."""
    base = Path(workdir) if workdir else Path.cwd()
    target = base / image_path if not Path(image_path).is_absolute() else Path(image_path)
    if not target.is_file():
        raise ValidationError(f"image not found: {image_path}")
    if target.stat().st_size == 0:
        raise ValidationError(f"image is empty: {image_path}")
    if not getattr(provider, "supports_vision", False):
        raise ProviderError("the configured provider cannot accept images")
    turn = provider.chat(
        [
            ChatMessage(role="system", content=load_prompt("plot_analyser")),
            ChatMessage(role="user", content=question, attachments=[str(target)]),
        ]
    )
    return turn.text or ""
