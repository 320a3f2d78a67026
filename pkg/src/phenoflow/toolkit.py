"""Builtin tools: the functions the manager lets the model call.

Every handler takes (arguments, ToolContext) and returns a JSON-serialisable
result dict. Handlers that run generated code or produce files list the files
they created under an ``artifacts`` key (paths relative to the session
working directory) and, where a script was involved, carry the final source
under ``script`` so a session can later be summarised into a pipeline.

All paths in tool arguments are resolved against the session working
directory and must stay inside it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import pipelines
from .agents import (
    ScriptTask,
    analyse_plot,
    analyse_table,
    run_script_task,
    run_visualise_task,
    snapshot_tree,
)
from .errors import (
    AdapterError,
    PipelineError,
    ProviderError,
    SandboxViolation,
    ScriptTaskError,
    ValidationError,
)
from .geometry.coco import load_segmentation
from .geometry.traits import compute_phenotypes, write_phenotype_csv
from .llm import ChatProvider
from .pipelines import ParamBinding, PipelineZoo
from .rag import RagStore
from .sandbox import InterpreterProfile, run_sandboxed
from .sessions import SessionStore
from .stats.inference import linear_fit, one_way_anova, pearson, tukey_kramer
from .tools import ModelZoo, ToolParam, ToolRegistry, ToolSpec
from .vision import (
    DATASET_FORMATS,
    TrainingRequest,
    VisionJobs,
    get_dataset_format,
    prepare_dataset,
)

TUKEY_CSV_COLUMNS = ["group_a", "group_b", "mean_diff", "q", "p_adj", "significant"]

_STDOUT_CAP = 4000


@dataclass
class ToolContext:
    """Everything a tool handler may touch for one session."""

    store: SessionStore
    session_id: str
    registry: ToolRegistry
    model_zoo: ModelZoo
    pipeline_zoo: PipelineZoo
    provider: ChatProvider | None = None
    vision: VisionJobs | None = None
    rag: RagStore | None = None
    profile: InterpreterProfile = field(default_factory=InterpreterProfile)
    run_start_seq: int = 0

    @property
    def workdir(self) -> Path:
        return self.store.artifacts_dir(self.session_id)

    def resolve(self, path: str, must_exist: bool = False) -> Path:
        """Join with the working directory; reject anything that escapes it."""
        if not isinstance(path, str) or not path.strip():
            raise ValidationError("path must be a non-empty string")
        base = self.workdir.resolve()
        raw = Path(path)
        candidate = (raw if raw.is_absolute() else base / raw).resolve()
        if candidate != base and base not in candidate.parents:
            raise ValidationError(f"path {path!r} escapes the session working directory")
        if must_exist and not candidate.exists():
            raise ValidationError(f"path not found: {path}")
        return candidate

    def rel(self, path: str | Path) -> str:
        p = Path(path).resolve()
        try:
            return str(p.relative_to(self.workdir.resolve()))
        except ValueError:
            return str(p)

    def require_provider(self) -> ChatProvider:
        if self.provider is None:
            raise ProviderError("no chat provider is configured for this session")
        return self.provider

    def require_vision(self) -> VisionJobs:
        if self.vision is None:
            raise AdapterError("no vision adapter is configured for this session")
        return self.vision

    def require_rag(self) -> RagStore:
        if self.rag is None:
            raise ValidationError("no document index store is configured for this session")
        return self.rag


# ---------------------------------------------------------------------------
# Argument helpers


def _str_arg(args: dict[str, Any], name: str, default: str | None = None) -> str:
    value = args.get(name, default)
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"{name} must be a non-empty string")
    return value


def _optional_str(args: dict[str, Any], name: str) -> str | None:
    value = args.get(name)
    if value is None:
        return None
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"{name} must be a non-empty string when given")
    return value


def _number_arg(args: dict[str, Any], name: str, default: float) -> float:
    value = args.get(name, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number")
    return float(value)


def _int_arg(args: dict[str, Any], name: str, default: int) -> int:
    value = args.get(name, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer")
    return value


def _paths_arg(args: dict[str, Any], name: str) -> list[str]:
    value = args.get(name)
    if isinstance(value, str):
        return [value]
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return list(value)
    raise ValidationError(f"{name} must be a path or a list of paths")


def _read_csv_columns(path: Path, columns: Sequence[str]) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValidationError(
                f"column(s) {missing} not found in {path.name}; available: {header}"
            )
        out: dict[str, list[str]] = {c: [] for c in columns}
        for row in reader:
            for c in columns:
                out[c].append(row[c])
    return out


def _as_floats(values: Sequence[str], column: str) -> list[float]:
    out = []
    for v in values:
        try:
            f = float(v)
        except (TypeError, ValueError):
            raise ValidationError(f"column {column!r} has a non-numeric value {v!r}") from None
        if not math.isfinite(f):
            raise ValidationError(f"column {column!r} has a non-finite value {v!r}")
        out.append(f)
    return out


def _grouped(path: Path, value_column: str, group_column: str) -> dict[str, list[float]]:
    cols = _read_csv_columns(path, [value_column, group_column])
    groups: dict[str, list[float]] = {}
    values = _as_floats(cols[value_column], value_column)
    for label, value in zip(cols[group_column], values):
        groups.setdefault(label, []).append(value)
    return {label: groups[label] for label in sorted(groups)}


# ---------------------------------------------------------------------------
# Vision tools


def _tool_get_model_zoo(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    return {"models": [entry.as_dict() for entry in ctx.model_zoo.entries()]}


def _resolve_file_inputs(ctx: ToolContext, args: dict[str, Any]) -> list[str] | str:
    paths = _paths_arg(args, "file_path")
    resolved = [str(ctx.resolve(p, must_exist=True)) for p in paths]
    if len(resolved) == 1 and resolved[0].endswith((".json", ".csv")):
        return resolved[0]
    return resolved


def _tool_infer_instance_segmentation(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    checkpoint = _str_arg(args, "checkpoint")
    out_dir = ctx.resolve(_str_arg(args, "output_dir"))
    inputs = _resolve_file_inputs(ctx, args)
    vision = ctx.require_vision()
    result_path = vision.infer_instance_segmentation(inputs, checkpoint, out_dir)
    seg = load_segmentation(result_path)
    return {
        "result_path": ctx.rel(result_path),
        "images": len(seg.images),
        "instances": sum(len(v) for v in seg.instances.values()),
        "artifacts": [ctx.rel(result_path)],
    }


def _tool_infer_classification(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    checkpoint = _str_arg(args, "checkpoint")
    save_path = ctx.resolve(_str_arg(args, "save_path"))
    inputs = _resolve_file_inputs(ctx, args)
    vision = ctx.require_vision()
    path = vision.infer_classification(inputs, checkpoint, save_path)
    rows = max(0, sum(1 for _ in open(path)) - 1)
    return {"save_path": ctx.rel(path), "rows": rows, "artifacts": [ctx.rel(path)]}


def _tool_infer_regression(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    checkpoint = _str_arg(args, "checkpoint")
    save_path = ctx.resolve(_str_arg(args, "save_path"))
    inputs = _resolve_file_inputs(ctx, args)
    vision = ctx.require_vision()
    path = vision.infer_regression(inputs, checkpoint, save_path)
    rows = max(0, sum(1 for _ in open(path)) - 1)
    return {"save_path": ctx.rel(path), "rows": rows, "artifacts": [ctx.rel(path)]}


def _tool_compute_phenotypes(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    seg_path = ctx.resolve(_str_arg(args, "ins_seg_result_path"), must_exist=True)
    save_path = ctx.resolve(_str_arg(args, "save_path"))
    pixel_to_cm = _number_arg(args, "pixel_to_cm", 1.0)
    seg = load_segmentation(seg_path)
    records = compute_phenotypes(seg, pixel_to_cm=pixel_to_cm)
    write_phenotype_csv(records, save_path)
    return {
        "save_path": ctx.rel(save_path),
        "rows": len(records),
        "pixel_to_cm": pixel_to_cm,
        "artifacts": [ctx.rel(save_path)],
    }


# ---------------------------------------------------------------------------
# Analysis tools


def _script_result(outcome: Any, extra: dict[str, Any]) -> dict[str, Any]:
    result = {
        "success": True,
        "script": outcome.final_script or "",
        "profile": "python3",
        "stdout": outcome.stdout[-_STDOUT_CAP:],
        "artifacts": list(outcome.artifacts),
    }
    result.update(extra)
    return result


def _tool_coding(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    message = _str_arg(args, "message")
    provider = ctx.require_provider()
    task = ScriptTask(goal=message, profile=ctx.profile)
    outcome = run_script_task(task, provider, ctx.workdir)
    if not outcome.success:
        last = outcome.attempts[-1] if outcome.attempts else None
        detail = (last.stderr or last.stdout)[-800:] if last else "no attempts made"
        raise ScriptTaskError(f"coding task failed: {detail}")
    return _script_result(outcome, {})


def _tool_visualise(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    message = _str_arg(args, "message")
    save_path = _str_arg(args, "save_path")
    ctx.resolve(save_path)
    data_paths = _paths_arg(args, "data_paths") if args.get("data_paths") is not None else []
    for p in data_paths:
        ctx.resolve(p, must_exist=True)
    provider = ctx.require_provider()
    path, outcome = run_visualise_task(
        message, data_paths, save_path, provider, ctx.workdir, profile=ctx.profile
    )
    return _script_result(outcome, {"plot_path": ctx.rel(path)})


def _tool_analyse_table(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    file_path = _str_arg(args, "file_path")
    question = _str_arg(args, "question")
    ctx.resolve(file_path, must_exist=True)
    provider = ctx.require_provider()
    answer = analyse_table(file_path, question, provider, ctx.workdir, profile=ctx.profile)
    return {
        "answer": answer.text,
        "values": answer.values,
        "script": answer.script,
        "profile": "python3",
        "stdout": answer.stdout[-_STDOUT_CAP:],
        "artifacts": [],
    }


def _tool_analyse_plot(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    image_path = _str_arg(args, "image_path")
    question = _str_arg(args, "question")
    ctx.resolve(image_path, must_exist=True)
    provider = ctx.require_provider()
    text = analyse_plot(image_path, question, provider, workdir=ctx.workdir)
    return {"answer": text}


def _tool_anova(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    path = ctx.resolve(_str_arg(args, "file_path"), must_exist=True)
    groups = _grouped(path, _str_arg(args, "value_column"), _str_arg(args, "group_column"))
    res = one_way_anova(groups)
    return {
        "f_stat": res.f_stat,
        "p_value": res.p_value,
        "df_between": res.df_between,
        "df_within": res.df_within,
        "groups": [
            {"label": label, "n": n, "mean": mean}
            for label, mean, n in zip(res.group_labels, res.group_means, res.group_sizes)
        ],
    }


def _tool_tukey(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    path = ctx.resolve(_str_arg(args, "file_path"), must_exist=True)
    alpha = _number_arg(args, "alpha", 0.05)
    groups = _grouped(path, _str_arg(args, "value_column"), _str_arg(args, "group_column"))
    comparisons = tukey_kramer(groups, alpha=alpha)
    result: dict[str, Any] = {
        "alpha": alpha,
        "comparisons": [
            {
                "group_a": c.group_a,
                "group_b": c.group_b,
                "mean_diff": c.mean_diff,
                "q": c.q,
                "p_adj": c.p_adj,
                "significant": c.significant,
            }
            for c in comparisons
        ],
    }
    save_path = _optional_str(args, "save_path")
    if save_path is not None:
        target = ctx.resolve(save_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TUKEY_CSV_COLUMNS)
            for c in comparisons:
                writer.writerow(
                    [c.group_a, c.group_b, f"{c.mean_diff:.6g}", f"{c.q:.6g}",
                     f"{c.p_adj:.6g}", str(c.significant)]
                )
        result["save_path"] = ctx.rel(target)
        result["artifacts"] = [ctx.rel(target)]
    return result


def _xy(args: dict[str, Any], ctx: ToolContext) -> tuple[list[float], list[float]]:
    path = ctx.resolve(_str_arg(args, "file_path"), must_exist=True)
    x_col = _str_arg(args, "x_column")
    y_col = _str_arg(args, "y_column")
    cols = _read_csv_columns(path, [x_col, y_col])
    return _as_floats(cols[x_col], x_col), _as_floats(cols[y_col], y_col)


def _tool_pearson(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    x, y = _xy(args, ctx)
    res = pearson(x, y)
    return {"r": res.r, "p_value": res.p_value, "n": res.n}


def _tool_regression(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    x, y = _xy(args, ctx)
    res = linear_fit(x, y)
    return {
        "slope": res.slope,
        "intercept": res.intercept,
        "r_squared": res.r_squared,
        "p_value": res.p_value,
        "n": res.n,
    }


# ---------------------------------------------------------------------------
# Documents


def _tool_rag_query(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    question = _str_arg(args, "question")
    store = ctx.require_rag()
    index_id = _optional_str(args, "index_id")
    if args.get("document_paths") is not None:
        docs = []
        for p in _paths_arg(args, "document_paths"):
            target = ctx.resolve(p, must_exist=True)
            docs.append((ctx.rel(target), target.read_text()))
        index_id = store.ingest(docs)
    if index_id is None:
        raise ValidationError("rag_query needs either document_paths or an index_id")
    answer = store.answer(index_id, question, ctx.require_provider())
    return {
        "answer": answer.text,
        "index_id": index_id,
        "citations": [
            {
                "chunk_id": sc.chunk_id,
                "doc_id": sc.chunk.doc_id,
                "offset": sc.chunk.offset,
                "score": round(sc.score, 6),
                "text": sc.chunk.text[:200],
            }
            for sc in answer.citations
        ],
    }


# ---------------------------------------------------------------------------
# Training tools


def _tool_get_dataset_format(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    text, schema = get_dataset_format(_str_arg(args, "task_type"))
    return {"text": text, "schema": schema}


def _tool_prepare_dataset(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    root = ctx.resolve(_str_arg(args, "dataset_root"), must_exist=True)
    task_type = _str_arg(args, "task_type")
    val_ratio = _number_arg(args, "val_ratio", 0.2)
    seed = _int_arg(args, "seed", 0)
    report = prepare_dataset(root, task_type, val_ratio=val_ratio, seed=seed)
    result = report.to_dict()
    result["artifacts"] = [ctx.rel(root / "split_report.json")]
    return result


def _tool_train_model(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    request = TrainingRequest(
        dataset_root=str(ctx.resolve(_str_arg(args, "dataset_root"), must_exist=True)),
        task_type=_str_arg(args, "task_type"),
        species=_str_arg(args, "species"),
        task_name=_str_arg(args, "task_name"),
        dataset_name=_str_arg(args, "dataset_name"),
        base_model=_str_arg(args, "base_model", "dinov2b"),
        method=_str_arg(args, "method", "lora"),
        seed=_int_arg(args, "seed", 0),
    )
    vision = ctx.require_vision()
    job_id = vision.train_model(request)
    job = vision.job(job_id)
    return {"job_id": job.job_id, "status": job.status, "identifier": job.identifier}


def _tool_check_training_job(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    job = ctx.require_vision().poll_job(_str_arg(args, "job_id"))
    return {
        "job_id": job.job_id,
        "status": job.status,
        "identifier": job.identifier,
        "metrics": job.metrics,
        "error": job.error,
        "registered": job.registered,
    }


# ---------------------------------------------------------------------------
# Pipeline tools


def tool_runner(ctx: ToolContext) -> Callable[[str, dict[str, Any]], dict[str, Any]]:
    """Step executor that dispatches back through the registry."""

    def run(name: str, arguments: dict[str, Any]) -> dict[str, Any]:
        handler = ctx.registry.handler(name)
        return handler(arguments, ctx)

    return run


def script_runner(ctx: ToolContext) -> Callable[[str, str], dict[str, Any]]:
    """Step executor for stored scripts; sandbox violations abort the replay."""
    counter = {"n": 0}

    def run(source: str, profile: str) -> dict[str, Any]:
        if profile != ctx.profile.name:
            raise PipelineError(
                f"script step needs profile {profile!r}; session runs {ctx.profile.name!r}"
            )
        counter["n"] += 1
        workdir = ctx.workdir
        before = snapshot_tree(workdir)
        result = run_sandboxed(
            source, workdir, ctx.profile, script_name=f"pipeline_step_{counter['n']}.py"
        )
        if result.violation is not None:
            raise SandboxViolation(f"pipeline script tried to access {result.violation}")
        after = snapshot_tree(workdir)
        changed = sorted(rel for rel, meta in after.items() if before.get(rel) != meta)
        detail = "" if result.ok else (result.stderr or result.stdout or "script failed")[-800:]
        return {"ok": result.ok, "detail": detail, "artifacts": changed}

    return run


def _tool_get_pipeline_zoo(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    return {"pipelines": ctx.pipeline_zoo.names()}


def _tool_get_pipeline_info(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    manifest = ctx.pipeline_zoo.get(_str_arg(args, "name"))
    return manifest.info()


def _tool_save_pipeline(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    name = _str_arg(args, "name")
    description = args.get("description", "")
    if not isinstance(description, str):
        raise ValidationError("description must be a string")
    parameterize = args.get("parameterize", {})
    if not isinstance(parameterize, dict):
        raise ValidationError("parameterize must map parameter names to literal values")
    bindings = [ParamBinding(name=k, literal=v) for k, v in parameterize.items()]
    manifest = pipelines.summarise_pipeline(
        ctx.store,
        ctx.session_id,
        name,
        ctx.pipeline_zoo,
        parameterize=bindings,
        description=description,
        upto_seq=ctx.run_start_seq,
    )
    return {
        "name": manifest.name,
        "steps": len(manifest.steps),
        "params": [p.name for p in manifest.params],
    }


def _tool_run_pipeline(args: dict[str, Any], ctx: ToolContext) -> dict[str, Any]:
    name = _str_arg(args, "name")
    arguments = args.get("arguments", {})
    if not isinstance(arguments, dict):
        raise ValidationError("arguments must be an object")
    manifest = ctx.pipeline_zoo.get(name)
    report = pipelines.replay_pipeline(
        manifest, arguments, tool_runner(ctx), script_runner(ctx)
    )
    result = report.to_dict()
    result["artifacts"] = sorted({a for s in report.steps for a in s.artifacts})
    if not report.ok:
        failed = report.failed_step
        if failed is None:
            raise PipelineError(f"pipeline {name!r} failed")
        raise PipelineError(f"pipeline {name!r} failed at step {failed.index}: {failed.detail}")
    return result


# ---------------------------------------------------------------------------
# Registration


def _p(name: str, type_: str, description: str, required: bool = True) -> ToolParam:
    return ToolParam(name=name, type=type_, description=description, required=required)


BUILTIN_TOOLS: list[tuple[ToolSpec, Any]] = [
    (
        ToolSpec(
            name="get_model_zoo",
            description="List the available vision models with their capabilities.",
            params=[],
            category="vision",
        ),
        _tool_get_model_zoo,
    ),
    (
        ToolSpec(
            name="infer_instance_segmentation",
            description=(
                "Run instance segmentation on images (paths, a metadata JSON or a CSV) "
                "and write ins_seg_results.json into output_dir."
            ),
            params=[
                _p("file_path", "paths", "Image paths, or a metadata .json/.csv listing them"),
                _p("checkpoint", "string", "Model identifier from the model zoo"),
                _p("output_dir", "path", "Directory for the segmentation result"),
            ],
            category="vision",
            approval_required=True,
        ),
        _tool_infer_instance_segmentation,
    ),
    (
        ToolSpec(
            name="infer_classification",
            description="Classify images with a zoo model; writes file_name,label,confidence CSV.",
            params=[
                _p("file_path", "paths", "Image paths, or a metadata .json/.csv listing them"),
                _p("checkpoint", "string", "Model identifier from the model zoo"),
                _p("save_path", "path", "Where to write the predictions CSV"),
            ],
            category="vision",
            approval_required=True,
        ),
        _tool_infer_classification,
    ),
    (
        ToolSpec(
            name="infer_regression",
            description="Predict a scalar per image with a zoo model; writes file_name,prediction CSV.",
            params=[
                _p("file_path", "paths", "Image paths, or a metadata .json/.csv listing them"),
                _p("checkpoint", "string", "Model identifier from the model zoo"),
                _p("save_path", "path", "Where to write the predictions CSV"),
            ],
            category="vision",
            approval_required=True,
        ),
        _tool_infer_regression,
    ),
    (
        ToolSpec(
            name="compute_phenotypes_from_ins_seg",
            description=(
                "Compute per-image traits (leaf count, areas, diameter, perimeter, "
                "compactness, stockiness) from a segmentation result and save a CSV."
            ),
            params=[
                _p("ins_seg_result_path", "path", "Path to ins_seg_results.json"),
                _p("save_path", "path", "Where to write the phenotype CSV"),
                _p("pixel_to_cm", "number", "Side length of a pixel in cm", required=False),
            ],
            category="analysis",
            approval_required=True,
        ),
        _tool_compute_phenotypes,
    ),
    (
        ToolSpec(
            name="coding",
            description="Write and run a Python script in the session folder to do a task.",
            params=[_p("message", "string", "What the script should accomplish")],
            category="analysis",
            approval_required=True,
        ),
        _tool_coding,
    ),
    (
        ToolSpec(
            name="visualise",
            description="Create a plot (PNG) from data files via a generated script.",
            params=[
                _p("message", "string", "What to plot"),
                _p("save_path", "path", "Where to save the PNG"),
                _p("data_paths", "paths", "Input data files", required=False),
            ],
            category="analysis",
            approval_required=True,
        ),
        _tool_visualise,
    ),
    (
        ToolSpec(
            name="analyse_table",
            description="Answer a question about a CSV table by running a generated script.",
            params=[
                _p("file_path", "path", "CSV file to analyse"),
                _p("question", "string", "Question about the table"),
            ],
            category="analysis",
            approval_required=True,
        ),
        _tool_analyse_table,
    ),
    (
        ToolSpec(
            name="analyse_plot",
            description="Answer a question about a saved figure using the vision-capable model.",
            params=[
                _p("image_path", "path", "Figure to inspect"),
                _p("question", "string", "Question about the figure"),
            ],
            category="analysis",
        ),
        _tool_analyse_plot,
    ),
    (
        ToolSpec(
            name="anova_test",
            description="One-way ANOVA of a value column across the levels of a group column.",
            params=[
                _p("file_path", "path", "CSV file with the observations"),
                _p("value_column", "string", "Numeric column to compare"),
                _p("group_column", "string", "Column holding the group labels"),
            ],
            category="analysis",
        ),
        _tool_anova,
    ),
    (
        ToolSpec(
            name="tukey_test",
            description="Tukey-Kramer pairwise comparisons after ANOVA; optionally saves a CSV.",
            params=[
                _p("file_path", "path", "CSV file with the observations"),
                _p("value_column", "string", "Numeric column to compare"),
                _p("group_column", "string", "Column holding the group labels"),
                _p("alpha", "number", "Significance level", required=False),
                _p("save_path", "path", "Where to write the comparison CSV", required=False),
            ],
            category="analysis",
        ),
        _tool_tukey,
    ),
    (
        ToolSpec(
            name="pearson_test",
            description="Pearson correlation between two numeric columns of a CSV.",
            params=[
                _p("file_path", "path", "CSV file with the observations"),
                _p("x_column", "string", "First numeric column"),
                _p("y_column", "string", "Second numeric column"),
            ],
            category="analysis",
        ),
        _tool_pearson,
    ),
    (
        ToolSpec(
            name="regression_test",
            description="Ordinary least squares fit of y against x for two CSV columns.",
            params=[
                _p("file_path", "path", "CSV file with the observations"),
                _p("x_column", "string", "Predictor column"),
                _p("y_column", "string", "Response column"),
            ],
            category="analysis",
        ),
        _tool_regression,
    ),
    (
        ToolSpec(
            name="rag_query",
            description="Answer a question from text documents; cites the passages used.",
            params=[
                _p("question", "string", "Question to answer"),
                _p("document_paths", "paths", "Documents to index first", required=False),
                _p("index_id", "string", "Reuse an index built earlier", required=False),
            ],
            category="io",
        ),
        _tool_rag_query,
    ),
    (
        ToolSpec(
            name="get_dataset_format",
            description="Describe the dataset folder layout expected for a training task type.",
            params=[_p("task_type", "string", f"One of {sorted(DATASET_FORMATS)}")],
            category="training",
        ),
        _tool_get_dataset_format,
    ),
    (
        ToolSpec(
            name="prepare_dataset",
            description="Validate a dataset folder and write a deterministic train/val split.",
            params=[
                _p("dataset_root", "path", "Dataset folder"),
                _p("task_type", "string", f"One of {sorted(DATASET_FORMATS)}"),
                _p("val_ratio", "number", "Fraction held out for validation", required=False),
                _p("seed", "integer", "Split seed", required=False),
            ],
            category="training",
            approval_required=True,
        ),
        _tool_prepare_dataset,
    ),
    (
        ToolSpec(
            name="train_model",
            description="Start fine-tuning on a prepared dataset; returns a job id to poll.",
            params=[
                _p("dataset_root", "path", "Dataset folder with a split report"),
                _p("task_type", "string", f"One of {sorted(DATASET_FORMATS)}"),
                _p("species", "string", "Naming token, e.g. wheat"),
                _p("task_name", "string", "Naming token, e.g. spike-detection"),
                _p("dataset_name", "string", "Naming token for the dataset"),
                _p("base_model", "string", "Base model token", required=False),
                _p("method", "string", "lora or full", required=False),
                _p("seed", "integer", "Training seed", required=False),
            ],
            category="training",
            approval_required=True,
        ),
        _tool_train_model,
    ),
    (
        ToolSpec(
            name="check_training_job",
            description="Poll a training job; a finished model is added to the model zoo.",
            params=[_p("job_id", "string", "Job id from train_model")],
            category="training",
        ),
        _tool_check_training_job,
    ),
    (
        ToolSpec(
            name="get_pipeline_zoo",
            description="List the saved pipelines.",
            params=[],
            category="pipeline",
        ),
        _tool_get_pipeline_zoo,
    ),
    (
        ToolSpec(
            name="get_pipeline_info",
            description="Show a saved pipeline's parameters and steps.",
            params=[_p("name", "string", "Pipeline name")],
            category="pipeline",
        ),
        _tool_get_pipeline_info,
    ),
    (
        ToolSpec(
            name="save_pipeline",
            description=(
                "Summarise this session's completed runs into a reusable pipeline; "
                "parameterize maps new parameter names to literal values to replace."
            ),
            params=[
                _p("name", "string", "Name for the new pipeline"),
                _p("description", "string", "One-line description", required=False),
                _p("parameterize", "object", "Parameter name to literal value", required=False),
            ],
            category="pipeline",
            approval_required=True,
        ),
        _tool_save_pipeline,
    ),
    (
        ToolSpec(
            name="run_pipeline",
            description="Replay a saved pipeline with the given parameter values.",
            params=[
                _p("name", "string", "Pipeline name"),
                _p("arguments", "object", "Parameter values", required=False),
            ],
            category="pipeline",
            approval_required=True,
        ),
        _tool_run_pipeline,
    ),
]


def register_builtin_tools(registry: ToolRegistry) -> ToolRegistry:
    """Register every builtin tool spec with its handler; safe to call twice."""
    for spec, handler in BUILTIN_TOOLS:
        registry.register(spec, handler)
    return registry
