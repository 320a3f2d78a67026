"""Client side of the vision-adapter protocol plus dataset and training jobs.

Adapters are separate processes (or in-process test doubles) spoken to with
newline-delimited JSON requests ``{id, op, payload}`` answered by
``{id, ok, payload|error}``. Image bytes never travel over the wire; requests
carry filesystem paths. Every adapter is handshaked for its capabilities
before the first real request, and every inference result is schema-validated
before any artifact is written, so a misbehaving adapter can never leave a
partial output file behind.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import queue
import random
import struct
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Protocol, Sequence

from .errors import (
    AdapterError,
    AdapterOutputError,
    CapabilityError,
    DatasetLayoutError,
    RegistryError,
    ValidationError,
)
from .geometry import coco
from .tools import ModelZoo, ModelZooEntry, compose_model_id

TASK_TYPES = ("instance_segmentation", "classification", "regression")

CAPABILITY_FOR_TASK = {
    "instance_segmentation": "segment",
    "classification": "classify",
    "regression": "regress",
}

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

JOB_STATUSES = ("queued", "running", "succeeded", "failed")
_STATUS_RANK = {"queued": 0, "running": 1, "succeeded": 2, "failed": 2}

SEGMENTATION_RESULT_NAME = "ins_seg_results.json"


def canonical_json(obj: Any) -> str:
    """Whitespace-free, key-sorted serialization used for byte comparisons."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _png_dimensions(path: Path) -> tuple[int, int] | None:
    try:
        with open(path, "rb") as fh:
            head = fh.read(24)
    except OSError:
        return None
    if len(head) < 24 or head[:8] != b"\x89PNG\r\n\x1a\n":
        return None
    width, height = struct.unpack(">II", head[16:24])
    return int(width), int(height)


# ---------------------------------------------------------------------------
# Transports


class Transport(Protocol):
    def request(self, req: dict[str, Any]) -> dict[str, Any]:
        ...

    def close(self) -> None:
        ...


class InProcessTransport:
    """Wraps an adapter object directly; requests and responses round-trip
    through JSON so that anything non-serializable fails here, not later on a
    real wire."""

    def __init__(self, adapter: Any):
        self.adapter = adapter

    def request(self, req: dict[str, Any]) -> dict[str, Any]:
        wire_req = json.loads(json.dumps(req))
        resp = self.adapter.handle(wire_req)
        return json.loads(json.dumps(resp))

    def close(self) -> None:
        pass


class SubprocessTransport:
    """One adapter process, newline-delimited JSON over stdin/stdout.

    The process is started lazily and kept alive between requests. stdout and
    stderr are drained by background threads so a chatty adapter cannot
    deadlock on a full pipe; the stderr tail is kept for error reports.
    """

    def __init__(self, command: Sequence[str], cwd: str | Path | None = None, timeout_s: float = 60.0):
        if not command:
            raise ValidationError("adapter command must be non-empty")
        self.command = [str(c) for c in command]
        self.cwd = str(cwd) if cwd is not None else None
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen[str] | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr_tail: deque[str] = deque(maxlen=200)
        self._lock = threading.Lock()

    def _ensure_started(self) -> subprocess.Popen[str]:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=self.cwd,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start adapter {self.command[0]!r}: {exc}") from exc
        self._lines = queue.Queue()
        self._stderr_tail = deque(maxlen=200)
        threading.Thread(target=self._pump_stdout, args=(self._proc,), daemon=True).start()
        threading.Thread(target=self._pump_stderr, args=(self._proc,), daemon=True).start()
        return self._proc

    def _pump_stdout(self, proc: subprocess.Popen[str]) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self, proc: subprocess.Popen[str]) -> None:
        assert proc.stderr is not None
        for line in proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))

    def _stderr_excerpt(self) -> str:
        return "\n".join(list(self._stderr_tail)[-20:])

    def request(self, req: dict[str, Any]) -> dict[str, Any]:
        with self._lock:
            proc = self._ensure_started()
            assert proc.stdin is not None
            try:
                proc.stdin.write(json.dumps(req) + "\n")
                proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise AdapterError(
                    f"adapter process is not accepting requests: {exc}\n{self._stderr_excerpt()}"
                ) from exc
            while True:
                try:
                    line = self._lines.get(timeout=self.timeout_s)
                except queue.Empty:
                    self.close()
                    raise AdapterError(
                        f"adapter did not answer within {self.timeout_s}s"
                    ) from None
                if line is None:
                    rc = proc.wait()
                    raise AdapterError(
                        f"adapter process exited with code {rc}\n{self._stderr_excerpt()}"
                    )
                if not line.strip():
                    continue
                try:
                    return json.loads(line)
                except ValueError as exc:
                    raise AdapterError(
                        f"adapter wrote a non-JSON line: {line.strip()[:200]}"
                    ) from exc

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None or proc.poll() is not None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.terminate()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()

    def __enter__(self) -> "SubprocessTransport":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


class HttpTransport:
    """POSTs each request to ``{base_url}/rpc``."""

    def __init__(self, base_url: str, timeout_s: float = 60.0):
        if not base_url:
            raise ValidationError("adapter base_url must be non-empty")
        self.url = base_url.rstrip("/") + "/rpc"
        self.timeout_s = timeout_s

    def request(self, req: dict[str, Any]) -> dict[str, Any]:
        import httpx

        try:
            resp = httpx.post(self.url, json=req, timeout=self.timeout_s)
        except httpx.HTTPError as exc:
            raise AdapterError(f"adapter request failed: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterError(f"adapter returned HTTP {resp.status_code}: {resp.text[:300]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise AdapterError(f"adapter returned non-JSON body: {resp.text[:200]}") from exc

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Client


class AdapterClient:
    """Envelope handling and the capabilities handshake over one transport."""

    def __init__(self, transport: Transport):
        self.transport = transport
        self.info: dict[str, Any] = {}
        self._capabilities: frozenset[str] | None = None
        self._counter = 0

    def request(self, op: str, payload: dict[str, Any]) -> dict[str, Any]:
        self._counter += 1
        rid = f"req-{self._counter}"
        resp = self.transport.request({"id": rid, "op": op, "payload": payload})
        if not isinstance(resp, dict):
            raise AdapterError(f"adapter response to {op!r} is not an object")
        if resp.get("id") != rid:
            raise AdapterError(
                f"adapter answered id {resp.get('id')!r} for request {rid!r}"
            )
        ok = resp.get("ok")
        if not isinstance(ok, bool):
            raise AdapterError(f"adapter response to {op!r} lacks a boolean 'ok'")
        if not ok:
            err = resp.get("error")
            if isinstance(err, dict):
                message = str(err.get("message", err))
            else:
                message = str(err) if err else "no error detail"
            raise AdapterError(f"adapter rejected {op!r}: {message}")
        out = resp.get("payload")
        if not isinstance(out, dict):
            raise AdapterError(f"adapter response to {op!r} lacks a payload object")
        return out

    def capabilities(self) -> frozenset[str]:
        if self._capabilities is None:
            payload = self.request("capabilities", {})
            caps = payload.get("capabilities")
            if (
                not isinstance(caps, list)
                or not caps
                or not all(isinstance(c, str) for c in caps)
            ):
                raise AdapterError("capabilities handshake must list at least one capability")
            self.info = {k: v for k, v in payload.items() if k != "capabilities"}
            self._capabilities = frozenset(caps)
        return self._capabilities

    def require(self, capability: str) -> None:
        if capability not in self.capabilities():
            raise CapabilityError(f"adapter does not offer the {capability!r} capability")

    def close(self) -> None:
        self.transport.close()


# ---------------------------------------------------------------------------
# Input resolution


@dataclass
class ImageInput:
    file_name: str
    path: str
    width: int | None = None
    height: int | None = None

    def wire(self) -> dict[str, Any]:
        return {
            "file_name": self.file_name,
            "path": self.path,
            "width": self.width,
            "height": self.height,
        }


def _dims_for(path: Path, width: Any, height: Any, label: str) -> tuple[int | None, int | None]:
    if width is not None and height is not None:
        w, h = int(width), int(height)
        if w <= 0 or h <= 0:
            raise ValidationError(f"{label}: width/height must be positive")
        return w, h
    dims = _png_dimensions(path)
    return dims if dims is not None else (None, None)


def resolve_image_inputs(
    inputs: str | Sequence[str], base_dir: str | Path | None = None
) -> list[ImageInput]:
    """Normalize the accepted input forms into a list of existing images.

    ``inputs`` is either a list of image paths, a JSON manifest (``{"images":
    [{file_name, width?, height?}, ...]}`` or a plain list), or a CSV with a
    ``file_name`` column. Manifest-relative names are resolved against the
    manifest's directory; plain paths against ``base_dir``.
    """
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    def resolve(name: str, root: Path) -> Path:
        p = Path(name)
        out = p if p.is_absolute() else root / p
        if not out.is_file():
            raise ValidationError(f"input image not found: {name}")
        return out

    if not isinstance(inputs, str):
        paths = list(inputs)
        if not all(isinstance(p, str) for p in paths):
            raise ValidationError("image list entries must be strings")
        out = []
        for name in paths:
            p = resolve(name, base)
            w, h = _dims_for(p, None, None, name)
            out.append(ImageInput(file_name=Path(name).name, path=str(p), width=w, height=h))
        return out

    manifest = Path(inputs)
    if not manifest.is_absolute():
        manifest = base / manifest
    if not manifest.is_file():
        raise ValidationError(f"input manifest not found: {inputs}")
    root = manifest.parent
    suffix = manifest.suffix.lower()
    entries: list[dict[str, Any]]
    if suffix == ".json":
        try:
            doc = json.loads(manifest.read_text())
        except ValueError as exc:
            raise ValidationError(f"input manifest is not valid JSON: {exc}") from exc
        raw = doc.get("images") if isinstance(doc, dict) else doc
        if not isinstance(raw, list):
            raise ValidationError("input manifest must hold a list of images")
        entries = []
        for item in raw:
            if isinstance(item, str):
                entries.append({"file_name": item})
            elif isinstance(item, dict) and item.get("file_name"):
                entries.append(item)
            else:
                raise ValidationError(f"bad manifest image entry: {item!r}")
    elif suffix == ".csv":
        with open(manifest, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "file_name" not in reader.fieldnames:
                raise ValidationError(f"{inputs} needs a 'file_name' column")
            entries = [dict(row) for row in reader]
    elif suffix in IMAGE_SUFFIXES:
        p = resolve(inputs, base)
        w, h = _dims_for(p, None, None, inputs)
        return [ImageInput(file_name=Path(inputs).name, path=str(p), width=w, height=h)]
    else:
        raise ValidationError(
            f"cannot interpret input {inputs!r}; pass image paths or a .json/.csv manifest"
        )

    out = []
    for item in entries:
        name = str(item["file_name"])
        p = resolve(name, root)
        w, h = _dims_for(p, item.get("width") or None, item.get("height") or None, name)
        out.append(ImageInput(file_name=name, path=str(p), width=w, height=h))
    return out


# ---------------------------------------------------------------------------
# Inference


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".part")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class VisionJobs:
    """Inference dispatch plus training-job orchestration for one adapter."""

    def __init__(self, client: AdapterClient, zoo: ModelZoo, allow_concurrent_jobs: bool = False):
        self.client = client
        self.zoo = zoo
        self.allow_concurrent_jobs = allow_concurrent_jobs
        self._jobs: dict[str, TrainingJob] = {}

    def _checkpoint(self, checkpoint: str, capability: str) -> ModelZooEntry:
        entry = self.zoo.resolve_checkpoint(checkpoint)
        if capability not in entry.capabilities:
            raise CapabilityError(
                f"checkpoint {entry.identifier!r} does not support {capability!r}"
            )
        self.client.require(capability)
        return entry

    def infer_instance_segmentation(
        self,
        inputs: str | Sequence[str],
        checkpoint: str,
        output_dir: str | Path,
        base_dir: str | Path | None = None,
    ) -> Path:
        """Run segmentation and write ``{output_dir}/ins_seg_results.json``."""
        entry = self._checkpoint(checkpoint, "segment")
        images = resolve_image_inputs(inputs, base_dir)
        if not images:
            raise ValidationError("instance segmentation needs at least one input image")
        payload = {
            "task": "instance_segmentation",
            "checkpoint": entry.checkpoint_ref,
            "images": [im.wire() for im in images],
        }
        result = self.client.request("infer", payload)
        try:
            parsed = coco.parse_segmentation(result)
        except ValidationError as exc:
            raise AdapterOutputError(f"adapter segmentation output is invalid: {exc}") from exc
        got = {im.file_name for im in parsed.images}
        want = {im.file_name for im in images}
        if got != want:
            raise AdapterOutputError(
                f"adapter covered images {sorted(got)} but {sorted(want)} were requested"
            )
        out_dir = Path(output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / SEGMENTATION_RESULT_NAME
        _atomic_write_text(out_path, json.dumps(result, indent=2) + "\n")
        return out_path

    def _infer_tabular(
        self,
        task: str,
        columns: tuple[str, ...],
        inputs: str | Sequence[str],
        checkpoint: str,
        output_path: str | Path,
        base_dir: str | Path | None,
    ) -> Path:
        entry = self._checkpoint(checkpoint, CAPABILITY_FOR_TASK[task])
        images = resolve_image_inputs(inputs, base_dir) if inputs else []
        out_path = Path(output_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        if not images:
            _atomic_write_text(out_path, ",".join(columns) + "\r\n")
            return out_path
        payload = {
            "task": task,
            "checkpoint": entry.checkpoint_ref,
            "images": [im.wire() for im in images],
        }
        result = self.client.request("infer", payload)
        rows = result.get("rows")
        if not isinstance(rows, list):
            raise AdapterOutputError(f"adapter {task} output lacks a 'rows' list")
        by_name: dict[str, dict[str, Any]] = {}
        for row in rows:
            if not isinstance(row, dict) or "file_name" not in row:
                raise AdapterOutputError(f"bad {task} row: {row!r}")
            name = str(row["file_name"])
            if name in by_name:
                raise AdapterOutputError(f"adapter answered twice for {name!r}")
            for col in columns[1:]:
                if col not in row:
                    raise AdapterOutputError(f"{task} row for {name!r} lacks {col!r}")
            if "confidence" in columns:
                conf = float(row["confidence"])
                if not (0.0 <= conf <= 1.0):
                    raise AdapterOutputError(f"confidence {conf} outside [0, 1] for {name!r}")
            if "prediction" in columns:
                pred = float(row["prediction"])
                if pred != pred or pred in (float("inf"), float("-inf")):
                    raise AdapterOutputError(f"non-finite prediction for {name!r}")
            by_name[name] = row
        missing = [im.file_name for im in images if im.file_name not in by_name]
        if missing:
            raise AdapterOutputError(f"adapter skipped inputs: {missing}")
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(columns)
        for im in images:
            row = by_name[im.file_name]
            writer.writerow([row.get(c, "") for c in columns])
        _atomic_write_text(out_path, buf.getvalue())
        return out_path

    def infer_classification(
        self,
        inputs: str | Sequence[str],
        checkpoint: str,
        output_path: str | Path,
        base_dir: str | Path | None = None,
    ) -> Path:
        return self._infer_tabular(
            "classification",
            ("file_name", "label", "confidence"),
            inputs,
            checkpoint,
            output_path,
            base_dir,
        )

    def infer_regression(
        self,
        inputs: str | Sequence[str],
        checkpoint: str,
        output_path: str | Path,
        base_dir: str | Path | None = None,
    ) -> Path:
        return self._infer_tabular(
            "regression",
            ("file_name", "prediction"),
            inputs,
            checkpoint,
            output_path,
            base_dir,
        )

    # -- training ----------------------------------------------------------

    def train_model(self, request: "TrainingRequest") -> str:
        """Hand a training job to the adapter; returns the job id."""
        request.validate()
        root = Path(request.dataset_root)
        if not (root / SPLIT_REPORT_NAME).is_file():
            raise DatasetLayoutError(
                f"no split report at {root / SPLIT_REPORT_NAME}; run prepare_dataset first"
            )
        self.client.require("train")
        if not self.allow_concurrent_jobs:
            active = [j.job_id for j in self._jobs.values() if j.status in ("queued", "running")]
            if active:
                raise AdapterError(
                    f"training job {active[0]} is still active on this adapter"
                )
        payload = {
            "task": request.task_type,
            "dataset_root": str(root),
            "base_model": request.base_model,
            "method": request.method,
            "augmentation": dict(request.augmentation),
            "seed": request.seed,
        }
        result = self.client.request("train", payload)
        job_id = result.get("job_id")
        status = result.get("status", "queued")
        if not isinstance(job_id, str) or not job_id:
            raise AdapterError("adapter did not return a job id")
        if status not in JOB_STATUSES:
            raise AdapterError(f"adapter reported unknown job status {status!r}")
        self._jobs[job_id] = TrainingJob(
            job_id=job_id,
            task_type=request.task_type,
            dataset_root=str(root),
            method=request.method,
            base_model=request.base_model,
            status=status,
            identifier=request.identifier(),
            naming=request,
        )
        return job_id

    def poll_job(self, job_id: str) -> "TrainingJob":
        """Refresh a job's status; a success registers the new zoo entry."""
        job = self._jobs.get(job_id)
        if job is None:
            raise RegistryError(f"unknown training job {job_id!r}")
        result = self.client.request("job_status", {"job_id": job_id})
        status = result.get("status")
        if status not in JOB_STATUSES:
            raise AdapterError(f"adapter reported unknown job status {status!r}")
        if _STATUS_RANK[status] < _STATUS_RANK[job.status]:
            raise AdapterError(
                f"job {job_id} went backwards from {job.status!r} to {status!r}"
            )
        job.status = status
        if status == "failed":
            job.error = str(result.get("error", "no detail from adapter"))
        if status == "succeeded":
            metrics = result.get("metrics") or {}
            if not isinstance(metrics, dict):
                raise AdapterError("job metrics must be an object")
            job.metrics = {str(k): float(v) for k, v in metrics.items()}
            if not job.registered:
                self._register_trained(job)
                job.registered = True
        return self._snapshot(job)

    def _register_trained(self, job: "TrainingJob") -> None:
        if job.identifier in self.zoo:
            return
        naming = job.naming
        self.zoo.register(
            ModelZooEntry(
                species=naming.species,
                task=naming.task_name,
                model=naming.base_model,
                dataset=naming.dataset_name,
                finetune=naming.method,
                capabilities=[CAPABILITY_FOR_TASK[job.task_type]],
                description=f"trained on {job.dataset_root} ({job.method})",
                metrics=dict(job.metrics),
            )
        )

    @staticmethod
    def _snapshot(job: "TrainingJob") -> "TrainingJob":
        return replace(job, metrics=dict(job.metrics))

    def job(self, job_id: str) -> "TrainingJob":
        job = self._jobs.get(job_id)
        if job is None:
            raise RegistryError(f"unknown training job {job_id!r}")
        return self._snapshot(job)


@dataclass
class TrainingRequest:
    """Everything needed to launch and later catalogue a training job."""

    dataset_root: str
    task_type: str
    species: str
    task_name: str
    dataset_name: str
    base_model: str
    method: str
    augmentation: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise ValidationError(
                f"unknown task type {self.task_type!r}; expected one of {', '.join(TASK_TYPES)}"
            )
        if self.method not in ("lora", "full"):
            raise ValidationError(f"method must be 'lora' or 'full', not {self.method!r}")
        self.identifier()

    def identifier(self) -> str:
        return compose_model_id(
            self.species,
            self.task_name,
            self.base_model,
            dataset=self.dataset_name,
            finetune=self.method,
        )


@dataclass
class TrainingJob:
    job_id: str
    task_type: str
    dataset_root: str
    method: str
    base_model: str
    status: str
    identifier: str
    naming: TrainingRequest
    metrics: dict[str, float] = field(default_factory=dict)
    error: str | None = None
    registered: bool = False


# ---------------------------------------------------------------------------
# Dataset formats and preparation

SPLIT_REPORT_NAME = "split_report.json"

DATASET_FORMATS: dict[str, dict[str, Any]] = {
    "classification": {
        "task_type": "classification",
        "layouts": [
            {
                "kind": "folders",
                "pattern": "{root}/{class_name}/*.png|*.jpg",
                "note": "one folder per class with the class images inside",
            },
            {
                "kind": "csv",
                "file": "labels.csv",
                "columns": ["file_name", "label"],
                "note": "images under {root}/images/ with a labels table at the root",
            },
        ],
    },
    "regression": {
        "task_type": "regression",
        "layouts": [
            {
                "kind": "csv",
                "file": "values.csv",
                "columns": ["file_name", "value"],
                "note": "numeric value per image; images under {root}/images/",
            }
        ],
    },
    "instance_segmentation": {
        "task_type": "instance_segmentation",
        "layouts": [
            {
                "kind": "coco",
                "images_dir": "images/",
                "annotations_file": "annotations.json",
                "note": "COCO-style annotations referencing the images directory",
            }
        ],
    },
}


def get_dataset_format(task_type: str) -> tuple[str, dict[str, Any]]:
    """Return (instruction text, layout schema) for a training task type.

    The text is rendered from the schema so the two cannot drift apart.
    """
    schema = DATASET_FORMATS.get(task_type)
    if schema is None:
        raise ValidationError(
            f"unknown task type {task_type!r}; expected one of {', '.join(TASK_TYPES)}"
        )
    lines = [f"Expected dataset layout for {task_type}:"]
    for layout in schema["layouts"]:
        kind = layout["kind"]
        if kind == "folders":
            lines.append(f"- {layout['pattern']} ({layout['note']})")
        elif kind == "csv":
            cols = ", ".join(layout["columns"])
            lines.append(f"- {{root}}/{layout['file']} with columns {cols} ({layout['note']})")
        else:
            lines.append(
                f"- {{root}}/{layout['images_dir']} plus {{root}}/{layout['annotations_file']}"
                f" ({layout['note']})"
            )
    return "\n".join(lines), schema


@dataclass
class SplitReport:
    task_type: str
    seed: int
    ratio: float
    train: list[str]
    val: list[str]
    per_class: dict[str, dict[str, int]]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_type": self.task_type,
            "seed": self.seed,
            "ratio": self.ratio,
            "train": list(self.train),
            "val": list(self.val),
            "per_class": {k: dict(v) for k, v in self.per_class.items()},
            "warnings": list(self.warnings),
        }


def _image_files(directory: Path) -> list[str]:
    return sorted(
        p.name for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )


def _split_one_class(
    names: list[str], ratio: float, seed: int, class_name: str
) -> tuple[list[str], list[str], str | None]:
    rng = random.Random(f"{seed}/{class_name}")
    shuffled = sorted(names)
    rng.shuffle(shuffled)
    n_val = int(round(ratio * len(names)))
    n_val = min(n_val, len(names) - 1)
    warning = None
    if len(names) == 1:
        warning = f"class {class_name!r} has a single image; it was assigned to train"
    return sorted(shuffled[n_val:]), sorted(shuffled[:n_val]), warning


def _classification_classes(root: Path) -> dict[str, list[str]]:
    labels_csv = root / "labels.csv"
    if labels_csv.is_file():
        classes: dict[str, list[str]] = {}
        with open(labels_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or {"file_name", "label"} - set(reader.fieldnames):
                raise DatasetLayoutError(f"{labels_csv} needs columns file_name,label")
            for row in reader:
                name, label = row["file_name"], row["label"]
                target = root / "images" / name
                if not target.is_file():
                    raise DatasetLayoutError(f"labelled image missing: {target}")
                classes.setdefault(label, []).append(f"images/{name}")
        if not classes:
            raise DatasetLayoutError(f"{labels_csv} lists no images")
        return classes
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir() and not d.name.startswith("."))
    class_dirs = [d for d in class_dirs if d.name != "images"]
    if not class_dirs:
        raise DatasetLayoutError(
            f"{root} has neither class folders nor labels.csv; see get_dataset_format"
        )
    classes = {}
    for d in class_dirs:
        files = _image_files(d)
        if not files:
            raise DatasetLayoutError(f"class folder {d} contains no images")
        classes[d.name] = [f"{d.name}/{n}" for n in files]
    return classes


def _regression_files(root: Path) -> list[str]:
    values = root / "values.csv"
    if not values.is_file():
        raise DatasetLayoutError(f"missing {values}; see get_dataset_format")
    out = []
    with open(values, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"file_name", "value"} - set(reader.fieldnames):
            raise DatasetLayoutError(f"{values} needs columns file_name,value")
        for row in reader:
            try:
                float(row["value"])
            except (TypeError, ValueError):
                raise DatasetLayoutError(
                    f"{values}: non-numeric value {row['value']!r} for {row['file_name']!r}"
                ) from None
            target = root / "images" / row["file_name"]
            if not target.is_file():
                raise DatasetLayoutError(f"listed image missing: {target}")
            out.append(f"images/{row['file_name']}")
    if not out:
        raise DatasetLayoutError(f"{values} lists no images")
    return out


def _segmentation_files(root: Path) -> list[str]:
    ann = root / "annotations.json"
    if not ann.is_file():
        raise DatasetLayoutError(f"missing {ann}; see get_dataset_format")
    try:
        parsed = coco.load_segmentation(ann)
    except ValidationError as exc:
        raise DatasetLayoutError(f"{ann} is not a valid annotation file: {exc}") from exc
    if not parsed.images:
        raise DatasetLayoutError(f"{ann} lists no images")
    out = []
    for info in parsed.images:
        target = root / "images" / info.file_name
        if not target.is_file():
            raise DatasetLayoutError(f"annotated image missing: {target}")
        out.append(f"images/{info.file_name}")
    return out


def prepare_dataset(
    root: str | Path, task_type: str, val_ratio: float = 0.2, seed: int = 0
) -> SplitReport:
    """Validate the dataset layout and write a deterministic train/val split.

    The split is stratified per class for classification and plain for the
    other tasks; the same seed always reproduces the same file lists. The
    report is persisted as ``{root}/split_report.json``.
    """
    if task_type not in TASK_TYPES:
        raise ValidationError(
            f"unknown task type {task_type!r}; expected one of {', '.join(TASK_TYPES)}"
        )
    if not (0.0 <= val_ratio < 1.0):
        raise ValidationError("val_ratio must be in [0, 1)")
    base = Path(root)
    if not base.is_dir():
        raise DatasetLayoutError(f"dataset root is not a directory: {base}")

    if task_type == "classification":
        classes = _classification_classes(base)
    elif task_type == "regression":
        classes = {"all": _regression_files(base)}
    else:
        classes = {"all": _segmentation_files(base)}

    train: list[str] = []
    val: list[str] = []
    per_class: dict[str, dict[str, int]] = {}
    warnings: list[str] = []
    for class_name in sorted(classes):
        t, v, warning = _split_one_class(classes[class_name], val_ratio, seed, class_name)
        train.extend(t)
        val.extend(v)
        per_class[class_name] = {"train": len(t), "val": len(v)}
        if warning:
            warnings.append(warning)
    report = SplitReport(
        task_type=task_type,
        seed=seed,
        ratio=val_ratio,
        train=sorted(train),
        val=sorted(val),
        per_class=per_class,
        warnings=warnings,
    )
    (base / SPLIT_REPORT_NAME).write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return report


# ---------------------------------------------------------------------------
# Stub adapter


class StubVisionAdapter:
    """Deterministic in-process adapter used by tests and offline demos.

    Segmentation output is a set of axis-aligned rectangles derived from a
    hash of each file name, so identical inputs always produce identical
    annotations without touching pixel data. Training jobs advance one state
    per poll: queued, then running, then succeeded.
    """

    name = "stub"
    version = "1.0"
    capabilities = ("segment", "classify", "regress", "train")

    _LABELS = ("healthy", "nitrogen-deficient", "phosphorus-deficient", "potassium-deficient")

    def __init__(self) -> None:
        self._jobs: dict[str, dict[str, Any]] = {}

    def handle(self, request: dict[str, Any]) -> dict[str, Any]:
        rid = request.get("id")
        op = request.get("op")
        payload = request.get("payload") or {}
        if not isinstance(rid, str) or not rid:
            return self._error("", "bad_request", "request id must be a non-empty string")
        if not isinstance(payload, dict):
            return self._error(rid, "bad_request", "payload must be an object")
        try:
            if op == "capabilities":
                return self._ok(
                    rid,
                    {
                        "name": self.name,
                        "version": self.version,
                        "capabilities": list(self.capabilities),
                    },
                )
            if op == "infer":
                return self._infer(rid, payload)
            if op == "train":
                return self._train(rid, payload)
            if op == "job_status":
                return self._job_status(rid, payload)
            return self._error(rid, "unknown_op", f"unsupported op {op!r}")
        except Exception as exc:  # pragma: no cover - defensive envelope
            return self._error(rid, "internal", str(exc))

    @staticmethod
    def _ok(rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        return {"id": rid, "ok": True, "payload": payload}

    @staticmethod
    def _error(rid: str, code: str, message: str) -> dict[str, Any]:
        return {"id": rid, "ok": False, "error": {"code": code, "message": message}}

    def _images(self, payload: dict[str, Any]) -> list[dict[str, Any]]:
        images = payload.get("images")
        if not isinstance(images, list) or not images:
            raise ValueError("infer payload needs a non-empty 'images' list")
        out = []
        for item in images:
            if not isinstance(item, dict) or not item.get("file_name"):
                raise ValueError(f"bad image entry: {item!r}")
            width, height = item.get("width"), item.get("height")
            if not width or not height:
                dims = _png_dimensions(Path(item.get("path", "")))
                if dims is None:
                    raise ValueError(
                        f"cannot determine dimensions of {item['file_name']!r}"
                    )
                width, height = dims
            out.append(
                {"file_name": str(item["file_name"]), "width": int(width), "height": int(height)}
            )
        return out

    def _infer(self, rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        task = payload.get("task")
        if task == "instance_segmentation":
            images = self._images(payload)
            doc: dict[str, Any] = {"images": [], "annotations": []}
            ann_id = 1
            for i, im in enumerate(images, start=1):
                doc["images"].append(
                    {
                        "id": i,
                        "file_name": im["file_name"],
                        "width": im["width"],
                        "height": im["height"],
                    }
                )
                for rect in self._rectangles(im["file_name"], im["width"], im["height"]):
                    x0, y0, x1, y1, score = rect
                    doc["annotations"].append(
                        {
                            "id": ann_id,
                            "image_id": i,
                            "category_id": 1,
                            "segmentation": [[x0, y0, x1, y0, x1, y1, x0, y1]],
                            "score": score,
                        }
                    )
                    ann_id += 1
            return self._ok(rid, doc)
        if task == "classification":
            rows = []
            for im in self._images(payload):
                d = hashlib.sha256(im["file_name"].encode()).digest()
                rows.append(
                    {
                        "file_name": im["file_name"],
                        "label": self._LABELS[d[0] % len(self._LABELS)],
                        "confidence": round(0.5 + d[1] / 510, 4),
                    }
                )
            return self._ok(rid, {"rows": rows})
        if task == "regression":
            rows = []
            for im in self._images(payload):
                d = hashlib.sha256(im["file_name"].encode()).digest()
                rows.append(
                    {
                        "file_name": im["file_name"],
                        "prediction": round((d[0] * 256 + d[1]) / 65535 * 100, 3),
                    }
                )
            return self._ok(rid, {"rows": rows})
        return self._error(rid, "bad_request", f"unknown inference task {task!r}")

    @staticmethod
    def _rectangles(file_name: str, width: int, height: int) -> list[tuple[float, float, float, float, float]]:
        top = hashlib.sha256(file_name.encode()).digest()
        count = 2 + top[0] % 3
        out = []
        for k in range(count):
            d = hashlib.sha256(f"{file_name}:{k}".encode()).digest()
            bw = 3 + d[0] % max(1, (width - 6) // 2)
            bh = 3 + d[1] % max(1, (height - 6) // 2)
            x0 = 1 + d[2] % max(1, width - bw - 2)
            y0 = 1 + d[3] % max(1, height - bh - 2)
            score = round(0.5 + d[4] / 510, 4)
            out.append((float(x0), float(y0), float(x0 + bw), float(y0 + bh), score))
        return out

    def _train(self, rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        task = payload.get("task")
        if task not in TASK_TYPES:
            return self._error(rid, "bad_request", f"unknown training task {task!r}")
        if payload.get("method") not in ("lora", "full"):
            return self._error(rid, "bad_request", "method must be 'lora' or 'full'")
        if not payload.get("dataset_root"):
            return self._error(rid, "bad_request", "train payload needs dataset_root")
        job_id = "job-" + hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:10]
        if job_id not in self._jobs:
            self._jobs[job_id] = {"status": "queued", "config": payload}
        return self._ok(rid, {"job_id": job_id, "status": self._jobs[job_id]["status"]})

    def _job_status(self, rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        job_id = payload.get("job_id")
        job = self._jobs.get(job_id) if isinstance(job_id, str) else None
        if job is None:
            return self._error(rid, "unknown_job", f"unknown job id {job_id!r}")
        if job["status"] == "queued":
            job["status"] = "running"
        elif job["status"] == "running":
            job["status"] = "succeeded"
        out: dict[str, Any] = {"job_id": job_id, "status": job["status"]}
        if job["status"] == "succeeded":
            d = hashlib.sha256(job_id.encode()).digest()
            score = round(0.85 + (d[0] % 100) / 1000, 3)
            key = "val_accuracy" if job["config"]["task"] == "classification" else "val_score"
            out["metrics"] = {key: score, "epochs": 3}
        return self._ok(rid, out)


# ---------------------------------------------------------------------------
# Conformance suite


@dataclass
class ConformanceReport:
    passed: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _load_conformance_cases() -> list[dict[str, Any]]:
    ref = resources.files("phenoflow.assets") / "adapter_conformance.json"
    return json.loads(ref.read_text(encoding="utf-8"))["cases"]


def run_conformance(
    transport: Transport, images: Sequence[ImageInput] | None = None
) -> ConformanceReport:
    """Exercise an adapter against the golden protocol fixtures.

    Envelope fields (id echo, ok flag) must match the goldens byte-for-byte
    after canonical serialization; payloads are checked structurally. When
    sample ``images`` are supplied, segmentation output is additionally
    schema-validated and checked for determinism across two identical
    requests.
    """
    report = ConformanceReport()

    def record(name: str, problem: str | None) -> None:
        if problem is None:
            report.passed.append(name)
        else:
            report.failures.append((name, problem))

    for case in _load_conformance_cases():
        name = case["name"]
        try:
            resp = transport.request(case["request"])
        except AdapterError as exc:
            record(name, f"transport error: {exc}")
            continue
        problem = None
        if not isinstance(resp, dict):
            problem = "response is not an object"
        else:
            got = canonical_json({"id": resp.get("id"), "ok": resp.get("ok")})
            want = canonical_json(case["expect"]["envelope"])
            if got != want:
                problem = f"envelope {got} != {want}"
            else:
                check = case["expect"]["payload_check"]
                if check == "capabilities":
                    caps = (resp.get("payload") or {}).get("capabilities")
                    if not isinstance(caps, list) or not caps:
                        problem = "capabilities payload missing or empty"
                elif check == "error":
                    err = resp.get("error")
                    ok_shape = isinstance(err, dict) and err.get("message")
                    if not ok_shape and not (isinstance(err, str) and err):
                        problem = "error responses need a message"
        record(name, problem)

    if images:
        request = {
            "id": "conf-infer-1",
            "op": "infer",
            "payload": {
                "task": "instance_segmentation",
                "checkpoint": "conformance",
                "images": [im.wire() for im in images],
            },
        }
        try:
            first = transport.request(request)
            second = transport.request({**request, "id": "conf-infer-2"})
            problem = None
            if not (first.get("ok") is True and second.get("ok") is True):
                problem = f"infer was rejected: {first.get('error') or second.get('error')}"
            else:
                try:
                    parsed = coco.parse_segmentation(first.get("payload") or {})
                    got = {im.file_name for im in parsed.images}
                    want = {im.file_name for im in images}
                    if got != want:
                        problem = f"covered {sorted(got)}, requested {sorted(want)}"
                except ValidationError as exc:
                    problem = f"segmentation payload invalid: {exc}"
            record("infer_schema", problem)
            if problem is None:
                same = canonical_json(first["payload"]) == canonical_json(second["payload"])
                record("infer_determinism", None if same else "two identical requests differ")
            else:
                record("infer_determinism", "skipped: infer_schema failed")
        except AdapterError as exc:
            record("infer_schema", f"transport error: {exc}")
            record("infer_determinism", "skipped: infer_schema failed")

    return report
