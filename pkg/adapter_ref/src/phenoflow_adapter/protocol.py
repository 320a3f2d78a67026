"""Request dispatch: envelopes, capability gating, and the stub trainer.

Every request is answered exactly once with the request's own id. Failures
come back as ``{"ok": false, "error": {"code", "message"}}``; the adapter
never answers with silence or a raised exception.
"""
from __future__ import annotations

import hashlib
import json
from importlib.util import find_spec
from typing import Any

from .segmenter import segment_entries

TRAIN_TASKS = ("classification", "regression", "segmentation")


def _canonical(payload: dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class ReferenceAdapter:
    """Protocol endpoint with a real fallback segmenter and a stub trainer.

    The fallback segmenter is available unconditionally. LoRA fine-tuning is
    gated on the optional ML dependencies being importable; without them the
    adapter reports a capability error instead of pretending to train.
    """

    name = "phenoflow-adapter"
    version = "0.1.0"

    def __init__(self, lora_available: bool | None = None):
        self._jobs: dict[str, dict[str, Any]] = {}
        if lora_available is None:
            lora_available = find_spec("peft") is not None and find_spec("torch") is not None
        self.lora_available = lora_available

    # -- envelope helpers -----------------------------------------------------

    @staticmethod
    def _ok(rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        return {"id": rid, "ok": True, "payload": payload}

    @staticmethod
    def _error(rid: str, code: str, message: str) -> dict[str, Any]:
        return {"id": rid, "ok": False, "error": {"code": code, "message": message}}

    # -- dispatch ---------------------------------------------------------------

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
                        "capabilities": ["segment", "train"],
                        "fallback": "green-threshold",
                    },
                )
            if op == "infer":
                return self._infer(rid, payload)
            if op == "train":
                return self._train(rid, payload)
            if op == "job_status":
                return self._job_status(rid, payload)
            return self._error(rid, "unknown_op", f"unsupported op {op!r}")
        except ValueError as exc:
            return self._error(rid, "bad_request", str(exc))
        except Exception as exc:  # last-resort envelope, never silence
            return self._error(rid, "internal", str(exc))

    # -- operations -----------------------------------------------------------

    def _infer(self, rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        task = payload.get("task")
        if task != "instance_segmentation":
            if task in ("classification", "regression"):
                return self._error(
                    rid,
                    "capability",
                    f"this build offers no {task} model; only the fallback segmenter is available",
                )
            return self._error(rid, "bad_request", f"unknown inference task {task!r}")
        images = payload.get("images")
        if not isinstance(images, list) or not images:
            return self._error(rid, "bad_request", "infer payload needs a non-empty 'images' list")
        for item in images:
            if not isinstance(item, dict) or not item.get("file_name"):
                return self._error(rid, "bad_request", f"bad image entry: {item!r}")
        return self._ok(rid, segment_entries(images))

    def _train(self, rid: str, payload: dict[str, Any]) -> dict[str, Any]:
        task = payload.get("task")
        if task not in TRAIN_TASKS:
            return self._error(rid, "bad_request", f"unknown training task {task!r}")
        method = payload.get("method")
        if method not in ("lora", "full"):
            return self._error(rid, "bad_request", "method must be 'lora' or 'full'")
        if method == "lora" and not self.lora_available:
            return self._error(
                rid,
                "capability",
                "LoRA fine-tuning needs the optional ML dependencies (torch, peft); "
                "they are not installed",
            )
        if not payload.get("dataset_root"):
            return self._error(rid, "bad_request", "train payload needs dataset_root")

        job_id = "job-" + hashlib.sha256(_canonical(payload).encode()).hexdigest()[:10]
        active = [
            jid
            for jid, job in self._jobs.items()
            if jid != job_id and job["status"] in ("queued", "running")
        ]
        if active:
            return self._error(rid, "busy", f"training job {active[0]} is still active")
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
            digest = hashlib.sha256(job_id.encode()).digest()
            score = round(0.8 + (digest[0] % 150) / 1000, 3)
            key = "val_accuracy" if job["config"]["task"] == "classification" else "val_score"
            out["metrics"] = {key: score, "epochs": 3}
        return self._ok(rid, out)
