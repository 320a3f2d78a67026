"""HTTP and WebSocket service over a workbench.

A thin adapter: every route calls the same workbench methods the Python API
exposes, so behaviour is identical either way. Event streaming hands out one
JSON object per text frame, in seq order, resumable with ?from_seq=.
"""
from __future__ import annotations

import asyncio
import queue
from typing import Any

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .app import Workbench
from .errors import (
    PhenoflowError,
    PipelineError,
    ProviderError,
    RegistryError,
    SessionStateError,
    ValidationError,
)


class MessageBody(BaseModel):
    text: str


class ApprovalBody(BaseModel):
    approve: bool
    note: str = ""


class ReplayBody(BaseModel):
    arguments: dict[str, Any] = {}


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _status_for(exc: PhenoflowError) -> int:
    if isinstance(exc, SessionStateError):
        return 404 if "unknown session" in str(exc) else 409
    if isinstance(exc, RegistryError):
        return 404
    if isinstance(exc, ProviderError):
        return 502
    if isinstance(exc, (ValidationError, PipelineError)):
        return 400
    return 400


def create_app(workbench: Workbench) -> FastAPI:
    app = FastAPI(title="phenoflow", docs_url=None, redoc_url=None)
    store = workbench.store
    token = workbench.config.get("bearer_token", "")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if token and request.headers.get("authorization") != f"Bearer {token}":
            return _error(401, "missing or invalid bearer token")
        return await call_next(request)

    @app.exception_handler(PhenoflowError)
    async def handle_domain_error(request: Request, exc: PhenoflowError):
        return _error(_status_for(exc), str(exc))

    # -- sessions -------------------------------------------------------------

    @app.post("/sessions")
    def create_session():
        session_id = workbench.create_session()
        return {"session_id": session_id, "status": "idle"}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/sessions/{session_id}")
    def session_meta(session_id: str):
        return store.meta(session_id)

    @app.post("/sessions/{session_id}/messages")
    def send_message(session_id: str, body: MessageBody):
        store.session_dir(session_id)
        status = workbench.send_message(session_id, body.text)
        response: dict[str, Any] = {"session_id": session_id, "status": status}
        if status == "awaiting_approval":
            pending = workbench.manager.pending_approval(session_id)
            if pending is not None:
                response["pending_call"] = {
                    "call_id": pending.id,
                    "tool": pending.name,
                    "arguments": pending.arguments,
                }
        return response

    @app.post("/sessions/{session_id}/approvals/{call_id}")
    def resolve_approval(session_id: str, call_id: str, body: ApprovalBody):
        store.session_dir(session_id)
        status = workbench.resolve_approval(session_id, call_id, body.approve, note=body.note)
        response: dict[str, Any] = {"session_id": session_id, "status": status}
        if status == "awaiting_approval":
            pending = workbench.manager.pending_approval(session_id)
            if pending is not None:
                response["pending_call"] = {
                    "call_id": pending.id,
                    "tool": pending.name,
                    "arguments": pending.arguments,
                }
        return response

    # -- events ---------------------------------------------------------------

    @app.get("/sessions/{session_id}/events")
    def list_events(session_id: str, from_seq: int = 0):
        events = store.events(session_id, from_seq=from_seq)
        return {"events": [
            {"seq": e.seq, "kind": e.kind, "ts": e.ts, "payload": e.payload} for e in events
        ]}

    @app.websocket("/sessions/{session_id}/events")
    async def stream_events(websocket: WebSocket, session_id: str, from_seq: int = 0):
        if token and websocket.headers.get("authorization") != f"Bearer {token}":
            await websocket.close(code=4401)
            return
        try:
            store.session_dir(session_id)
        except SessionStateError:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        q = store.subscribe(session_id)
        last = -1
        try:
            for event in store.events(session_id, from_seq=from_seq):
                await websocket.send_text(event.to_json())
                last = event.seq
            recv_task = asyncio.create_task(websocket.receive())
            while True:
                poll_task = asyncio.create_task(asyncio.to_thread(_poll_queue, q))
                done, _ = await asyncio.wait(
                    {recv_task, poll_task}, return_when=asyncio.FIRST_COMPLETED
                )
                if recv_task in done:
                    poll_task.cancel()
                    message = recv_task.result()
                    if message.get("type") == "websocket.disconnect":
                        break
                    recv_task = asyncio.create_task(websocket.receive())
                    continue
                event = poll_task.result()
                if event is not None and event.seq > last and event.seq >= from_seq:
                    await websocket.send_text(event.to_json())
                    last = event.seq
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            store.unsubscribe(session_id, q)

    # -- artifacts ------------------------------------------------------------

    @app.get("/sessions/{session_id}/artifacts/{name:path}")
    def get_artifact(session_id: str, name: str):
        store.session_dir(session_id)
        path = store.artifact_path(session_id, name)
        if not path.is_file():
            return _error(404, f"artifact {name!r} not found")
        return FileResponse(path)

    # -- zoos -----------------------------------------------------------------

    @app.get("/zoo/models")
    def zoo_models():
        return {"models": [e.as_dict() for e in workbench.model_zoo.entries()]}

    @app.get("/zoo/pipelines")
    def zoo_pipelines():
        out = []
        for name in workbench.pipeline_zoo.names():
            out.append(workbench.pipeline_zoo.get(name).info())
        return {"pipelines": out}

    @app.post("/pipelines/{name}/replay")
    def replay_pipeline(name: str, body: ReplayBody):
        session_id, report = workbench.replay_pipeline(name, body.arguments)
        return {"session_id": session_id, "report": report.to_dict()}

    return app


def _poll_queue(q: queue.Queue):
    try:
        return q.get(timeout=0.5)
    except queue.Empty:
        return None
