"""HTTP facade over the synthesis engine.

One process serves one workspace directory. Sessions are created against a
repository style; edits and refinements append results to the session, and
results are fetched with their trace, provenance and preview polyline.
Engine calls are pure; per-session locks serialize writers.
"""
from __future__ import annotations

import threading
from collections import defaultdict

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from ..core import InvalidEditError, OutOfVocabularyError, PhonosynthError
from ..pipeline import SessionStore, UnknownResultError, UntrainedSessionError, Workspace
from ..search import NoMatchError
from .schemas import (
    CreateSessionRequest,
    EditRequest,
    EditResponse,
    RefineRequest,
    SessionResponse,
)


def create_app(workspace_root: str) -> FastAPI:
    workspace = Workspace(workspace_root)
    store = SessionStore(workspace)
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
    app = FastAPI(title="phonosynth", version="0.1.0")
    # the UI may be served from any static host
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _session(session_id: str):
        try:
            return store.get(session_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    def _session_doc(session) -> SessionResponse:
        results = []
        for rid in session.result_ids:
            rec = store.load_result(session, rid)
            results.append(
                {
                    "result_id": rec.result_id,
                    "parent": rec.parent,
                    "edit_text": rec.edit_text,
                    "style": rec.style,
                }
            )
        return SessionResponse(
            session_id=session.id,
            style=session.style,
            styles=workspace.styles(),
            results=results,
        )

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "styles": workspace.styles(),
            "has_model": workspace.model() is not None,
            "has_target": workspace.target() is not None,
        }

    @app.post("/sessions", response_model=SessionResponse)
    def create_session(req: CreateSessionRequest):
        try:
            session = store.create_session(req.style)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return _session_doc(session)

    @app.get("/sessions/{session_id}", response_model=SessionResponse)
    def get_session(session_id: str):
        return _session_doc(_session(session_id))

    @app.post("/sessions/{session_id}/edits", response_model=EditResponse)
    def post_edit(session_id: str, req: EditRequest):
        session = _session(session_id)
        overrides = req.overrides.as_dict() if req.overrides else None
        with locks[session_id]:
            try:
                rid = store.synthesize_edit(session, req.text, style=req.style, overrides=overrides)
            except (NoMatchError, OutOfVocabularyError, InvalidEditError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            except KeyError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except UntrainedSessionError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
        return EditResponse(result_id=rid)

    @app.get("/sessions/{session_id}/results/{result_id}")
    def get_result(session_id: str, result_id: str):
        session = _session(session_id)
        try:
            return store.result_payload(session, result_id)
        except UnknownResultError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions/{session_id}/results/{result_id}/refine", response_model=EditResponse)
    def post_refine(session_id: str, result_id: str, req: RefineRequest):
        session = _session(session_id)
        with locks[session_id]:
            try:
                rid = store.refine(session, result_id, req.overrides.as_dict())
            except UnknownResultError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except PhonosynthError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return EditResponse(result_id=rid)

    return app
