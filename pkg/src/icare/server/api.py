"""HTTP + WebSocket front for the health server.

Paths are the contract consumed by the console and CLI:

    GET  /me
    GET  /subjects/{id}/vitals?since=<ts>
    GET  /subjects/{id}/alarms
    PUT  /subjects/{id}/thresholds/{channel}
    POST /subjects/{id}/advice
    GET  /knowledge?keyword=&area=&min_level=
    POST /knowledge
    POST /knowledge/{id}/evaluate
    POST /knowledge/{id}/feedback
    POST /threads
    POST /threads/{id}/messages
    GET  /threads/{id}
    WS   /subjects/{id}/live?token=

Authentication is a static bearer token per user (Authorization header,
or ?token= for WebSocket clients).
"""

from __future__ import annotations

import asyncio
import queue
from typing import Optional

from fastapi import Depends, FastAPI, Header, Query, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..protocol import DecodeError, VitalChannel
from .core import (
    AuthorizationError,
    HealthServer,
    NotFoundError,
    ServerError,
    ValidationError,
)


class ThresholdBody(BaseModel):
    low: float
    high: float


class AdviceBody(BaseModel):
    text: str


class KnowledgeBody(BaseModel):
    keywords: list[str]
    area: str
    body: str


class EvaluateBody(BaseModel):
    rating: float


class FeedbackBody(BaseModel):
    verdict: str


class MessageBody(BaseModel):
    text: str


class ThreadBody(BaseModel):
    participants: list[str]


def create_app(core: HealthServer) -> FastAPI:
    app = FastAPI(title="icare health server")
    app.state.core = core
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def current_user(authorization: Optional[str] = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise AuthorizationError("missing bearer token")
        return core.authenticate(authorization[len("Bearer "):])

    @app.exception_handler(ServerError)
    async def server_error_handler(request, exc: ServerError):
        status = 500
        if isinstance(exc, AuthorizationError):
            status = 403
        elif isinstance(exc, ValidationError):
            status = 422
        elif isinstance(exc, NotFoundError):
            status = 404
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(DecodeError)
    async def decode_error_handler(request, exc: DecodeError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    def parse_channel(channel: str) -> VitalChannel:
        try:
            return VitalChannel[channel]
        except KeyError:
            raise NotFoundError(f"unknown channel {channel!r}") from None

    @app.get("/me")
    def me(user: str = Depends(current_user)):
        account = core.accounts[user]
        subjects = sorted(
            subject_id for subject_id in core.subjects
            if core.can_view(user, subject_id)
        )
        return {"user_id": account.user_id, "role": account.role,
                "name": account.name, "subjects": subjects}

    @app.get("/subjects/{subject_id}/vitals")
    def vitals(subject_id: str, since: Optional[int] = Query(default=None),
               user: str = Depends(current_user)):
        records = core.view_records(user, subject_id, since=since)
        thresholds = core.view_thresholds(user, subject_id)
        return {
            "records": [r.to_json() for r in records],
            "thresholds": {
                ch.name: {"low": t.low, "high": t.high, "set_by": t.set_by, "ts": t.ts}
                for ch, t in thresholds.items()
            },
        }

    @app.get("/subjects/{subject_id}/alarms")
    def alarms(subject_id: str, user: str = Depends(current_user)):
        events = core.view_events(user, subject_id, kind_prefix="alarm")
        return {"alarms": [e.to_json() for e in reversed(events)]}

    @app.put("/subjects/{subject_id}/thresholds/{channel}")
    def put_threshold(subject_id: str, channel: str, body: ThresholdBody,
                      user: str = Depends(current_user)):
        sms = core.set_threshold(user, subject_id, parse_channel(channel),
                                 body.low, body.high)
        return {"channel": sms.channel.name, "low": sms.low, "high": sms.high,
                "set_by": sms.doctor_id, "ts": sms.ts}

    @app.post("/subjects/{subject_id}/advice")
    def post_advice(subject_id: str, body: AdviceBody, user: str = Depends(current_user)):
        sms = core.send_advice(user, subject_id, body.text)
        return {"elder_id": sms.elder_id, "doctor_id": sms.doctor_id,
                "text": sms.text, "ts": sms.ts}

    @app.get("/knowledge")
    def knowledge(keyword: str = Query(default=""), area: str = Query(default=""),
                  min_level: str = Query(default="general"),
                  user: str = Depends(current_user)):
        entries = core.query_knowledge(keyword, area=area, min_level=min_level)
        return {"entries": [e.to_json() for e in entries]}

    @app.post("/knowledge")
    def add_knowledge(body: KnowledgeBody, user: str = Depends(current_user)):
        entry = core.add_knowledge(user, body.keywords, body.area, body.body)
        return entry.to_json()

    @app.post("/knowledge/{entry_id}/evaluate")
    def evaluate(entry_id: str, body: EvaluateBody, user: str = Depends(current_user)):
        return core.evaluate_knowledge(user, entry_id, body.rating).to_json()

    @app.post("/knowledge/{entry_id}/feedback")
    def feedback(entry_id: str, body: FeedbackBody, user: str = Depends(current_user)):
        return core.record_feedback(user, entry_id, body.verdict).to_json()

    @app.post("/threads")
    def open_thread(body: ThreadBody, user: str = Depends(current_user)):
        thread = core.open_thread(user, body.participants)
        return {"thread_id": thread.thread_id, "participants": list(thread.participants)}

    @app.post("/threads/{thread_id}/messages")
    def post_message(thread_id: str, body: MessageBody, user: str = Depends(current_user)):
        message = core.post_message(user, thread_id, body.text)
        return {"author": message.author, "ts": message.ts, "text": message.text}

    @app.get("/threads/{thread_id}")
    def read_thread(thread_id: str, user: str = Depends(current_user)):
        messages = core.read_thread(user, thread_id)
        thread = core.threads[thread_id]
        return {
            "thread_id": thread_id,
            "participants": list(thread.participants),
            "messages": [{"author": m.author, "ts": m.ts, "text": m.text}
                         for m in messages],
        }

    @app.websocket("/subjects/{subject_id}/live")
    async def live(ws: WebSocket, subject_id: str):
        token = ws.query_params.get("token", "")
        try:
            user = core.authenticate(token)
            if not core.can_view(user, subject_id):
                raise AuthorizationError("not allowed")
            core._subject_store(subject_id)
        except ServerError:
            await ws.close(code=4403)
            return
        await ws.accept()
        q = core.subscribe(subject_id)
        loop = asyncio.get_running_loop()
        try:
            while True:
                try:
                    item = await loop.run_in_executor(None, lambda: q.get(timeout=0.5))
                except Exception:
                    # queue.Empty: heartbeat the connection so closes surface
                    try:
                        await asyncio.wait_for(ws.receive_text(), timeout=0.001)
                    except asyncio.TimeoutError:
                        continue
                    except WebSocketDisconnect:
                        break
                    continue
                await ws.send_json(item)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            core.unsubscribe(subject_id, q)

    return app
