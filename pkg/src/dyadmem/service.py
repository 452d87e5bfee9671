"""HTTP API over the engine.

Thin, stateless handlers; per-episode serialization is the engine's job.
Every data-bearing response carries the snapshot version it was served
from in the ``X-Snapshot-Version`` header. Error codes map one-to-one to
HTTP statuses: not_found 404, conflict 409, invalid_request 400,
backend_unavailable 503; job-status polls answer 202 until the update job
settles.
"""

from __future__ import annotations

from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backend import BackendFailure
from .engine import Engine, EpisodeNotFound, SessionClosed, SessionNotFound
from .screenplay import Dyad
from .store import memoryset_to_dict


@dataclass(frozen=True)
class ApiError(Exception):
    code: str  # not_found | conflict | backend_unavailable | invalid_request | update_pending
    message: str
    retryable: bool = False


_STATUS_BY_CODE = {
    "not_found": 404,
    "conflict": 409,
    "invalid_request": 400,
    "backend_unavailable": 503,
    "update_pending": 202,
}


class OpenEpisodeBody(BaseModel):
    episode_id: str
    speaker_a: str
    speaker_b: str


class MessageBody(BaseModel):
    speaker: str
    text: str


def create_app(engine: Engine) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        # graceful shutdown: let in-flight memory updates commit
        engine.shutdown(wait=True)

    app = FastAPI(title="dyadmem", version="0.1.0", lifespan=lifespan)

    @app.exception_handler(ApiError)
    async def on_api_error(_request, exc: ApiError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE[exc.code],
            content={
                "error": {
                    "code": exc.code,
                    "message": exc.message,
                    "retryable": exc.retryable,
                }
            },
        )

    @app.post("/episodes", status_code=201)
    def open_episode(body: OpenEpisodeBody):
        try:
            dyad = Dyad.of(body.speaker_a, body.speaker_b)
            state = engine.open_episode(body.episode_id, dyad)
        except ValueError as exc:
            raise ApiError("invalid_request", str(exc))
        return {
            "episode_id": state.episode_id,
            "dyad": list(dyad.members()),
            "snapshot_version": state.memory.version,
        }

    @app.post("/episodes/{episode_id}/sessions", status_code=201)
    def open_session(episode_id: str):
        try:
            session = engine.open_session(episode_id)
        except EpisodeNotFound:
            raise ApiError("not_found", f"episode {episode_id} not found")
        except ValueError as exc:
            raise ApiError("conflict", str(exc))
        return {"session_id": session.session_id, "episode_id": episode_id}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody, response: Response):
        try:
            reply, cues, version, degraded = engine.post_message(
                session_id, body.speaker, body.text
            )
        except SessionNotFound:
            raise ApiError("not_found", f"session {session_id} not found")
        except SessionClosed:
            raise ApiError("conflict", f"session {session_id} already closed")
        except ValueError as exc:
            raise ApiError("invalid_request", str(exc))
        except BackendFailure as exc:
            raise ApiError("backend_unavailable", str(exc), retryable=True)
        response.headers["X-Snapshot-Version"] = str(version)
        return {
            "reply": {"speaker": reply.speaker, "text": reply.text},
            "cues": list(cues),
            "snapshot_version": version,
            "degraded": degraded,
        }

    @app.post("/sessions/{session_id}/close", status_code=202)
    def close_session(session_id: str):
        try:
            job = engine.close_session(session_id)
        except SessionNotFound:
            raise ApiError("not_found", f"session {session_id} not found")
        except SessionClosed:
            raise ApiError("conflict", f"session {session_id} already closed")
        return {
            "job_id": job.job_id,
            "status": job.status,
            "status_url": f"/jobs/{job.job_id}",
        }

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = engine.jobs.get(job_id)
        if job is None:
            raise ApiError("not_found", f"job {job_id} not found")
        body = {
            "job_id": job.job_id,
            "episode_id": job.episode_id,
            "status": job.status,
            "result_version": job.result_version,
            "error": job.error,
        }
        if job.status in ("pending", "running"):
            return JSONResponse(status_code=202, content=body)
        return body

    def _resolve_version(episode_id: str, version: str) -> int:
        if version == "latest":
            latest = engine.store.latest_version(episode_id)
            if latest is None:
                raise ApiError("not_found", f"no snapshots for {episode_id}")
            return latest
        try:
            return int(version)
        except ValueError:
            raise ApiError("invalid_request", f"bad version {version!r}")

    @app.get("/episodes/{episode_id}/memory")
    def get_memory(episode_id: str, response: Response, version: str = "latest"):
        resolved = _resolve_version(episode_id, version)
        try:
            record = engine.store.load_snapshot(episode_id, resolved)
        except KeyError:
            raise ApiError("not_found", f"{episode_id} has no snapshot v{version}")
        response.headers["X-Snapshot-Version"] = str(record.version)
        return {
            "episode_id": episode_id,
            "version": record.version,
            "memory": memoryset_to_dict(record.memory),
        }

    @app.get("/episodes/{episode_id}/memory/diff")
    def get_memory_diff(episode_id: str, v1: int, v2: int, response: Response):
        latest = engine.store.latest_version(episode_id)
        if latest is None:
            raise ApiError("not_found", f"no snapshots for {episode_id}")
        if v1 > v2:
            raise ApiError("invalid_request", "v1 must be <= v2")
        if v2 > latest or v1 < 0:
            raise ApiError("not_found", f"version range outside 0..{latest}")
        entries = []
        for record in engine.store.snapshot_provenance(episode_id):
            if v1 < record["version"] <= v2:
                entries.extend(record.get("actions", []))
        response.headers["X-Snapshot-Version"] = str(v2)
        return {"episode_id": episode_id, "v1": v1, "v2": v2, "entries": entries}

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    return app
