"""HTTP API for interactive editing and animation jobs.

Sessions cache the source reconstruction code and feature pyramid, so
slider edits re-render synchronously from the cached state. Animations
run as asynchronous jobs on a small worker pool (1 worker by default for
determinism). Model parameters are loaded once and never mutated.

Images travel as lossless PNG: base64 inside JSON bodies, or raw bytes
on frame endpoints. Errors are JSON {"code": ..., "message": ...}.
"""

from __future__ import annotations

import base64
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .checkpoint import read_manifest
from .data import DataError, decode_image, encode_image, load_frames
from .inference import AnimationRequest, cross_reenact, edit_image, render_code, source_state
from .latent import EditRecipe, RecipeIndexError, apply_edit
from .semantics import SemanticLabelMap, LabelEntry, LabelError, save_labels

STEP_HINT = 0.1


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    source: torch.Tensor
    code: torch.Tensor          # cached reconstruction code (1, latent_dim)
    pyramid: list               # cached source feature pyramid
    recipe: EditRecipe = field(default_factory=EditRecipe)
    created_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class Job:
    id: str
    session_id: str
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    frames: list = field(default_factory=list)
    error: str | None = None

    @property
    def frame_count(self) -> int:
        return len(self.frames)


class RecipeEntry(BaseModel):
    index: int
    magnitude: float


class EditBody(BaseModel):
    recipe: list[RecipeEntry] = []


class AnimateBody(BaseModel):
    clip_id: str | None = None
    frames_b64: list[str] | None = None


class LabelBody(BaseModel):
    entries: dict[str, dict]


def _b64_png(image: torch.Tensor) -> str:
    return base64.b64encode(encode_image(image)).decode("ascii")


def center_crop_resize(image: torch.Tensor, size: int) -> torch.Tensor:
    """Resize the shorter side to ``size`` (bilinear) then center-crop.

    Images already at the target size pass through untouched.
    """
    _, h, w = image.shape
    if h == size and w == size:
        return image
    scale = size / min(h, w)
    new_h, new_w = max(size, round(h * scale)), max(size, round(w * scale))
    resized = torch.nn.functional.interpolate(
        image.unsqueeze(0), size=(new_h, new_w), mode="bilinear", align_corners=False
    )[0]
    top = (new_h - size) // 2
    left = (new_w - size) // 2
    return resized[:, top : top + size, left : left + size]


def create_app(
    checkpoint_path: Path,
    clips_dir: Path | None = None,
    workers: int = 1,
) -> FastAPI:
    from .checkpoint import load_animator

    model, manifest = load_animator(checkpoint_path)
    labels = SemanticLabelMap.from_json(manifest.get("labels"))

    app = FastAPI(title="motiondict service")
    state = app.state
    state.model = model
    state.checkpoint_path = Path(checkpoint_path)
    state.labels = labels
    state.sessions: dict[str, Session] = {}
    state.jobs: dict[str, Job] = {}
    state.registry_lock = threading.Lock()
    state.executor = ThreadPoolExecutor(max_workers=max(1, workers))
    state.clips_dir = clips_dir

    @app.exception_handler(ServiceError)
    async def handle_service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> Session:
        session = state.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id}")
        return session

    def dictionary_payload() -> dict:
        size = model.config.dict_size
        entries = []
        for index in range(size):
            entry = state.labels.resolve(index)
            entries.append(
                {
                    "index": index,
                    "label": entry.label,
                    "range": list(entry.range),
                    "correlation": entry.correlation,
                }
            )
        return {"size": size, "step_hint": STEP_HINT, "entries": entries}

    @app.post("/sessions")
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        raw = await request.body()
        if content_type.startswith("application/json"):
            import json as json_mod

            try:
                payload = json_mod.loads(raw)
                image_bytes = base64.b64decode(payload["image_b64"])
            except Exception as exc:
                raise ServiceError(400, "bad_request", f"expected image_b64 in JSON body: {exc}")
        else:
            image_bytes = raw
        try:
            image = decode_image(image_bytes)
        except DataError as exc:
            raise ServiceError(400, "bad_image", str(exc))
        image = center_crop_resize(image, model.config.image_size)
        code, pyramid = source_state(model, image)
        session = Session(id=uuid.uuid4().hex, source=image, code=code, pyramid=pyramid)
        with state.registry_lock:
            state.sessions[session.id] = session
        preview = render_code(model, session.code, session.pyramid)
        return {
            "session_id": session.id,
            "width": model.config.image_size,
            "height": model.config.image_size,
            "preview_b64": _b64_png(preview),
        }

    @app.get("/dictionary")
    async def get_dictionary():
        return dictionary_payload()

    @app.put("/dictionary/labels")
    async def put_labels(body: LabelBody):
        size = model.config.dict_size
        updated = SemanticLabelMap(dict(state.labels.entries))
        for key, item in body.entries.items():
            try:
                index = int(key)
            except ValueError:
                raise ServiceError(400, "bad_index", f"label index {key!r} is not an integer")
            if not 0 <= index < size:
                raise ServiceError(400, "bad_index", f"label index {index} out of range (M={size})")
            name = str(item.get("label", "")).strip()
            if not name:
                # empty name reverts to the default
                updated.entries.pop(index, None)
                continue
            try:
                updated.set(
                    index,
                    LabelEntry(
                        label=name,
                        range=tuple(item.get("range", (-0.5, 0.5))),
                        correlation=item.get("correlation"),
                    ),
                )
            except LabelError as exc:
                raise ServiceError(400, "bad_label", str(exc))
        save_labels(updated, state.checkpoint_path)
        state.labels = updated
        return dictionary_payload()

    @app.post("/sessions/{session_id}/edit")
    async def post_edit(session_id: str, body: EditBody):
        session = get_session(session_id)
        recipe = EditRecipe(tuple((e.index, e.magnitude) for e in body.recipe))
        try:
            recipe.validate(model.config.dict_size)
        except RecipeIndexError as exc:
            raise ServiceError(400, "bad_index", str(exc))
        with session.lock:
            session.recipe = recipe
            z_edit = apply_edit(session.code, recipe, model.dictionary)
            preview = render_code(model, z_edit, session.pyramid)
        return {"session_id": session_id, "preview_b64": _b64_png(preview)}

    def resolve_driving(body: AnimateBody) -> list[torch.Tensor]:
        if body.clip_id:
            if state.clips_dir is None:
                raise ServiceError(404, "unknown_clip", "no server-side clips configured")
            clip_path = state.clips_dir / body.clip_id
            if not clip_path.is_dir():
                raise ServiceError(404, "unknown_clip", f"no clip {body.clip_id}")
            frames = load_frames(clip_path).frames
        elif body.frames_b64:
            try:
                frames = [decode_image(base64.b64decode(b)) for b in body.frames_b64]
            except Exception as exc:
                raise ServiceError(400, "bad_image", f"cannot decode driving frames: {exc}")
            frames = [center_crop_resize(f, model.config.image_size) for f in frames]
        else:
            raise ServiceError(400, "bad_request", "need clip_id or frames_b64")
        if not frames:
            raise ServiceError(400, "empty_driving", "driving clip has no frames")
        return frames

    def run_job(job: Job, session: Session, driving: list[torch.Tensor]):
        job.state = "running"
        try:
            with session.lock:
                recipe = session.recipe
            request = AnimationRequest(source=session.source, driving=driving, recipe=recipe)

            def on_frame(t, total):
                job.progress = (t + 1) / total

            job.frames = cross_reenact(model, request, on_frame=on_frame)
            job.state = "done"
            job.progress = 1.0
        except Exception as exc:
            job.state = "failed"
            job.error = str(exc)

    @app.post("/sessions/{session_id}/animate")
    async def post_animate(session_id: str, body: AnimateBody):
        session = get_session(session_id)
        driving = resolve_driving(body)
        job = Job(id=uuid.uuid4().hex, session_id=session_id)
        with state.registry_lock:
            state.jobs[job.id] = job
        state.executor.submit(run_job, job, session, driving)
        return {"job_id": job.id}

    def job_payload(job: Job) -> dict:
        payload = {
            "job_id": job.id,
            "session_id": job.session_id,
            "state": job.state,
            "progress": job.progress,
            "frame_count": job.frame_count,
        }
        if job.error:
            payload["error"] = job.error
        return payload

    @app.get("/jobs/{job_id}")
    async def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise ServiceError(404, "unknown_job", f"no job {job_id}")
        return job_payload(job)

    @app.get("/jobs/{job_id}/frames/{t}")
    async def get_job_frame(job_id: str, t: int):
        job = state.jobs.get(job_id)
        if job is None:
            raise ServiceError(404, "unknown_job", f"no job {job_id}")
        if job.state != "done":
            raise ServiceError(404, "not_ready", f"job {job_id} is {job.state}")
        if not 0 <= t < job.frame_count:
            raise ServiceError(404, "bad_frame", f"frame {t} outside 0..{job.frame_count - 1}")
        return Response(content=encode_image(job.frames[t]), media_type="image/png")

    @app.get("/clips")
    async def get_clips():
        clips = []
        if state.clips_dir is not None and state.clips_dir.is_dir():
            for child in sorted(state.clips_dir.iterdir()):
                if child.is_dir():
                    count = len([p for p in child.iterdir() if p.suffix.lower() == ".png"])
                    if count:
                        clips.append({"clip_id": child.name, "frames": count})
        return {"clips": clips}

    return app
