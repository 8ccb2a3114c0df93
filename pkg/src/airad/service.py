"""HTTP job service for the clinician UI.

Jobs execute on a worker pool; progress is queryable (GET /api/jobs/{id})
and streamable as server-sent events. Binds to loopback by default so the
tool keeps its offline, single-machine posture.
"""
from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .cascade import CascadeConfig
from .jobs import Job, inspect_records, run_job

DEFAULT_OUT_DIR = os.environ.get("AIRAD_OUT_DIR", "airad_out")
DEFAULT_WORKERS = int(os.environ.get("AIRAD_WORKERS", "2"))


class JobRegistry:
    """One writer per job; readers see a consistent snapshot under the lock."""

    def __init__(self, workers: int):
        self.lock = threading.Condition()
        self.jobs: dict[str, Job] = {}
        self.events: dict[str, list[dict]] = {}
        self.pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, job: Job) -> None:
        with self.lock:
            self.jobs[job.id] = job
            self.events[job.id] = []
        self.pool.submit(self._run, job)

    def _run(self, job: Job) -> None:
        def on_event(event):
            with self.lock:
                event["id"] = len(self.events[job.id])
                self.events[job.id].append(event)
                self.lock.notify_all()
        run_job(job, on_event=on_event)
        with self.lock:
            self.lock.notify_all()

    def get(self, job_id: str) -> Job:
        with self.lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return job

    def stream(self, job_id: str, after: int = -1):
        """Yield events with id > after until the job finishes."""
        job = self.get(job_id)
        cursor = after + 1
        while True:
            with self.lock:
                events = self.events[job_id][cursor:]
                done = job.as_dict()["done"]
                if not events and not done:
                    self.lock.wait(timeout=0.5)
                    continue
            for event in events:
                yield event
            cursor += len(events)
            if done and cursor >= len(self.events[job_id]):
                return


def create_app(out_dir: str | None = None, workers: int | None = None,
               static_dir: str | None = None) -> FastAPI:
    out_root = Path(out_dir or DEFAULT_OUT_DIR)
    registry = JobRegistry(workers or DEFAULT_WORKERS)
    app = FastAPI(title="airad")
    app.state.registry = registry
    app.state.out_root = out_root

    @app.post("/api/jobs", status_code=202)
    async def create_job(request: Request):
        body = await request.json()
        volumes = body.get("volumes", [])
        try:
            config = CascadeConfig.from_json(json.dumps({
                "liver_model": body["models"]["liver"],
                "tumor_model": body["models"]["tumor"],
                "vessel_model": body["models"]["vessel"],
                **body.get("config", {}),
            }))
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        job = Job.create(volumes, config, out_root)
        registry.submit(job)
        return {"id": job.id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        return registry.get(job_id).as_dict()

    @app.get("/api/jobs/{job_id}/events")
    def job_events(job_id: str, request: Request, last_event_id: int = -1):
        header_id = request.headers.get("last-event-id")
        after = int(header_id) if header_id is not None else last_event_id
        registry.get(job_id)

        def sse():
            for event in registry.stream(job_id, after):
                yield f"id: {event['id']}\ndata: {json.dumps(event)}\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    @app.get("/api/records")
    def records(path: str):
        rows = inspect_records(path.split(","))
        return JSONResponse(rows)

    @app.get("/api/jobs/{job_id}/outputs/{volume}/{filename}")
    def job_output(job_id: str, volume: str, filename: str):
        job = registry.get(job_id)
        target = (out_root / volume / filename).resolve()
        allowed = {Path(p).resolve() for v in job.volumes for p in v.outputs}
        if target not in allowed:
            raise HTTPException(status_code=404, detail="no such output")
        return FileResponse(target)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(bind: str = "127.0.0.1:8000", out_dir: str | None = None,
          workers: int | None = None, static_dir: str | None = None):
    import uvicorn

    from .errors import BindFailure

    host, _, port = bind.rpartition(":")
    app = create_app(out_dir=out_dir, workers=workers, static_dir=static_dir)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    except OSError as exc:
        raise BindFailure(str(exc)) from exc
