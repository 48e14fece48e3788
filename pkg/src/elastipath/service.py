"""HTTP service for interactive tracking, consumed by the web frontend.

Sessions are in-memory and isolated: POST /image uploads a grayscale image
and returns a session id; POST /session/{id}/cost builds the cost field (and
the curvature prior when a segmentation is attached); POST
/session/{id}/track runs one solve+backtrack between two clicked points and
returns the path JSON; GET /session/{id}/overlay renders the current overlay
PNG.  A per-session lock serializes track calls within a session.
"""

from __future__ import annotations

import io
import threading
import uuid

import numpy as np
from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import HTMLResponse, Response
from pydantic import BaseModel

from .backtrack import BacktrackError
from .cost import cost_from_score, orientation_score_oof, read_image
from .pipeline import (TrackingConfig, ValidationError, render_overlay,
                       synth_benchmark, track)
from .prior import prior_from_segmentation
from .solver import SolverError, UnreachableTargetError


class TrackRequest(BaseModel):
    source: tuple[float, float]
    target: tuple[float, float]
    theta_source: float | None = None
    theta_target: float | None = None
    beta: float = 4.5
    alpha: float = 3.0
    prior: bool = True
    n_theta: int = 72


class CostRequest(BaseModel):
    alpha: float = 3.0
    n_theta: int = 72


class _Session:
    def __init__(self, image: np.ndarray):
        self.image = image
        self.segmentation = None
        self.psi = None
        self.omega = None
        self.paths = []      # list of (polyline, color, label)
        self.endpoints = []
        self.lock = threading.Lock()


def _demo_image(size: int = 128) -> np.ndarray:
    inst = synth_benchmark(3, [0.02], size=size, families=("u_turn",))[0]
    return np.clip(inst.image, 0.0, 1.0)


def create_app() -> FastAPI:
    app = FastAPI(title="elastipath", version="0.1.0")
    sessions: dict[str, _Session] = {}

    def get_session(sid: str) -> _Session:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return s

    @app.post("/image")
    async def upload_image(file: UploadFile = File(...),
                           segmentation: UploadFile | None = File(None)):
        try:
            img = read_image(io.BytesIO(await file.read()))
        except Exception as e:
            raise HTTPException(status_code=422, detail=f"bad image: {e}")
        s = _Session(img)
        if segmentation is not None:
            try:
                s.segmentation = read_image(io.BytesIO(await segmentation.read())) >= 0.5
            except Exception as e:
                raise HTTPException(status_code=422, detail=f"bad segmentation: {e}")
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = s
        return {"session": sid, "width": int(img.shape[0]), "height": int(img.shape[1])}

    @app.get("/demo-image")
    def demo_image():
        from PIL import Image
        img = _demo_image()
        buf = io.BytesIO()
        Image.fromarray((np.clip(img, 0, 1).T * 255).astype(np.uint8), "L").save(
            buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/session/{sid}/cost")
    def build_cost(sid: str, req: CostRequest):
        s = get_session(sid)
        with s.lock:
            try:
                score = orientation_score_oof(s.image, n_theta=req.n_theta)
                s.psi = cost_from_score(score, req.alpha)
                if s.segmentation is not None:
                    maps = prior_from_segmentation(s.segmentation, s.psi.grid)
                    s.omega = maps.omega
            except (ValidationError, ValueError) as e:
                raise HTTPException(status_code=422, detail=str(e))
        return {"session": sid, "cost": "ready",
                "prior": s.omega is not None}

    @app.post("/session/{sid}/track")
    def track_session(sid: str, req: TrackRequest):
        s = get_session(sid)
        nx, ny = s.image.shape
        for q in (req.source, req.target):
            if not (0 <= q[0] <= nx - 1 and 0 <= q[1] <= ny - 1):
                raise HTTPException(status_code=422,
                                    detail=f"point {q} outside the image")
        cfg = TrackingConfig(beta=req.beta, alpha=req.alpha,
                             prior_enabled=req.prior, n_theta=req.n_theta)
        with s.lock:
            if req.prior and s.segmentation is None:
                from .pipeline import segment_noisy
                s.segmentation = segment_noisy(s.image)
            try:
                res = track(cfg, image=s.image,
                            psi=s.psi if (s.psi is not None
                                          and s.psi.grid.n_theta == req.n_theta) else None,
                            segmentation=s.segmentation if req.prior else None,
                            omega=s.omega if req.prior else None,
                            source=req.source, target=req.target,
                            theta_source=req.theta_source,
                            theta_target=req.theta_target)
            except UnreachableTargetError as e:
                raise HTTPException(status_code=409,
                                    detail=f"unreachable target: {e}")
            except (SolverError, BacktrackError) as e:
                raise HTTPException(status_code=500, detail=f"solver error: {e}")
            except (ValidationError, ValueError) as e:
                raise HTTPException(status_code=422, detail=str(e))
            color = (255, 64, 64) if req.prior else (64, 160, 255)
            s.paths.append((res.path.physical.tolist(), color,
                            "prior" if req.prior else "classical"))
            s.endpoints = [
                (req.source[0], req.source[1], req.theta_source),
                (req.target[0], req.target[1], req.theta_target, (64, 64, 255)),
            ]
        body = res.path.to_json_dict()
        body["variant"] = "prior" if req.prior else "classical"
        body["solve"] = {
            "accepted": res.report.accepted_count,
            "wall_time": res.report.wall_time,
        }
        return body

    @app.get("/session/{sid}/overlay")
    def overlay(sid: str):
        s = get_session(sid)
        with s.lock:
            im = render_overlay(s.image,
                                [(np.array(p), c) for p, c, _ in s.paths],
                                endpoints=s.endpoints)
        buf = io.BytesIO()
        im.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/", response_class=HTMLResponse)
    def index():
        import pathlib
        for candidate in (
            pathlib.Path(__file__).resolve().parents[2] / "frontend" / "dist" / "index.html",
            pathlib.Path.cwd() / "frontend" / "dist" / "index.html",
        ):
            if candidate.exists():
                return candidate.read_text()
        return "<html><body><h3>elastipath service</h3>" \
               "<p>No frontend build found; the JSON API is live.</p></body></html>"

    @app.get("/app.js")
    def app_js():
        import pathlib
        for candidate in (
            pathlib.Path(__file__).resolve().parents[2] / "frontend" / "dist" / "app.js",
            pathlib.Path.cwd() / "frontend" / "dist" / "app.js",
        ):
            if candidate.exists():
                return Response(content=candidate.read_text(),
                                media_type="text/javascript")
        raise HTTPException(status_code=404, detail="frontend not built")

    return app
