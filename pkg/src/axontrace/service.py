"""HTTP JSON API over a loaded tracing session.

One process serves one session: a volume, its fragments and the immutable
transition graph. Clients view maximum intensity projections, pick fragments
by clicking, and request most-probable paths between picked fragments. Trace
results are stored under incrementing ids and can be listed, deleted and
exported as SWC.
"""

from __future__ import annotations

import colorsys
import io
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .metrics import swc_text
from .solver import NoPathError
from .tracer import NeuronTracer
from .volume import mip

PICK_RADIUS_PX = 10.0

_AXIS_PLANES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}


@dataclass
class Session:
    tracer: NeuronTracer
    traces: dict[int, dict] = field(default_factory=dict)
    next_trace_id: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def volume(self):
        return self.tracer.volume_

    @property
    def fragments(self):
        return self.tracer.fragments_


def build_session(cfg) -> Session:
    """Fit a NeuronTracer from a PipelineConfig and wrap it in a session."""
    from .cli import _fit_tracer

    return Session(tracer=_fit_tracer(cfg))


class TraceRequest(BaseModel):
    start_fragment: int
    start_orientation: str = "forward"
    end_fragment: int
    end_orientation: str = "forward"
    name: str | None = None


class PickRequest(BaseModel):
    x_px: float
    y_px: float
    axis: str = "z"


def _check_axis(axis: str) -> str:
    if axis not in _AXIS_PLANES:
        raise HTTPException(status_code=400, detail=f"axis must be x, y or z, got {axis!r}")
    return axis


def _fragment_color(fragment_id: int) -> tuple[int, int, int]:
    """Stable, well-separated color per id (golden-angle hue walk)."""
    hue = (fragment_id * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return int(255 * r), int(255 * g), int(255 * b)


def _to_png(rgb: np.ndarray) -> Response:
    # incoming array is indexed [u, v]; PIL wants rows=v, cols=u
    image = Image.fromarray(np.swapaxes(rgb, 0, 1))
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def _mip_gray(session: Session, axis: str) -> np.ndarray:
    proj = mip(session.volume, axis).astype(float)
    lo, hi = proj.min(), proj.max()
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    return ((proj - lo) * scale).astype(np.uint8)


def _projected_endpoints(session: Session, axis: str) -> list[dict]:
    a, b = _AXIS_PLANES[axis]
    out = []
    for f in session.fragments.fragments:
        out.append({
            "id": f.id,
            "x0_px": [int(f.e0[a]), int(f.e0[b])],
            "x1_px": [int(f.e1[a]), int(f.e1[b])],
        })
    return out


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="axontrace session")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/session/info")
    def session_info():
        vol = session.volume
        return {
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
            "n_fragments": len(session.fragments),
            "hyperparams": session.tracer.hyperparams().to_dict(),
        }

    @app.get("/mip")
    def mip_png(axis: str = "z"):
        _check_axis(axis)
        gray = _mip_gray(session, axis)
        return _to_png(np.stack([gray, gray, gray], axis=-1))

    @app.get("/fragments")
    def fragments_view(axis: str = "z", as_: str = Query("png", alias="as")):
        _check_axis(axis)
        if as_ == "json":
            return {"axis": axis, "fragments": _projected_endpoints(session, axis)}
        gray = _mip_gray(session, axis)
        rgb = np.stack([gray, gray, gray], axis=-1)
        labels2d = mip(session.tracer.label_volume_, axis)
        for fid in np.unique(labels2d):
            if fid == 0:
                continue
            where = labels2d == fid
            color = np.asarray(_fragment_color(int(fid)), dtype=np.uint8)
            rgb[where] = (0.35 * rgb[where] + 0.65 * color).astype(np.uint8)
        return _to_png(rgb)

    @app.get("/fragments/endpoints")
    def fragments_endpoints(axis: str = "z"):
        _check_axis(axis)
        return {"axis": axis, "fragments": _projected_endpoints(session, axis)}

    @app.post("/trace")
    def post_trace(body: TraceRequest):
        fragment_ids = {f.id for f in session.fragments.fragments}
        for fid in (body.start_fragment, body.end_fragment):
            if fid not in fragment_ids:
                raise HTTPException(status_code=404, detail=f"unknown fragment {fid}")
        try:
            trace = session.tracer.trace(
                body.start_fragment, body.start_orientation,
                body.end_fragment, body.end_orientation,
            )
        except NoPathError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with session.lock:
            trace_id = session.next_trace_id
            session.next_trace_id += 1
            payload = {"id": trace_id, "name": body.name or f"trace-{trace_id}"}
            payload.update(trace.to_dict())
            session.traces[trace_id] = payload
        return payload

    @app.get("/traces")
    def list_traces():
        with session.lock:
            return {"traces": sorted(session.traces.values(), key=lambda t: t["id"])}

    @app.delete("/trace/{trace_id}")
    def delete_trace(trace_id: int):
        with session.lock:
            if trace_id not in session.traces:
                raise HTTPException(status_code=404, detail=f"unknown trace {trace_id}")
            del session.traces[trace_id]
        return {"deleted": trace_id}

    @app.get("/trace/{trace_id}/swc")
    def trace_swc(trace_id: int):
        with session.lock:
            if trace_id not in session.traces:
                raise HTTPException(status_code=404, detail=f"unknown trace {trace_id}")
            polyline = np.asarray(session.traces[trace_id]["polyline_um"])
        return Response(content=swc_text(polyline), media_type="text/plain")

    @app.post("/pick")
    def pick(body: PickRequest):
        axis = _check_axis(body.axis)
        click = np.array([body.x_px, body.y_px], dtype=float)
        best_id, best_d = None, np.inf
        # endpoints iterate in ascending fragment id, so strict < keeps the
        # smaller id on exact ties
        for item in _projected_endpoints(session, axis):
            for key in ("x0_px", "x1_px"):
                d = float(np.linalg.norm(np.asarray(item[key], dtype=float) - click))
                if d < best_d:
                    best_id, best_d = item["id"], d
        if best_id is None or best_d > PICK_RADIUS_PX:
            raise HTTPException(status_code=404, detail="no fragment near that pixel")
        return {"fragment": best_id, "distance_px": best_d}

    return app
