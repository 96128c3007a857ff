"""Local HTTP/WebSocket render service for interactive asset inspection.

One mutable viewer state guarded by a lock; every accepted state change
enqueues an immutable snapshot for each stream consumer (latest wins), so a
pushed frame always reflects exactly one accepted state.
"""

from __future__ import annotations

import asyncio
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, Response

from . import images
from .asset import SplatAsset, load_asset
from .camera import Camera, orbit
from .errors import InvariantError
from .fit import deferred_prune
from .mesh import ExpressionWeights, FaceMesh, load_mesh
from .renderer import RenderConfig, render_asset


@dataclass
class ViewerState:
    asset_id: str
    weights: list
    camera: dict
    prune_threshold: float = 0.0
    background: tuple = (0.0, 0.0, 0.0)
    seq: int = 0

    def to_dict(self) -> dict:
        return {
            "assetId": self.asset_id,
            "weights": list(map(float, self.weights)),
            "camera": self.camera,
            "pruneThreshold": self.prune_threshold,
            "background": list(self.background),
            "seq": self.seq,
        }


class AssetStore:
    """Lazy loader for `<name>.gfa` + `<name>.obj` pairs in one directory."""

    def __init__(self, asset_dir):
        self.asset_dir = Path(asset_dir)
        self._cache: dict[str, tuple[SplatAsset, FaceMesh]] = {}

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.asset_dir.glob("*.gfa"))

    def get(self, asset_id: str):
        if asset_id not in self._cache:
            gfa = self.asset_dir / f"{asset_id}.gfa"
            obj = self.asset_dir / f"{asset_id}.obj"
            if not gfa.exists() or not obj.exists():
                raise KeyError(asset_id)
            mesh = load_mesh(obj)
            asset = load_asset(gfa)
            asset.validate(mesh)
            self._cache[asset_id] = (asset, mesh)
        return self._cache[asset_id]


def _bad_request(field_name: str, message: str):
    raise HTTPException(status_code=400,
                        detail={"field": field_name, "message": message})


def _validate_state(store: AssetStore, body: dict) -> ViewerState:
    if not isinstance(body, dict):
        _bad_request("body", "state must be a JSON object")
    asset_id = body.get("assetId")
    if not isinstance(asset_id, str):
        _bad_request("assetId", "missing or not a string")
    try:
        asset, mesh = store.get(asset_id)
    except KeyError:
        raise HTTPException(status_code=404, detail={"field": "assetId",
                                                     "message": f"unknown asset {asset_id!r}"})
    weights = body.get("weights")
    if not isinstance(weights, list) or len(weights) != mesh.num_blendshapes:
        _bad_request("weights",
                     f"expected {mesh.num_blendshapes} blendshape weights")
    try:
        w = np.asarray(weights, dtype=np.float32)
    except (TypeError, ValueError):
        _bad_request("weights", "weights must be numbers")
        raise
    if w.size and (w.min() < 0.0 or w.max() > 1.0):
        _bad_request("weights", "weights must lie in [0, 1]")
    try:
        camera = Camera.from_dict(body.get("camera") or {})
    except (InvariantError, KeyError, TypeError, ValueError) as exc:
        _bad_request("camera", str(exc))
        raise
    thr = body.get("pruneThreshold", 0.0)
    if not isinstance(thr, (int, float)) or not (0.0 <= float(thr) < 1.0):
        _bad_request("pruneThreshold", "must lie in [0, 1)")
    bg = body.get("background", [0.0, 0.0, 0.0])
    if not isinstance(bg, list) or len(bg) != 3:
        _bad_request("background", "must be an RGB triple")
    return ViewerState(asset_id=asset_id, weights=[float(x) for x in weights],
                       camera=camera.to_dict(), prune_threshold=float(thr),
                       background=tuple(float(x) for x in bg))


def default_state(store: AssetStore, asset_id: str) -> ViewerState:
    asset, mesh = store.get(asset_id)
    verts = mesh.vertices
    center = verts.mean(axis=0)
    radius = float(np.linalg.norm(verts - center, axis=1).max())
    cam = orbit(center, 3.4 * max(radius, 1e-3), 20.0, 12.0, fov=33.0,
                width=256, height=256)
    return ViewerState(asset_id=asset_id,
                       weights=[0.0] * mesh.num_blendshapes,
                       camera=cam.to_dict(), prune_threshold=0.0,
                       background=(0.0, 0.0, 0.0), seq=1)


def render_state_png(store: AssetStore, state: ViewerState,
                     render_config: RenderConfig | None = None) -> bytes:
    asset, mesh = store.get(state.asset_id)
    camera = Camera.from_dict(state.camera)
    out = render_asset(asset, mesh, ExpressionWeights(np.asarray(state.weights,
                                                                 dtype=np.float32)),
                       camera, background=state.background, config=render_config,
                       prune_sigma=state.prune_threshold or None)
    return images.encode_png_bytes(images.gamma_encode(out.image))


def create_app(asset_dir, render_config: RenderConfig | None = None,
               ui_dir=None) -> FastAPI:
    app = FastAPI(title="facesplat render service")
    store = AssetStore(asset_dir)
    lock = threading.Lock()
    metrics = {"renders": 0, "frame_times_ms": [], "last_frame_ms": None}
    streams: set[asyncio.Queue] = set()

    ids = store.ids()
    state = default_state(store, ids[0]) if ids else None
    app.state.viewer = state
    app.state.store = store

    def current_state() -> ViewerState:
        if app.state.viewer is None:
            raise HTTPException(status_code=404,
                                detail={"field": "assetId",
                                        "message": "no assets available"})
        return app.state.viewer

    def timed_render(snapshot: ViewerState) -> bytes:
        start = time.perf_counter()
        png = render_state_png(store, snapshot, render_config)
        ms = (time.perf_counter() - start) * 1e3
        with lock:
            metrics["renders"] += 1
            metrics["last_frame_ms"] = ms
            metrics["frame_times_ms"].append(ms)
            del metrics["frame_times_ms"][:-50]
        return png

    @app.get("/assets")
    def list_assets():
        out = []
        for asset_id in store.ids():
            asset, mesh = store.get(asset_id)
            out.append({"id": asset_id, "points": asset.num_points,
                        "blendshapes": mesh.num_blendshapes,
                        "shDegree": asset.sh_degree})
        return out

    @app.get("/state")
    def get_state():
        return current_state().to_dict()

    @app.post("/state")
    async def post_state(body: dict):
        new_state = _validate_state(store, body)
        with lock:
            old = app.state.viewer
            new_state.seq = (old.seq if old else 0) + 1
            app.state.viewer = new_state
        for queue in list(streams):
            # latest wins: drop the stale pending snapshot if the consumer lags
            if queue.full():
                try:
                    queue.get_nowait()
                except asyncio.QueueEmpty:
                    pass
            queue.put_nowait(new_state)
        return new_state.to_dict()

    @app.get("/frame")
    async def get_frame():
        snapshot = current_state()
        png = await asyncio.to_thread(timed_render, snapshot)
        return Response(content=png, media_type="image/png",
                        headers={"X-State-Seq": str(snapshot.seq)})

    @app.get("/metrics")
    def get_metrics():
        snapshot = current_state()
        asset, _ = store.get(snapshot.asset_id)
        visible = deferred_prune(asset, snapshot.prune_threshold).num_points \
            if snapshot.prune_threshold > 0 else asset.num_points
        with lock:
            times = list(metrics["frame_times_ms"])
            mean = float(np.mean(times)) if times else None
            payload = {
                "renders": metrics["renders"],
                "lastFrameMs": metrics["last_frame_ms"],
                "meanFrameMs": mean,
                "assetId": snapshot.asset_id,
                "totalPoints": asset.num_points,
                "visiblePoints": int(visible),
                "seq": snapshot.seq,
            }
        return payload

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=1)
        streams.add(queue)
        try:
            snapshot = app.state.viewer
            if snapshot is not None:
                queue.put_nowait(snapshot)
            while True:
                snapshot = await queue.get()
                png = await asyncio.to_thread(timed_render, snapshot)
                # sequence metadata rides a text message; the binary frame is
                # exactly 4-byte big-endian length + PNG bytes
                await ws.send_text(f'{{"seq": {snapshot.seq}}}')
                await ws.send_bytes(struct.pack(">I", len(png)) + png)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            streams.discard(queue)

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def index():
            return FileResponse(str(Path(ui_dir) / "index.html"))

    return app
