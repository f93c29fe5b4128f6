"""Live service: the bridge between the engine and the browser canvas.

Endpoints:
    GET  /state       consistent JSON snapshot of the engine (live tracks,
                      provisional normality, recent finished scores, the
                      day's palette, current threshold)
    GET  /render.png  rendered raster of the current picture
    WS   /live        bidirectional stream: the client sends pointer
                      samples, the server feeds them to the engine as
                      detections and pushes track updates back

Wire format is JSON with an explicit schema version.  The client opens
with a hello carrying its canvas size; the server replies with the scene
bounds and an opaque client id, then maps every pointer sample onto the
ground plane through the fixed canvas-to-scene affine.  Timestamps are
server-assigned at ingest, which keeps the engine's frame clock strictly
monotonic no matter how client clocks behave.

Concurrency: many websocket sessions feed one engine.  Samples land in a
per-client slot under a lock; a single ticker task drains the slots at
the frame rate, steps the engine (the lone mutator), and broadcasts the
fresh snapshot, so readers never observe a half-applied update.
"""

from __future__ import annotations

import asyncio
import contextlib
import copy
import datetime as dt
import io
import json
import logging
import math
import os
import threading
import time
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

log = logging.getLogger(__name__)

from .pipeline import Engine, PipelineConfig
from .normality import NormalityModel
from .render import render_frame
from .storage import SessionManager, TrackRecord
from .tracking import Detection

SCHEMA = 1
TICK_HZ = 15.0
POINTER_BLOB_SIZE = 0.25  # m^2, a person-equivalent blob
UPDATE_POINT_CAP = 250  # points per track in periodic updates
RECENT_FINISHED_CAP = 50


class LiveEngine:
    """Thread-safe single-mutator wrapper around the pipeline engine."""

    def __init__(
        self,
        config: PipelineConfig,
        model: NormalityModel | None = None,
        session_manager: SessionManager | None = None,
    ):
        self.config = config
        self.engine = Engine(config, model=model, session_manager=session_manager)
        self.lock = threading.Lock()
        self.t0 = time.monotonic()
        self.last_t: float | None = None
        self._pending: dict[int, tuple[float, float]] = {}
        self._owners: dict[int, int | None] = {}  # track id -> client id

    def now(self) -> float:
        return time.monotonic() - self.t0

    def ingest(self, client_id: int, x: float, y: float) -> None:
        """Latest-sample-wins slot per client; drained at the next tick."""
        with self.lock:
            self._pending[client_id] = (x, y)

    def tick(self) -> dict:
        """Advance one frame and return the broadcast payload."""
        with self.lock:
            t = self.now()
            if self.last_t is not None and t <= self.last_t:
                t = self.last_t + 1e-4
            dets = [
                Detection(t=t, x=x, y=y, size=POINTER_BLOB_SIZE, tag=cid)
                for cid, (x, y) in self._pending.items()
            ]
            self._pending.clear()

            seen = len(self.engine.records)
            self.engine.process_frame(t, dets)
            self.last_t = t
            if self.engine.sessions is not None:
                self.engine.sessions.roll(dt.datetime.now())
            for track in self.engine.tracker.live:
                self._owners[track.id] = track.tag

            finals = [
                {
                    "type": "final",
                    "track_id": record.track_id,
                    "owner": self._owners.get(record.track_id),
                    "normality": record.normality,
                    "atypical": self._is_atypical(record.normality),
                    "points": [
                        [pt, px, py]
                        for pt, px, py in self.engine.finished_tracks[record.track_id]
                    ],
                }
                for record in self.engine.records[seen:]
            ]
            return self._update_payload(t, finals)

    def _is_atypical(self, score) -> bool | None:
        if score is None or self.engine.threshold is None:
            return None
        return bool(score < self.engine.threshold)

    def _update_payload(self, t: float, finals: list) -> dict:
        provisional = self.engine.provisional_scores()
        tracks = []
        for track in self.engine.tracker.live:
            if not track.was_confirmed:
                continue
            pts = track.points[-UPDATE_POINT_CAP:]
            score = provisional.get(track.id)
            tracks.append(
                {
                    "id": track.id,
                    "owner": track.tag,
                    "points": [[pt, px, py] for pt, px, py in pts],
                    "normality": score,
                    "atypical": self._is_atypical(score),
                }
            )
        return {
            "type": "update",
            "schema": SCHEMA,
            "t": t,
            "threshold": self.engine.threshold,
            "tracks": tracks,
            "finals": finals,
        }

    def refresh_threshold(self) -> None:
        """Recompute the cutoff from the scores collected so far."""
        from .normality import TooFewValues, detect_threshold

        scores = [r.normality for r in self.engine.records if r.normality is not None]
        try:
            self.engine.threshold = detect_threshold(scores, self.config.target_fraction)
        except TooFewValues:
            pass

    def state_snapshot(self) -> dict:
        with self.lock:
            provisional = self.engine.provisional_scores()
            tracks = [
                {
                    "id": track.id,
                    "points": [[pt, px, py] for pt, px, py in track.points],
                    "normality": provisional.get(track.id),
                }
                for track in self.engine.tracker.live
                if track.was_confirmed
            ]
            recent = [
                {"track_id": r.track_id, "normality": r.normality}
                for r in self.engine.records[-RECENT_FINISHED_CAP:]
            ]
            session = self.engine.sessions.session if self.engine.sessions else None
            palette = None
            if session is not None:
                palette = {
                    "date": session.date.isoformat(),
                    "foreground": session.foreground,
                    "background": session.background,
                    "line_width": session.line_width,
                }
            return {
                "schema": SCHEMA,
                "t": self.now(),
                "tracks": tracks,
                "finished": recent,
                "palette": palette,
                "threshold": self.engine.threshold,
                "bounds": list(self.config.scene_bounds),
            }


class _Connection:
    """One websocket client: calibration plus a serialized sender."""

    _next_id = 1

    def __init__(self, ws: WebSocket):
        self.ws = ws
        self.id = _Connection._next_id
        _Connection._next_id += 1
        self.canvas: tuple[float, float] | None = None
        self.send_lock = asyncio.Lock()

    async def send(self, payload: dict) -> None:
        async with self.send_lock:
            await self.ws.send_text(json.dumps(payload))

    def to_ground(self, x: float, y: float, bounds) -> tuple[float, float]:
        x0, y0, x1, y1 = bounds
        w, h = self.canvas
        gx = x0 + (x / w) * (x1 - x0)
        gy = y0 + (1.0 - y / h) * (y1 - y0)
        return gx, gy


def build_service(
    config: PipelineConfig | None = None,
    model_path=None,
    freeze: bool = False,
    session_dir=None,
    tick_hz: float = TICK_HZ,
) -> FastAPI:
    config = config or PipelineConfig()
    if freeze:
        config.train = False
    model = NormalityModel.load(model_path) if model_path else None

    if session_dir is None:
        from .cli import data_dir

        session_dir = data_dir()
    sessions = SessionManager(session_dir, dt.datetime.now())

    live = LiveEngine(config, model=model, session_manager=sessions)
    connections: set[_Connection] = set()

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.ready = True
        ticker = asyncio.create_task(_tick_loop())
        yield
        app.state.ready = False
        ticker.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await ticker

    async def _tick_loop():
        while True:
            try:
                payload = await asyncio.to_thread(live.tick)
                if payload["finals"]:
                    await asyncio.to_thread(live.refresh_threshold)
                    payload["threshold"] = live.engine.threshold
                if connections:
                    await asyncio.gather(
                        *(conn.send(payload) for conn in list(connections)),
                        return_exceptions=True,
                    )
            except Exception:
                # The installation must outlive a bad frame; skip it.
                log.exception("frame tick failed")
            await asyncio.sleep(1.0 / tick_hz)

    app = FastAPI(lifespan=lifespan)
    app.state.live = live
    app.state.ready = False

    @app.get("/state")
    def state():
        if not app.state.ready:
            return JSONResponse({"error": "engine not ready"}, status_code=503)
        return live.state_snapshot()

    @app.get("/render.png")
    def render_png():
        if not app.state.ready:
            return JSONResponse({"error": "engine not ready"}, status_code=503)
        # Copy under the lock, render outside it: readers must not stall
        # the frame loop.
        with live.lock:
            session = copy.deepcopy(sessions.session)
            live_tracks = [
                TrackRecord(tr.id, list(tr.points)) for tr in live.engine.tracker.live
            ]
            now = live.last_t if live.last_t is not None else 0.0
        image = render_frame(
            session, live_tracks, now, (480, 480), bounds=config.scene_bounds
        )
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.websocket("/live")
    async def live_ws(ws: WebSocket):
        await ws.accept()
        conn = _Connection(ws)
        await conn.send(
            {
                "type": "hello",
                "schema": SCHEMA,
                "client_id": conn.id,
                "bounds": list(config.scene_bounds),
                "tick_hz": tick_hz,
            }
        )
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await _violate(conn, "message is not valid JSON")
                    return
                kind = msg.get("type")
                if kind == "hello":
                    canvas = msg.get("canvas") or {}
                    width, height = canvas.get("width"), canvas.get("height")
                    if not (
                        isinstance(width, (int, float))
                        and isinstance(height, (int, float))
                        and width > 0
                        and height > 0
                    ):
                        await _violate(conn, "hello.canvas must carry positive width/height")
                        return
                    conn.canvas = (float(width), float(height))
                    connections.add(conn)
                elif kind == "pointer":
                    if conn.canvas is None:
                        await _violate(conn, "pointer before hello/calibration")
                        return
                    try:
                        x, y = float(msg["x"]), float(msg["y"])
                    except (KeyError, TypeError, ValueError):
                        await _violate(conn, "pointer must carry numeric x/y")
                        return
                    # json.loads admits Infinity/NaN tokens; a non-finite
                    # sample must not reach the frame loop.
                    if not (math.isfinite(x) and math.isfinite(y)):
                        await _violate(conn, "pointer coordinates must be finite")
                        return
                    gx, gy = conn.to_ground(x, y, config.scene_bounds)
                    live.ingest(conn.id, gx, gy)
                else:
                    await _violate(conn, f"unknown message type {kind!r}")
                    return
        except WebSocketDisconnect:
            pass
        finally:
            connections.discard(conn)

    async def _violate(conn: _Connection, reason: str):
        connections.discard(conn)
        with contextlib.suppress(Exception):
            await conn.send({"type": "error", "message": reason})
            await conn.ws.close(code=1002)

    ui_dir = Path(os.environ.get("ATRIUM_UI_DIR", "frontend/dist"))
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
