"""Session server: HTTP document endpoints plus the websocket session
protocol. One project per process; every mutation routes through the single
BridgeSession owner on the event loop. See docs/protocol.md for the full
message catalog."""

from __future__ import annotations

import asyncio
import itertools
import json
from pathlib import Path

import numpy as np
from aiohttp import WSMsgType, web

from .bridge import ENGINE, BridgeSession
from .errors import CellTraceError
from .graph import LineageGraph
from .project import ProjectManifest, load_project, save_project
from .volume import VolumeTimeSeries, load_volume

PROTOCOL_VERSION = 1

HOST_KEY = web.AppKey("host", "SessionHost")
PLAYBACK_KEY = web.AppKey("playback", "asyncio.Task")


class SessionHost:
    """Owns the session plus project metadata and translates wire messages."""

    def __init__(self, session: BridgeSession, name: str = "project",
                 manifest: ProjectManifest | None = None):
        self.session = session
        self.name = name
        self.manifest = manifest
        self._ids = itertools.count(1)

    @classmethod
    def from_manifest(cls, manifest: ProjectManifest) -> "SessionHost":
        volume = load_volume(manifest.volume) if manifest.volume else None
        if manifest.graph:
            graph, name = load_project(manifest.graph)
        else:
            timepoints = volume.header.timepoints if volume else 1
            graph, name = LineageGraph(timepoints=timepoints), manifest.name
        session = BridgeSession(
            graph, volume=volume,
            merge_radius=manifest.merge_radius,
            smoothing=manifest.smoothing,
            detection=manifest.detection,
            linking=manifest.linking,
            direction=manifest.direction,
            playback_rate=manifest.playback_rate,
        )
        return cls(session, name=manifest.name or name, manifest=manifest)

    def next_client_id(self) -> str:
        return f"client-{next(self._ids)}"

    # -- wire message dispatch -------------------------------------------------

    def dispatch(self, client_id: str, raw) -> list[dict]:
        """Handle one inbound message; returns envelopes for the sender.
        Malformed input of any shape yields a rejection, never an exception."""
        s = self.session
        try:
            msg = json.loads(raw) if isinstance(raw, (str, bytes)) else raw
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
            mtype = msg.get("type")
            payload = msg.get("payload") or {}
            if not isinstance(payload, dict):
                raise ValueError("payload must be an object")
            if mtype == "edit":
                return [s.submit_edit(client_id, payload.get("kind"), payload)]
            if mtype == "setTimepoint":
                return [s.set_timepoint(client_id, int(payload["t"]))]
            if mtype == "startAnnotation":
                return [s.start_annotation(client_id)]
            if mtype == "annotate":
                return [s.annotate(client_id, _vec3(payload["position"]))]
            if mtype == "terminateTrack":
                return [s.terminate_track(client_id)]
            if mtype == "startTrace":
                return [s.start_trace(client_id)]
            if mtype == "appendRay":
                return [s.append_ray(
                    client_id, _vec3(payload["origin"]), _vec3(payload["direction"]),
                    step=payload.get("step"), max_distance=payload.get("maxDistance"))]
            if mtype == "endTrace":
                return [s.end_trace(client_id)]
            if mtype == "action":
                return [s.run_action(client_id, payload.get("name"),
                                     payload.get("params") or {})]
            if mtype == "advancePlayback":
                out = s.advance_playback()
                return [out] if out is not None else []
            if mtype == "play":
                s.playback_rate = float(payload.get("rate", s.playback_rate))
                s.playing = True
                return [{"type": "ack", "version": s.graph.version, "origin": ENGINE,
                         "payload": {"of": "play", "rate": s.playback_rate}}]
            if mtype == "pause":
                s.playing = False
                return [{"type": "ack", "version": s.graph.version, "origin": ENGINE,
                         "payload": {"of": "pause"}}]
            if mtype == "ping":
                return [{"type": "pong", "version": s.graph.version, "origin": ENGINE,
                         "payload": {}}]
            raise ValueError(f"unknown message type {mtype!r}")
        except CellTraceError as exc:
            return [_rejection(s, str(exc))]
        except Exception as exc:  # malformed JSON, bad fields, wrong shapes
            return [_rejection(s, f"malformed message: {exc}")]


def _vec3(v) -> list[float]:
    out = [float(x) for x in v]
    if len(out) != 3:
        raise ValueError("expected a 3-vector")
    return out


def _rejection(session: BridgeSession, reason: str) -> dict:
    return {"type": "rejection", "version": session.graph.version,
            "origin": ENGINE, "payload": {"reason": reason}}


# -- HTTP handlers --------------------------------------------------------------------


async def _get_project(request):
    host: SessionHost = request.app[HOST_KEY]
    return web.json_response(save_project(host.session.graph, host.name))


async def _put_project(request):
    host: SessionHost = request.app[HOST_KEY]
    try:
        doc = await request.json()
        graph, name = load_project(doc)
    except Exception as exc:
        return web.json_response({"error": f"bad project document: {exc}"}, status=400)
    host.session.replace_graph(graph)
    host.name = name
    return web.json_response({"ok": True, "version": graph.version})


async def _get_graph(request):
    host: SessionHost = request.app[HOST_KEY]
    return web.json_response(host.session.graph.snapshot())


async def _export_spots(request):
    host: SessionHost = request.app[HOST_KEY]
    return web.Response(text=host.session.graph.export_spots_csv(),
                        content_type="text/csv")


async def _export_links(request):
    host: SessionHost = request.app[HOST_KEY]
    return web.Response(text=host.session.graph.export_links_csv(),
                        content_type="text/csv")


async def _get_volume_header(request):
    host: SessionHost = request.app[HOST_KEY]
    vol = host.session.volume
    if vol is None:
        return web.json_response({"error": "session has no volume"}, status=404)
    return web.json_response(vol.header.to_json())


async def _get_slab(request):
    """Raw little-endian uint16 slab of one timepoint, clipped to the volume;
    the actual box is reported in the X-Slab-Box header (z-major, y, x)."""
    host: SessionHost = request.app[HOST_KEY]
    vol: VolumeTimeSeries = host.session.volume
    if vol is None:
        return web.json_response({"error": "session has no volume"}, status=404)
    q = request.query
    try:
        t = int(q.get("t", host.session.current_timepoint))
        dx, dy, dz = vol.header.dims
        x0 = max(0, int(q.get("x0", 0)))
        y0 = max(0, int(q.get("y0", 0)))
        z0 = max(0, int(q.get("z0", 0)))
        x1 = min(dx, int(q.get("x1", dx)))
        y1 = min(dy, int(q.get("y1", dy)))
        z1 = min(dz, int(q.get("z1", dz)))
        if not 0 <= t < vol.header.timepoints:
            raise ValueError(f"timepoint {t} out of range")
        x1, y1, z1 = max(x0, x1), max(y0, y1), max(z0, z1)
    except ValueError as exc:
        return web.json_response({"error": str(exc)}, status=400)
    slab = vol.frames[t, z0:z1, y0:y1, x0:x1]
    box = {"t": t, "box": [x0, x1, y0, y1, z0, z1],
           "shape": [x1 - x0, y1 - y0, z1 - z0]}
    return web.Response(
        body=np.ascontiguousarray(slab).astype("<u2").tobytes(),
        content_type="application/octet-stream",
        headers={"X-Slab-Box": json.dumps(box)},
    )


async def _ws_session(request):
    host: SessionHost = request.app[HOST_KEY]
    ws = web.WebSocketResponse(heartbeat=30)
    await ws.prepare(request)
    client_id = host.next_client_id()
    queue: asyncio.Queue = asyncio.Queue()

    def deliver(env):
        queue.put_nowait(env)

    hello = host.session.connect(client_id, deliver)
    queue.put_nowait(hello)

    async def writer():
        while True:
            env = await queue.get()
            await ws.send_json(env)

    writer_task = asyncio.create_task(writer())
    try:
        async for msg in ws:
            if msg.type == WSMsgType.TEXT:
                for resp in host.dispatch(client_id, msg.data):
                    queue.put_nowait(resp)
            elif msg.type == WSMsgType.ERROR:
                break
    finally:
        writer_task.cancel()
        host.session.disconnect(client_id)
    return ws


async def _playback_loop(app):
    """Engine-driven playback: steps time while playing or tracing."""
    host: SessionHost = app[HOST_KEY]
    try:
        while True:
            session = host.session
            stepping = session.playing or session.mode == BridgeSession.TRACE
            if stepping and session.playback_rate > 0:
                session.advance_playback()
                await asyncio.sleep(1.0 / session.playback_rate)
            else:
                await asyncio.sleep(0.05)
    except asyncio.CancelledError:
        pass


async def _start_background(app):
    app[PLAYBACK_KEY] = asyncio.create_task(_playback_loop(app))


async def _stop_background(app):
    app[PLAYBACK_KEY].cancel()


def build_app(host: SessionHost, *, playback: bool = False) -> web.Application:
    app = web.Application()
    app[HOST_KEY] = host
    app.add_routes([
        web.get("/api/project", _get_project),
        web.put("/api/project", _put_project),
        web.get("/api/graph", _get_graph),
        web.get("/api/export/spots.csv", _export_spots),
        web.get("/api/export/links.csv", _export_links),
        web.get("/api/volume", _get_volume_header),
        web.get("/api/volume/slab", _get_slab),
        web.get("/session", _ws_session),
    ])
    static_dir = Path(__file__).parent / "static"
    if static_dir.is_dir():
        app.add_routes([web.static("/app", static_dir)])
    if playback:
        app.on_startup.append(_start_background)
        app.on_cleanup.append(_stop_background)
    return app


def serve(manifest: ProjectManifest, bind: str = "127.0.0.1:8765") -> None:
    """Run the server until interrupted."""
    host = SessionHost.from_manifest(manifest)
    app = build_app(host, playback=True)
    addr, _, port = bind.partition(":")
    web.run_app(app, host=addr or "127.0.0.1", port=int(port or 8765))
