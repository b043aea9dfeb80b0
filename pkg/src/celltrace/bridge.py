"""Bidirectional edit synchronization between the engine and its clients.

One session owner serializes all mutations. Every applied edit is broadcast
exactly once to every client except the originator (the originator gets an
ack); a guard lock is held while an update is dispatched, and any edit that
arrives re-entrantly while the lock is held is applied but emits nothing,
which breaks feedback loops between mirrored event listeners.

Also implements the annotation semantics: click-to-annotate with automatic
time advance (backwards by default), merge into existing spots, and the
start/append/end lifecycle of pointer/gaze trace recording.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


from . import detect as detectmod
from .errors import (
    CellTraceError,
    ExtractionFailedError,
    NotFoundError,
    StateError,
    ValidationError,
)
from .graph import LineageGraph, load_snapshot
from .render import update_for_timepoint
from .trace import (
    RayProfile,
    SmoothingConfig,
    TraceSession,
    commit_track,
    extract_track,
)
from .volume import VolumeTimeSeries

ENGINE = "ENGINE"

EDIT_KINDS = ("addSpot", "moveSpot", "deleteSpot", "addLink", "deleteLink")


class BridgeLock:
    """Per-session update guard; re-entrant emissions are suppressed."""

    def __init__(self):
        self.updating = False

    def __enter__(self):
        self.updating = True
        return self

    def __exit__(self, *exc):
        self.updating = False
        return False


@dataclass
class AnnotationCursor:
    active_track: list[int] = field(default_factory=list)  # capture order
    current_timepoint: int = 0
    direction: str = "backwards"

    @property
    def step(self) -> int:
        return -1 if self.direction == "backwards" else 1


@dataclass
class RenderAttachment:
    pools: object
    window: object
    cmap: object


class BridgeSession:
    """Session owner: graph + optional volume, connected clients, and modes."""

    BROWSE, ANNOTATE, TRACE = "browse", "annotate", "trace"

    def __init__(self, graph: LineageGraph, volume: VolumeTimeSeries | None = None,
                 merge_radius: float | None = None,
                 smoothing: SmoothingConfig | None = None,
                 detection: detectmod.DetectionConfig | None = None,
                 linking: detectmod.LinkingConfig | None = None,
                 direction: str = "backwards",
                 playback_rate: float = 4.0,
                 record_log: bool = False):
        self.graph = graph
        self.volume = volume
        if merge_radius is None:
            merge_radius = 2.0 * min(volume.header.voxel_size) if volume else 2.0
        self.merge_radius = float(merge_radius)
        self.smoothing = smoothing or SmoothingConfig()
        self.detection = detection or detectmod.DetectionConfig(2.0, 3.2)
        self.linking = linking or detectmod.LinkingConfig(5.0)
        self.direction = direction
        self.playback_rate = float(playback_rate)
        self.current_timepoint = 0
        self.mode = self.BROWSE
        self.cursor: AnnotationCursor | None = None
        self.trace: TraceSession | None = None
        self.render: RenderAttachment | None = None
        self.lock = BridgeLock()
        self.clients: dict[str, object] = {}
        self.event_log: list[dict] | None = [] if record_log else None
        self.playing = False
        self._ann_batch = None
        self._trace_origin: str | None = None

    # -- clients ------------------------------------------------------------------

    def connect(self, client_id: str, deliver) -> dict:
        """Register a client callback; returns the hello envelope."""
        if client_id in self.clients:
            raise ValidationError(f"client id {client_id!r} already connected")
        self.clients[client_id] = deliver
        payload = {
            "protocol": 1,
            "clientId": client_id,
            "timepoints": self.graph.timepoints,
            "currentTimepoint": self.current_timepoint,
            "direction": self.direction,
            "mergeRadius": self.merge_radius,
            "snapshot": self.graph.snapshot(),
        }
        if self.volume is not None:
            payload["volume"] = self.volume.header.to_json()
        return self._envelope("hello", ENGINE, payload, bump=False)

    def disconnect(self, client_id: str) -> None:
        self.clients.pop(client_id, None)

    # -- envelopes and emission -----------------------------------------------------

    def _envelope(self, kind: str, origin: str, payload: dict, *, bump: bool = True,
                  version: int | None = None) -> dict:
        if version is None:
            version = self.graph.bump_version() if bump else self.graph.version
        return {"type": kind, "version": version, "origin": origin, "payload": payload}

    def _ack(self, origin: str, of: str, payload: dict) -> dict:
        return {"type": "ack", "version": self.graph.version, "origin": ENGINE,
                "payload": {"of": of, **payload}}

    def _reject(self, origin: str, of: str, reason: str) -> dict:
        return {"type": "rejection", "version": self.graph.version, "origin": ENGINE,
                "payload": {"of": of, "reason": reason}}

    def _emit(self, events: list[tuple[dict, str | None]]) -> None:
        """Deliver events; each entry is (envelope, excluded client id)."""
        for env, exclude in events:
            if self.event_log is not None:
                self.event_log.append(env)
            for cid, deliver in list(self.clients.items()):
                if cid != exclude:
                    deliver(env)

    def _dispatch(self, origin: str, of: str, fn) -> dict:
        """Run a mutation and emit its events unless the lock is held."""
        reentrant = self.lock.updating
        try:
            ack_payload, events = fn()
        except CellTraceError as exc:
            return self._reject(origin, of, str(exc))
        if not reentrant:
            with self.lock:
                self._emit(events)
        return self._ack(origin, of, ack_payload)

    # -- generic edits -----------------------------------------------------------------

    def submit_edit(self, origin: str, kind: str, payload: dict) -> dict:
        """Apply one client edit and mirror it to every other client."""
        if kind not in EDIT_KINDS:
            return self._reject(origin, kind, f"unknown edit kind {kind!r}")

        def run():
            applied = self._apply_edit(origin, kind, dict(payload))
            return {"event": applied}, [(applied, origin)]

        return self._dispatch(origin, kind, run)

    def _apply_edit(self, origin: str, kind: str, p: dict) -> dict:
        # edits always form their own undo batch, even if they arrive while
        # an annotation batch is open on this session
        g = self.graph
        with g.undo_recorder.isolate():
            if kind == "addSpot":
                cov = p.get("covariance")
                if cov is None:
                    cov = self._default_covariance().tolist()
                sid = g.add_spot(int(p["timepoint"]), p["position"], cov)
                payload = {"id": sid, "timepoint": int(p["timepoint"]),
                           "position": g.spot_position(sid).tolist(),
                           "covariance": g.spot_covariance(sid).tolist()}
            elif kind == "moveSpot":
                g.move_spot(int(p["id"]), p["position"])
                payload = {"id": int(p["id"]),
                           "position": g.spot_position(int(p["id"])).tolist()}
            elif kind == "deleteSpot":
                g.delete_spot(int(p["id"]))
                payload = {"id": int(p["id"])}
            elif kind == "addLink":
                lid = g.add_link(int(p["source"]), int(p["target"]))
                payload = {"id": lid, "source": int(p["source"]), "target": int(p["target"])}
            else:  # deleteLink
                g.delete_link(int(p["id"]))
                payload = {"id": int(p["id"])}
        return self._envelope(kind, origin, payload, bump=False)

    def _default_covariance(self) -> np.ndarray:
        sd = self.merge_radius / 2.0
        return (sd * sd) * np.eye(3) if sd > 0 else np.zeros((3, 3))

    # -- timepoint -----------------------------------------------------------------------

    def set_timepoint(self, origin: str, t: int) -> dict:
        def run():
            clamped = min(max(int(t), 0), self.graph.timepoints - 1)
            self.current_timepoint = clamped
            payload = {"timepoint": clamped, "requested": int(t),
                       "clamped": clamped != int(t)}
            env = self._envelope("setTimepoint", origin, payload)
            self._update_render()
            return payload, [(env, origin)]

        return self._dispatch(origin, "setTimepoint", run)

    def attach_render(self, pools, window, cmap) -> None:
        self.render = RenderAttachment(pools, window, cmap)

    def _update_render(self) -> None:
        if self.render is None:
            return
        r = self.render
        if r.window.is_stale():
            from .render import VisibilityWindow
            r.window = VisibilityWindow(self.graph, r.window.width)
        update_for_timepoint(r.pools, self.graph, self.current_timepoint, r.window, r.cmap)

    # -- annotation (controller-style clicking) ---------------------------------------------

    def start_annotation(self, origin: str) -> dict:
        def run():
            if self.mode != self.BROWSE:
                raise StateError(f"cannot start annotation in mode {self.mode}")
            self.mode = self.ANNOTATE
            self.cursor = AnnotationCursor(
                current_timepoint=self.current_timepoint, direction=self.direction)
            self._ann_batch = self.graph.undo_recorder.open_batch()
            return {"timepoint": self.cursor.current_timepoint,
                    "direction": self.cursor.direction}, []

        return self._dispatch(origin, "startAnnotation", run)

    def annotate(self, origin: str, position) -> dict:
        """One annotation click: place or merge a spot, link it to the
        previous one, and advance time one step in the session direction."""

        def run():
            if self.mode != self.ANNOTATE or self.cursor is None:
                raise StateError("annotation mode is not active")
            cur = self.cursor
            t = cur.current_timepoint
            pos = np.asarray(position, float)
            events: list[tuple[dict, str | None]] = []
            hit = _nearest_spot(self.graph, t, pos, self.merge_radius,
                                exclude=set(cur.active_track))
            merged = False
            terminated = False
            link_id = None
            if hit is not None and cur.active_track:
                # merging an active track into an existing spot ends the track
                link_id = self._link_forward(hit, cur.active_track[-1])
                events.append((self._envelope(
                    "addLink", origin,
                    {"id": link_id,
                     "source": self.graph.link_endpoints(link_id)[0],
                     "target": self.graph.link_endpoints(link_id)[1]},
                    bump=False), origin))
                cur.active_track.append(hit)
                spot_id = hit
                merged = True
                terminated = True
            elif hit is not None:
                # clicking an existing spot starts the track from it
                cur.active_track.append(hit)
                spot_id = hit
                merged = True
            else:
                spot_id = self.graph.add_spot(t, pos, self._default_covariance())
                events.append((self._envelope(
                    "addSpot", origin,
                    {"id": spot_id, "timepoint": t,
                     "position": self.graph.spot_position(spot_id).tolist(),
                     "covariance": self.graph.spot_covariance(spot_id).tolist()},
                    bump=False), origin))
                if cur.active_track:
                    link_id = self._link_forward(spot_id, cur.active_track[-1])
                    events.append((self._envelope(
                        "addLink", origin,
                        {"id": link_id,
                         "source": self.graph.link_endpoints(link_id)[0],
                         "target": self.graph.link_endpoints(link_id)[1]},
                        bump=False), origin))
                cur.active_track.append(spot_id)

            nxt = t + cur.step
            if not terminated and 0 <= nxt < self.graph.timepoints:
                self.current_timepoint = nxt
                cur.current_timepoint = nxt
                events.append((self._envelope(
                    "setTimepoint", origin,
                    {"timepoint": nxt, "requested": nxt, "clamped": False}), origin))
                self._update_render()
            else:
                terminated = True
            if terminated:
                summary, t_events = self._terminate_track_inner(origin)
                events.extend(t_events)
            return {"spotId": spot_id, "timepoint": t, "merged": merged,
                    "linkId": link_id, "terminated": terminated,
                    "nextTimepoint": self.current_timepoint}, events

        return self._dispatch(origin, "annotate", run)

    def _link_forward(self, a: int, b: int) -> int:
        """Link two spots oriented forward in time, whatever the click order."""
        if self.graph.spot_timepoint(a) < self.graph.spot_timepoint(b):
            return self.graph.add_link(a, b)
        return self.graph.add_link(b, a)

    def _terminate_track_inner(self, origin: str) -> tuple[dict, list]:
        cur = self.cursor
        batch = self._ann_batch
        self._ann_batch = None
        track = list(cur.active_track) if cur else []
        self.graph.undo_recorder.close_batch(batch)
        self.cursor = None
        self.mode = self.BROWSE
        events = []
        if track:
            events.append((self._envelope(
                "fullRedraw", ENGINE, {"snapshot": self.graph.snapshot()}), None))
        return {"trackSpots": track, "spots": len(track)}, events

    def terminate_track(self, origin: str) -> dict:
        def run():
            if self.mode != self.ANNOTATE:
                raise StateError("annotation mode is not active")
            return self._terminate_track_inner(origin)

        return self._dispatch(origin, "terminateTrack", run)

    # -- gaze/pointer trace recording ------------------------------------------------------

    def start_trace(self, origin: str) -> dict:
        def run():
            if self.mode != self.BROWSE:
                raise StateError(f"cannot start a trace in mode {self.mode}")
            if self.volume is None:
                raise StateError("session has no volume to sample")
            self.mode = self.TRACE
            self.trace = TraceSession(config=self.smoothing, direction=self.direction)
            self._trace_origin = origin
            return {"timepoint": self.current_timepoint,
                    "playbackRate": self.playback_rate}, []

        return self._dispatch(origin, "startTrace", run)

    def append_ray(self, origin: str, ray_origin, direction,
                   step: float | None = None,
                   max_distance: float | None = None) -> dict:
        def run():
            if self.mode != self.TRACE or self.trace is None:
                raise StateError("no trace is being recorded")
            o = np.asarray(ray_origin, float)
            d = np.asarray(direction, float)
            norm = np.linalg.norm(d)
            if norm < 1e-12:
                raise ValidationError("ray direction must be non-zero")
            d = d / norm
            s = step if step is not None else self.volume.default_ray_step()
            m = max_distance if max_distance is not None else self.volume.ray_exit_distance(o, d)
            raw = self.volume.sample_ray(self.current_timepoint, o, d, s, max(m, 0.0))
            self.trace.append(RayProfile(self.current_timepoint, o, d, s, raw))
            return {"samples": int(len(raw)), "timepoint": self.current_timepoint}, []

        return self._dispatch(origin, "appendRay", run)

    def advance_playback(self) -> dict | None:
        """Step the session timepoint in the playback direction; during a
        trace, reaching the boundary ends the trace automatically."""
        step = -1 if self.direction == "backwards" else 1
        nxt = self.current_timepoint + step
        if 0 <= nxt < self.graph.timepoints:
            return self.set_timepoint(ENGINE, nxt)
        if self.mode == self.TRACE:
            return self.end_trace(self._trace_origin or ENGINE, auto=True)
        self.playing = False
        return None

    def replace_graph(self, graph: LineageGraph) -> dict:
        """Swap in a freshly loaded graph and redraw every client."""
        self.graph = graph
        self.current_timepoint = min(self.current_timepoint, graph.timepoints - 1)
        env = self._envelope("fullRedraw", ENGINE, {"snapshot": graph.snapshot()})
        with self.lock:
            self._emit([(env, None)])
        self._update_render()
        return env

    def end_trace(self, origin: str, auto: bool = False) -> dict:
        def run():
            if self.mode != self.TRACE or self.trace is None:
                raise StateError("no trace is being recorded")
            session = self.trace
            self.trace = None
            self.mode = self.BROWSE
            self._trace_origin = None
            if not session.rays:
                raise StateError("trace recorded no rays")
            try:
                track = extract_track(session)
                result = commit_track(track, self.graph, self.merge_radius)
            except ExtractionFailedError:
                raise
            summary = {
                "auto": auto,
                "track": [{"timepoint": t, "position": p.tolist()} for t, p in track],
                "createdSpots": result.spot_ids,
                "createdLinks": result.link_ids,
                "reusedStart": result.reused_start,
                "reusedEnd": result.reused_end,
            }
            events = [
                (self._envelope("traceCommitted", ENGINE, summary), None),
                (self._envelope("fullRedraw", ENGINE,
                                {"snapshot": self.graph.snapshot()}), None),
            ]
            self._update_render()
            return summary, events

        return self._dispatch(origin, "endTrace", run)

    # -- wrist-menu actions ------------------------------------------------------------------

    def run_action(self, origin: str, name: str, params: dict | None = None) -> dict:
        params = params or {}

        def run():
            g = self.graph
            if name == "detect":
                if self.volume is None:
                    raise StateError("session has no volume")
                t = int(params.get("timepoint", self.current_timepoint))
                hits = detectmod.detect(self.volume, t, self.detection)
                cov = detectmod.detection_covariance(self.volume, self.detection)
                with g.undo_recorder.isolate():
                    with g.batch():
                        ids = [g.add_spot(t, h.position, cov) for h in hits]
                payload = {"count": len(ids), "spotIds": ids, "timepoint": t}
            elif name == "link":
                t = int(params.get("from", self.current_timepoint))
                cfg = self.linking
                if "maxDistance" in params or "divisions" in params:
                    cfg = detectmod.LinkingConfig(
                        float(params.get("maxDistance", cfg.max_link_distance)),
                        bool(params.get("divisions", cfg.allow_divisions)))
                with g.undo_recorder.isolate():
                    ids = detectmod.link_timepoints(g, t, cfg)
                payload = {"count": len(ids), "linkIds": ids, "from": t}
            elif name == "labelTP":
                t = int(params.get("timepoint", self.current_timepoint))
                with g.undo_recorder.isolate():
                    n = detectmod.label_all_true_positive(g, t)
                payload = {"count": n, "timepoint": t}
            elif name == "train":
                # stand-in for the learning backend: acknowledge and do nothing
                return {"acknowledged": True}, []
            elif name in ("undo", "redo"):
                applied = g.undo() if name == "undo" else g.redo()
                payload = {"applied": applied}
                if not applied:
                    return payload, []
            else:
                raise ValidationError(f"unknown action {name!r}")
            events = [(self._envelope("fullRedraw", ENGINE,
                                      {"snapshot": g.snapshot()}), None)]
            self._update_render()
            return payload, events

        return self._dispatch(origin, f"action:{name}", run)


def _nearest_spot(graph: LineageGraph, t: int, position: np.ndarray,
                  radius: float, exclude: set[int] = frozenset()) -> int | None:
    best, best_d = None, radius
    for sid in graph.spots_at_timepoint(t):
        if sid in exclude:
            continue
        d = float(np.linalg.norm(graph.spot_position(sid) - position))
        if d <= best_d:
            best, best_d = sid, d
    return best


# -- client-side mirroring ------------------------------------------------------------


class Replica:
    """Event-sourced mirror of a session: applies broadcast envelopes to a
    local graph, exactly as the browser client does."""

    def __init__(self, timepoints: int):
        self.graph = LineageGraph(timepoints=timepoints)
        self.timepoint = 0
        self.applied_versions: list[int] = []

    @classmethod
    def from_hello(cls, hello: dict) -> "Replica":
        r = cls(hello["payload"]["timepoints"])
        r.graph = load_snapshot(hello["payload"]["snapshot"])
        r.timepoint = hello["payload"]["currentTimepoint"]
        return r

    def apply(self, envelope: dict) -> None:
        kind = envelope["type"]
        p = envelope["payload"]
        g = self.graph
        if kind == "addSpot":
            g.insert_spot_at(p["id"], p["timepoint"], p["position"], p["covariance"])
        elif kind == "moveSpot":
            g.move_spot(p["id"], p["position"])
        elif kind == "deleteSpot":
            g.delete_spot(p["id"])
        elif kind == "addLink":
            g.insert_link_at(p["id"], p["source"], p["target"])
        elif kind == "deleteLink":
            g.delete_link(p["id"])
        elif kind == "setTimepoint":
            self.timepoint = p["timepoint"]
        elif kind == "fullRedraw":
            self.graph = load_snapshot(p["snapshot"])
        elif kind in ("hello", "ack", "rejection", "traceCommitted"):
            pass
        else:
            raise NotFoundError(f"replica cannot apply event kind {kind!r}")
        self.applied_versions.append(envelope["version"])


def replay_log(log: list[dict], timepoints: int) -> Replica:
    """Feed a recorded event log to a fresh replica."""
    replica = Replica(timepoints)
    for env in log:
        replica.apply(env)
    return replica
