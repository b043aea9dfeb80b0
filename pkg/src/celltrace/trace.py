"""Track extraction from recorded pointing/gaze rays.

A trace session collects one intensity profile per ray. Analysis smooths each
profile with an iterated 3-tap kernel, extracts strict interior local maxima
above a session-relative threshold, arranges the maxima of each ray as one
layer, and finds the minimum-total-cost path from the first maximum of the
first usable ray through every layer. The path is collapsed to one position
per timepoint and committed to the lineage graph as a single undo batch.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExtractionFailedError, RangeError, StateError, ValidationError
from .graph import LineageGraph

SMOOTHING_KERNEL = (0.25, 0.5, 0.25)


@dataclass
class SmoothingConfig:
    kernel: tuple[float, ...] = SMOOTHING_KERNEL
    iterations: int = 4
    maxima_threshold_fraction: float = 0.1  # relative to session-wide max

    def __post_init__(self):
        if abs(sum(self.kernel) - 1.0) > 1e-12:
            raise ValidationError("smoothing kernel weights must sum to 1")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if not 0.0 <= self.maxima_threshold_fraction <= 1.0:
            raise ValidationError("maxima threshold fraction must be in [0, 1]")


def smooth_profile(raw, iterations: int = 4,
                   kernel: tuple[float, ...] = SMOOTHING_KERNEL) -> np.ndarray:
    """Repeated 3-tap convolution with replicate (clamp) boundary padding."""
    x = np.asarray(raw, float)
    if x.ndim != 1 or x.size < 1:
        raise ValidationError("profile must be a non-empty 1-D sequence")
    k = np.asarray(kernel, float)
    pad = (len(k) - 1) // 2
    for _ in range(iterations):
        x = np.convolve(np.pad(x, pad, mode="edge"), k, mode="valid")
    return x


def find_local_maxima(smoothed, threshold: float = 0.0) -> list[int]:
    """Interior indices strictly above both neighbors and >= threshold."""
    x = np.asarray(smoothed, float)
    if x.size < 3:
        return []
    inner = x[1:-1]
    hits = (inner > x[:-2]) & (inner > x[2:]) & (inner >= threshold)
    return (np.nonzero(hits)[0] + 1).tolist()


@dataclass
class RayProfile:
    timepoint: int
    origin: np.ndarray
    direction: np.ndarray  # unit
    step: float
    raw: np.ndarray
    smoothed: np.ndarray | None = None
    maxima: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, float)
        self.direction = np.asarray(self.direction, float)
        self.raw = np.asarray(self.raw, float)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValidationError("ray direction must be unit length")

    def sample_position(self, index: int) -> np.ndarray:
        return self.origin + index * self.step * self.direction


@dataclass
class LocalMaximum:
    ray_index: int
    sample_index: int
    world_position: np.ndarray
    value: float
    timepoint: int


class TraceSession:
    """Ordered ray captures between trace start and stop."""

    RECORDING, ANALYZED, COMMITTED = "recording", "analyzed", "committed"

    def __init__(self, config: SmoothingConfig | None = None,
                 direction: str = "backwards"):
        if direction not in ("backwards", "forwards"):
            raise ValidationError("direction must be 'backwards' or 'forwards'")
        self.config = config or SmoothingConfig()
        self.direction = direction
        self.rays: list[RayProfile] = []
        self.state = self.RECORDING

    def append(self, ray: RayProfile) -> None:
        if self.state != self.RECORDING:
            raise StateError(f"cannot append rays in state {self.state}")
        if self.rays:
            prev_t = self.rays[-1].timepoint
            ok = ray.timepoint <= prev_t if self.direction == "backwards" else ray.timepoint >= prev_t
            if not ok:
                raise ValidationError("ray timepoints must follow the playback direction")
        self.rays.append(ray)

    def analyze(self) -> None:
        """Smooth every profile and extract thresholded local maxima."""
        cfg = self.config
        peak = 0.0
        for ray in self.rays:
            ray.smoothed = smooth_profile(ray.raw, cfg.iterations, cfg.kernel)
            if ray.smoothed.size:
                peak = max(peak, float(ray.smoothed.max()))
        threshold = cfg.maxima_threshold_fraction * peak
        for ray in self.rays:
            ray.maxima = find_local_maxima(ray.smoothed, threshold)
        self.state = self.ANALYZED


@dataclass
class LayerGraph:
    """One layer of candidate maxima per usable ray, in capture order."""

    layers: list[list[LocalMaximum]]
    gap_rays: list[int]          # capture indices of rays with no maxima
    start: LocalMaximum          # first maximum of the first usable ray


def build_layer_graph(session: TraceSession) -> LayerGraph:
    if session.state == TraceSession.RECORDING:
        session.analyze()
    layers: list[list[LocalMaximum]] = []
    gaps: list[int] = []
    for ri, ray in enumerate(session.rays):
        if not ray.maxima:
            gaps.append(ri)
            continue
        layers.append([
            LocalMaximum(ri, si, ray.sample_position(si), float(ray.smoothed[si]),
                         ray.timepoint)
            for si in ray.maxima
        ])
    if not layers:
        raise ExtractionFailedError("no ray produced a local maximum")
    # the nearest maximum along the first usable ray is the target cell
    return LayerGraph(layers, gaps, layers[0][0])


def _shortest_layer_path(layers: list[list[LocalMaximum]]) -> list[LocalMaximum]:
    """A*: start pinned to the first node of layer 0, one node per layer,
    edge cost = Euclidean world distance. The heuristic is the straight-line
    distance to the nearest final-layer node, an admissible lower bound."""
    n_layers = len(layers)
    positions = [np.array([m.world_position for m in layer]) for layer in layers]
    if n_layers == 1:
        return [layers[0][0]]
    finals = positions[-1]

    def heuristic(pos: np.ndarray) -> float:
        return float(np.min(np.linalg.norm(finals - pos, axis=1)))

    start = (0, 0)
    g_best: dict[tuple[int, int], float] = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap: list[tuple[float, int, tuple[int, int]]] = [
        (heuristic(positions[0][0]), counter, start)
    ]
    goal = None
    while heap:
        f, _, node = heapq.heappop(heap)
        li, ni = node
        if li == n_layers - 1:
            goal = node
            break
        base = g_best[node]
        if f > base + heuristic(positions[li][ni]) + 1e-12:
            continue  # superseded entry
        costs = np.linalg.norm(positions[li + 1] - positions[li][ni], axis=1)
        for nj, cost in enumerate(costs):
            nxt = (li + 1, nj)
            cand = base + float(cost)
            if cand < g_best.get(nxt, np.inf):
                g_best[nxt] = cand
                parent[nxt] = node
                counter += 1
                heapq.heappush(heap, (cand + heuristic(positions[li + 1][nj]), counter, nxt))
    if goal is None:
        raise ExtractionFailedError("layer path search exhausted without reaching the end")
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return [layers[li][ni] for li, ni in path]


def extract_track(session: TraceSession) -> list[tuple[int, np.ndarray]]:
    """Minimum-cost layered path, collapsed to one position per timepoint,
    ordered by ascending timepoint."""
    lg = build_layer_graph(session)
    path = _shortest_layer_path(lg.layers)
    collapsed: list[LocalMaximum] = []
    for node in path:
        if collapsed and collapsed[-1].timepoint == node.timepoint:
            if node.value > collapsed[-1].value:
                collapsed[-1] = node
        else:
            collapsed.append(node)
    collapsed.sort(key=lambda m: m.timepoint)
    return [(m.timepoint, m.world_position) for m in collapsed]


@dataclass
class CommitResult:
    spot_ids: list[int]
    link_ids: list[int]
    reused_start: int | None = None
    reused_end: int | None = None


def _nearest_spot_within(graph: LineageGraph, t: int, position: np.ndarray,
                         radius: float) -> int | None:
    best, best_d = None, radius
    for sid in graph.spots_at_timepoint(t):
        d = float(np.linalg.norm(graph.spot_position(sid) - position))
        if d <= best_d:
            best, best_d = sid, d
    return best


def commit_track(track: list[tuple[int, np.ndarray]], graph: LineageGraph,
                 merge_radius: float) -> CommitResult:
    """Insert a track as spots plus forward links, one undo batch.

    Timepoint gaps left by rays without maxima are bridged along the direct
    segment between the surviving neighbors, adding linearly interpolated
    spots so every link still advances exactly one timepoint. A track
    endpoint landing within merge_radius of an existing spot at the same
    timepoint reuses that spot instead of creating a new one.
    """
    if not track:
        raise ValidationError("cannot commit an empty track")
    track = sorted(((int(t), np.asarray(p, float)) for t, p in track), key=lambda e: e[0])
    tps = [t for t, _ in track]
    if len(set(tps)) != len(tps):
        raise ValidationError("track has duplicate timepoints")
    for t, _ in track:
        if not 0 <= t < graph.timepoints:
            raise RangeError(f"track timepoint {t} outside [0, {graph.timepoints})")
    # bridge gaps by interpolating along the straight segment
    dense: list[tuple[int, np.ndarray]] = []
    for (t0, p0), (t1, p1) in zip(track, track[1:]):
        dense.append((t0, p0))
        for t in range(t0 + 1, t1):
            f = (t - t0) / (t1 - t0)
            dense.append((t, p0 + f * (p1 - p0)))
    dense.append(track[-1])

    reused_start = _nearest_spot_within(graph, dense[0][0], dense[0][1], merge_radius)
    reused_end = None
    if len(dense) > 1:
        reused_end = _nearest_spot_within(graph, dense[-1][0], dense[-1][1], merge_radius)

    sd = merge_radius / 2.0
    cov = (sd * sd) * np.eye(3) if sd > 0 else np.zeros((3, 3))
    spot_ids: list[int] = []
    link_ids: list[int] = []
    created: list[int] = []
    with graph.batch():
        for i, (t, p) in enumerate(dense):
            if i == 0 and reused_start is not None:
                spot_ids.append(reused_start)
            elif i == len(dense) - 1 and reused_end is not None:
                spot_ids.append(reused_end)
            else:
                sid = graph.add_spot(t, p, cov)
                spot_ids.append(sid)
                created.append(sid)
        for a, b in zip(spot_ids, spot_ids[1:]):
            link_ids.append(graph.add_link(a, b))
    return CommitResult(spot_ids=created, link_ids=link_ids,
                        reused_start=reused_start, reused_end=reused_end)


# -- trace replay file: JSON list of recorded rays ---------------------------------


def save_trace(session: TraceSession, path) -> None:
    rows = [
        {
            "timepoint": r.timepoint,
            "origin": r.origin.tolist(),
            "direction": r.direction.tolist(),
            "step": r.step,
            "raw": r.raw.tolist(),
        }
        for r in session.rays
    ]
    Path(path).write_text(json.dumps(rows, indent=1))


def load_trace(path, config: SmoothingConfig | None = None,
               direction: str = "backwards") -> TraceSession:
    rows = json.loads(Path(path).read_text())
    session = TraceSession(config=config, direction=direction)
    for row in rows:
        session.append(RayProfile(
            timepoint=int(row["timepoint"]),
            origin=np.array(row["origin"], float),
            direction=np.array(row["direction"], float),
            step=float(row["step"]),
            raw=np.array(row["raw"], float),
        ))
    return session
