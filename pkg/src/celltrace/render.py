"""Render preparation: pre-generated instance pools for spots (spheres) and
links (cylinders), sliding-window link visibility, and time-range colormaps.
Produces render-ready transform/color buffers; no GPU submission here."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StaleIndexError, ValidationError
from .graph import LineageGraph

MIN_VISIBLE_RADIUS = 0.25   # fallback for rank-deficient covariances
LINK_RADIUS = 0.1
GROWTH_FACTOR = 1.5


@dataclass
class ColorMap:
    name: str
    stops: list[tuple[float, float, float, float]]
    domain: tuple[float, float]

    def __post_init__(self):
        if len(self.stops) < 2:
            raise ValidationError("colormap needs at least 2 stops")
        if not self.domain[0] < self.domain[1]:
            raise ValidationError("colormap domain must satisfy tMin < tMax")
        self.stops = [tuple(float(c) for c in s) for s in self.stops]


def track_color(cmap: ColorMap, t: float) -> tuple[float, float, float, float]:
    """Linear interpolation across evenly spaced stops at the normalized time."""
    t_min, t_max = cmap.domain
    u = min(max((t - t_min) / (t_max - t_min), 0.0), 1.0)
    scaled = u * (len(cmap.stops) - 1)
    i = min(int(scaled), len(cmap.stops) - 2)
    f = scaled - i
    a, b = np.array(cmap.stops[i]), np.array(cmap.stops[i + 1])
    return tuple((a + f * (b - a)).tolist())


class InstancePool:
    """Fixed-capacity instance buffers that grow geometrically and never
    invalidate previously issued instance indices. Records are registered
    into instances through an id -> index map, so a record keeps the same
    instance slot for the lifetime of the pool."""

    def __init__(self, kind: str, capacity: int):
        if kind not in ("spot", "link"):
            raise ValidationError("pool kind must be 'spot' or 'link'")
        self.kind = kind
        self.capacity = int(capacity)
        n = self.capacity
        self.active = np.zeros(n, dtype=bool)
        self.transforms = np.tile(np.eye(4), (n, 1, 1))
        self.colors = np.zeros((n, 4))
        self.ids = np.full(n, -1, dtype=np.int64)
        self.index_of: dict[int, int] = {}

    def register(self, record_id: int) -> int:
        """Issue (or look up) the instance index for a record id."""
        idx = self.index_of.get(record_id)
        if idx is None:
            idx = len(self.index_of)
            self.ensure_capacity(idx + 1)
            self.index_of[record_id] = idx
            self.ids[idx] = record_id
        return idx

    def reset_registry(self) -> None:
        self.index_of.clear()
        self.ids[:] = -1
        self.active[:] = False

    def ensure_capacity(self, needed: int) -> bool:
        """Grow by x1.5 until `needed` fits; existing rows are preserved."""
        if needed <= self.capacity:
            return False
        new_cap = max(self.capacity, 1)
        while new_cap < needed:
            new_cap = int(np.ceil(new_cap * GROWTH_FACTOR))
        extra = new_cap - self.capacity
        self.active = np.r_[self.active, np.zeros(extra, dtype=bool)]
        self.transforms = np.concatenate(
            [self.transforms, np.tile(np.eye(4), (extra, 1, 1))])
        self.colors = np.concatenate([self.colors, np.zeros((extra, 4))])
        self.ids = np.r_[self.ids, np.full(extra, -1, dtype=np.int64)]
        self.capacity = new_cap
        return True

    def active_count(self) -> int:
        return int(self.active.sum())


@dataclass
class PoolSet:
    spot_pool: InstancePool
    link_pool: InstancePool
    population_seconds: float


def populate_pools(graph: LineageGraph) -> PoolSet:
    """Pre-generate both instance pools: spot capacity is the densest
    timepoint's spot count, link capacity is the total alive link count.
    Every alive link is registered to its permanent instance slot here, so
    per-frame updates only toggle activity and rewrite transforms."""
    start = time.perf_counter()
    alive = graph._alive_spots_view().astype(bool)
    if alive.any():
        tps = graph._tp_view()[alive]
        spot_cap = int(np.bincount(tps, minlength=graph.timepoints).max())
    else:
        spot_cap = 0
    link_ids = graph.alive_link_ids()
    spot_pool = InstancePool("spot", spot_cap)
    link_pool = InstancePool("link", len(link_ids))
    for lid in link_ids:
        link_pool.register(lid)
    elapsed = time.perf_counter() - start
    return PoolSet(spot_pool, link_pool, elapsed)


class VisibilityWindow:
    """Sliding time window over links, backed by a link-id -> (min, max
    endpoint timepoint) map built at a fixed graph version."""

    def __init__(self, graph: LineageGraph, width: int):
        if width < 0:
            raise ValidationError("window width must be >= 0")
        self.width = int(width)
        self._graph = graph
        self.graph_version = graph.version
        self.link_time_index: dict[int, tuple[int, int]] = {}
        for lid in graph.alive_link_ids():
            src, dst = graph.link_endpoints(lid)
            t0, t1 = graph.spot_timepoint(src), graph.spot_timepoint(dst)
            self.link_time_index[lid] = (min(t0, t1), max(t0, t1))

    def is_stale(self) -> bool:
        return self.graph_version != self._graph.version


def visible_links(window: VisibilityWindow, current: int) -> set[int]:
    """Links whose endpoints both lie inside (current - width, current]."""
    if window.is_stale():
        raise StaleIndexError(
            f"visibility index built at version {window.graph_version}, "
            f"graph is at {window._graph.version}")
    lo = current - window.width
    return {
        lid for lid, (tmin, tmax) in window.link_time_index.items()
        if tmin >= lo and tmax <= current
    }


def _spot_transforms(positions: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    """Ellipsoid transforms from symmetric eigendecomposition: rotation times
    per-axis standard deviation, clamped to the minimum visible radius."""
    n = len(positions)
    out = np.tile(np.eye(4), (n, 1, 1))
    if n == 0:
        return out
    vals, vecs = np.linalg.eigh(covariances)
    radii = np.sqrt(np.maximum(vals, 0.0))
    radii = np.maximum(radii, MIN_VISIBLE_RADIUS)
    out[:, :3, :3] = vecs * radii[:, None, :]
    out[:, :3, 3] = positions
    return out


def _rotation_to(direction: np.ndarray) -> np.ndarray:
    """Rotation taking +Z to the given unit direction."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, direction))
    if c > 1 - 1e-12:
        return np.eye(3)
    if c < -1 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(z, direction)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def _link_transform(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Map the unit cylinder (axis +Z, half-length 1, radius 1) between p0, p1."""
    mid = (p0 + p1) / 2
    seg = p1 - p0
    length = float(np.linalg.norm(seg))
    m = np.eye(4)
    if length < 1e-12:
        m[:3, :3] = np.diag([LINK_RADIUS, LINK_RADIUS, LINK_RADIUS])
    else:
        rot = _rotation_to(seg / length)
        m[:3, :3] = rot @ np.diag([LINK_RADIUS, LINK_RADIUS, length / 2])
    m[:3, 3] = mid
    return m


@dataclass
class FrameStats:
    timepoint: int
    active_spots: int
    active_links: int
    spot_capacity: int
    link_capacity: int
    grew: bool


def update_for_timepoint(pools: PoolSet, graph: LineageGraph, t: int,
                         window: VisibilityWindow, cmap: ColorMap) -> FrameStats:
    """Activate exactly the spots of timepoint t and the links inside the
    sliding window; grows the spot pool when t is denser than the capacity.
    Deterministic and idempotent for identical inputs."""
    spot_pool, link_pool = pools.spot_pool, pools.link_pool
    spots = graph.spots_at_timepoint(t)
    grew = spot_pool.ensure_capacity(len(spots))
    # spots are per-timepoint, so their registry is rebuilt every frame
    spot_pool.reset_registry()
    if spots:
        pos = np.array([graph.spot_position(s) for s in spots])
        cov = np.array([graph.spot_covariance(s) for s in spots])
        spot_pool.transforms[:len(spots)] = _spot_transforms(pos, cov)
        base = track_color(cmap, t)
        for i, sid in enumerate(spots):
            spot_pool.register(sid)
            tag = graph.spot_tag(sid)
            spot_pool.colors[i] = graph.tag_color(tag) if tag else base
        spot_pool.active[:len(spots)] = True

    vis = sorted(visible_links(window, t))
    link_pool.active[:] = False
    link_cap_before = link_pool.capacity
    for lid in vis:
        i = link_pool.register(lid)
        src, dst = graph.link_endpoints(lid)
        link_pool.transforms[i] = _link_transform(
            graph.spot_position(src), graph.spot_position(dst))
        link_pool.colors[i] = track_color(cmap, graph.spot_timepoint(src))
        link_pool.active[i] = True
    grew = link_pool.capacity > link_cap_before or grew
    return FrameStats(
        timepoint=t,
        active_spots=len(spots),
        active_links=len(vis),
        spot_capacity=spot_pool.capacity,
        link_capacity=link_pool.capacity,
        grew=grew,
    )


def dump_frame(pools: PoolSet, path=None) -> dict:
    """Active instances as {kind, id, transform (16 floats, row-major), rgba}."""
    doc = {"instances": []}
    for pool in (pools.spot_pool, pools.link_pool):
        for i in np.nonzero(pool.active)[0]:
            doc["instances"].append({
                "kind": pool.kind,
                "id": int(pool.ids[i]),
                "transform": [float(v) for v in pool.transforms[i].reshape(-1)],
                "rgba": [float(v) for v in pool.colors[i]],
            })
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=1))
    return doc
