"""Classical detection and linking: difference-of-Gaussians blob detection
per frame and greedy nearest-neighbor linking between consecutive timepoints.
Stands in for the learned detect/predict/link actions at desk scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d, maximum_filter

from .errors import ValidationError
from .graph import LineageGraph
from .volume import VolumeTimeSeries

TRUE_POSITIVE_TAG = "tp"
TRUE_POSITIVE_COLOR = (0.2, 0.9, 0.2, 1.0)


@dataclass
class DetectionConfig:
    sigma_small: float                 # voxels
    sigma_large: float                 # voxels, > sigma_small
    response_threshold: float = 0.3    # fraction of the max response
    min_separation: float = 4.0        # world units, NMS radius

    def __post_init__(self):
        if not 0 < self.sigma_small < self.sigma_large:
            raise ValidationError("need sigma_large > sigma_small > 0")
        if not 0 <= self.response_threshold <= 1:
            raise ValidationError("response_threshold must be in [0, 1]")
        if self.min_separation < 0:
            raise ValidationError("min_separation must be >= 0")


@dataclass
class LinkingConfig:
    max_link_distance: float
    allow_divisions: bool = False      # a source may acquire up to 2 targets

    def __post_init__(self):
        if self.max_link_distance <= 0:
            raise ValidationError("max_link_distance must be > 0")


@dataclass
class Detection:
    position: np.ndarray   # world units
    response: float


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized Gaussian taps with radius ceil(3*sigma)."""
    r = math.ceil(3.0 * sigma)
    x = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with replicate padding."""
    out = frame.astype(np.float64, copy=True)
    k = gaussian_kernel1d(sigma)
    for axis in range(out.ndim):
        out = convolve1d(out, k, axis=axis, mode="nearest")
    return out


def dog_response(frame: np.ndarray, config: DetectionConfig) -> np.ndarray:
    return gaussian_blur(frame, config.sigma_small) - gaussian_blur(frame, config.sigma_large)


def detect(volume: VolumeTimeSeries, t: int, config: DetectionConfig) -> list[Detection]:
    """Blob candidates at one timepoint: DoG local maxima above the relative
    threshold, then greedy non-maximum suppression inside min_separation.
    Returned in descending response order, positions in world units."""
    resp = dog_response(volume.frame(t), config)
    peak = float(resp.max()) if resp.size else 0.0
    if peak <= 0:
        return []
    threshold = config.response_threshold * peak
    is_max = (maximum_filter(resp, size=3, mode="nearest") == resp) & (resp >= threshold)
    zz, yy, xx = np.nonzero(is_max)
    if len(zz) == 0:
        return []
    values = resp[zz, yy, xx]
    # deterministic order: response descending, then x, y, z ascending
    order = np.lexsort((zz, yy, xx, -values))
    vs = np.array(volume.header.voxel_size)
    world = np.stack([xx, yy, zz], axis=1)[order] * vs
    values = values[order]
    kept: list[int] = []
    kept_pos: list[np.ndarray] = []
    for i in range(len(values)):
        p = world[i]
        if all(np.linalg.norm(p - q) >= config.min_separation for q in kept_pos):
            kept.append(i)
            kept_pos.append(p)
    return [Detection(world[i].copy(), float(values[i])) for i in kept]


def detection_covariance(volume: VolumeTimeSeries, config: DetectionConfig) -> np.ndarray:
    """Default spot shape for inserted detections: isotropic at the DoG scale."""
    sigma_world = math.sqrt(config.sigma_small * config.sigma_large) * min(volume.header.voxel_size)
    return (sigma_world ** 2) * np.eye(3)


def link_timepoints(graph: LineageGraph, t_from: int, config: LinkingConfig) -> list[int]:
    """Greedily link spots at t_from to spots at t_from+1 by ascending
    distance; each target accepts at most one new link, each source at most
    one (two when divisions are allowed). Ties break on (source, target) id.
    All created links form one undo batch."""
    sources = graph.spots_at_timepoint(t_from)
    targets = graph.spots_at_timepoint(t_from + 1)
    if not sources or not targets:
        return []
    sp = np.array([graph.spot_position(s) for s in sources])
    tp = np.array([graph.spot_position(s) for s in targets])
    d = np.linalg.norm(sp[:, None, :] - tp[None, :, :], axis=2)
    si, ti = np.nonzero(d <= config.max_link_distance)
    pairs = sorted(
        (float(d[i, j]), sources[i], targets[j]) for i, j in zip(si, ti)
    )
    existing = {
        (graph.link_endpoints(l)[0], graph.link_endpoints(l)[1])
        for s in sources for l in graph.outgoing_links(s)
    }
    out_cap = 2 if config.allow_divisions else 1
    # degree caps count links already present between the two frames, so
    # re-running the action is a no-op instead of piling on second-choice pairs
    out_deg: dict[int, int] = {}
    in_deg: dict[int, int] = {}
    for s, t in existing:
        out_deg[s] = out_deg.get(s, 0) + 1
        in_deg[t] = in_deg.get(t, 0) + 1
    created: list[int] = []
    with graph.batch():
        for _, s, t in pairs:
            if out_deg.get(s, 0) >= out_cap or in_deg.get(t, 0) >= 1:
                continue
            if (s, t) in existing:
                continue
            created.append(graph.add_link(s, t))
            out_deg[s] = out_deg.get(s, 0) + 1
            in_deg[t] = in_deg.get(t, 0) + 1
    return created


def label_all_true_positive(graph: LineageGraph, t: int) -> int:
    """Tag every alive spot at t as a true positive; returns the count."""
    graph.define_tag(TRUE_POSITIVE_TAG, TRUE_POSITIVE_COLOR)
    spots = graph.spots_at_timepoint(t)
    with graph.batch():
        for sid in spots:
            graph.set_tag(sid, TRUE_POSITIVE_TAG)
    return len(spots)
