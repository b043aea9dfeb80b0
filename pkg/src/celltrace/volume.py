"""Volumetric image time-series: synthetic scene generation, trilinear
sampling, and uniform ray sampling.

Frames are dense uint16 grids stored (t, z, y, x); world coordinates map to
voxel indices through the per-axis voxel size, with voxel (i, j, k) centered
at (i*sx, j*sy, k*sz). Samples outside the voxel-center bounding box are 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RangeError, ValidationError

VOLUME_HEADER_FILE = "header.json"
VOLUME_DATA_FILE = "frames.u16"


@dataclass(frozen=True)
class VolumeHeader:
    dims: tuple[int, int, int]            # voxels along x, y, z
    voxel_size: tuple[float, float, float]  # world units per voxel
    timepoints: int
    value_type: str = "uint16"

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValidationError(f"dims must be 3 positive integers, got {self.dims}")
        if len(self.voxel_size) != 3 or any(float(v) <= 0 for v in self.voxel_size):
            raise ValidationError(f"voxel sizes must be > 0, got {self.voxel_size}")
        if self.timepoints < 1:
            raise ValidationError("timepoints must be >= 1")
        if self.value_type != "uint16":
            raise ValidationError("only uint16 volumes are supported")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))

    @property
    def world_max(self) -> np.ndarray:
        """Upper corner of the voxel-center bounding box."""
        return (np.array(self.dims) - 1) * np.array(self.voxel_size)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "voxelSize": list(self.voxel_size),
            "timepoints": self.timepoints,
            "valueType": self.value_type,
        }

    @classmethod
    def from_json(cls, d: dict) -> "VolumeHeader":
        return cls(
            dims=tuple(d["dims"]),
            voxel_size=tuple(d["voxelSize"]),
            timepoints=int(d["timepoints"]),
            value_type=d.get("valueType", "uint16"),
        )


class VolumeTimeSeries:
    """Dense scalar frames over timepoints. Immutable after construction."""

    def __init__(self, header: VolumeHeader, frames: np.ndarray):
        dx, dy, dz = header.dims
        expected = (header.timepoints, dz, dy, dx)
        frames = np.asarray(frames)
        if frames.shape != expected:
            raise ValidationError(f"frames shape {frames.shape} != {expected} (t,z,y,x)")
        if frames.dtype != np.uint16:
            raise ValidationError("frames must be uint16")
        self.header = header
        self.frames = frames
        self.frames.setflags(write=False)

    def frame(self, t: int) -> np.ndarray:
        if not 0 <= t < self.header.timepoints:
            raise RangeError(f"timepoint {t} outside [0, {self.header.timepoints})")
        return self.frames[t]

    # -- sampling -----------------------------------------------------------

    def trilinear_sample(self, t: int, p) -> float:
        """Interpolate the 8 enclosing voxels at world point p; 0 outside."""
        return float(self.trilinear_sample_many(t, np.asarray(p, float).reshape(1, 3))[0])

    def trilinear_sample_many(self, t: int, points: np.ndarray) -> np.ndarray:
        """Vectorized trilinear sampling of (n, 3) world points."""
        frame = self.frame(t)
        dims = np.array(self.header.dims)
        idx = np.asarray(points, float) / np.array(self.header.voxel_size)
        inside = np.all((idx >= 0) & (idx <= dims - 1), axis=1)
        out = np.zeros(len(idx))
        if not inside.any():
            return out
        ii = idx[inside]
        i0 = np.floor(ii).astype(np.int64)
        frac = ii - i0
        i1 = np.minimum(i0 + 1, dims - 1)
        x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
        x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        f = frame.astype(np.float64, copy=False)
        c000 = f[z0, y0, x0]
        c100 = f[z0, y0, x1]
        c010 = f[z0, y1, x0]
        c110 = f[z0, y1, x1]
        c001 = f[z1, y0, x0]
        c101 = f[z1, y0, x1]
        c011 = f[z1, y1, x0]
        c111 = f[z1, y1, x1]
        c00 = c000 * (1 - fx) + c100 * fx
        c10 = c010 * (1 - fx) + c110 * fx
        c01 = c001 * (1 - fx) + c101 * fx
        c11 = c011 * (1 - fx) + c111 * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        out[inside] = c0 * (1 - fz) + c1 * fz
        return out

    def sample_ray(self, t: int, origin, direction, step: float,
                   max_distance: float) -> np.ndarray:
        """Intensities at origin + k*step*direction, k = 0..floor(max/step)."""
        origin = np.asarray(origin, float)
        direction = np.asarray(direction, float)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
            raise ValidationError("ray direction must be unit length")
        if step <= 0:
            raise ValidationError("ray step must be > 0")
        if max_distance < 0:
            raise ValidationError("max_distance must be >= 0")
        n = int(np.floor(max_distance / step + 1e-9)) + 1
        ks = np.arange(n)[:, None] * step
        return self.trilinear_sample_many(t, origin[None, :] + ks * direction[None, :])

    def ray_exit_distance(self, origin, direction) -> float:
        """Distance along the ray to where it leaves the sample bounds (0 if it misses)."""
        origin = np.asarray(origin, float)
        direction = np.asarray(direction, float)
        hi = self.header.world_max
        t_near, t_far = -np.inf, np.inf
        for a in range(3):
            if abs(direction[a]) < 1e-12:
                if origin[a] < 0 or origin[a] > hi[a]:
                    return 0.0
                continue
            t0 = (0.0 - origin[a]) / direction[a]
            t1 = (hi[a] - origin[a]) / direction[a]
            if t0 > t1:
                t0, t1 = t1, t0
            t_near = max(t_near, t0)
            t_far = min(t_far, t1)
        if t_far < max(t_near, 0.0):
            return 0.0
        return float(t_far)

    def default_ray_step(self) -> float:
        """Sub-voxel step so maxima are not skipped along a ray."""
        return 0.5 * min(self.header.voxel_size)


# -- synthetic scenes ------------------------------------------------------------


@dataclass
class BlobTrajectory:
    """One cell: a contiguous run of (center, sigma, peak) starting at `start`."""

    start: int
    centers: np.ndarray          # (n, 3) world units
    sigmas: np.ndarray           # (n,) world units
    peaks: np.ndarray            # (n,) intensity

    def __post_init__(self):
        self.centers = np.asarray(self.centers, float).reshape(-1, 3)
        n = len(self.centers)
        self.sigmas = np.broadcast_to(np.asarray(self.sigmas, float), (n,)).copy()
        self.peaks = np.broadcast_to(np.asarray(self.peaks, float), (n,)).copy()
        if n == 0:
            raise ValidationError("trajectory must cover at least one timepoint")
        if np.any(self.sigmas <= 0):
            raise ValidationError("blob sigma must be > 0")

    @property
    def end(self) -> int:
        """Last covered timepoint (inclusive)."""
        return self.start + len(self.centers) - 1

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end

    def center_at(self, t: int) -> np.ndarray:
        if not self.covers(t):
            raise RangeError(f"trajectory does not cover timepoint {t}")
        return self.centers[t - self.start]


@dataclass
class DivisionEvent:
    parent: int
    timepoint: int
    children: tuple[int, int]


@dataclass
class SyntheticScene:
    """Ground-truth cell trajectories plus division events."""

    trajectories: list[BlobTrajectory]
    divisions: list[DivisionEvent] = field(default_factory=list)

    def __post_init__(self):
        for div in self.divisions:
            parent = self.trajectories[div.parent]
            if div.timepoint != parent.end:
                raise ValidationError("division timepoint must be the parent's last")
            for c in div.children:
                if self.trajectories[c].start != parent.end + 1:
                    raise ValidationError(
                        "children must start at the parent's last timepoint + 1")

    def to_json(self) -> dict:
        return {
            "cells": [
                {
                    "start": tr.start,
                    "points": [
                        {"center": c.tolist(), "sigma": float(s), "peak": float(p)}
                        for c, s, p in zip(tr.centers, tr.sigmas, tr.peaks)
                    ],
                }
                for tr in self.trajectories
            ],
            "divisions": [
                {"parent": d.parent, "timepoint": d.timepoint, "children": list(d.children)}
                for d in self.divisions
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticScene":
        trajectories = []
        for cell in d["cells"]:
            pts = cell["points"]
            trajectories.append(BlobTrajectory(
                start=int(cell["start"]),
                centers=np.array([p["center"] for p in pts]),
                sigmas=np.array([p["sigma"] for p in pts]),
                peaks=np.array([p["peak"] for p in pts]),
            ))
        divisions = [
            DivisionEvent(int(v["parent"]), int(v["timepoint"]), tuple(v["children"]))
            for v in d.get("divisions", [])
        ]
        return cls(trajectories, divisions)


def generate_synthetic(scene: SyntheticScene, header: VolumeHeader,
                       noise_level: float = 0.0, seed: int = 0) -> VolumeTimeSeries:
    """Render a scene into frames: sum of isotropic Gaussian blobs plus
    seeded uniform noise in [0, noise_level), quantized to uint16."""
    hi = header.world_max
    for ci, tr in enumerate(scene.trajectories):
        if np.any(tr.centers < 0) or np.any(tr.centers > hi):
            raise ValidationError(f"cell {ci} center outside volume bounds")
    dx, dy, dz = header.dims
    sx, sy, sz = header.voxel_size
    frames = np.zeros((header.timepoints, dz, dy, dx))
    xs = np.arange(dx) * sx
    ys = np.arange(dy) * sy
    zs = np.arange(dz) * sz
    for tr in scene.trajectories:
        for i, t in enumerate(range(tr.start, tr.end + 1)):
            if not 0 <= t < header.timepoints:
                raise ValidationError(f"trajectory timepoint {t} outside volume range")
            c = tr.centers[i]
            sig, peak = tr.sigmas[i], tr.peaks[i]
            # evaluate only within 4 sigma of the center
            r = 4.0 * sig
            xsl = slice(*np.searchsorted(xs, (c[0] - r, c[0] + r)))
            ysl = slice(*np.searchsorted(ys, (c[1] - r, c[1] + r)))
            zsl = slice(*np.searchsorted(zs, (c[2] - r, c[2] + r)))
            gx = np.exp(-((xs[xsl] - c[0]) ** 2) / (2 * sig * sig))
            gy = np.exp(-((ys[ysl] - c[1]) ** 2) / (2 * sig * sig))
            gz = np.exp(-((zs[zsl] - c[2]) ** 2) / (2 * sig * sig))
            frames[t, zsl, ysl, xsl] += peak * np.einsum("i,j,k->ijk", gz, gy, gx)
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        frames += rng.uniform(0.0, noise_level, frames.shape)
    return VolumeTimeSeries(header, np.clip(np.rint(frames), 0, 65535).astype(np.uint16))


# -- disk format: JSON header + raw little-endian uint16 blob ---------------------


def save_volume(volume: VolumeTimeSeries, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / VOLUME_HEADER_FILE).write_text(json.dumps(volume.header.to_json(), indent=2))
    # frame-major, then z, y, x; little-endian u16
    (d / VOLUME_DATA_FILE).write_bytes(volume.frames.astype("<u2").tobytes())


def load_volume(directory) -> VolumeTimeSeries:
    d = Path(directory)
    header = VolumeHeader.from_json(json.loads((d / VOLUME_HEADER_FILE).read_text()))
    raw = np.frombuffer((d / VOLUME_DATA_FILE).read_bytes(), dtype="<u2")
    dx, dy, dz = header.dims
    expected = header.timepoints * dz * dy * dx
    if raw.size != expected:
        raise ValidationError(f"volume blob has {raw.size} samples, expected {expected}")
    frames = raw.reshape(header.timepoints, dz, dy, dx).astype(np.uint16)
    return VolumeTimeSeries(header, frames)
