"""celltrace: interactive cell-lineage tracking engine.

Compact index-linked lineage graphs, synthetic volumetric time-series,
pointer/gaze-ray track extraction, classical detection/linking, render-ready
instance pools, and a bidirectional annotation session server.
"""

from .bridge import BridgeSession, Replica, replay_log
from .detect import DetectionConfig, LinkingConfig, detect, link_timepoints
from .graph import NIL, NO_TAG, LineageGraph, UndoRecorder
from .render import ColorMap, InstancePool, VisibilityWindow, populate_pools, visible_links
from .trace import (
    RayProfile,
    SmoothingConfig,
    TraceSession,
    commit_track,
    extract_track,
    find_local_maxima,
    smooth_profile,
)
from .volume import (
    BlobTrajectory,
    SyntheticScene,
    VolumeHeader,
    VolumeTimeSeries,
    generate_synthetic,
    load_volume,
    save_volume,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeSession",
    "Replica",
    "replay_log",
    "DetectionConfig",
    "LinkingConfig",
    "detect",
    "link_timepoints",
    "NIL",
    "NO_TAG",
    "LineageGraph",
    "UndoRecorder",
    "ColorMap",
    "InstancePool",
    "VisibilityWindow",
    "populate_pools",
    "visible_links",
    "RayProfile",
    "SmoothingConfig",
    "TraceSession",
    "commit_track",
    "extract_track",
    "find_local_maxima",
    "smooth_profile",
    "BlobTrajectory",
    "SyntheticScene",
    "VolumeHeader",
    "VolumeTimeSeries",
    "generate_synthetic",
    "load_volume",
    "save_volume",
    "__version__",
]
