"""Project persistence: a JSON document embedding the spots/links CSVs plus
tag sets, and the manifest that wires a served session together."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .detect import DetectionConfig, LinkingConfig
from .errors import ValidationError
from .graph import LineageGraph
from .render import ColorMap
from .trace import SmoothingConfig

DEFAULT_COLORMAP_STOPS = [
    (0.267, 0.005, 0.329, 1.0),   # viridis-like dark violet
    (0.188, 0.407, 0.556, 1.0),
    (0.208, 0.718, 0.473, 1.0),
    (0.993, 0.906, 0.144, 1.0),
]


def save_project(graph: LineageGraph, name: str = "project", path=None) -> dict:
    """Project document: both CSV exports embedded verbatim plus tag sets."""
    doc = {
        "name": name,
        "timepoints": graph.timepoints,
        "spotsCsv": graph.export_spots_csv(),
        "linksCsv": graph.export_links_csv(),
        "tagSets": [
            {"name": n, "color": list(c)} for n, c in zip(graph.tag_names(),
                                                          map(graph.tag_color, graph.tag_names()))
        ],
    }
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=1))
    return doc


def load_project(source) -> tuple[LineageGraph, str]:
    """Rebuild a graph (ids preserved) from a project document or file path."""
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text())
    else:
        doc = source
    g = LineageGraph(timepoints=int(doc["timepoints"]))
    g.undo_recorder.enabled = False
    for entry in doc.get("tagSets", []):
        g.define_tag(entry["name"], entry["color"])
    spot_lines = doc["spotsCsv"].strip().splitlines()
    for line in spot_lines[1:]:
        parts = line.split(",")
        sid, t = int(parts[0]), int(parts[1])
        x, y, z = map(float, parts[2:5])
        cxx, cxy, cxz, cyy, cyz, czz = map(float, parts[5:11])
        tag = parts[11] or None
        cov = [[cxx, cxy, cxz], [cxy, cyy, cyz], [cxz, cyz, czz]]
        g.insert_spot_at(sid, t, (x, y, z), cov, tag=tag)
    link_lines = doc["linksCsv"].strip().splitlines()
    for line in link_lines[1:]:
        lid, src, dst = map(int, line.split(","))
        g.insert_link_at(lid, src, dst)
    g.undo_recorder.enabled = True
    return g, doc.get("name", "project")


@dataclass
class ProjectManifest:
    """Everything `serve` needs: dataset paths and tool configuration."""

    name: str
    volume: str | None = None          # volume directory (header + blob)
    graph: str | None = None           # project JSON path
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    detection: DetectionConfig = field(default_factory=lambda: DetectionConfig(2.0, 3.2))
    linking: LinkingConfig = field(default_factory=lambda: LinkingConfig(5.0))
    window_width: int = 5
    colormap: ColorMap = field(default_factory=lambda: ColorMap(
        "time", DEFAULT_COLORMAP_STOPS, (0.0, 1.0)))
    merge_radius: float | None = None
    direction: str = "backwards"
    playback_rate: float = 4.0

    @classmethod
    def from_json(cls, doc: dict, base_dir=None) -> "ProjectManifest":
        base = Path(base_dir) if base_dir else Path(".")

        def resolve(p):
            if p is None:
                return None
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        sm = doc.get("smoothing", {})
        det = doc.get("detection", {})
        link = doc.get("linking", {})
        cm = doc.get("colormap", {})
        domain = tuple(cm.get("domain", (0.0, 1.0)))
        m = cls(
            name=doc.get("name", "project"),
            volume=resolve(doc.get("volume")),
            graph=resolve(doc.get("graph")),
            smoothing=SmoothingConfig(
                iterations=int(sm.get("iterations", 4)),
                maxima_threshold_fraction=float(sm.get("maximaThresholdFraction", 0.1))),
            detection=DetectionConfig(
                sigma_small=float(det.get("sigmaSmall", 2.0)),
                sigma_large=float(det.get("sigmaLarge", 3.2)),
                response_threshold=float(det.get("responseThreshold", 0.3)),
                min_separation=float(det.get("minSeparation", 4.0))),
            linking=LinkingConfig(
                max_link_distance=float(link.get("maxLinkDistance", 5.0)),
                allow_divisions=bool(link.get("allowDivisions", False))),
            window_width=int(doc.get("windowWidth", 5)),
            colormap=ColorMap(cm.get("name", "time"),
                              [tuple(s) for s in cm.get("stops", DEFAULT_COLORMAP_STOPS)],
                              domain if domain[0] < domain[1] else (0.0, 1.0)),
            merge_radius=doc.get("mergeRadius"),
            direction=doc.get("direction", "backwards"),
            playback_rate=float(doc.get("playbackRate", 4.0)),
        )
        return m

    @classmethod
    def load(cls, path) -> "ProjectManifest":
        p = Path(path)
        manifest = cls.from_json(json.loads(p.read_text()), base_dir=p.parent)
        for ref in (manifest.volume, manifest.graph):
            if ref is not None and not Path(ref).exists():
                raise ValidationError(f"manifest references missing path {ref}")
        return manifest
