"""Command-line entry points: offline generation, extraction, detection,
linking, export, benchmarking, and the session server."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import run_populate_bench, write_report
from .detect import DetectionConfig, LinkingConfig, detect as run_detect, link_timepoints
from .errors import CellTraceError
from .project import ProjectManifest, load_project, save_project
from .trace import SmoothingConfig, extract_track, load_trace
from .volume import SyntheticScene, VolumeHeader, generate_synthetic, load_volume, save_volume

TRACK_CSV_HEADER = "timepoint,x,y,z"
DETECTIONS_CSV_HEADER = "x,y,z,response"


@click.group()
def main():
    """Cell-lineage tracking engine."""


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="Scene JSON describing blob trajectories.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output volume directory (header.json + frames.u16).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--noise", default=0.0, show_default=True, type=float,
              help="Uniform noise amplitude in intensity units.")
@click.option("--dims", default="64,64,32", show_default=True,
              help="Volume size in voxels: x,y,z.")
@click.option("--voxel-size", default="1,1,1", show_default=True)
@click.option("--timepoints", default=None, type=int,
              help="Override the frame count (defaults to the scene extent).")
def generate(spec_path, out_dir, seed, noise, dims, voxel_size, timepoints):
    """Render a synthetic scene into a volume time-series."""
    try:
        scene = SyntheticScene.from_json(json.loads(Path(spec_path).read_text()))
        if timepoints is None:
            timepoints = max(tr.end for tr in scene.trajectories) + 1 if scene.trajectories else 1
        header = VolumeHeader(
            dims=tuple(int(v) for v in dims.split(",")),
            voxel_size=tuple(float(v) for v in voxel_size.split(",")),
            timepoints=timepoints,
        )
        vol = generate_synthetic(scene, header, noise_level=noise, seed=seed)
        save_volume(vol, out_dir)
    except (CellTraceError, ValueError, KeyError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {header.timepoints} frames of {header.dims} to {out_dir}")


@main.command()
@click.option("--volume", "volume_dir", required=True, type=click.Path(exists=True))
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True),
              help="Recorded rays: JSON list of {timepoint, origin, direction, step, raw}.")
@click.option("--iterations", default=4, show_default=True, type=int,
              help="Smoothing passes of the 3-tap kernel.")
@click.option("--threshold", default=0.1, show_default=True, type=float,
              help="Maxima threshold as a fraction of the session max.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True,
              help="Write an extraction figure next to the CSV.")
@click.option("--resample/--no-resample", default=False, show_default=True,
              help="Re-sample raw profiles from the volume before analysis.")
def extract(volume_dir, trace_path, iterations, threshold, out_path, plot, resample):
    """Convert a recorded trace into a track CSV (and a figure)."""
    try:
        volume = load_volume(volume_dir)
        config = SmoothingConfig(iterations=iterations,
                                 maxima_threshold_fraction=threshold)
        session = load_trace(trace_path, config=config)
        if resample:
            for ray in session.rays:
                dist = (len(ray.raw) - 1) * ray.step
                ray.raw = volume.sample_ray(ray.timepoint, ray.origin,
                                            ray.direction, ray.step, dist)
        track = extract_track(session)
    except (CellTraceError, ValueError, KeyError) as exc:
        _fail(str(exc))
    lines = [TRACK_CSV_HEADER]
    lines += [f"{t},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}" for t, p in track]
    Path(out_path).write_text("\n".join(lines) + "\n")
    click.echo(f"extracted {len(track)} track points -> {out_path}")
    if plot:
        from .plots import save_extraction_figure
        fig_path = Path(out_path).with_suffix(".png")
        save_extraction_figure(session, track, fig_path)
        click.echo(f"figure -> {fig_path}")


@main.command("detect")
@click.option("--volume", "volume_dir", required=True, type=click.Path(exists=True))
@click.option("--t", "timepoint", default=0, show_default=True, type=int)
@click.option("--sigma-small", default=2.0, show_default=True, type=float)
@click.option("--sigma-large", default=3.2, show_default=True, type=float)
@click.option("--threshold", default=0.3, show_default=True, type=float,
              help="Response threshold as a fraction of the max response.")
@click.option("--min-separation", default=4.0, show_default=True, type=float)
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Detections CSV (stdout when omitted).")
@click.option("--plot/--no-plot", default=True, show_default=True,
              help="Write a MIP figure next to the CSV (needs --out).")
def detect_cmd(volume_dir, timepoint, sigma_small, sigma_large, threshold,
               min_separation, out_path, plot):
    """Difference-of-Gaussians blob detection on one timepoint."""
    try:
        volume = load_volume(volume_dir)
        config = DetectionConfig(sigma_small=sigma_small, sigma_large=sigma_large,
                                 response_threshold=threshold,
                                 min_separation=min_separation)
        hits = run_detect(volume, timepoint, config)
    except CellTraceError as exc:
        _fail(str(exc))
    lines = [DETECTIONS_CSV_HEADER]
    lines += [f"{float(h.position[0])!r},{float(h.position[1])!r},"
              f"{float(h.position[2])!r},{float(h.response)!r}" for h in hits]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"{len(hits)} detections -> {out_path}")
        if plot:
            from .plots import save_detection_figure
            fig_path = Path(out_path).with_suffix(".png")
            save_detection_figure(volume, timepoint, hits, fig_path)
            click.echo(f"figure -> {fig_path}")
    else:
        click.echo(text, nl=False)


@main.command("link")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True),
              help="Project JSON to link within.")
@click.option("--from", "t_from", required=True, type=int)
@click.option("--max-dist", required=True, type=float)
@click.option("--divisions", is_flag=True, default=False,
              help="Allow up to two outgoing links per source.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Updated project JSON (defaults to in-place).")
def link_cmd(graph_path, t_from, max_dist, divisions, out_path):
    """Greedy nearest-neighbor linking between t and t+1."""
    try:
        graph, name = load_project(graph_path)
        created = link_timepoints(graph, t_from,
                                  LinkingConfig(max_link_distance=max_dist,
                                                allow_divisions=divisions))
        save_project(graph, name, out_path or graph_path)
    except CellTraceError as exc:
        _fail(str(exc))
    click.echo(f"created {len(created)} links -> {out_path or graph_path}")


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def export(graph_path, out_dir):
    """Write spots.csv and links.csv for a saved project."""
    try:
        graph, _ = load_project(graph_path)
    except (CellTraceError, ValueError, KeyError) as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spots.csv").write_text(graph.export_spots_csv())
    (out / "links.csv").write_text(graph.export_links_csv())
    click.echo(f"exported {graph.spot_count()} spots, {graph.link_count()} links -> {out_dir}")


@main.group()
def bench():
    """Performance harnesses."""


@bench.command("populate")
@click.option("--links", required=True, type=int)
@click.option("--spots-per-tp", default="90:110", show_default=True,
              help="Spots per timepoint, or a lo:hi range.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--report", "report_path", default=None, type=click.Path(),
              help="JSON report path.")
@click.option("--plot/--no-plot", default=True, show_default=True,
              help="Write a timing figure next to the report.")
def bench_populate(links, spots_per_tp, seed, report_path, plot):
    """Time instance-pool population for a synthetic lineage shape."""
    try:
        if ":" in spots_per_tp:
            lo, hi = (int(v) for v in spots_per_tp.split(":"))
        else:
            lo = hi = int(spots_per_tp)
        report = run_populate_bench(links, lo, hi, seed=seed)
    except (CellTraceError, ValueError) as exc:
        _fail(str(exc))
    click.echo(json.dumps(report, indent=2))
    if report_path:
        write_report(report, report_path)
        click.echo(f"report -> {report_path}")
        if plot:
            from .plots import save_bench_figure
            fig_path = Path(report_path).with_suffix(".png")
            save_bench_figure([report], fig_path)
            click.echo(f"figure -> {fig_path}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--bind", default="127.0.0.1:8765", show_default=True)
def serve(manifest_path, bind):
    """Host the session protocol and document endpoints for one project."""
    from .server import serve as run_server
    try:
        manifest = ProjectManifest.load(manifest_path)
    except (CellTraceError, ValueError, KeyError) as exc:
        _fail(str(exc))
    run_server(manifest, bind)


if __name__ == "__main__":
    main()
