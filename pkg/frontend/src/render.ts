// Frame composition: a pure "what to draw" model (testable) and a thin
// canvas layer that rasterizes it over the current slab image.

import { DEFAULT_COLORMAP, rgbaToCss, trackColor, type ColorMap, type Rgba } from './colormap.js';
import type { GraphMirror } from './replica.js';
import type { TrackSummaryState } from './session.js';
import type { ViewState } from './view.js';

export interface CircleGlyph {
  id: number;
  x: number;
  y: number;
  rx: number;
  ry: number;
  rotation: number;
  color: Rgba;
  selected: boolean;
}

export interface SegmentGlyph {
  id: number;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  color: Rgba;
}

export interface FrameModel {
  circles: CircleGlyph[];
  segments: SegmentGlyph[];
  trackOverlay: [number, number][] | null;
}

function projectedEllipse(cov: number[][], h: number, v: number, zoom: number) {
  // 2x2 covariance restricted to the slice plane -> ellipse axes
  const a = cov[h][h];
  const b = cov[h][v];
  const c = cov[v][v];
  const mean = (a + c) / 2;
  const dev = Math.sqrt(((a - c) / 2) ** 2 + b * b);
  const l1 = Math.max(mean + dev, 0);
  const l2 = Math.max(mean - dev, 0);
  const rotation = 0.5 * Math.atan2(2 * b, a - c);
  const minR = 0.25;
  return {
    rx: Math.max(Math.sqrt(l1), minR) * zoom,
    ry: Math.max(Math.sqrt(l2), minR) * zoom,
    rotation,
  };
}

export function timeColormap(timepoints: number): ColorMap {
  return { ...DEFAULT_COLORMAP, domain: [0, Math.max(1, timepoints - 1)] };
}

export function buildFrameModel(
  view: ViewState,
  mirror: GraphMirror,
  committed: TrackSummaryState | null = null,
  cmap: ColorMap | null = null,
): FrameModel {
  const map = cmap ?? timeColormap(mirror.timepoints);
  const [h, v] = view.planeAxes;
  const t = view.currentTimepoint;

  const circles: CircleGlyph[] = mirror.spotsAtTimepoint(t).map((s) => {
    const [x, y] = view.worldToScreen(s.position);
    const ellipse = projectedEllipse(s.covariance as unknown as number[][], h, v, view.zoom);
    const tagColor = s.tag ? mirror.tagColors.get(s.tag) : undefined;
    return {
      id: s.id,
      x,
      y,
      ...ellipse,
      color: (tagColor as Rgba) ?? trackColor(map, s.timepoint),
      selected: view.selectedSpot === s.id,
    };
  });

  const segments: SegmentGlyph[] = [];
  for (const l of mirror.visibleLinks(t, view.windowWidth)) {
    const s = mirror.spots.get(l.source)!;
    const d = mirror.spots.get(l.target)!;
    const [x1, y1] = view.worldToScreen(s.position);
    const [x2, y2] = view.worldToScreen(d.position);
    segments.push({ id: l.id, x1, y1, x2, y2, color: trackColor(map, s.timepoint) });
  }

  let trackOverlay: [number, number][] | null = null;
  if (committed) {
    trackOverlay = committed.summary.track.map((p) => view.worldToScreen(p.position));
  }
  return { circles, segments, trackOverlay };
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  model: FrameModel,
  background: ImageBitmap | HTMLCanvasElement | null,
  width: number,
  height: number,
  stale: boolean,
): void {
  ctx.clearRect(0, 0, width, height);
  if (background) {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(background, 0, 0, width, height);
  }
  for (const seg of model.segments) {
    ctx.strokeStyle = rgbaToCss(seg.color);
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(seg.x1, seg.y1);
    ctx.lineTo(seg.x2, seg.y2);
    ctx.stroke();
  }
  if (model.trackOverlay && model.trackOverlay.length > 1) {
    ctx.strokeStyle = 'rgba(255,80,80,0.9)';
    ctx.lineWidth = 1.5;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    model.trackOverlay.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const c of model.circles) {
    ctx.strokeStyle = rgbaToCss(c.color);
    ctx.lineWidth = c.selected ? 3 : 1.5;
    ctx.beginPath();
    ctx.ellipse(c.x, c.y, c.rx, c.ry, c.rotation, 0, 2 * Math.PI);
    ctx.stroke();
  }
  if (stale) {
    ctx.fillStyle = 'rgba(200,60,60,0.85)';
    ctx.fillRect(8, 8, 70, 20);
    ctx.fillStyle = 'white';
    ctx.font = '12px sans-serif';
    ctx.fillText('stale', 14, 22);
  }
}
