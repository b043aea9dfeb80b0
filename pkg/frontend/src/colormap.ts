// Time-range colormap, computed exactly like the engine: linear
// interpolation across evenly spaced RGBA stops at the clamped
// normalized time.

export type Rgba = [number, number, number, number];

export interface ColorMap {
  stops: Rgba[];
  domain: [number, number];
}

export const DEFAULT_COLORMAP: ColorMap = {
  stops: [
    [0.267, 0.005, 0.329, 1.0],
    [0.188, 0.407, 0.556, 1.0],
    [0.208, 0.718, 0.473, 1.0],
    [0.993, 0.906, 0.144, 1.0],
  ],
  domain: [0, 1],
};

export function trackColor(cmap: ColorMap, t: number): Rgba {
  const [tMin, tMax] = cmap.domain;
  const u = Math.min(Math.max((t - tMin) / (tMax - tMin), 0), 1);
  const scaled = u * (cmap.stops.length - 1);
  const i = Math.min(Math.floor(scaled), cmap.stops.length - 2);
  const f = scaled - i;
  const a = cmap.stops[i];
  const b = cmap.stops[i + 1];
  return [
    a[0] + f * (b[0] - a[0]),
    a[1] + f * (b[1] - a[1]),
    a[2] + f * (b[2] - a[2]),
    a[3] + f * (b[3] - a[3]),
  ];
}

export function rgbaToCss(c: Rgba): string {
  const r = Math.round(c[0] * 255);
  const g = Math.round(c[1] * 255);
  const b = Math.round(c[2] * 255);
  return `rgba(${r},${g},${b},${c[3]})`;
}
