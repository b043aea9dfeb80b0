// Volume slab fetching and slice/MIP rasterization. Slabs arrive as raw
// little-endian uint16, z-major then y then x, with the clipped box in the
// X-Slab-Box header.

import type { VolumeHeader } from './protocol.js';
import type { SliceAxis } from './view.js';

export interface Slab {
  t: number;
  box: [number, number, number, number, number, number]; // x0,x1,y0,y1,z0,z1
  shape: [number, number, number]; // nx, ny, nz
  data: Uint16Array;
}

export async function fetchSlab(
  baseUrl: string,
  t: number,
  box?: Partial<{ x0: number; x1: number; y0: number; y1: number; z0: number; z1: number }>,
): Promise<Slab> {
  const params = new URLSearchParams({ t: String(t) });
  for (const [k, val] of Object.entries(box ?? {})) {
    if (val !== undefined) params.set(k, String(val));
  }
  const resp = await fetch(`${baseUrl}/api/volume/slab?${params}`);
  if (!resp.ok) throw new Error(`slab fetch failed: ${resp.status}`);
  const descriptor = JSON.parse(resp.headers.get('X-Slab-Box') ?? '{}');
  const buf = await resp.arrayBuffer();
  const n = buf.byteLength / 2;
  const view = new DataView(buf);
  const data = new Uint16Array(n);
  for (let i = 0; i < n; i++) data[i] = view.getUint16(2 * i, true);
  return { t: descriptor.t, box: descriptor.box, shape: descriptor.shape, data };
}

function sampleOf(slab: Slab, x: number, y: number, z: number): number {
  const [nx, ny] = slab.shape;
  const [x0, , y0, , z0] = [slab.box[0], 0, slab.box[2], 0, slab.box[4]];
  return slab.data[(z - z0) * ny * nx + (y - y0) * nx + (x - x0)];
}

/**
 * Rasterize one slice (or the MIP along the slice normal) of a full-frame
 * slab into grayscale RGBA pixels, one pixel per voxel of the slice plane.
 */
export function rasterizeSlice(
  slab: Slab,
  header: VolumeHeader,
  axis: SliceAxis,
  sliceIndex: number,
  mip: boolean,
): { pixels: Uint8ClampedArray<ArrayBuffer>; width: number; height: number } {
  const [dx, dy, dz] = header.dims;
  const dimsOf: Record<SliceAxis, [number, number, number]> = {
    z: [dx, dy, dz],
    y: [dx, dz, dy],
    x: [dy, dz, dx],
  };
  const [w, h, depth] = dimsOf[axis];
  const pixels = new Uint8ClampedArray(new ArrayBuffer(w * h * 4));
  let peak = 1;
  for (let i = 0; i < slab.data.length; i++) {
    if (slab.data[i] > peak) peak = slab.data[i];
  }
  const voxel = (u: number, v: number, d: number): number => {
    if (axis === 'z') return sampleOf(slab, u, v, d);
    if (axis === 'y') return sampleOf(slab, u, d, v);
    return sampleOf(slab, d, u, v);
  };
  for (let v = 0; v < h; v++) {
    for (let u = 0; u < w; u++) {
      let value: number;
      if (mip) {
        value = 0;
        for (let d = 0; d < depth; d++) value = Math.max(value, voxel(u, v, d));
      } else {
        const d = Math.min(Math.max(sliceIndex, 0), depth - 1);
        value = voxel(u, v, d);
      }
      const gray = Math.round((255 * value) / peak);
      const o = 4 * (v * w + u);
      pixels[o] = gray;
      pixels[o + 1] = gray;
      pixels[o + 2] = gray;
      pixels[o + 3] = 255;
    }
  }
  return { pixels, width: w, height: h };
}
