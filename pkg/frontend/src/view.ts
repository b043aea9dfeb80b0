// View state and the screen <-> world mapping. The VR 3D cursor becomes a
// slice-plane click whose depth is the slice index; trace rays run along
// the slice normal so the nearest cell is the first maximum on the ray.

import type { Vec3, VolumeHeader } from './protocol.js';

export type SliceAxis = 'x' | 'y' | 'z';
export type Mode = 'browse' | 'annotate' | 'trace';

// in-plane (horizontal, vertical) world axes per slice normal
const PLANE: Record<SliceAxis, [number, number, number]> = {
  z: [0, 1, 2],
  y: [0, 2, 1],
  x: [1, 2, 0],
};

export class ViewState {
  currentTimepoint = 0;
  sliceAxis: SliceAxis = 'z';
  sliceIndex = 0;
  mip = false;
  zoom = 8;
  panH = 0; // world units at the canvas origin, horizontal in-plane axis
  panV = 0;
  windowWidth = 5;
  selectedSpot: number | null = null;
  mode: Mode = 'browse';

  constructor(public volume: VolumeHeader) {}

  get planeAxes(): [number, number, number] {
    return PLANE[this.sliceAxis];
  }

  canAnnotate(): boolean {
    // MIP projection has no unambiguous depth to place a spot at
    return !this.mip;
  }

  screenToWorld(px: number, py: number): Vec3 {
    const [h, v, d] = this.planeAxes;
    const world: Vec3 = [0, 0, 0];
    world[h] = px / this.zoom + this.panH;
    world[v] = py / this.zoom + this.panV;
    world[d] = this.sliceIndex * this.volume.voxelSize[d];
    return world;
  }

  worldToScreen(world: Vec3): [number, number] {
    const [h, v] = this.planeAxes;
    return [(world[h] - this.panH) * this.zoom, (world[v] - this.panV) * this.zoom];
  }

  insideVolume(world: Vec3): boolean {
    for (let a = 0; a < 3; a++) {
      const max = (this.volume.dims[a] - 1) * this.volume.voxelSize[a];
      if (world[a] < 0 || world[a] > max) return false;
    }
    return true;
  }

  // Slice-normal ray through the pointed world position, starting in
  // front of the volume so every cell depth lies ahead of the origin.
  traceRay(px: number, py: number): { origin: Vec3; direction: Vec3 } {
    const [, , d] = this.planeAxes;
    const world = this.screenToWorld(px, py);
    const origin: Vec3 = [...world];
    origin[d] = -5.0 * this.volume.voxelSize[d];
    const direction: Vec3 = [0, 0, 0];
    direction[d] = 1;
    return { origin, direction };
  }
}
