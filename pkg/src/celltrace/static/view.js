// View state and the screen <-> world mapping. The VR 3D cursor becomes a
// slice-plane click whose depth is the slice index; trace rays run along
// the slice normal so the nearest cell is the first maximum on the ray.
// in-plane (horizontal, vertical) world axes per slice normal
const PLANE = {
    z: [0, 1, 2],
    y: [0, 2, 1],
    x: [1, 2, 0],
};
export class ViewState {
    volume;
    currentTimepoint = 0;
    sliceAxis = 'z';
    sliceIndex = 0;
    mip = false;
    zoom = 8;
    panH = 0; // world units at the canvas origin, horizontal in-plane axis
    panV = 0;
    windowWidth = 5;
    selectedSpot = null;
    mode = 'browse';
    constructor(volume) {
        this.volume = volume;
    }
    get planeAxes() {
        return PLANE[this.sliceAxis];
    }
    canAnnotate() {
        // MIP projection has no unambiguous depth to place a spot at
        return !this.mip;
    }
    screenToWorld(px, py) {
        const [h, v, d] = this.planeAxes;
        const world = [0, 0, 0];
        world[h] = px / this.zoom + this.panH;
        world[v] = py / this.zoom + this.panV;
        world[d] = this.sliceIndex * this.volume.voxelSize[d];
        return world;
    }
    worldToScreen(world) {
        const [h, v] = this.planeAxes;
        return [(world[h] - this.panH) * this.zoom, (world[v] - this.panV) * this.zoom];
    }
    insideVolume(world) {
        for (let a = 0; a < 3; a++) {
            const max = (this.volume.dims[a] - 1) * this.volume.voxelSize[a];
            if (world[a] < 0 || world[a] > max)
                return false;
        }
        return true;
    }
    // Slice-normal ray through the pointed world position, starting in
    // front of the volume so every cell depth lies ahead of the origin.
    traceRay(px, py) {
        const [, , d] = this.planeAxes;
        const world = this.screenToWorld(px, py);
        const origin = [...world];
        origin[d] = -5.0 * this.volume.voxelSize[d];
        const direction = [0, 0, 0];
        direction[d] = 1;
        return { origin, direction };
    }
}
