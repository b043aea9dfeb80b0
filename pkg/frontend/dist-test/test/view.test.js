import assert from 'node:assert/strict';
import { test } from 'node:test';
import { ViewState } from '../src/view.js';
const HEADER = {
    dims: [48, 32, 24],
    voxelSize: [1, 1, 1],
    timepoints: 10,
    valueType: 'uint16',
};
test('screen to world honors zoom, pan, and slice depth', () => {
    const view = new ViewState(HEADER);
    view.zoom = 4;
    view.panH = 2;
    view.panV = 3;
    view.sliceIndex = 7;
    assert.deepEqual(view.screenToWorld(8, 12), [4, 6, 7]);
    assert.deepEqual(view.worldToScreen([4, 6, 7]), [8, 12]);
});
test('anisotropic voxel size scales the slice depth', () => {
    const view = new ViewState({ ...HEADER, voxelSize: [1, 1, 2.5] });
    view.zoom = 1;
    view.sliceIndex = 4;
    assert.deepEqual(view.screenToWorld(0, 0), [0, 0, 10]);
});
test('axis choice permutes the in-plane coordinates', () => {
    const view = new ViewState(HEADER);
    view.zoom = 1;
    view.sliceAxis = 'x';
    view.sliceIndex = 5;
    // horizontal = y, vertical = z, depth = x
    assert.deepEqual(view.screenToWorld(7, 9), [5, 7, 9]);
});
test('MIP projection cannot annotate', () => {
    const view = new ViewState(HEADER);
    assert.equal(view.canAnnotate(), true);
    view.mip = true;
    assert.equal(view.canAnnotate(), false);
});
test('inside-volume test uses voxel-center bounds', () => {
    const view = new ViewState(HEADER);
    assert.equal(view.insideVolume([47, 31, 23]), true);
    assert.equal(view.insideVolume([47.5, 0, 0]), false);
    assert.equal(view.insideVolume([-0.1, 0, 0]), false);
});
test('trace rays run along the slice normal from outside the volume', () => {
    const view = new ViewState(HEADER);
    view.zoom = 2;
    const { origin, direction } = view.traceRay(20, 30);
    assert.deepEqual(direction, [0, 0, 1]);
    assert.equal(origin[0], 10);
    assert.equal(origin[1], 15);
    assert.ok(origin[2] < 0, 'origin starts in front of the volume');
});
