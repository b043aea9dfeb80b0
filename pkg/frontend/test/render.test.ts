import assert from 'node:assert/strict';
import { test } from 'node:test';

import { trackColor } from '../src/colormap.js';
import { buildFrameModel, timeColormap } from '../src/render.js';
import { GraphMirror } from '../src/replica.js';
import { ViewState } from '../src/view.js';
import type { Mat3, Snapshot, VolumeHeader } from '../src/protocol.js';

const I3: Mat3 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
const HEADER: VolumeHeader = {
  dims: [48, 32, 24], voxelSize: [1, 1, 1], timepoints: 10, valueType: 'uint16',
};

function mirrorWith(snapshot: Partial<Snapshot>): GraphMirror {
  const m = new GraphMirror();
  m.loadSnapshot({ timepoints: 10, spots: [], links: [], tagSets: [], ...snapshot }, 1);
  return m;
}

test('colormap endpoints and midpoint match the engine formula', () => {
  const gray = { stops: [[0, 0, 0, 1], [1, 1, 1, 1]] as [number, number, number, number][],
                 domain: [0, 10] as [number, number] };
  assert.deepEqual(trackColor(gray, 0), [0, 0, 0, 1]);
  assert.deepEqual(trackColor(gray, 10), [1, 1, 1, 1]);
  assert.deepEqual(trackColor(gray, 5), [0.5, 0.5, 0.5, 1]);
  assert.deepEqual(trackColor(gray, -3), [0, 0, 0, 1]);
  assert.deepEqual(trackColor(gray, 99), [1, 1, 1, 1]);
});

test('a timepoint with two spots draws two circles', () => {
  const m = mirrorWith({
    spots: [
      { id: 0, timepoint: 4, position: [10, 10, 12], covariance: I3, tag: null },
      { id: 1, timepoint: 4, position: [20, 12, 12], covariance: I3, tag: null },
      { id: 2, timepoint: 5, position: [30, 12, 12], covariance: I3, tag: null },
    ],
  });
  const view = new ViewState(HEADER);
  view.currentTimepoint = 4;
  const model = buildFrameModel(view, m);
  assert.equal(model.circles.length, 2);
  assert.equal(model.segments.length, 0);
});

test('window width zero draws no links', () => {
  const m = mirrorWith({
    spots: [
      { id: 0, timepoint: 4, position: [10, 10, 12], covariance: I3, tag: null },
      { id: 1, timepoint: 5, position: [12, 10, 12], covariance: I3, tag: null },
    ],
    links: [{ id: 0, source: 0, target: 1 }],
  });
  const view = new ViewState(HEADER);
  view.currentTimepoint = 5;
  view.windowWidth = 0;
  assert.equal(buildFrameModel(view, m).segments.length, 0);
  view.windowWidth = 3;
  assert.equal(buildFrameModel(view, m).segments.length, 1);
});

test('spot colors follow the shared time colormap (engine parity values)', () => {
  const m = mirrorWith({
    spots: [{ id: 0, timepoint: 0, position: [1, 1, 12], covariance: I3, tag: null },
            { id: 1, timepoint: 9, position: [2, 1, 12], covariance: I3, tag: null }],
  });
  const view = new ViewState(HEADER);
  const cmap = timeColormap(10);
  const near = (got: number[], want: number[]) =>
    got.forEach((v, i) => assert.ok(Math.abs(v - want[i]) < 1e-12, `${got} != ${want}`));
  view.currentTimepoint = 0;
  let model = buildFrameModel(view, m);
  near(model.circles[0].color, cmap.stops[0]);
  view.currentTimepoint = 9;
  model = buildFrameModel(view, m);
  near(model.circles[0].color, cmap.stops[cmap.stops.length - 1]);
});

test('tag color overrides the colormap', () => {
  const m = mirrorWith({
    spots: [{ id: 0, timepoint: 0, position: [1, 1, 12], covariance: I3, tag: 'tp' }],
    tagSets: [{ name: 'tp', color: [0, 1, 0, 1] }],
  });
  const view = new ViewState(HEADER);
  const model = buildFrameModel(view, m);
  assert.deepEqual(model.circles[0].color, [0, 1, 0, 1]);
});

test('projected covariance sizes the circle', () => {
  const cov: Mat3 = [[16, 0, 0], [0, 4, 0], [0, 0, 1]];
  const m = mirrorWith({
    spots: [{ id: 0, timepoint: 0, position: [5, 5, 12], covariance: cov, tag: null }],
  });
  const view = new ViewState(HEADER);
  view.zoom = 2;
  const c = buildFrameModel(view, m).circles[0];
  assert.equal(Math.round(c.rx), 8); // sqrt(16) * zoom
  assert.equal(Math.round(c.ry), 4); // sqrt(4) * zoom
});
