import assert from 'node:assert/strict';
import { test } from 'node:test';
import { GraphMirror } from '../src/replica.js';
const I3 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
function env(type, version, payload) {
    return { type, version, origin: 'x', payload };
}
function freshMirror() {
    const mirror = new GraphMirror();
    const snapshot = { timepoints: 10, spots: [], links: [], tagSets: [] };
    mirror.loadSnapshot(snapshot, 0);
    return mirror;
}
function addSpot(mirror, v, id, t, pos) {
    mirror.apply(env('addSpot', v, { id, timepoint: t, position: pos, covariance: I3 }));
}
test('events build the same graph the server describes', () => {
    const m = freshMirror();
    addSpot(m, 1, 0, 3, [1, 2, 3]);
    addSpot(m, 2, 1, 4, [2, 2, 3]);
    m.apply(env('addLink', 3, { id: 0, source: 0, target: 1 }));
    assert.equal(m.spots.size, 2);
    assert.equal(m.links.size, 1);
    m.apply(env('moveSpot', 4, { id: 0, position: [9, 9, 9] }));
    assert.deepEqual(m.spots.get(0).position, [9, 9, 9]);
});
test('deleteSpot cascades incident links like the engine', () => {
    const m = freshMirror();
    addSpot(m, 1, 0, 3, [0, 0, 0]);
    addSpot(m, 2, 1, 4, [1, 0, 0]);
    addSpot(m, 3, 2, 4, [0, 1, 0]);
    m.apply(env('addLink', 4, { id: 0, source: 0, target: 1 }));
    m.apply(env('addLink', 5, { id: 1, source: 0, target: 2 }));
    m.apply(env('deleteSpot', 6, { id: 0 }));
    assert.equal(m.spots.size, 2);
    assert.equal(m.links.size, 0);
});
test('fullRedraw replaces the whole mirror', () => {
    const m = freshMirror();
    addSpot(m, 1, 0, 0, [0, 0, 0]);
    const snapshot = {
        timepoints: 10,
        spots: [{ id: 7, timepoint: 2, position: [5, 5, 5], covariance: I3, tag: null }],
        links: [],
        tagSets: [{ name: 'tp', color: [0, 1, 0, 1] }],
    };
    m.apply(env('fullRedraw', 9, { snapshot }));
    assert.deepEqual([...m.spots.keys()], [7]);
    assert.deepEqual(m.tagColors.get('tp'), [0, 1, 0, 1]);
    assert.equal(m.lastVersion, 9);
});
test('references to unknown records flag a gap', () => {
    const m = freshMirror();
    m.apply(env('moveSpot', 5, { id: 99, position: [0, 0, 0] }));
    assert.equal(m.gapDetected, true);
});
test('stale versions are ignored', () => {
    const m = freshMirror();
    addSpot(m, 5, 0, 0, [0, 0, 0]);
    const applied = m.apply(env('moveSpot', 3, { id: 0, position: [8, 8, 8] }));
    assert.equal(applied, false);
    assert.deepEqual(m.spots.get(0).position, [0, 0, 0]);
});
test('sliding window matches the engine rule', () => {
    const m = freshMirror();
    addSpot(m, 1, 0, 5, [0, 0, 0]);
    addSpot(m, 2, 1, 6, [1, 0, 0]);
    m.apply(env('addLink', 3, { id: 0, source: 0, target: 1 }));
    // link (5 -> 6): visible at current=7 width=3, hidden at current=10 and 5
    assert.equal(m.visibleLinks(7, 3).length, 1);
    assert.equal(m.visibleLinks(10, 3).length, 0);
    assert.equal(m.visibleLinks(5, 3).length, 0);
    assert.equal(m.visibleLinks(6, 0).length, 0);
});
