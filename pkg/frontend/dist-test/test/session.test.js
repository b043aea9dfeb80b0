import assert from 'node:assert/strict';
import { test } from 'node:test';
import { SessionClient } from '../src/session.js';
// Scripted socket: records sends, lets the test inject server messages.
class FakeSocket {
    sent = [];
    onmessage = null;
    onopen = null;
    onclose = null;
    onerror = null;
    autoAck = true;
    version = 100;
    send(data) {
        const msg = JSON.parse(data);
        this.sent.push(msg);
        if (this.autoAck) {
            const payload = { of: msg.type };
            if (msg.type === 'annotate') {
                payload.spotId = 1;
                payload.timepoint = 5;
                payload.nextTimepoint = 4;
                payload.terminated = false;
            }
            if (msg.type === 'setTimepoint')
                payload.timepoint = msg.payload.t;
            this.deliver({ type: 'ack', version: ++this.version, origin: 'ENGINE', payload });
        }
    }
    close() { }
    deliver(env) {
        this.onmessage?.({ data: JSON.stringify(env) });
    }
}
async function connectFake() {
    const socket = new FakeSocket();
    const pending = SessionClient.connect('ws://fake', () => socket);
    socket.deliver({
        type: 'hello',
        version: 1,
        origin: 'ENGINE',
        payload: {
            protocol: 1,
            clientId: 'c1',
            timepoints: 10,
            currentTimepoint: 5,
            direction: 'backwards',
            mergeRadius: 2,
            snapshot: { timepoints: 10, spots: [], links: [], tagSets: [] },
            volume: { dims: [48, 32, 24], voxelSize: [1, 1, 1], timepoints: 10, valueType: 'uint16' },
        },
    });
    const client = await pending;
    client.view.zoom = 1;
    return { client, socket };
}
test('double-fired gestures send exactly one message', async () => {
    const { client, socket } = await connectFake();
    await client.startAnnotation();
    const before = socket.sent.length;
    await Promise.all([
        client.clickAnnotate(10, 10, 'gesture-1'),
        client.clickAnnotate(10, 10, 'gesture-1'),
    ]);
    assert.equal(socket.sent.length - before, 1);
    await client.clickAnnotate(10, 10, 'gesture-2');
    assert.equal(socket.sent.length - before, 2);
});
test('annotate clicks are ignored outside annotate mode and in MIP', async () => {
    const { client, socket } = await connectFake();
    assert.equal(await client.clickAnnotate(10, 10, 'g1'), null);
    await client.startAnnotation();
    client.view.mip = true;
    assert.equal(await client.clickAnnotate(10, 10, 'g2'), null);
    client.view.mip = false;
    assert.equal(await client.clickAnnotate(-50, 10, 'g3'), null); // outside volume
    assert.equal(socket.sent.filter((m) => m.type === 'annotate').length, 0);
});
test('annotate ack advances the local timepoint', async () => {
    const { client } = await connectFake();
    await client.startAnnotation();
    assert.equal(client.view.currentTimepoint, 5);
    await client.clickAnnotate(10, 10, 'g1');
    assert.equal(client.view.currentTimepoint, 4);
});
test('server setTimepoint events reconcile the view', async () => {
    const { client, socket } = await connectFake();
    for (const t of [3, 2, 1]) {
        socket.deliver({ type: 'setTimepoint', version: ++socket.version, origin: 'ENGINE',
            payload: { timepoint: t, requested: t, clamped: false } });
    }
    assert.equal(client.view.currentTimepoint, 1);
});
test('traceCommitted stores the overlay and leaves trace mode', async () => {
    const { client, socket } = await connectFake();
    await client.startTrace();
    assert.equal(client.view.mode, 'trace');
    socket.deliver({
        type: 'traceCommitted', version: ++socket.version, origin: 'ENGINE',
        payload: { auto: true, track: [{ timepoint: 0, position: [1, 2, 3] }],
            createdSpots: [0], createdLinks: [], reusedStart: null, reusedEnd: null },
    });
    assert.equal(client.view.mode, 'browse');
    assert.equal(client.lastCommittedTrack?.summary.track.length, 1);
    // after the trace ended, further pointer samples send nothing
    assert.equal(await client.pointerTrace(5, 5, 'pt'), null);
});
test('mirrored events from other clients update the replica', async () => {
    const { client, socket } = await connectFake();
    socket.deliver({
        type: 'addSpot', version: ++socket.version, origin: 'other',
        payload: { id: 4, timepoint: 5, position: [7, 8, 12],
            covariance: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] },
    });
    assert.equal(client.mirror.spots.get(4)?.timepoint, 5);
});
