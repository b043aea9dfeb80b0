// Browser entry point: wires the session client, slab viewer, and toolbar.
import { buildFrameModel, drawFrame } from './render.js';
import { fetchSlab, rasterizeSlice } from './slab.js';
import { SessionClient } from './session.js';
const BASE = location.origin;
const WS_URL = `${BASE.replace(/^http/, 'ws')}/session`;
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
async function boot() {
    const canvas = el('viewport');
    const ctx = canvas.getContext('2d');
    const status = el('status');
    const scrubber = el('timepoint');
    const sliceSlider = el('slice');
    const mipToggle = el('mip');
    const speed = el('speed');
    const client = await SessionClient.connect(WS_URL, (url) => new WebSocket(url));
    const view = client.view;
    const dims = view.volume.dims;
    view.sliceIndex = Math.floor(dims[2] / 2);
    view.zoom = Math.max(2, Math.floor(Math.min(canvas.width / dims[0], canvas.height / dims[1])));
    scrubber.max = String(client.hello.timepoints - 1);
    scrubber.value = String(view.currentTimepoint);
    sliceSlider.max = String(dims[2] - 1);
    sliceSlider.value = String(view.sliceIndex);
    let slab = null;
    let slabTimepoint = -1;
    let background = null;
    let fetchFailed = false;
    let dirty = true;
    const markDirty = () => {
        dirty = true;
    };
    client.onchange = markDirty;
    async function refreshSlab() {
        const t = view.currentTimepoint;
        try {
            slab = await fetchSlab(BASE, t);
            slabTimepoint = t;
            fetchFailed = false;
            const raster = rasterizeSlice(slab, view.volume, view.sliceAxis, view.sliceIndex, view.mip);
            const off = document.createElement('canvas');
            off.width = raster.width;
            off.height = raster.height;
            off.getContext('2d').putImageData(new ImageData(raster.pixels, raster.width, raster.height), 0, 0);
            background = off;
        }
        catch {
            fetchFailed = true; // keep the last good frame, show the stale badge
        }
        markDirty();
    }
    function frame() {
        if (dirty) {
            dirty = false;
            if (view.currentTimepoint !== slabTimepoint) {
                void refreshSlab();
            }
            const model = buildFrameModel(view, client.mirror, client.lastCommittedTrack);
            drawFrame(ctx, model, background, canvas.width, canvas.height, fetchFailed);
            scrubber.value = String(view.currentTimepoint);
            status.textContent =
                `t=${view.currentTimepoint}/${client.hello.timepoints - 1}  mode=${view.mode}` +
                    `  spots=${client.mirror.spots.size}  links=${client.mirror.links.size}` +
                    (client.mirror.gapDetected ? '  [out of sync]' : '');
        }
        requestAnimationFrame(frame);
    }
    // -- pointer gestures -------------------------------------------------
    let tracePointer = false;
    canvas.addEventListener('pointerdown', (ev) => {
        const gesture = `pd-${ev.pointerId}-${ev.timeStamp}`;
        const rect = canvas.getBoundingClientRect();
        const px = ev.clientX - rect.left;
        const py = ev.clientY - rect.top;
        if (view.mode === 'annotate') {
            void client.clickAnnotate(px, py, gesture).then((ack) => {
                if (ack && ack.type === 'rejection') {
                    status.textContent = `rejected: ${ack.payload.reason}`;
                }
                markDirty();
            });
        }
        else if (view.mode === 'trace') {
            tracePointer = true;
            void client.pointerTrace(px, py, gesture);
        }
    });
    canvas.addEventListener('pointermove', (ev) => {
        if (view.mode === 'trace' && tracePointer) {
            const rect = canvas.getBoundingClientRect();
            void client.pointerTrace(ev.clientX - rect.left, ev.clientY - rect.top, `pm-${ev.pointerId}-${ev.timeStamp}`);
        }
    });
    canvas.addEventListener('pointerup', () => {
        if (view.mode === 'trace' && tracePointer) {
            tracePointer = false;
            void client.endTrace().then(markDirty);
        }
    });
    // -- toolbar -----------------------------------------------------------
    el('annotate').onclick = () => {
        if (view.mip) {
            status.textContent = 'annotation disabled in MIP (ambiguous depth)';
            return;
        }
        if (view.mode === 'annotate') {
            void client.terminateTrack().then(markDirty);
        }
        else {
            void client.startAnnotation().then(markDirty);
        }
    };
    el('trace').onclick = () => {
        if (view.mode !== 'trace')
            void client.startTrace().then(markDirty);
    };
    for (const name of ['detect', 'link', 'labelTP', 'undo']) {
        el(name).onclick = (ev) => {
            void client.runAction(name, {}, `btn-${name}-${ev.timeStamp}`).then(markDirty);
        };
    }
    el('play').onclick = () => {
        void client.play(Number(speed.value));
    };
    el('pause').onclick = () => {
        void client.pause();
    };
    speed.onchange = () => {
        void client.play(Number(speed.value));
    };
    scrubber.oninput = () => {
        void client.setTimepoint(Number(scrubber.value)).then(markDirty);
    };
    sliceSlider.oninput = () => {
        view.sliceIndex = Number(sliceSlider.value);
        slabTimepoint = -1; // force a slab re-render
        markDirty();
    };
    mipToggle.onchange = () => {
        view.mip = mipToggle.checked;
        if (view.mip && view.mode === 'annotate') {
            void client.terminateTrack(); // MIP has no depth to annotate at
        }
        slabTimepoint = -1;
        markDirty();
    };
    requestAnimationFrame(frame);
}
void boot().catch((err) => {
    document.body.textContent = `failed to start: ${err}`;
});
