// Wire types for the celltrace session protocol (docs/protocol.md).
// Client -> server message builders (everything the UI can say).
export function editMessage(kind, fields) {
    return { type: 'edit', payload: { kind, ...fields } };
}
export function setTimepointMessage(t) {
    return { type: 'setTimepoint', payload: { t } };
}
export function startAnnotationMessage() {
    return { type: 'startAnnotation', payload: {} };
}
export function annotateMessage(position) {
    return { type: 'annotate', payload: { position } };
}
export function terminateTrackMessage() {
    return { type: 'terminateTrack', payload: {} };
}
export function startTraceMessage() {
    return { type: 'startTrace', payload: {} };
}
export function appendRayMessage(origin, direction) {
    return { type: 'appendRay', payload: { origin, direction } };
}
export function endTraceMessage() {
    return { type: 'endTrace', payload: {} };
}
export function actionMessage(name, params = {}) {
    return { type: 'action', payload: { name, params } };
}
export function playMessage(rate) {
    return { type: 'play', payload: rate === undefined ? {} : { rate } };
}
export function pauseMessage() {
    return { type: 'pause', payload: {} };
}
