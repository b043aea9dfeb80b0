// Wire types for the celltrace session protocol (docs/protocol.md).

export type Vec3 = [number, number, number];
export type Mat3 = [Vec3, Vec3, Vec3];

export interface Envelope {
  type: string;
  version: number;
  origin: string;
  payload: Record<string, unknown>;
}

export interface HelloPayload {
  protocol: number;
  clientId: string;
  timepoints: number;
  currentTimepoint: number;
  direction: 'backwards' | 'forwards';
  mergeRadius: number;
  snapshot: Snapshot;
  volume?: VolumeHeader;
}

export interface VolumeHeader {
  dims: [number, number, number];
  voxelSize: [number, number, number];
  timepoints: number;
  valueType: string;
}

export interface SnapshotSpot {
  id: number;
  timepoint: number;
  position: Vec3;
  covariance: Mat3;
  tag: string | null;
}

export interface SnapshotLink {
  id: number;
  source: number;
  target: number;
}

export interface Snapshot {
  timepoints: number;
  spots: SnapshotSpot[];
  links: SnapshotLink[];
  tagSets: { name: string; color: number[] }[];
}

export interface TrackPoint {
  timepoint: number;
  position: Vec3;
}

export interface TraceSummary {
  auto: boolean;
  track: TrackPoint[];
  createdSpots: number[];
  createdLinks: number[];
  reusedStart: number | null;
  reusedEnd: number | null;
}

export type ActionName = 'detect' | 'link' | 'labelTP' | 'train' | 'undo' | 'redo';

// Client -> server message builders (everything the UI can say).

export function editMessage(kind: string, fields: Record<string, unknown>) {
  return { type: 'edit', payload: { kind, ...fields } };
}

export function setTimepointMessage(t: number) {
  return { type: 'setTimepoint', payload: { t } };
}

export function startAnnotationMessage() {
  return { type: 'startAnnotation', payload: {} };
}

export function annotateMessage(position: Vec3) {
  return { type: 'annotate', payload: { position } };
}

export function terminateTrackMessage() {
  return { type: 'terminateTrack', payload: {} };
}

export function startTraceMessage() {
  return { type: 'startTrace', payload: {} };
}

export function appendRayMessage(origin: Vec3, direction: Vec3) {
  return { type: 'appendRay', payload: { origin, direction } };
}

export function endTraceMessage() {
  return { type: 'endTrace', payload: {} };
}

export function actionMessage(name: ActionName, params: Record<string, unknown> = {}) {
  return { type: 'action', payload: { name, params } };
}

export function playMessage(rate?: number) {
  return { type: 'play', payload: rate === undefined ? {} : { rate } };
}

export function pauseMessage() {
  return { type: 'pause', payload: {} };
}
