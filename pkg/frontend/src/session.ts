// The session client: one WebSocket, a FIFO ack queue, an event-sourced
// graph mirror, and the gesture -> protocol-message mapping. Every user
// gesture sends exactly one message; double-fired DOM events are deduped
// by gesture id before anything reaches the socket.

import type { Envelope, HelloPayload, TraceSummary, Vec3 } from './protocol.js';
import {
  actionMessage,
  annotateMessage,
  appendRayMessage,
  endTraceMessage,
  pauseMessage,
  playMessage,
  setTimepointMessage,
  startAnnotationMessage,
  startTraceMessage,
  terminateTrackMessage,
  type ActionName,
} from './protocol.js';
import { GraphMirror } from './replica.js';
import { ViewState } from './view.js';

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

type Resolver = (env: Envelope) => void;

export class SessionClient {
  readonly mirror = new GraphMirror();
  view!: ViewState;
  hello!: HelloPayload;
  lastCommittedTrack: TrackSummaryState | null = null;
  connected = false;
  onchange: (() => void) | null = null;

  private socket!: SocketLike;
  private pendingAcks: Resolver[] = [];
  private seenGestures = new Set<string>();
  private traceArmed = false;

  static connect(url: string, factory: SocketFactory): Promise<SessionClient> {
    const client = new SessionClient();
    return new Promise((resolve, reject) => {
      const socket = factory(url);
      client.socket = socket;
      let helloSeen = false;
      socket.onerror = (e) => {
        if (!helloSeen) reject(new Error(`socket error before hello: ${e}`));
      };
      socket.onclose = () => {
        client.connected = false;
        client.notify();
      };
      socket.onmessage = (ev) => {
        const env = JSON.parse(String(ev.data)) as Envelope;
        if (!helloSeen) {
          if (env.type !== 'hello') {
            reject(new Error(`expected hello, got ${env.type}`));
            return;
          }
          helloSeen = true;
          client.acceptHello(env);
          resolve(client);
          return;
        }
        client.receive(env);
      };
    });
  }

  private acceptHello(env: Envelope): void {
    this.hello = env.payload as unknown as HelloPayload;
    if (this.hello.protocol !== 1) {
      throw new Error(`unsupported protocol version ${this.hello.protocol}`);
    }
    const volume = this.hello.volume ?? {
      dims: [1, 1, 1] as [number, number, number],
      voxelSize: [1, 1, 1] as [number, number, number],
      timepoints: this.hello.timepoints,
      valueType: 'uint16',
    };
    this.view = new ViewState(volume);
    this.view.currentTimepoint = this.hello.currentTimepoint;
    this.mirror.loadSnapshot(this.hello.snapshot, env.version);
    this.connected = true;
  }

  private receive(env: Envelope): void {
    if (env.type === 'ack' || env.type === 'rejection' || env.type === 'pong') {
      const resolver = this.pendingAcks.shift();
      resolver?.(env);
      this.notify();
      return;
    }
    if (env.type === 'setTimepoint') {
      const t = (env.payload as { timepoint: number }).timepoint;
      this.view.currentTimepoint = t; // reconcile with the server session
    } else if (env.type === 'traceCommitted') {
      this.lastCommittedTrack = {
        summary: env.payload as unknown as TraceSummary,
        version: env.version,
      };
      this.traceArmed = false;
      if (this.view.mode === 'trace') this.view.mode = 'browse';
    } else {
      this.mirror.apply(env);
    }
    this.notify();
  }

  private notify(): void {
    this.onchange?.();
  }

  private request(msg: { type: string; payload: Record<string, unknown> }): Promise<Envelope> {
    return new Promise((resolve) => {
      this.pendingAcks.push(resolve);
      this.socket.send(JSON.stringify(msg));
    });
  }

  // A gesture id is consumed once; duplicate firings send nothing.
  private gestureOnce(gestureId: string | undefined): boolean {
    if (gestureId === undefined) return true;
    if (this.seenGestures.has(gestureId)) return false;
    this.seenGestures.add(gestureId);
    if (this.seenGestures.size > 4096) this.seenGestures.clear();
    return true;
  }

  close(): void {
    this.socket.close();
  }

  // -- time ------------------------------------------------------------

  async setTimepoint(t: number): Promise<Envelope> {
    const ack = await this.request(setTimepointMessage(t));
    if (ack.type === 'ack') {
      this.view.currentTimepoint = (ack.payload as { timepoint: number }).timepoint;
    }
    return ack;
  }

  // -- annotation --------------------------------------------------------

  async startAnnotation(): Promise<Envelope> {
    const ack = await this.request(startAnnotationMessage());
    if (ack.type === 'ack') this.view.mode = 'annotate';
    return ack;
  }

  /**
   * One annotation click at canvas coordinates. Ignored (returns null,
   * nothing sent) outside annotate mode, in MIP projection, when the point
   * falls outside the volume, or on a duplicate gesture id.
   */
  async clickAnnotate(px: number, py: number, gestureId?: string): Promise<Envelope | null> {
    if (this.view.mode !== 'annotate' || !this.view.canAnnotate()) return null;
    const world = this.view.screenToWorld(px, py);
    if (!this.view.insideVolume(world)) return null;
    if (!this.gestureOnce(gestureId)) return null;
    const ack = await this.request(annotateMessage(world));
    if (ack.type === 'ack') {
      const p = ack.payload as { nextTimepoint: number; terminated: boolean };
      this.view.currentTimepoint = p.nextTimepoint;
      if (p.terminated) this.view.mode = 'browse';
    }
    return ack;
  }

  async terminateTrack(): Promise<Envelope> {
    const ack = await this.request(terminateTrackMessage());
    if (ack.type === 'ack') this.view.mode = 'browse';
    return ack;
  }

  // -- trace recording ------------------------------------------------------

  async startTrace(): Promise<Envelope> {
    const ack = await this.request(startTraceMessage());
    if (ack.type === 'ack') {
      this.view.mode = 'trace';
      this.traceArmed = true;
    }
    return ack;
  }

  /** Pointer sample while trace recording: one slice-normal ray. */
  async pointerTrace(px: number, py: number, gestureId?: string): Promise<Envelope | null> {
    if (!this.traceArmed || this.view.mode !== 'trace') return null;
    if (!this.gestureOnce(gestureId)) return null;
    const { origin, direction } = this.view.traceRay(px, py);
    return this.request(appendRayMessage(origin, direction));
  }

  async endTrace(): Promise<Envelope> {
    this.traceArmed = false;
    const ack = await this.request(endTraceMessage());
    if (this.view.mode === 'trace') this.view.mode = 'browse';
    return ack;
  }

  // -- wrist-menu actions ----------------------------------------------------

  async runAction(name: ActionName, params: Record<string, unknown> = {},
                  gestureId?: string): Promise<Envelope | null> {
    if (!this.gestureOnce(gestureId)) return null;
    return this.request(actionMessage(name, params));
  }

  async play(rate?: number): Promise<Envelope> {
    return this.request(playMessage(rate));
  }

  async pause(): Promise<Envelope> {
    return this.request(pauseMessage());
  }
}

export interface TrackSummaryState {
  summary: TraceSummary;
  version: number;
}

export function annotateTargetFromAck(env: Envelope): number | null {
  if (env.type !== 'ack') return null;
  return (env.payload as { spotId: number }).spotId;
}
