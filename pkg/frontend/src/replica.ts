// Event-sourced mirror of the server's lineage graph. Events must be
// applied in version order; a gap means this mirror can no longer be
// trusted and the owner should request a fresh snapshot.

import type { Envelope, Mat3, Snapshot, Vec3 } from './protocol.js';

export interface MirrorSpot {
  id: number;
  timepoint: number;
  position: Vec3;
  covariance: Mat3;
  tag: string | null;
}

export interface MirrorLink {
  id: number;
  source: number;
  target: number;
}

export class GraphMirror {
  spots = new Map<number, MirrorSpot>();
  links = new Map<number, MirrorLink>();
  tagColors = new Map<string, number[]>();
  timepoints = 1;
  lastVersion = 0;
  gapDetected = false;

  loadSnapshot(snapshot: Snapshot, version: number): void {
    this.spots.clear();
    this.links.clear();
    this.tagColors.clear();
    this.timepoints = snapshot.timepoints;
    for (const s of snapshot.spots) {
      this.spots.set(s.id, { ...s });
    }
    for (const l of snapshot.links) {
      this.links.set(l.id, { ...l });
    }
    for (const t of snapshot.tagSets) {
      this.tagColors.set(t.name, t.color);
    }
    this.lastVersion = version;
    this.gapDetected = false;
  }

  // Applies one broadcast event; returns false when the event was not a
  // graph/timepoint change (acks, pongs, ...).
  apply(env: Envelope): boolean {
    if (env.version < this.lastVersion) {
      return false; // stale duplicate
    }
    const p = env.payload as Record<string, any>;
    switch (env.type) {
      case 'addSpot':
        this.spots.set(p.id, {
          id: p.id,
          timepoint: p.timepoint,
          position: p.position,
          covariance: p.covariance,
          tag: null,
        });
        break;
      case 'moveSpot': {
        const spot = this.spots.get(p.id);
        if (!spot) {
          this.gapDetected = true;
          return false;
        }
        spot.position = p.position;
        break;
      }
      case 'deleteSpot': {
        // incident links cascade exactly as on the server
        if (!this.spots.delete(p.id)) {
          this.gapDetected = true;
          return false;
        }
        for (const [lid, l] of [...this.links]) {
          if (l.source === p.id || l.target === p.id) {
            this.links.delete(lid);
          }
        }
        break;
      }
      case 'addLink':
        this.links.set(p.id, { id: p.id, source: p.source, target: p.target });
        break;
      case 'deleteLink':
        if (!this.links.delete(p.id)) {
          this.gapDetected = true;
          return false;
        }
        break;
      case 'fullRedraw':
        this.loadSnapshot(p.snapshot as Snapshot, env.version);
        return true;
      default:
        return false;
    }
    this.lastVersion = env.version;
    return true;
  }

  spotsAtTimepoint(t: number): MirrorSpot[] {
    const out: MirrorSpot[] = [];
    for (const s of this.spots.values()) {
      if (s.timepoint === t) out.push(s);
    }
    return out.sort((a, b) => a.id - b.id);
  }

  // Sliding-window rule shared with the engine: both endpoints inside
  // (current - width, current].
  visibleLinks(current: number, width: number): MirrorLink[] {
    const out: MirrorLink[] = [];
    for (const l of this.links.values()) {
      const s = this.spots.get(l.source);
      const t = this.spots.get(l.target);
      if (!s || !t) continue;
      const lo = Math.min(s.timepoint, t.timepoint);
      const hi = Math.max(s.timepoint, t.timepoint);
      if (lo >= current - width && hi <= current) out.push(l);
    }
    return out.sort((a, b) => a.id - b.id);
  }
}
