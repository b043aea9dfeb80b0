"""Compact lineage graph: flat primitive record arrays with index-chained
adjacency, tombstone free lists, tag sets, and a batched undo recorder.

Spots and links live in growable struct-of-arrays storage (``array.array``
primitives, no per-record objects). Each spot stores the head of its incoming
and outgoing link chains; each link stores the next link sharing its source
and the next sharing its target. NIL pointers are -1, also on the wire.
"""

from __future__ import annotations

from array import array
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from .errors import (
    DuplicateError,
    NotFoundError,
    RangeError,
    StateError,
    ValidationError,
)

NIL = -1
NO_TAG = -1

PSD_TOLERANCE = 1e-9

SPOTS_CSV_HEADER = "id,timepoint,x,y,z,cxx,cxy,cxz,cyy,cyz,czz,tag"
LINKS_CSV_HEADER = "id,source,target"

# packed symmetric 3x3 order: xx, xy, xz, yy, yz, zz
_PACK = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _check_covariance(cov) -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    if c.shape != (3, 3):
        raise ValidationError(f"covariance must be 3x3, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValidationError("covariance contains non-finite entries")
    if np.abs(c - c.T).max() > PSD_TOLERANCE:
        raise ValidationError("covariance is not symmetric")
    if np.linalg.eigvalsh(c).min() < -PSD_TOLERANCE:
        raise ValidationError("covariance is not positive semi-definite")
    return c


def _check_position(position) -> np.ndarray:
    p = np.asarray(position, dtype=float)
    if p.shape != (3,):
        raise ValidationError(f"position must be a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("position contains non-finite entries")
    return p


class UndoRecorder:
    """Batched inverse-edit recorder.

    Every primitive mutation is stored as a (kind, slot, before, after)
    record image; a batch groups the images of one user-visible action.
    Undo rewrites the before images in reverse order, redo the after images
    forward, so record arrays come back bit-identical (free-list order is
    the one thing left unnormalized).
    """

    def __init__(self, graph: "LineageGraph"):
        self._graph = graph
        self.undo_stack: list[list[tuple]] = []
        self.redo_stack: list[list[tuple]] = []
        self._open: list[list[tuple]] = []
        self.enabled = True

    # -- batch management ---------------------------------------------------

    def open_batch(self) -> list[tuple]:
        batch: list[tuple] = []
        self._open.append(batch)
        return batch

    def close_batch(self, batch: list[tuple], *, commit: bool = True) -> None:
        if not self._open or self._open[-1] is not batch:
            raise StateError("close_batch out of order")
        self._open.pop()
        if commit and batch and self.enabled:
            self.undo_stack.append(batch)
            self.redo_stack.clear()

    @contextmanager
    def batch(self):
        b = self.open_batch()
        version_before = self._graph.version
        try:
            yield b
        except BaseException:
            # roll the partial batch back so failed ops leave no trace,
            # including the edit counter (an aborted batch is not an edit)
            self._apply(b, forward=False)
            self.close_batch(b, commit=False)
            self._graph.version = version_before
            raise
        else:
            self.close_batch(b)

    @contextmanager
    def auto_batch(self):
        """Group into the innermost open batch, or make a one-op batch."""
        if self._open:
            yield self._open[-1]
        else:
            with self.batch() as b:
                yield b

    @contextmanager
    def isolate(self):
        """Hide open batches so nested edits land in their own batch."""
        saved = self._open
        self._open = []
        try:
            yield
        finally:
            self._open = saved

    def record(self, image: tuple) -> None:
        if self.enabled and self._open:
            self._open[-1].append(image)

    # -- undo / redo ---------------------------------------------------------

    @property
    def can_undo(self) -> bool:
        return bool(self.undo_stack)

    @property
    def can_redo(self) -> bool:
        return bool(self.redo_stack)

    def undo(self) -> bool:
        if self._open:
            raise StateError("cannot undo while a batch is open")
        if not self.undo_stack:
            return False
        batch = self.undo_stack.pop()
        self._apply(batch, forward=False)
        self.redo_stack.append(batch)
        self._graph.bump_version()
        return True

    def redo(self) -> bool:
        if self._open:
            raise StateError("cannot redo while a batch is open")
        if not self.redo_stack:
            return False
        batch = self.redo_stack.pop()
        self._apply(batch, forward=True)
        self.undo_stack.append(batch)
        self._graph.bump_version()
        return True

    def _apply(self, batch: list[tuple], *, forward: bool) -> None:
        g = self._graph
        images = batch if forward else reversed(batch)
        idx = 3 if forward else 2
        for image in images:
            kind, slot = image[0], image[1]
            state = image[idx]
            if kind == "spot":
                g._restore_spot(slot, state)
            else:
                g._restore_link(slot, state)


class LineageGraph:
    """Spots and links with index-chained adjacency and slot reuse."""

    def __init__(self, timepoints: int = 1):
        if timepoints < 1:
            raise ValidationError("timepoints must be >= 1")
        self.timepoints = int(timepoints)
        # spot records
        self._s_tp = array("i")
        self._s_pos = array("d")  # stride 3
        self._s_cov = array("d")  # stride 6, packed xx,xy,xz,yy,yz,zz
        self._s_in = array("i")   # first incoming link
        self._s_out = array("i")  # first outgoing link
        self._s_tag = array("i")
        self._s_alive = array("b")
        # link records
        self._l_src = array("i")
        self._l_dst = array("i")
        self._l_nsrc = array("i")  # next link sharing the same source
        self._l_ndst = array("i")  # next link sharing the same target
        self._l_alive = array("b")
        self.free_spot_slots: list[int] = []
        self.free_link_slots: list[int] = []
        self._tags: list[tuple[str, tuple[float, float, float, float]]] = []
        self._tag_ids: dict[str, int] = {}
        self.version = 0
        self.undo_recorder = UndoRecorder(self)

    # -- sizes and views ------------------------------------------------------

    @property
    def spot_slots(self) -> int:
        return len(self._s_tp)

    @property
    def link_slots(self) -> int:
        return len(self._l_src)

    def spot_count(self) -> int:
        return int(self._alive_spots_view().sum())

    def link_count(self) -> int:
        return int(self._alive_links_view().sum())

    def _alive_spots_view(self) -> np.ndarray:
        return np.frombuffer(self._s_alive, dtype=np.int8) if self._s_alive else np.zeros(0, np.int8)

    def _alive_links_view(self) -> np.ndarray:
        return np.frombuffer(self._l_alive, dtype=np.int8) if self._l_alive else np.zeros(0, np.int8)

    def _tp_view(self) -> np.ndarray:
        return np.frombuffer(self._s_tp, dtype=np.int32) if self._s_tp else np.zeros(0, np.int32)

    def positions_view(self) -> np.ndarray:
        """(slots, 3) float view of all spot positions, dead slots included."""
        if not self._s_pos:
            return np.zeros((0, 3))
        return np.frombuffer(self._s_pos, dtype=np.float64).reshape(-1, 3)

    def bump_version(self) -> int:
        self.version += 1
        return self.version

    # -- record state capture / restore (undo plumbing) -----------------------

    def _spot_state(self, slot: int) -> tuple:
        b, c = slot * 3, slot * 6
        return (
            self._s_tp[slot],
            self._s_pos[b], self._s_pos[b + 1], self._s_pos[b + 2],
            self._s_cov[c], self._s_cov[c + 1], self._s_cov[c + 2],
            self._s_cov[c + 3], self._s_cov[c + 4], self._s_cov[c + 5],
            self._s_in[slot], self._s_out[slot],
            self._s_tag[slot], self._s_alive[slot],
        )

    def _write_spot_state(self, slot: int, st: tuple) -> None:
        b, c = slot * 3, slot * 6
        self._s_tp[slot] = st[0]
        self._s_pos[b], self._s_pos[b + 1], self._s_pos[b + 2] = st[1], st[2], st[3]
        for k in range(6):
            self._s_cov[c + k] = st[4 + k]
        self._s_in[slot] = st[10]
        self._s_out[slot] = st[11]
        self._s_tag[slot] = st[12]
        self._s_alive[slot] = st[13]

    def _restore_spot(self, slot: int, st: tuple | None) -> None:
        was_alive = bool(self._s_alive[slot])
        if st is None:
            # slot did not exist before the op; arrays never shrink, so tombstone
            self._s_alive[slot] = 0
            if was_alive:
                self.free_spot_slots.append(slot)
            return
        self._write_spot_state(slot, st)
        now_alive = bool(st[13])
        if was_alive and not now_alive:
            self.free_spot_slots.append(slot)
        elif not was_alive and now_alive:
            self.free_spot_slots.remove(slot)

    def _link_state(self, slot: int) -> tuple:
        return (
            self._l_src[slot], self._l_dst[slot],
            self._l_nsrc[slot], self._l_ndst[slot],
            self._l_alive[slot],
        )

    def _write_link_state(self, slot: int, st: tuple) -> None:
        self._l_src[slot], self._l_dst[slot] = st[0], st[1]
        self._l_nsrc[slot], self._l_ndst[slot] = st[2], st[3]
        self._l_alive[slot] = st[4]

    def _restore_link(self, slot: int, st: tuple | None) -> None:
        was_alive = bool(self._l_alive[slot])
        if st is None:
            self._l_alive[slot] = 0
            if was_alive:
                self.free_link_slots.append(slot)
            return
        self._write_link_state(slot, st)
        now_alive = bool(st[4])
        if was_alive and not now_alive:
            self.free_link_slots.append(slot)
        elif not was_alive and now_alive:
            self.free_link_slots.remove(slot)

    # -- slot allocation -------------------------------------------------------

    def _alloc_spot(self) -> tuple[int, tuple | None]:
        if self.free_spot_slots:
            slot = self.free_spot_slots.pop()
            return slot, self._spot_state(slot)
        self._s_tp.append(0)
        self._s_pos.extend((0.0, 0.0, 0.0))
        self._s_cov.extend((0.0,) * 6)
        self._s_in.append(NIL)
        self._s_out.append(NIL)
        self._s_tag.append(NO_TAG)
        self._s_alive.append(0)
        return len(self._s_tp) - 1, None

    def _alloc_link(self) -> tuple[int, tuple | None]:
        if self.free_link_slots:
            slot = self.free_link_slots.pop()
            return slot, self._link_state(slot)
        self._l_src.append(NIL)
        self._l_dst.append(NIL)
        self._l_nsrc.append(NIL)
        self._l_ndst.append(NIL)
        self._l_alive.append(0)
        return len(self._l_src) - 1, None

    # -- liveness checks ---------------------------------------------------------

    def spot_alive(self, sid: int) -> bool:
        return 0 <= sid < len(self._s_alive) and bool(self._s_alive[sid])

    def link_alive(self, lid: int) -> bool:
        return 0 <= lid < len(self._l_alive) and bool(self._l_alive[lid])

    def _require_spot(self, sid: int) -> None:
        if not self.spot_alive(sid):
            raise NotFoundError(f"no alive spot with id {sid}")

    def _require_link(self, lid: int) -> None:
        if not self.link_alive(lid):
            raise NotFoundError(f"no alive link with id {lid}")

    # -- accessors -----------------------------------------------------------------

    def spot_timepoint(self, sid: int) -> int:
        self._require_spot(sid)
        return self._s_tp[sid]

    def spot_position(self, sid: int) -> np.ndarray:
        self._require_spot(sid)
        b = sid * 3
        return np.array(self._s_pos[b:b + 3])

    def spot_covariance(self, sid: int) -> np.ndarray:
        self._require_spot(sid)
        c = sid * 6
        xx, xy, xz, yy, yz, zz = self._s_cov[c:c + 6]
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])

    def spot_tag(self, sid: int) -> str | None:
        self._require_spot(sid)
        tid = self._s_tag[sid]
        return None if tid == NO_TAG else self._tags[tid][0]

    def link_endpoints(self, lid: int) -> tuple[int, int]:
        self._require_link(lid)
        return self._l_src[lid], self._l_dst[lid]

    def outgoing_links(self, sid: int) -> list[int]:
        """Walk the outgoing chain from firstOutgoingLink."""
        self._require_spot(sid)
        out = []
        cur = self._s_out[sid]
        while cur != NIL:
            out.append(cur)
            cur = self._l_nsrc[cur]
        return out

    def incoming_links(self, sid: int) -> list[int]:
        """Walk the incoming chain from firstIncomingLink."""
        self._require_spot(sid)
        out = []
        cur = self._s_in[sid]
        while cur != NIL:
            out.append(cur)
            cur = self._l_ndst[cur]
        return out

    def spots_at_timepoint(self, t: int) -> list[int]:
        """Alive spots with the given timepoint, ascending id."""
        mask = (self._tp_view() == t) & (self._alive_spots_view() == 1)
        return np.nonzero(mask)[0].tolist()

    def alive_spot_ids(self) -> list[int]:
        return np.nonzero(self._alive_spots_view())[0].tolist()

    def alive_link_ids(self) -> list[int]:
        return np.nonzero(self._alive_links_view())[0].tolist()

    # -- tag sets ------------------------------------------------------------------

    def define_tag(self, name: str, color: Sequence[float] = (1.0, 1.0, 1.0, 1.0)) -> int:
        """Add a named tag (idempotent; re-defining updates the color)."""
        rgba = tuple(float(v) for v in color)
        if len(rgba) != 4:
            raise ValidationError("tag color must be RGBA")
        if name in self._tag_ids:
            tid = self._tag_ids[name]
            self._tags[tid] = (name, rgba)
            return tid
        tid = len(self._tags)
        self._tags.append((name, rgba))
        self._tag_ids[name] = tid
        return tid

    def tag_names(self) -> list[str]:
        return [name for name, _ in self._tags]

    def tag_color(self, name: str) -> tuple[float, float, float, float]:
        if name not in self._tag_ids:
            raise NotFoundError(f"unknown tag {name!r}")
        return self._tags[self._tag_ids[name]][1]

    def set_tag(self, sid: int, tag: str | None) -> None:
        """Assign a tag by name, or clear it with None."""
        self._require_spot(sid)
        if tag is None:
            tid = NO_TAG
        elif tag in self._tag_ids:
            tid = self._tag_ids[tag]
        else:
            raise NotFoundError(f"unknown tag {tag!r}")
        rec = self.undo_recorder
        with rec.auto_batch():
            before = self._spot_state(sid)
            self._s_tag[sid] = tid
            rec.record(("spot", sid, before, self._spot_state(sid)))
        self.bump_version()

    # -- editing operations ------------------------------------------------------------

    def add_spot(self, timepoint: int, position, covariance) -> int:
        """Create a spot; returns its id (slot index, reused after deletes)."""
        t = int(timepoint)
        if not 0 <= t < self.timepoints:
            raise RangeError(f"timepoint {t} outside [0, {self.timepoints})")
        p = _check_position(position)
        c = _check_covariance(covariance)
        rec = self.undo_recorder
        with rec.auto_batch():
            slot, before = self._alloc_spot()
            self._write_spot_state(slot, (
                t, p[0], p[1], p[2],
                c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2],
                NIL, NIL, NO_TAG, 1,
            ))
            rec.record(("spot", slot, before, self._spot_state(slot)))
        self.bump_version()
        return slot

    def move_spot(self, sid: int, new_position) -> None:
        """Update a spot's position; adjacency is untouched."""
        self._require_spot(sid)
        p = _check_position(new_position)
        rec = self.undo_recorder
        with rec.auto_batch():
            before = self._spot_state(sid)
            b = sid * 3
            self._s_pos[b], self._s_pos[b + 1], self._s_pos[b + 2] = p[0], p[1], p[2]
            rec.record(("spot", sid, before, self._spot_state(sid)))
        self.bump_version()

    def delete_spot(self, sid: int) -> None:
        """Tombstone a spot, cascading deletion of all incident links."""
        self._require_spot(sid)
        rec = self.undo_recorder
        with rec.auto_batch():
            for lid in self.incoming_links(sid) + self.outgoing_links(sid):
                self._delete_link_internal(lid)
            before = self._spot_state(sid)
            self._s_alive[sid] = 0
            self.free_spot_slots.append(sid)
            rec.record(("spot", sid, before, self._spot_state(sid)))
        self.bump_version()

    def add_link(self, source: int, target: int) -> int:
        """Create source->target; the link is prepended to both chains."""
        self._require_spot(source)
        self._require_spot(target)
        if self._s_tp[target] != self._s_tp[source] + 1:
            raise ValidationError(
                f"link must advance one timepoint: source t={self._s_tp[source]}, "
                f"target t={self._s_tp[target]}"
            )
        for lid in self.outgoing_links(source):
            if self._l_dst[lid] == target:
                raise DuplicateError(f"link {source}->{target} already exists")
        rec = self.undo_recorder
        with rec.auto_batch():
            slot, before = self._alloc_link()
            src_before = self._spot_state(source)
            dst_before = self._spot_state(target)
            self._write_link_state(slot, (source, target, self._s_out[source], self._s_in[target], 1))
            self._s_out[source] = slot
            self._s_in[target] = slot
            rec.record(("link", slot, before, self._link_state(slot)))
            rec.record(("spot", source, src_before, self._spot_state(source)))
            rec.record(("spot", target, dst_before, self._spot_state(target)))
        self.bump_version()
        return slot

    def delete_link(self, lid: int) -> None:
        """Unsplice a link from both chains and tombstone it."""
        self._require_link(lid)
        rec = self.undo_recorder
        with rec.auto_batch():
            self._delete_link_internal(lid)
        self.bump_version()

    def _delete_link_internal(self, lid: int) -> None:
        rec = self.undo_recorder
        src, dst = self._l_src[lid], self._l_dst[lid]
        # unsplice from the source's outgoing chain
        if self._s_out[src] == lid:
            before = self._spot_state(src)
            self._s_out[src] = self._l_nsrc[lid]
            rec.record(("spot", src, before, self._spot_state(src)))
        else:
            prev = self._s_out[src]
            while self._l_nsrc[prev] != lid:
                prev = self._l_nsrc[prev]
            before = self._link_state(prev)
            self._l_nsrc[prev] = self._l_nsrc[lid]
            rec.record(("link", prev, before, self._link_state(prev)))
        # unsplice from the target's incoming chain
        if self._s_in[dst] == lid:
            before = self._spot_state(dst)
            self._s_in[dst] = self._l_ndst[lid]
            rec.record(("spot", dst, before, self._spot_state(dst)))
        else:
            prev = self._s_in[dst]
            while self._l_ndst[prev] != lid:
                prev = self._l_ndst[prev]
            before = self._link_state(prev)
            self._l_ndst[prev] = self._l_ndst[lid]
            rec.record(("link", prev, before, self._link_state(prev)))
        before = self._link_state(lid)
        self._l_alive[lid] = 0
        self.free_link_slots.append(lid)
        rec.record(("link", lid, before, self._link_state(lid)))

    # -- forced-slot insertion (event replay, project load) -----------------------------

    def _grow_spots_to(self, slot: int) -> None:
        while len(self._s_tp) <= slot:
            self._s_tp.append(0)
            self._s_pos.extend((0.0, 0.0, 0.0))
            self._s_cov.extend((0.0,) * 6)
            self._s_in.append(NIL)
            self._s_out.append(NIL)
            self._s_tag.append(NO_TAG)
            self._s_alive.append(0)
            self.free_spot_slots.append(len(self._s_tp) - 1)

    def _grow_links_to(self, slot: int) -> None:
        while len(self._l_src) <= slot:
            self._l_src.append(NIL)
            self._l_dst.append(NIL)
            self._l_nsrc.append(NIL)
            self._l_ndst.append(NIL)
            self._l_alive.append(0)
            self.free_link_slots.append(len(self._l_src) - 1)

    def insert_spot_at(self, slot: int, timepoint: int, position, covariance,
                       tag: str | None = None) -> int:
        """Create a spot at a caller-chosen slot (replicas, project load)."""
        t = int(timepoint)
        if not 0 <= t < self.timepoints:
            raise RangeError(f"timepoint {t} outside [0, {self.timepoints})")
        if slot < 0:
            raise ValidationError("slot must be non-negative")
        p = _check_position(position)
        c = _check_covariance(covariance)
        tid = NO_TAG
        if tag is not None:
            if tag not in self._tag_ids:
                raise NotFoundError(f"unknown tag {tag!r}")
            tid = self._tag_ids[tag]
        self._grow_spots_to(slot)
        if self._s_alive[slot]:
            raise ValidationError(f"spot slot {slot} already alive")
        rec = self.undo_recorder
        with rec.auto_batch():
            before = self._spot_state(slot)
            self.free_spot_slots.remove(slot)
            self._write_spot_state(slot, (
                t, p[0], p[1], p[2],
                c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2],
                NIL, NIL, tid, 1,
            ))
            rec.record(("spot", slot, before, self._spot_state(slot)))
        self.bump_version()
        return slot

    def insert_link_at(self, slot: int, source: int, target: int) -> int:
        """Create a link at a caller-chosen slot (replicas, project load)."""
        self._require_spot(source)
        self._require_spot(target)
        if self._s_tp[target] != self._s_tp[source] + 1:
            raise ValidationError("link must advance one timepoint")
        if slot < 0:
            raise ValidationError("slot must be non-negative")
        for lid in self.outgoing_links(source):
            if self._l_dst[lid] == target:
                raise DuplicateError(f"link {source}->{target} already exists")
        self._grow_links_to(slot)
        if self._l_alive[slot]:
            raise ValidationError(f"link slot {slot} already alive")
        rec = self.undo_recorder
        with rec.auto_batch():
            before = self._link_state(slot)
            self.free_link_slots.remove(slot)
            src_before = self._spot_state(source)
            dst_before = self._spot_state(target)
            self._write_link_state(slot, (source, target, self._s_out[source], self._s_in[target], 1))
            self._s_out[source] = slot
            self._s_in[target] = slot
            rec.record(("link", slot, before, self._link_state(slot)))
            rec.record(("spot", source, src_before, self._spot_state(source)))
            rec.record(("spot", target, dst_before, self._spot_state(target)))
        self.bump_version()
        return slot

    # -- bulk loaders (benchmark shapes; not undoable) -----------------------------------

    def bulk_add_spots(self, timepoints, positions, covariances=None) -> np.ndarray:
        """Append many spots at once. Bypasses the undo recorder."""
        if self.undo_recorder._open:
            raise StateError("bulk load inside an open undo batch")
        tps = np.asarray(timepoints, dtype=np.int32)
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(tps)
        if len(pos) != n:
            raise ValidationError("timepoints and positions length mismatch")
        if n and (tps.min() < 0 or tps.max() >= self.timepoints):
            raise RangeError("bulk timepoint outside dataset range")
        if covariances is None:
            cov6 = np.zeros((n, 6))
            cov6[:, [0, 3, 5]] = 1.0
        else:
            cov = np.asarray(covariances, dtype=np.float64).reshape(-1, 3, 3)
            if np.abs(cov - cov.transpose(0, 2, 1)).max() > PSD_TOLERANCE:
                raise ValidationError("bulk covariance not symmetric")
            if n and np.linalg.eigvalsh(cov).min() < -PSD_TOLERANCE:
                raise ValidationError("bulk covariance not PSD")
            cov6 = cov[:, [0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]]
        first = len(self._s_tp)
        self._s_tp.frombytes(tps.tobytes())
        self._s_pos.frombytes(pos.reshape(-1).tobytes())
        self._s_cov.frombytes(cov6.reshape(-1).tobytes())
        nil = np.full(n, NIL, dtype=np.int32)
        self._s_in.frombytes(nil.tobytes())
        self._s_out.frombytes(nil.tobytes())
        self._s_tag.frombytes(np.full(n, NO_TAG, dtype=np.int32).tobytes())
        self._s_alive.frombytes(np.ones(n, dtype=np.int8).tobytes())
        self.bump_version()
        return np.arange(first, first + n)

    def bulk_add_links(self, sources, targets) -> np.ndarray:
        """Append many links at once, chained as sequential prepends."""
        if self.undo_recorder._open:
            raise StateError("bulk load inside an open undo batch")
        src = np.asarray(sources, dtype=np.int32)
        dst = np.asarray(targets, dtype=np.int32)
        n = len(src)
        if len(dst) != n:
            raise ValidationError("sources and targets length mismatch")
        if n == 0:
            return np.arange(0)
        pairs = np.stack([src, dst], axis=1)
        if len(np.unique(pairs, axis=0)) != n:
            raise DuplicateError("bulk link batch contains duplicate pairs")
        alive = self._alive_spots_view()
        if src.min() < 0 or dst.min() < 0 or src.max() >= len(alive) or dst.max() >= len(alive):
            raise NotFoundError("bulk link endpoint out of range")
        if not (alive[src].all() and alive[dst].all()):
            raise NotFoundError("bulk link endpoint not alive")
        tp = self._tp_view()
        if not np.array_equal(tp[dst], tp[src] + 1):
            raise ValidationError("bulk link must advance one timepoint")
        first = len(self._l_src)
        ids = np.arange(first, first + n, dtype=np.int32)
        # chain pointers equivalent to prepending links in id order:
        # next = previous link id in the same endpoint group, head = last id
        nsrc = np.full(n, NIL, dtype=np.int32)
        ndst = np.full(n, NIL, dtype=np.int32)
        order = np.argsort(src, kind="stable")
        same = src[order][1:] == src[order][:-1]
        nsrc[order[1:][same]] = ids[order[:-1][same]]
        heads_out = order[np.nonzero(~np.r_[same, False])[0]]
        order_t = np.argsort(dst, kind="stable")
        same_t = dst[order_t][1:] == dst[order_t][:-1]
        ndst[order_t[1:][same_t]] = ids[order_t[:-1][same_t]]
        heads_in = order_t[np.nonzero(~np.r_[same_t, False])[0]]
        self._l_src.frombytes(src.tobytes())
        self._l_dst.frombytes(dst.tobytes())
        self._l_nsrc.frombytes(nsrc.tobytes())
        self._l_ndst.frombytes(ndst.tobytes())
        self._l_alive.frombytes(np.ones(n, dtype=np.int8).tobytes())
        for k in heads_out:
            s = int(src[k])
            if self._s_out[s] != NIL:
                # existing head becomes the tail of the new chain segment
                tail = int(ids[k])
                while self._l_nsrc[tail] != NIL:
                    tail = self._l_nsrc[tail]
                self._l_nsrc[tail] = self._s_out[s]
            self._s_out[s] = int(ids[k])
        for k in heads_in:
            d = int(dst[k])
            if self._s_in[d] != NIL:
                tail = int(ids[k])
                while self._l_ndst[tail] != NIL:
                    tail = self._l_ndst[tail]
                self._l_ndst[tail] = self._s_in[d]
            self._s_in[d] = int(ids[k])
        self.bump_version()
        return ids.astype(np.int64)

    # -- undo / redo -------------------------------------------------------------------

    @contextmanager
    def batch(self):
        """Group several edits into one undo batch."""
        with self.undo_recorder.batch():
            yield

    def undo(self) -> bool:
        """Revert the last edit batch. Returns False on an empty stack."""
        return self.undo_recorder.undo()

    def redo(self) -> bool:
        """Reapply the last undone batch. Returns False on an empty stack."""
        return self.undo_recorder.redo()

    # -- consistency oracle ---------------------------------------------------------------

    def brute_force_adjacency(self) -> tuple[dict[int, set[int]], dict[int, set[int]]]:
        """Adjacency maps built by scanning every alive link (test oracle)."""
        out_map: dict[int, set[int]] = {sid: set() for sid in self.alive_spot_ids()}
        in_map: dict[int, set[int]] = {sid: set() for sid in self.alive_spot_ids()}
        for lid in self.alive_link_ids():
            out_map[self._l_src[lid]].add(lid)
            in_map[self._l_dst[lid]].add(lid)
        return out_map, in_map

    def validate(self) -> list[str]:
        """Check every structural invariant; returns a list of violations."""
        problems: list[str] = []
        n_links = len(self._l_src)
        for lid in self.alive_link_ids():
            src, dst = self._l_src[lid], self._l_dst[lid]
            if not self.spot_alive(src):
                problems.append(f"link {lid}: dead source {src}")
                continue
            if not self.spot_alive(dst):
                problems.append(f"link {lid}: dead target {dst}")
                continue
            if self._s_tp[dst] != self._s_tp[src] + 1:
                problems.append(f"link {lid}: timepoints not consecutive")
        out_map, in_map = self.brute_force_adjacency()
        for sid in self.alive_spot_ids():
            for label, walk, want in (
                ("outgoing", self.outgoing_links, out_map[sid]),
                ("incoming", self.incoming_links, in_map[sid]),
            ):
                chain = []
                cur = self._s_out[sid] if label == "outgoing" else self._s_in[sid]
                steps = 0
                nxt = self._l_nsrc if label == "outgoing" else self._l_ndst
                while cur != NIL:
                    if steps > n_links:
                        problems.append(f"spot {sid}: {label} chain cycles")
                        break
                    if not self.link_alive(cur):
                        problems.append(f"spot {sid}: {label} chain hits dead link {cur}")
                        break
                    chain.append(cur)
                    cur = nxt[cur]
                    steps += 1
                if len(chain) != len(set(chain)):
                    problems.append(f"spot {sid}: duplicate links in {label} chain")
                if set(chain) != want:
                    problems.append(
                        f"spot {sid}: {label} chain {sorted(chain)} != scan {sorted(want)}"
                    )
        free_spots = set(self.free_spot_slots)
        for slot in range(len(self._s_alive)):
            dead = not self._s_alive[slot]
            if dead != (slot in free_spots):
                problems.append(f"spot slot {slot}: alive={not dead} but free={slot in free_spots}")
        if len(self.free_spot_slots) != len(free_spots):
            problems.append("duplicate entries in free_spot_slots")
        free_links = set(self.free_link_slots)
        for slot in range(len(self._l_alive)):
            dead = not self._l_alive[slot]
            if dead != (slot in free_links):
                problems.append(f"link slot {slot}: alive={not dead} but free={slot in free_links}")
        if len(self.free_link_slots) != len(free_links):
            problems.append("duplicate entries in free_link_slots")
        for sid in self.alive_spot_ids():
            tid = self._s_tag[sid]
            if tid != NO_TAG and not 0 <= tid < len(self._tags):
                problems.append(f"spot {sid}: dangling tag id {tid}")
        return problems

    # -- export -------------------------------------------------------------------------

    def export_spots_csv(self) -> str:
        """Normative column order: id,timepoint,x,y,z,cxx,cxy,cxz,cyy,cyz,czz,tag."""
        lines = [SPOTS_CSV_HEADER]
        for sid in self.alive_spot_ids():
            b, c = sid * 3, sid * 6
            tid = self._s_tag[sid]
            tag = "" if tid == NO_TAG else self._tags[tid][0]
            lines.append(
                f"{sid},{self._s_tp[sid]},"
                f"{self._s_pos[b]!r},{self._s_pos[b + 1]!r},{self._s_pos[b + 2]!r},"
                f"{self._s_cov[c]!r},{self._s_cov[c + 1]!r},{self._s_cov[c + 2]!r},"
                f"{self._s_cov[c + 3]!r},{self._s_cov[c + 4]!r},{self._s_cov[c + 5]!r},"
                f"{tag}"
            )
        return "\n".join(lines) + "\n"

    def export_links_csv(self) -> str:
        """Normative column order: id,source,target."""
        lines = [LINKS_CSV_HEADER]
        for lid in self.alive_link_ids():
            lines.append(f"{lid},{self._l_src[lid]},{self._l_dst[lid]}")
        return "\n".join(lines) + "\n"

    def snapshot(self) -> dict:
        """JSON-ready full state (the fullRedraw payload)."""
        spots = []
        for sid in self.alive_spot_ids():
            spots.append({
                "id": sid,
                "timepoint": self._s_tp[sid],
                "position": self.spot_position(sid).tolist(),
                "covariance": self.spot_covariance(sid).tolist(),
                "tag": self.spot_tag(sid),
            })
        links = [
            {"id": lid, "source": self._l_src[lid], "target": self._l_dst[lid]}
            for lid in self.alive_link_ids()
        ]
        return {
            "timepoints": self.timepoints,
            "spots": spots,
            "links": links,
            "tagSets": [{"name": n, "color": list(c)} for n, c in self._tags],
        }


def load_snapshot(snapshot: dict) -> LineageGraph:
    """Rebuild a graph from a snapshot, preserving record ids."""
    g = LineageGraph(timepoints=int(snapshot["timepoints"]))
    g.undo_recorder.enabled = False
    for entry in snapshot.get("tagSets", []):
        g.define_tag(entry["name"], entry["color"])
    for s in snapshot["spots"]:
        g.insert_spot_at(s["id"], s["timepoint"], s["position"], s["covariance"],
                         tag=s.get("tag"))
    for l in snapshot["links"]:
        g.insert_link_at(l["id"], l["source"], l["target"])
    g.undo_recorder.enabled = True
    return g
