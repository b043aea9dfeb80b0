"""Session bridge: edit mirroring, feedback-loop suppression, annotation
semantics, and trace recording."""

import numpy as np
import pytest

from celltrace.bridge import ENGINE, BridgeSession, Replica, replay_log
from celltrace.graph import LineageGraph
from celltrace.trace import SmoothingConfig
from celltrace.volume import (
    BlobTrajectory,
    SyntheticScene,
    VolumeHeader,
    generate_synthetic,
)

I3 = np.eye(3)


class RecordingClient:
    def __init__(self, cid):
        self.id = cid
        self.received = []

    def deliver(self, env):
        self.received.append(env)

    def of_type(self, kind):
        return [e for e in self.received if e["type"] == kind]


def make_session(timepoints=12, record_log=False, volume=None, **kw):
    return BridgeSession(LineageGraph(timepoints=timepoints), volume=volume,
                         record_log=record_log, **kw)


def connect(session, cid):
    client = RecordingClient(cid)
    hello = session.connect(cid, client.deliver)
    return client, hello


class TestEditMirroring:
    def test_fanout_excludes_originator(self):
        s = make_session()
        a, _ = connect(s, "A")
        b, _ = connect(s, "B")
        ack = s.submit_edit("A", "addSpot", {"timepoint": 0, "position": [1, 2, 3]})
        assert ack["type"] == "ack"
        assert "version" in ack
        assert len(b.of_type("addSpot")) == 1
        assert len(a.of_type("addSpot")) == 0

    def test_rejection_only_to_originator(self):
        s = make_session()
        a, _ = connect(s, "A")
        b, _ = connect(s, "B")
        res = s.submit_edit("A", "deleteSpot", {"id": 99})
        assert res["type"] == "rejection"
        assert b.received == []
        assert s.graph.spot_count() == 0

    def test_versions_strictly_increase(self):
        s = make_session()
        b, _ = connect(s, "B")
        for i in range(5):
            s.submit_edit("A", "addSpot", {"timepoint": 0, "position": [i, 0, 0]})
            s.set_timepoint("A", i)
        versions = [e["version"] for e in b.received]
        assert versions == sorted(versions)
        assert len(set(versions)) == len(versions)

    def test_edit_during_lock_is_applied_but_silent(self):
        s = make_session()
        b, _ = connect(s, "B")
        with s.lock:
            ack = s.submit_edit("A", "addSpot", {"timepoint": 0, "position": [0, 0, 0]})
        assert ack["type"] == "ack"
        assert s.graph.spot_count() == 1
        assert b.received == []

    def test_feedback_client_cascade_terminates(self):
        s = make_session()

        class FeedbackClient:
            def __init__(self, session, cid):
                self.session = session
                self.id = cid
                self.echoed = 0
                self.received_back = []

            def deliver(self, env):
                if env["type"] in ("addSpot", "moveSpot", "deleteSpot",
                                   "addLink", "deleteLink"):
                    self.echoed += 1
                    self.session.submit_edit(self.id, env["type"], env["payload"])
                else:
                    self.received_back.append(env)

        fb = FeedbackClient(s, "F")
        s.connect("F", fb.deliver)
        watcher, _ = connect(s, "W")
        s.submit_edit("A", "addSpot", {"timepoint": 3, "position": [0, 0, 0]})
        # the echo re-submission happened exactly once and emitted nothing
        assert fb.echoed == 1
        assert len(watcher.of_type("addSpot")) == 1
        # the echoed mutation was applied silently (spec: applies, no re-emit)
        assert s.graph.spot_count() == 2

    def test_setTimepoint_clamps_and_flags(self):
        s = make_session(timepoints=101)
        b, _ = connect(s, "B")
        ack = s.set_timepoint("A", -3)
        assert ack["payload"]["timepoint"] == 0
        assert ack["payload"]["clamped"] is True
        ev = b.of_type("setTimepoint")[0]
        assert ev["payload"] == {"timepoint": 0, "requested": -3, "clamped": True}
        ack = s.set_timepoint("A", 5)
        assert ack["payload"]["clamped"] is False
        assert s.current_timepoint == 5


class TestReplay:
    def test_replica_matches_after_mixed_session(self):
        s = make_session(timepoints=10, record_log=True)
        connect(s, "B")
        rng = np.random.default_rng(17)
        for i in range(60):
            kind = rng.integers(0, 5)
            spots = s.graph.alive_spot_ids()
            if kind == 0 or not spots:
                s.submit_edit("A", "addSpot", {
                    "timepoint": int(rng.integers(0, 10)),
                    "position": rng.uniform(0, 9, 3).tolist()})
            elif kind == 1:
                s.submit_edit("A", "moveSpot", {
                    "id": int(rng.choice(spots)),
                    "position": rng.uniform(0, 9, 3).tolist()})
            elif kind == 2:
                s.submit_edit("A", "deleteSpot", {"id": int(rng.choice(spots))})
            elif kind == 3:
                src = int(rng.choice(spots))
                t = s.graph.spot_timepoint(src)
                nxt = s.graph.spots_at_timepoint(t + 1)
                if nxt:
                    s.submit_edit("A", "addLink", {
                        "source": src, "target": int(rng.choice(nxt))})
            else:
                s.run_action("A", "undo")
        replica = replay_log(s.event_log, timepoints=10)
        assert replica.graph.export_spots_csv() == s.graph.export_spots_csv()
        assert replica.graph.export_links_csv() == s.graph.export_links_csv()

    def test_replica_from_hello_snapshot(self):
        s = make_session(timepoints=5)
        s.submit_edit("A", "addSpot", {"timepoint": 1, "position": [1, 1, 1]})
        client = RecordingClient("B")
        hello = s.connect("B", client.deliver)
        replica = Replica.from_hello(hello)
        assert replica.graph.export_spots_csv() == s.graph.export_spots_csv()
        s.submit_edit("A", "addSpot", {"timepoint": 2, "position": [2, 2, 2]})
        for env in client.received:
            replica.apply(env)
        assert replica.graph.export_spots_csv() == s.graph.export_spots_csv()


class TestAnnotation:
    def test_three_backward_clicks(self):
        s = make_session(timepoints=20)
        s.set_timepoint("A", 10)
        s.start_annotation("A")
        acks = [s.annotate("A", [float(i), 0, 0]) for i in range(3)]
        assert all(a["type"] == "ack" for a in acks)
        g = s.graph
        # spots at t = 10, 9, 8; links oriented forward: 8->9, 9->10
        assert sorted(g.spot_timepoint(x) for x in g.alive_spot_ids()) == [8, 9, 10]
        links = [(g.spot_timepoint(g.link_endpoints(l)[0]),
                  g.spot_timepoint(g.link_endpoints(l)[1]))
                 for l in g.alive_link_ids()]
        assert sorted(links) == [(8, 9), (9, 10)]
        assert s.current_timepoint == 7

    def test_click_at_zero_autoterminates(self):
        s = make_session(timepoints=20)
        s.set_timepoint("A", 0)
        s.start_annotation("A")
        ack = s.annotate("A", [1, 1, 1])
        assert ack["payload"]["terminated"] is True
        assert s.mode == BridgeSession.BROWSE
        assert s.graph.spot_count() == 1

    def test_merge_with_existing_spot_terminates(self):
        s = make_session(timepoints=20, merge_radius=1.0)
        existing = s.graph.add_spot(9, (5.0, 0, 0), I3)
        s.set_timepoint("A", 10)
        s.start_annotation("A")
        s.annotate("A", [9.0, 0, 0])
        ack = s.annotate("A", [5.2, 0, 0])  # within mergeRadius of `existing`
        p = ack["payload"]
        assert p["merged"] is True
        assert p["terminated"] is True
        assert p["spotId"] == existing
        assert s.graph.spot_count() == 2  # no new spot for the merge click
        src, dst = s.graph.link_endpoints(p["linkId"])
        assert (s.graph.spot_timepoint(src), s.graph.spot_timepoint(dst)) == (9, 10)

    def test_origin_reuse_starts_track(self):
        s = make_session(timepoints=20, merge_radius=1.0)
        existing = s.graph.add_spot(10, (5.0, 0, 0), I3)
        s.set_timepoint("A", 10)
        s.start_annotation("A")
        ack = s.annotate("A", [5.1, 0, 0])
        p = ack["payload"]
        assert p["merged"] is True and p["terminated"] is False
        assert p["spotId"] == existing
        ack2 = s.annotate("A", [5.5, 0, 0])
        assert s.graph.link_count() == 1

    def test_track_is_one_undo_batch(self):
        s = make_session(timepoints=20)
        s.set_timepoint("A", 10)
        before = (s.graph.export_spots_csv(), s.graph.export_links_csv())
        s.start_annotation("A")
        for i in range(5):
            s.annotate("A", [float(i), 0, 0])
        s.terminate_track("A")
        assert s.graph.spot_count() == 5
        assert s.graph.link_count() == 4
        s.run_action("A", "undo")
        assert (s.graph.export_spots_csv(), s.graph.export_links_csv()) == before

    def test_terminate_empty_track_no_events(self):
        s = make_session(timepoints=20)
        b, _ = connect(s, "B")
        s.start_annotation("A")
        ack = s.terminate_track("A")
        assert ack["type"] == "ack"
        assert b.received == []

    def test_fullredraw_carries_latest_version(self):
        s = make_session(timepoints=20)
        b, _ = connect(s, "B")
        s.set_timepoint("A", 10)
        s.start_annotation("A")
        s.annotate("A", [0, 0, 0])
        s.terminate_track("A")
        redraw = b.of_type("fullRedraw")[-1]
        assert redraw["version"] == s.graph.version
        assert redraw["origin"] == ENGINE

    def test_forwards_direction_links_still_point_forward(self):
        s = make_session(timepoints=20, direction="forwards")
        s.set_timepoint("A", 3)
        s.start_annotation("A")
        for i in range(3):
            s.annotate("A", [float(i), 0, 0])
        g = s.graph
        assert sorted(g.spot_timepoint(x) for x in g.alive_spot_ids()) == [3, 4, 5]
        for lid in g.alive_link_ids():
            src, dst = g.link_endpoints(lid)
            assert g.spot_timepoint(dst) == g.spot_timepoint(src) + 1
        assert s.current_timepoint == 6

    def test_remote_edit_mid_annotation_is_separate_batch(self):
        s = make_session(timepoints=20)
        s.set_timepoint("A", 10)
        s.start_annotation("A")
        s.annotate("A", [0, 0, 0])
        s.submit_edit("B", "addSpot", {"timepoint": 3, "position": [7, 7, 7]})
        s.annotate("A", [1, 0, 0])
        s.terminate_track("A")
        # undo removes the 2-click track, not B's spot
        s.run_action("A", "undo")
        assert s.graph.spot_count() == 1
        assert s.graph.spot_timepoint(s.graph.alive_spot_ids()[0]) == 3


def tracked_blob_volume(timepoints=8, dims=(48, 24, 16)):
    centers = [(8.0 + 4.0 * t, 12.0, 8.0) for t in range(timepoints)]
    scene = SyntheticScene([BlobTrajectory(0, centers, 2.0, 1000.0)])
    header = VolumeHeader(dims, (1, 1, 1), timepoints)
    return generate_synthetic(scene, header, 0.0, seed=4), scene


class TestTraceLifecycle:
    def test_scripted_trace_matches_ground_truth(self):
        vol, scene = tracked_blob_volume()
        s = BridgeSession(LineageGraph(timepoints=8), volume=vol,
                          smoothing=SmoothingConfig(iterations=4))
        s.set_timepoint("A", 7)
        s.start_trace("A")
        while True:
            t = s.current_timepoint
            center = np.array(scene.trajectories[0].center_at(t))
            origin = center + np.array([0.0, 0.0, -7.0])
            res = s.append_ray("A", origin, [0.0, 0.0, 1.0])
            assert res["type"] == "ack"
            out = s.advance_playback()
            if s.mode != BridgeSession.TRACE:
                summary = out
                break
        assert summary["type"] == "ack"
        track = summary["payload"]["track"]
        assert len(track) == 8
        step = vol.default_ray_step()
        for entry in track:
            gt = scene.trajectories[0].center_at(entry["timepoint"])
            assert np.linalg.norm(np.array(entry["position"]) - gt) <= 2 * step
        assert s.graph.spot_count() == 8
        assert s.graph.link_count() == 7

    def test_end_trace_with_zero_rays_rejected(self):
        vol, _ = tracked_blob_volume(timepoints=3)
        s = BridgeSession(LineageGraph(timepoints=3), volume=vol)
        s.start_trace("A")
        res = s.end_trace("A")
        assert res["type"] == "rejection"
        assert s.graph.spot_count() == 0
        assert s.mode == BridgeSession.BROWSE

    def test_append_ray_while_idle_rejected(self):
        vol, _ = tracked_blob_volume(timepoints=3)
        s = BridgeSession(LineageGraph(timepoints=3), volume=vol)
        res = s.append_ray("A", [0, 0, 0], [0, 0, 1])
        assert res["type"] == "rejection"

    def test_auto_stop_equals_explicit_stop(self):
        def run(auto):
            vol, scene = tracked_blob_volume(timepoints=4)
            s = BridgeSession(LineageGraph(timepoints=4), volume=vol,
                              smoothing=SmoothingConfig(iterations=4))
            s.set_timepoint("A", 3)
            s.start_trace("A")
            for _ in range(4):
                t = s.current_timepoint
                center = np.array(scene.trajectories[0].center_at(t))
                s.append_ray("A", center + np.array([0, 0, -7.0]), [0, 0, 1.0])
                if s.current_timepoint > 0:
                    s.advance_playback()
                elif auto:
                    s.advance_playback()  # boundary step triggers auto end
            if not auto:
                s.end_trace("A")
            return s.graph.export_spots_csv(), s.graph.export_links_csv()

        assert run(auto=True) == run(auto=False)


class TestActions:
    def test_detect_then_undo(self):
        vol, scene = tracked_blob_volume(timepoints=2)
        s = BridgeSession(LineageGraph(timepoints=2), volume=vol)
        b, _ = connect(s, "B")
        ack = s.run_action("A", "detect", {"timepoint": 0})
        assert ack["payload"]["count"] == 1
        assert len(b.of_type("fullRedraw")) == 1
        s.run_action("A", "undo")
        assert s.graph.spot_count() == 0

    def test_link_action(self):
        vol, _ = tracked_blob_volume(timepoints=2)
        s = BridgeSession(LineageGraph(timepoints=2), volume=vol)
        a = s.graph.add_spot(0, (1, 1, 1), I3)
        b = s.graph.add_spot(1, (2, 1, 1), I3)
        ack = s.run_action("A", "link", {"from": 0})
        assert ack["payload"]["count"] == 1

    def test_label_tp_action(self):
        s = make_session(timepoints=3)
        s.graph.add_spot(0, (0, 0, 0), I3)
        ack = s.run_action("A", "labelTP", {"timepoint": 0})
        assert ack["payload"]["count"] == 1
        assert s.graph.spot_tag(0) == "tp"

    def test_train_is_acknowledged_noop(self):
        s = make_session()
        v = s.graph.version
        ack = s.run_action("A", "train")
        assert ack["payload"]["acknowledged"] is True
        assert s.graph.version == v

    def test_undo_with_empty_stack_signals(self):
        s = make_session()
        b, _ = connect(s, "B")
        ack = s.run_action("A", "undo")
        assert ack["payload"]["applied"] is False
        assert b.received == []

    def test_unknown_action_rejected(self):
        s = make_session()
        assert s.run_action("A", "explode")["type"] == "rejection"
