"""Capture sessions: state transitions, suggestions, and event replay.

The replay guarantee is the load-bearing contract — a session rebuilt from
its event log must match the live one field for field — so the round trip
runs a real create/capture/suggest/capture sequence and diffs full
snapshots.
"""

from __future__ import annotations

import numpy as np
import pytest

from calibguide.errors import InsufficientViews, InvalidConfig, NotVisible
from calibguide.geometry import Pose, board_corners, project
from calibguide.planner import SearchConfig
from calibguide.session import SessionState
from calibguide.simulate import synthesize_view

from conftest import make_poses


@pytest.fixture()
def session(wide_rig, wide_board):
    return SessionState.create(
        "s-test",
        rig=wide_rig,
        board=wide_board,
        seed=13,
        sigma_px=0.4,
        search=SearchConfig(max_iterations=80, depth_range=(0.55, 1.1)),
    )


def seed_poses(wide_rig, wide_board, count=3):
    poses, _ = make_poses(wide_rig, wide_board, count, seed=95)
    return poses


class TestCreate:
    def test_validation(self, wide_rig, wide_board):
        with pytest.raises(InvalidConfig):
            SessionState.create("x", rig=wide_rig, board=wide_board, mode="manual")
        with pytest.raises(InvalidConfig):
            SessionState.create("x", rig=wide_rig, board=wide_board, sigma_px=-1.0)

    def test_created_event_seeds_the_log(self, session):
        assert len(session.events) == 1
        ev = session.events[0]
        assert ev["type"] == "created" and ev["seq"] == 0
        assert ev["config"]["sigma_px"] == 0.4

    def test_estimated_rig_needs_views(self, session):
        with pytest.raises(InsufficientViews):
            session.estimated_rig()


class TestCapture:
    def test_needs_pose_or_pixels(self, session):
        with pytest.raises(InvalidConfig):
            session.capture()

    def test_rejects_invisible_pose(self, session):
        gone = Pose(np.zeros(3), np.array([0.0, 0.0, -400.0]))
        with pytest.raises(NotVisible):
            session.capture(pose=gone)
        assert session.n_views == 0

    def test_first_capture_has_no_estimate(self, session, wide_rig, wide_board):
        pose = seed_poses(wide_rig, wide_board, 1)[0]
        summary = session.capture(pose=pose)
        assert summary["n_views"] == 1
        assert summary["relative"] is None
        assert summary["rms_reproj"] is None
        assert session.result is None

    def test_second_capture_calibrates(self, session, wide_rig, wide_board):
        poses = seed_poses(wide_rig, wide_board, 2)
        session.capture(pose=poses[0])
        summary = session.capture(pose=poses[1])
        assert summary["n_views"] == 2
        assert summary["relative"] is not None
        assert summary["rms_reproj"] is not None and summary["rms_reproj"] >= 0.0
        est = session.estimated_rig()
        # estimate approximates the true relative at this noise level
        gap = np.linalg.norm(est.relative.tvec - wide_rig.relative.tvec)
        assert gap < 20.0

    def test_external_pixels_path(self, session, wide_rig, wide_board):
        poses = seed_poses(wide_rig, wide_board, 2)
        rng = np.random.default_rng(3)
        for pose in poses:
            v = synthesize_view(wide_rig, wide_board, pose, 0.2, rng)
            session.capture(pixels=(v.left_pixels, v.right_pixels))
        assert session.n_views == 2
        assert session.result is not None
        assert session.events[-1]["external"] is True

    def test_capture_sigma_validation(self, session, wide_rig, wide_board):
        pose = seed_poses(wide_rig, wide_board, 1)[0]
        with pytest.raises(InvalidConfig):
            session.capture(pose=pose, sigma=-0.5)

    def test_histories_grow_per_capture(self, session, wide_rig, wide_board):
        poses = seed_poses(wide_rig, wide_board, 3)
        for pose in poses:
            session.capture(pose=pose)
        assert len(session.trace_history) == 3
        assert session.trace_history[0] is None
        assert len(session.rms_history) == len(session.triang_history) == 3


class TestSuggest:
    def test_needs_two_views(self, session, wide_rig, wide_board):
        with pytest.raises(InsufficientViews):
            session.suggest()
        session.capture(pose=seed_poses(wide_rig, wide_board, 1)[0])
        with pytest.raises(InsufficientViews):
            session.suggest()

    def test_suggestion_and_overlay(self, session, wide_rig, wide_board):
        for pose in seed_poses(wide_rig, wide_board, 2):
            session.capture(pose=pose)
        cand, overlay = session.suggest()
        assert cand.visible is True
        assert cand.trace > 0.0
        assert len(overlay) == wide_board.corner_count
        expected = project(
            session.estimated_rig().left, cand.pose, board_corners(wide_board)
        )
        np.testing.assert_allclose(np.asarray(overlay), expected, atol=1e-12)
        assert session.suggested is cand

    def test_repeat_suggest_is_identical(self, session, wide_rig, wide_board):
        for pose in seed_poses(wide_rig, wide_board, 2):
            session.capture(pose=pose)
        a, overlay_a = session.suggest()
        b, overlay_b = session.suggest()
        np.testing.assert_allclose(a.pose.tvec, b.pose.tvec, atol=0)
        assert a.trace == b.trace
        assert overlay_a == overlay_b

    def test_capturing_the_suggestion_improves_trace(self, session, wide_rig, wide_board):
        for pose in seed_poses(wide_rig, wide_board, 2):
            session.capture(pose=pose)
        before = session.trace_history[-1]
        cand, _ = session.suggest()
        session.capture(pose=cand.pose)
        after = session.trace_history[-1]
        assert session.suggested is None  # cleared by the capture
        assert after is not None and before is not None
        assert after < before


class TestReplay:
    def test_full_round_trip(self, session, wide_rig, wide_board):
        poses = seed_poses(wide_rig, wide_board, 3)
        session.capture(pose=poses[0])
        session.capture(pose=poses[1])
        cand, _ = session.suggest()
        session.capture(pose=cand.pose)
        rng = np.random.default_rng(9)
        v = synthesize_view(wide_rig, wide_board, poses[2], 0.2, rng)
        session.capture(pixels=(v.left_pixels, v.right_pixels))
        session.suggest()

        rebuilt = SessionState.replay(session.events)
        assert rebuilt.to_dict() == session.to_dict()

    def test_replay_requires_created_head(self):
        with pytest.raises(InvalidConfig):
            SessionState.replay([])
        with pytest.raises(InvalidConfig):
            SessionState.replay([{"type": "capture"}])

    def test_snapshot_shape(self, session, wide_rig, wide_board):
        for pose in seed_poses(wide_rig, wide_board, 2):
            session.capture(pose=pose)
        d = session.to_dict()
        assert d["id"] == "s-test"
        assert d["n_views"] == 2
        assert len(d["views"]) == 2
        assert d["views"][0]["left_abs"] is not None
        assert d["relative_estimate"] is not None
        assert d["next_seq"] == len(session.events)
