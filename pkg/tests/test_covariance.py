"""Schur reduction against a dense-inverse oracle.

The reduced 6x6 information must agree with brute force: build the full
dense block matrix, invert it, and read off the top-left 6x6 covariance.
Tests also pin the failure mode — a rig whose geometry leaves the relative
pose unobservable must raise rather than return a finite answer.
"""

from __future__ import annotations

import numpy as np
import pytest

from calibguide.covariance import (
    CovarianceReport,
    relative_covariance,
    schur_information,
    trace_objective,
)
from calibguide.errors import InvalidConfig, SingularInformation
from calibguide.jacobians import InfoBlocks, assemble_info

from conftest import make_poses


def _info(wide_rig, wide_board, count, seed=31, full_chain=False):
    poses, raw = make_poses(wide_rig, wide_board, count, seed=seed)
    views = [v.with_pose(p) for p, v in zip(poses, raw)]
    return assemble_info(views, wide_rig, full_chain=full_chain)


class TestSchurReduction:
    @pytest.mark.parametrize("count", [2, 3, 5])
    @pytest.mark.parametrize("full_chain", [False, True])
    def test_matches_dense_inverse(self, wide_rig, wide_board, count, full_chain):
        info = _info(wide_rig, wide_board, count, seed=40 + count, full_chain=full_chain)
        report = relative_covariance(info)
        dense_cov = np.linalg.inv(info.dense())[:6, :6]
        scale = max(float(np.abs(dense_cov).max()), 1e-30)
        # the reduced information here sits at condition ~1e7, which caps
        # the achievable agreement between the two inversion routes
        assert float(np.abs(report.sigma - dense_cov).max()) / scale < 1e-7

    def test_schur_formula_by_hand(self, wide_rig, wide_board):
        info = _info(wide_rig, wide_board, 3, seed=44)
        S = schur_information(info)
        manual = info.a.copy()
        for b, c in zip(info.b_blocks, info.c_blocks):
            manual -= c @ np.linalg.inv(b) @ c.T
        scale = float(np.abs(manual).max())
        np.testing.assert_allclose(S, manual, atol=1e-6 * scale)
        np.testing.assert_allclose(S, S.T, atol=0)

    def test_no_views_reduces_to_a(self):
        a = np.diag([4.0, 3.0, 2.0, 5.0, 6.0, 7.0])
        info = InfoBlocks(a=a, b_blocks=(), c_blocks=())
        np.testing.assert_allclose(schur_information(info), a, atol=0)
        report = relative_covariance(info)
        np.testing.assert_allclose(report.sigma, np.linalg.inv(a), atol=1e-15)
        np.testing.assert_allclose(report.trace, np.trace(np.linalg.inv(a)), atol=1e-15)
        np.testing.assert_allclose(report.condition, 7.0 / 2.0, rtol=1e-12)

    def test_report_fields_consistent(self, wide_rig, wide_board):
        report = relative_covariance(_info(wide_rig, wide_board, 4, seed=45))
        assert report.sigma.shape == (6, 6)
        np.testing.assert_allclose(report.sigma, report.sigma.T, atol=0)
        np.testing.assert_allclose(report.trace, np.trace(report.sigma), atol=0)
        w = np.linalg.eigvalsh(report.sigma)
        assert w[0] > 0.0
        d = report.to_dict()
        np.testing.assert_allclose(np.asarray(d["sigma"]), report.sigma, atol=0)


class TestSingularCases:
    def test_small_distant_board_is_reported_singular(self, benchtop, board):
        # A 40x25 mm target over a meter away barely constrains its own
        # pose, so the per-view blocks blow past the conditioning limit and
        # the failure is reported instead of silently inverted.
        from calibguide.planner import RandomPoseConstraints, random_pose
        from calibguide.simulate import synthesize_view

        rng = np.random.default_rng(46)
        constraints = RandomPoseConstraints(depth_range=(1.0, 1.5))
        poses: list = []
        for _ in range(3):
            poses.append(random_pose(constraints, benchtop, board, poses, rng))
        views = [
            synthesize_view(benchtop, board, p, 0.0, rng).with_pose(p) for p in poses
        ]
        with pytest.raises(SingularInformation):
            relative_covariance(assemble_info(views, benchtop))

    def test_one_good_view_is_already_finite(self, wide_rig, wide_board):
        # With a known board a single stereo view determines the relative
        # pose, so the reduced information must stay invertible.
        report = relative_covariance(_info(wide_rig, wide_board, 1, seed=46))
        assert np.linalg.eigvalsh(report.sigma)[0] > 0.0

    def test_singular_view_block_is_reported(self):
        a = np.eye(6)
        b = np.zeros((6, 6))
        c = np.zeros((6, 6))
        with pytest.raises(SingularInformation):
            schur_information(InfoBlocks(a=a, b_blocks=(b,), c_blocks=(c,)))


class TestTraceObjective:
    def test_defaults_to_trace(self, wide_rig, wide_board):
        report = relative_covariance(_info(wide_rig, wide_board, 3, seed=47))
        assert trace_objective(report) == report.trace

    def test_identity_sigma_weighting(self):
        report = CovarianceReport(sigma=np.eye(6), trace=6.0, condition=1.0)
        assert trace_objective(report) == 6.0
        assert trace_objective(report, np.ones(6)) == 6.0
        np.testing.assert_allclose(
            trace_objective(report, [2.0, 0, 0, 0, 0, 0]), 2.0, atol=0
        )

    def test_weights_pick_diagonal(self, wide_rig, wide_board):
        report = relative_covariance(_info(wide_rig, wide_board, 3, seed=48))
        for k in range(6):
            w = np.zeros(6)
            w[k] = 1.0
            np.testing.assert_allclose(
                trace_objective(report, w), report.sigma[k, k], atol=0
            )

    def test_weight_validation(self):
        report = CovarianceReport(sigma=np.eye(6), trace=6.0, condition=1.0)
        with pytest.raises(InvalidConfig):
            trace_objective(report, [1.0, 2.0])
        with pytest.raises(InvalidConfig):
            trace_objective(report, [-1.0, 1, 1, 1, 1, 1])


class TestMoreViewsHelp:
    def test_trace_never_increases_with_views(self, wide_rig, wide_board):
        poses, raw = make_poses(wide_rig, wide_board, 8, seed=49)
        views = [v.with_pose(p) for p, v in zip(poses, raw)]
        traces = []
        for k in range(2, len(views) + 1):
            info = assemble_info(views[:k], wide_rig)
            traces.append(relative_covariance(info).trace)
        for earlier, later in zip(traces, traces[1:]):
            assert later <= earlier + 1e-9 * abs(earlier)
