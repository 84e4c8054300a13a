"""Shared fixtures: rigs, boards, and synthetic view factories.

Two rigs appear throughout.  The ``benchtop`` rig mirrors the hardware the
package is tuned for (small board, long lever arm) and is deliberately
ill-conditioned — useful for exercising the exact failure modes the library
guards against.  The ``wide`` rig uses a larger board seen up close, which
keeps every information matrix comfortably invertible; numerical oracles
(dense inverses, finite differences, monotonicity checks) run against it.
"""

from __future__ import annotations

import numpy as np
import pytest

from calibguide.geometry import BoardSpec, CameraModel, Pose, StereoRig
from calibguide.planner import RandomPoseConstraints, is_visible, random_pose
from calibguide.simulate import benchtop_board, benchtop_rig, synthesize_view


@pytest.fixture(scope="session")
def benchtop():
    return benchtop_rig()


@pytest.fixture(scope="session")
def board():
    return benchtop_board()


def _wide_rig() -> StereoRig:
    cam = CameraModel(700.0, 700.0, 320.0, 240.0, -0.12, 0.03, 1e-4, -2e-4)
    relative = Pose(
        rvec=np.array([0.01, 0.18, 0.004]),  # toed in; axes cross near 836 mm
        tvec=np.array([-150.0, 2.0, 8.0]),
    )
    return StereoRig(cam, cam, relative)


@pytest.fixture(scope="session")
def wide_rig():
    return _wide_rig()


@pytest.fixture(scope="session")
def wide_board():
    return BoardSpec(7, 5, 30.0)


def make_poses(rig, board, count, seed=0, sigma=0.0):
    """Sample ``count`` fully visible poses and synthesize their pixel views."""
    rng = np.random.default_rng(seed)
    constraints = RandomPoseConstraints(depth_range=(0.55, 1.1))
    poses, views = [], []
    while len(poses) < count:
        pose = random_pose(constraints, rig, board, poses, rng)
        poses.append(pose)
        views.append(synthesize_view(rig, board, pose, sigma, rng))
    return poses, views


@pytest.fixture(scope="session")
def wide_views(wide_rig, wide_board):
    poses, views = make_poses(wide_rig, wide_board, 6, seed=7)
    return poses, views


def make_dataset(rig, board, count, seed=0, sigma=0.0):
    """A CalibrationDataset of ``count`` synthetic views, plus the true poses."""
    from calibguide.pipeline import CalibrationDataset

    poses, views = make_poses(rig, board, count, seed=seed, sigma=sigma)
    return CalibrationDataset(rig.left, rig.right, board, tuple(views)), poses


def assert_pose_close(a: Pose, b: Pose, rot_tol=1e-8, trans_tol=1e-6):
    ra, rb = a.rotation(), b.rotation()
    cos = (np.trace(ra.T @ rb) - 1.0) / 2.0
    gap = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    assert gap < rot_tol, f"rotation gap {gap} exceeds {rot_tol}"
    dt = float(np.linalg.norm(a.tvec - b.tvec))
    assert dt < trans_tol, f"translation gap {dt} exceeds {trans_tol}"
