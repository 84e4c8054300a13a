"""Stereo reprojection residuals and their analytic pose Jacobians.

For one captured view of the board, the residual of corner ``k`` in one
camera is ``observed_pixel - projected_pixel``, a 2-vector.  Stacking left
then right camera gives a 4n-vector per view.  Two pose blocks matter:

* the right-camera residuals against the left-to-right relative transform
  (``jac_relative``), and
* the left-camera residuals against that view's absolute left pose
  (``jac_view_pose``).

The right-camera residuals also depend on the view pose through the
composed extrinsics; ``jac_cross`` carries that coupling and is what the
bundle adjuster uses.  All derivatives follow the left perturbation of
:func:`calibguide.geometry.perturb_pose`, which makes the rotation block of
each Jacobian an exact cross product with the camera-frame point.

Every block is assembled by the chain
``d(residual)/d(pixel) . d(pixel)/d(normalized) . d(normalized)/d(point)``,
with the distortion Jacobian written out in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCamera, InvalidConfig
from .geometry import BoardSpec, CameraModel, Pose, StereoRig, board_corners, pixels_from_camera_points


@dataclass(frozen=True, eq=False)
class ViewPair:
    """Detected corners of one board placement, both cameras.

    ``left_abs`` is the current estimate of the board-to-left-camera pose; it
    starts as None for freshly loaded datasets and is filled in by PnP or
    bundle adjustment.
    """

    left_pixels: np.ndarray  # (n, 2)
    right_pixels: np.ndarray  # (n, 2)
    board: BoardSpec
    left_abs: Pose | None = None

    def __post_init__(self) -> None:
        lp = np.asarray(self.left_pixels, dtype=np.float64)
        rp = np.asarray(self.right_pixels, dtype=np.float64)
        n = self.board.corner_count
        if lp.shape != (n, 2) or rp.shape != (n, 2):
            raise InvalidConfig(
                f"corner arrays must be ({n}, 2), got {lp.shape} and {rp.shape}"
            )
        lp.setflags(write=False)
        rp.setflags(write=False)
        object.__setattr__(self, "left_pixels", lp)
        object.__setattr__(self, "right_pixels", rp)

    @property
    def corner_count(self) -> int:
        return self.board.corner_count

    def with_pose(self, pose: Pose) -> ViewPair:
        return replace(self, left_abs=pose)

    def to_dict(self) -> dict:
        d = {
            "left_pixels": self.left_pixels.tolist(),
            "right_pixels": self.right_pixels.tolist(),
            "board": self.board.to_dict(),
        }
        if self.left_abs is not None:
            d["left_abs"] = self.left_abs.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ViewPair:
        return cls(
            left_pixels=np.asarray(d["left_pixels"]),
            right_pixels=np.asarray(d["right_pixels"]),
            board=BoardSpec.from_dict(d["board"]),
            left_abs=Pose.from_dict(d["left_abs"]) if "left_abs" in d else None,
        )


@dataclass(frozen=True, eq=False)
class ResidualVector:
    """Per-corner pixel residuals of one view, left and right camera."""

    left: np.ndarray  # (n, 2)
    right: np.ndarray  # (n, 2)

    def stacked(self) -> np.ndarray:
        """Flat residual vector of length 4n: left corners first, then right."""
        return np.concatenate([self.left.reshape(-1), self.right.reshape(-1)])

    def norms(self) -> np.ndarray:
        """Per-corner distances, (2n,): left corners first, then right."""
        return np.concatenate(
            [np.linalg.norm(self.left, axis=1), np.linalg.norm(self.right, axis=1)]
        )


def _require_pose(view: ViewPair) -> Pose:
    if view.left_abs is None:
        raise InvalidConfig("view has no pose estimate yet; run solve_pnp first")
    return view.left_abs


def _camera_points(view: ViewPair, rig: StereoRig) -> tuple[np.ndarray, np.ndarray]:
    """Board corners in the left and right camera frames, (n, 3) each."""
    pts = board_corners(view.board)
    Ql = _require_pose(view).transform(pts)
    Qr = Ql @ rig.relative.rotation().T + rig.relative.tvec
    bad = min(float(Ql[:, 2].min()), float(Qr[:, 2].min()))
    if bad <= 0.0:
        raise BehindCamera(f"board corner at depth {bad:.3f} mm")
    return Ql, Qr


def residuals(view: ViewPair, rig: StereoRig) -> ResidualVector:
    """Observed minus projected pixels for both cameras of one view."""
    Ql, Qr = _camera_points(view, rig)
    return ResidualVector(
        left=view.left_pixels - pixels_from_camera_points(rig.left, Ql),
        right=view.right_pixels - pixels_from_camera_points(rig.right, Qr),
    )


def _residual_point_jacobian(model: CameraModel, Q: np.ndarray) -> np.ndarray:
    """d(residual)/d(camera point), (n, 2, 3).

    Folds three factors: the residual's -1 against the projection, the focal
    scaling, the distortion Jacobian on the normalized plane

        d(xd)/dx = radial + 2 x^2 (k1 + 2 k2 r^2) + 2 p1 y + 6 p2 x
        d(yd)/dy = radial + 2 y^2 (k1 + 2 k2 r^2) + 6 p1 y + 2 p2 x
        d(xd)/dy = d(yd)/dx = 2 x y (k1 + 2 k2 r^2) + 2 p1 x + 2 p2 y

    and the perspective division d(x, y)/dQ = [[1/Z, 0, -X/Z^2],
    [0, 1/Z, -Y/Z^2]].
    """
    X, Y, Z = Q[:, 0], Q[:, 1], Q[:, 2]
    x = X / Z
    y = Y / Z
    r2 = x * x + y * y
    radial = 1.0 + r2 * (model.k1 + model.k2 * r2)
    dr = model.k1 + 2.0 * model.k2 * r2
    dxdx = radial + 2.0 * x * x * dr + 2.0 * model.p1 * y + 6.0 * model.p2 * x
    dydy = radial + 2.0 * y * y * dr + 6.0 * model.p1 * y + 2.0 * model.p2 * x
    dxdy = 2.0 * x * y * dr + 2.0 * model.p1 * x + 2.0 * model.p2 * y

    M = np.empty((Q.shape[0], 2, 3))
    M[:, 0, 0] = -model.fu * dxdx / Z
    M[:, 0, 1] = -model.fu * dxdy / Z
    M[:, 0, 2] = model.fu * (dxdx * x + dxdy * y) / Z
    M[:, 1, 0] = -model.fv * dxdy / Z
    M[:, 1, 1] = -model.fv * dydy / Z
    M[:, 1, 2] = model.fv * (dxdy * x + dydy * y) / Z
    return M


def _pose_jacobian(M: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Fold d(point)/d(pose delta) into the point Jacobian, (2n, 6).

    Under the left perturbation, dQ/d(rotation) = -[Q]x and
    dQ/d(translation) = I, so each rotation column triple is
    ``cross(Q, M_row)``, written out component-wise to keep this hot path
    free of temporary-array churn.
    """
    qx, qy, qz = Q[:, 0:1], Q[:, 1:2], Q[:, 2:3]
    J = np.empty((Q.shape[0], 2, 6))
    J[:, :, 0] = qy * M[:, :, 2] - qz * M[:, :, 1]
    J[:, :, 1] = qz * M[:, :, 0] - qx * M[:, :, 2]
    J[:, :, 2] = qx * M[:, :, 1] - qy * M[:, :, 0]
    J[:, :, 3:] = M
    return J.reshape(-1, 6)


def pose_blocks(
    board: BoardSpec, left_abs: Pose, rig: StereoRig
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian blocks (relative, view) for a board at the given pose.

    The blocks depend only on geometry, never on observed pixels, so a
    hypothetical placement can be scored without synthesizing detections.
    Returns (jac_relative, jac_view_pose), each (2n, 6).
    """
    pts = board_corners(board)
    Ql = left_abs.transform(pts)
    Qr = Ql @ rig.relative.rotation().T + rig.relative.tvec
    bad = min(float(Ql[:, 2].min()), float(Qr[:, 2].min()))
    if bad <= 0.0:
        raise BehindCamera(f"board corner at depth {bad:.3f} mm")
    U = _pose_jacobian(_residual_point_jacobian(rig.right, Qr), Qr)
    V = _pose_jacobian(_residual_point_jacobian(rig.left, Ql), Ql)
    return U, V


def jac_relative(view: ViewPair, rig: StereoRig) -> np.ndarray:
    """Right-camera residuals vs the relative pose, (2n, 6)."""
    return pose_blocks(view.board, _require_pose(view), rig)[0]


def jac_view_pose(view: ViewPair, rig: StereoRig) -> np.ndarray:
    """Left-camera residuals vs this view's absolute left pose, (2n, 6)."""
    return pose_blocks(view.board, _require_pose(view), rig)[1]


def jac_cross(view: ViewPair, rig: StereoRig) -> np.ndarray:
    """Right-camera residuals vs this view's absolute left pose, (2n, 6).

    The right-frame point is ``Qr = R_rel Ql + t_rel``, so a left-pose
    perturbation reaches the right residual through ``R_rel``:
    the block is ``M_r @ R_rel @ [-[Ql]x | I]``.
    """
    Ql, Qr = _camera_points(view, rig)
    A = _residual_point_jacobian(rig.right, Qr) @ rig.relative.rotation()
    return _pose_jacobian(A, Ql)


@dataclass(frozen=True, eq=False)
class InfoBlocks:
    """Block structure of the stacked J^T J over all views.

    ``a`` is the 6x6 relative-pose block, ``b_blocks[i]`` the i-th view's
    6x6 own-pose block, and ``c_blocks[i]`` the 6x6 coupling between the
    relative pose and view i.  The implied full matrix is
    ``[[a, c_0, c_1, ...], [c_0^T, b_0, 0, ...], ...]``.
    """

    a: np.ndarray
    b_blocks: tuple[np.ndarray, ...]
    c_blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.a.shape != (6, 6):
            raise InvalidConfig(f"relative block must be 6x6, got {self.a.shape}")
        if len(self.b_blocks) != len(self.c_blocks):
            raise InvalidConfig("one coupling block per view block required")

    @property
    def view_count(self) -> int:
        return len(self.b_blocks)

    def dense(self) -> np.ndarray:
        """Materialize the full (6 + 6m) square matrix; small inputs only."""
        m = self.view_count
        out = np.zeros((6 + 6 * m, 6 + 6 * m))
        out[:6, :6] = self.a
        for i, (b, c) in enumerate(zip(self.b_blocks, self.c_blocks)):
            s = 6 + 6 * i
            out[s : s + 6, s : s + 6] = b
            out[:6, s : s + 6] = c
            out[s : s + 6, :6] = c.T
        return out


def assemble_info(views, rig: StereoRig, full_chain: bool = False) -> InfoBlocks:
    """Accumulate the information blocks over a list of views.

    With ``full_chain=False`` (the default used for planning and covariance
    reporting) the view blocks keep only the left-camera term:
    ``a += U^T U``, ``b_i = V^T V``, ``c_i = U^T V``.  With
    ``full_chain=True`` the right camera's dependence on the view pose is
    included as well: ``b_i = V^T V + W^T W``, ``c_i = U^T W``.

    Accumulation order is the list order, so results are bit-reproducible.
    """
    a = np.zeros((6, 6))
    b_blocks: list[np.ndarray] = []
    c_blocks: list[np.ndarray] = []
    for view in views:
        U, V = pose_blocks(view.board, _require_pose(view), rig)
        a += U.T @ U
        if full_chain:
            W = jac_cross(view, rig)
            b_blocks.append(V.T @ V + W.T @ W)
            c_blocks.append(U.T @ W)
        else:
            b_blocks.append(V.T @ V)
            c_blocks.append(U.T @ V)
    return InfoBlocks(a=a, b_blocks=tuple(b_blocks), c_blocks=tuple(c_blocks))
