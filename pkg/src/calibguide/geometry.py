"""Camera models, rigid transforms, and stereo projection geometry.

Conventions used throughout the package:

* World and camera coordinates are millimeters; angles are radians.
* A :class:`Pose` maps world points into a camera frame, ``Q = R @ P + t``,
  with the rotation stored as an axis-angle vector of norm <= pi.
* Pixels follow the usual image convention: +u right, +v down, origin at the
  top-left corner, so a point on the optical axis lands on the principal
  point.
* Lens distortion acts on the normalized image plane (x, y) = (X/Z, Y/Z)
  before the focal lengths and principal point are applied:

      x_d = x (1 + k1 r^2 + k2 r^4) + 2 p1 x y + p2 (r^2 + 2 x^2)
      y_d = y (1 + k1 r^2 + k2 r^4) + p1 (r^2 + 2 y^2) + 2 p2 x y

  with r^2 = x^2 + y^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateRays, InvalidConfig

_EPS = np.finfo(np.float64).eps


def _as_vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise InvalidConfig(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidConfig(f"{name} must be finite, got {arr.tolist()}")
    arr.setflags(write=False)
    return arr


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(rvec) -> np.ndarray:
    """Rodrigues formula, series-expanded near zero angle."""
    r = np.asarray(rvec, dtype=np.float64).reshape(3)
    theta2 = float(r @ r)
    K = skew(r)
    if theta2 < 1e-16:
        # sin(t)/t ~ 1 - t^2/6, (1-cos t)/t^2 ~ 1/2 - t^2/24
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def quaternion_from_rotation(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0.

    Uses the largest-pivot branch so every orientation, including half-turns,
    stays well conditioned.
    """
    R = np.asarray(R, dtype=np.float64)
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    trace = m00 + m11 + m22
    cand = np.array([trace, m00, m11, m22])
    i = int(np.argmax(cand))
    if i == 0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif i == 1:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif i == 2:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    if q[0] < 0.0 or (q[0] == 0.0 and _first_nonzero_negative(q[1:])):
        q = -q
    return q


def _first_nonzero_negative(v: np.ndarray) -> bool:
    for c in v:
        if c != 0.0:
            return bool(c < 0.0)
    return False


def axis_angle_from_quaternion(q) -> np.ndarray:
    """Rotation vector of norm in [0, pi] from a unit quaternion with w >= 0."""
    q = np.asarray(q, dtype=np.float64)
    w, v = q[0], q[1:]
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        # theta = 2 asin(n) ~ 2 n; rvec = 2 v to the same order
        return 2.0 * v
    theta = 2.0 * np.arctan2(n, w)
    return v * (theta / n)


def axis_angle_from_rotation(R) -> np.ndarray:
    """Inverse Rodrigues via the quaternion route, canonical norm in [0, pi]."""
    return axis_angle_from_quaternion(quaternion_from_rotation(R))


def _canonical_rvec(value, name: str = "rvec") -> np.ndarray:
    r = np.array(value, dtype=np.float64).reshape(-1)
    if r.shape != (3,):
        raise InvalidConfig(f"{name} must be a 3-vector, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidConfig(f"{name} must be finite, got {r.tolist()}")
    theta = float(np.linalg.norm(r))
    if theta > np.pi:
        wrapped = np.remainder(theta, 2.0 * np.pi)
        if wrapped > np.pi:
            wrapped -= 2.0 * np.pi
        r = r * (wrapped / theta)
    r.setflags(write=False)
    return r


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform world -> camera: ``Q = R(rvec) @ P + tvec``.

    The rotation vector is canonicalized to norm <= pi on construction, so
    two poses describing the same transform serialize identically.
    """

    rvec: np.ndarray
    tvec: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rvec", _canonical_rvec(self.rvec))
        object.__setattr__(self, "tvec", _as_vec3(self.tvec, "tvec"))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, R, t) -> Pose:
        return cls(axis_angle_from_rotation(R), t)

    def rotation(self) -> np.ndarray:
        # Immutable pose, so the matrix is computed once and memoized.
        cached = getattr(self, "_rotation_cache", None)
        if cached is None:
            cached = rotation_from_axis_angle(self.rvec)
            cached.setflags(write=False)
            object.__setattr__(self, "_rotation_cache", cached)
        return cached

    def transform(self, points) -> np.ndarray:
        """Apply to one point (3,) or a stack (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation().T + self.tvec

    def inverse(self) -> Pose:
        R = self.rotation()
        return Pose.from_matrix(R.T, -R.T @ self.tvec)

    def compose(self, other: Pose) -> Pose:
        """Transform that applies ``other`` first, then ``self``."""
        R_a, R_b = self.rotation(), other.rotation()
        return Pose.from_matrix(R_a @ R_b, R_a @ other.tvec + self.tvec)

    def to_dict(self) -> dict:
        return {"rvec": self.rvec.tolist(), "tvec": self.tvec.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Pose:
        return cls(np.asarray(d["rvec"]), np.asarray(d["tvec"]))


def perturb_pose(pose: Pose, delta) -> Pose:
    """Apply a 6-vector update (rotation first, then translation).

    The update acts on the left: ``R <- exp([d_rot]) R`` and
    ``t <- exp([d_rot]) t + d_trans``, i.e. the perturbation rotates the
    whole camera frame about the world origin as expressed in it.  All pose
    Jacobians in this package differentiate with respect to exactly this
    parameterization.
    """
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    dR = rotation_from_axis_angle(delta[:3])
    return Pose.from_matrix(dR @ pose.rotation(), dR @ pose.tvec + delta[3:])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics with two radial and two tangential coefficients."""

    fu: float
    fv: float
    u0: float
    v0: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self) -> None:
        for name in ("fu", "fv", "u0", "v0", "k1", "k2", "p1", "p2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.fu <= 0.0 or self.fv <= 0.0:
            raise InvalidConfig(f"focal lengths must be positive, got fu={self.fu}, fv={self.fv}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidConfig(f"image size must be positive, got {self.width}x{self.height}")
        if not (0.0 < self.u0 < self.width and 0.0 < self.v0 < self.height):
            raise InvalidConfig(
                f"principal point ({self.u0}, {self.v0}) outside {self.width}x{self.height} image"
            )

    def distortion(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.p1, self.p2])

    def to_dict(self) -> dict:
        return {
            "fu": self.fu,
            "fv": self.fv,
            "u0": self.u0,
            "v0": self.v0,
            "k1": self.k1,
            "k2": self.k2,
            "p1": self.p1,
            "p2": self.p2,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CameraModel:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def distort_normalized(model: CameraModel, xy) -> np.ndarray:
    """Apply lens distortion to normalized image-plane points (..., 2)."""
    xy = np.asarray(xy, dtype=np.float64)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (model.k1 + model.k2 * r2)
    xd = x * radial + 2.0 * model.p1 * x * y + model.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + model.p1 * (r2 + 2.0 * y * y) + 2.0 * model.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def undistort_normalized(model: CameraModel, xy, iterations: int = 20, tol: float = 1e-12) -> np.ndarray:
    """Invert :func:`distort_normalized` by fixed-point iteration.

    Converges for the mild distortion this package targets; stops early once
    the update falls below ``tol``.
    """
    xy = np.asarray(xy, dtype=np.float64)
    und = xy.copy()
    for _ in range(iterations):
        x, y = und[..., 0], und[..., 1]
        r2 = x * x + y * y
        radial = 1.0 + r2 * (model.k1 + model.k2 * r2)
        dx = 2.0 * model.p1 * x * y + model.p2 * (r2 + 2.0 * x * x)
        dy = model.p1 * (r2 + 2.0 * y * y) + 2.0 * model.p2 * x * y
        new = np.stack([(xy[..., 0] - dx) / radial, (xy[..., 1] - dy) / radial], axis=-1)
        step = np.max(np.abs(new - und))
        und = new
        if step < tol:
            break
    return und


def pixels_from_camera_points(model: CameraModel, Q) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels without a depth check."""
    Q = np.asarray(Q, dtype=np.float64)
    xy = Q[..., :2] / Q[..., 2:3]
    xyd = distort_normalized(model, xy)
    return np.stack(
        [model.fu * xyd[..., 0] + model.u0, model.fv * xyd[..., 1] + model.v0], axis=-1
    )


def project(model: CameraModel, pose: Pose, points) -> np.ndarray:
    """Project world points through a pose into pixels.

    Accepts a single (3,) point or a stack (N, 3) and returns matching
    shape.  Raises :class:`BehindCamera` if any point has depth <= 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    Q = pose.transform(pts.reshape(-1, 3))
    depths = Q[:, 2]
    if np.any(depths <= 0.0):
        bad = int(np.argmin(depths))
        raise BehindCamera(f"point {bad} has depth {depths[bad]:.3f} mm")
    pix = pixels_from_camera_points(model, Q)
    return pix[0] if single else pix


def backproject(model: CameraModel, pixels, depth) -> np.ndarray:
    """Camera-frame point(s) at the given depth along the undistorted ray."""
    pix = np.asarray(pixels, dtype=np.float64)
    single = pix.ndim == 1
    pix = pix.reshape(-1, 2)
    xy = np.stack(
        [(pix[:, 0] - model.u0) / model.fu, (pix[:, 1] - model.v0) / model.fv], axis=-1
    )
    und = undistort_normalized(model, xy)
    depth = np.broadcast_to(np.asarray(depth, dtype=np.float64), (und.shape[0],))
    Q = np.concatenate([und, np.ones((und.shape[0], 1))], axis=1) * depth[:, None]
    return Q[0] if single else Q


def compose_right_extrinsics(relative: Pose, left_abs: Pose) -> Pose:
    """Absolute right-camera pose from the left pose and the left-to-right transform.

    ``R_r = R_rel @ R_l`` and ``t_r = R_rel @ t_l + t_rel``; the result is
    re-canonicalized to axis-angle form.
    """
    return relative.compose(left_abs)


@dataclass(frozen=True)
class BoardSpec:
    """Planar calibration target: a rows x cols grid of corners, spacing in mm."""

    rows: int
    cols: int
    spacing_mm: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "spacing_mm", float(self.spacing_mm))
        if self.rows < 2 or self.cols < 2:
            raise InvalidConfig(f"board needs at least 2x2 corners, got {self.rows}x{self.cols}")
        if self.spacing_mm <= 0.0:
            raise InvalidConfig(f"corner spacing must be positive, got {self.spacing_mm}")

    @property
    def corner_count(self) -> int:
        return self.rows * self.cols

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "spacing_mm": self.spacing_mm}

    @classmethod
    def from_dict(cls, d: dict) -> BoardSpec:
        return cls(rows=d["rows"], cols=d["cols"], spacing_mm=d["spacing_mm"])


def board_corners(spec: BoardSpec) -> np.ndarray:
    """Corner positions in the board frame, (rows*cols, 3), Z = 0.

    Corner k = i*cols + j sits at (i*spacing, j*spacing, 0), so the grid is
    row-major with rows along +X.
    """
    i, j = np.divmod(np.arange(spec.corner_count), spec.cols)
    pts = np.zeros((spec.corner_count, 3))
    pts[:, 0] = i * spec.spacing_mm
    pts[:, 1] = j * spec.spacing_mm
    return pts


def board_center(spec: BoardSpec) -> np.ndarray:
    """Geometric center of the corner grid, board frame."""
    return np.array(
        [(spec.rows - 1) * spec.spacing_mm / 2.0, (spec.cols - 1) * spec.spacing_mm / 2.0, 0.0]
    )


def board_outline(spec: BoardSpec) -> np.ndarray:
    """Indices of the perimeter corners in counter-clockwise loop order."""
    top = np.arange(spec.cols)
    right = np.arange(1, spec.rows) * spec.cols + (spec.cols - 1)
    bottom = (spec.rows - 1) * spec.cols + np.arange(spec.cols - 2, -1, -1)
    left = np.arange(spec.rows - 2, 0, -1) * spec.cols
    return np.concatenate([top, right, bottom, left])


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Two intrinsic models plus the fixed left-to-right transform."""

    left: CameraModel
    right: CameraModel
    relative: Pose

    def right_pose(self, left_abs: Pose) -> Pose:
        return compose_right_extrinsics(self.relative, left_abs)

    def to_dict(self) -> dict:
        return {
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "relative": self.relative.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> StereoRig:
        return cls(
            left=CameraModel.from_dict(d["left"]),
            right=CameraModel.from_dict(d["right"]),
            relative=Pose.from_dict(d["relative"]),
        )


def triangulate(rig: StereoRig, left_abs: Pose, left_pixels, right_pixels) -> np.ndarray:
    """Midpoint triangulation of pixel pairs back into the world frame.

    Rays are undistorted first; each returned point is the midpoint of the
    common perpendicular between the two rays.  Raises
    :class:`DegenerateRays` when any pair is within 1e-6 rad of parallel.
    """
    lp = np.asarray(left_pixels, dtype=np.float64).reshape(-1, 2)
    rp = np.asarray(right_pixels, dtype=np.float64).reshape(-1, 2)
    if lp.shape != rp.shape:
        raise InvalidConfig(f"pixel arrays disagree: {lp.shape} vs {rp.shape}")

    d1 = backproject(rig.left, lp, 1.0)  # (N, 3), left frame
    R_rel = rig.relative.rotation()
    # right-camera rays expressed in the left frame
    d2 = backproject(rig.right, rp, 1.0) @ R_rel
    c2 = -R_rel.T @ rig.relative.tvec

    u1 = d1 / np.linalg.norm(d1, axis=1, keepdims=True)
    u2 = d2 / np.linalg.norm(d2, axis=1, keepdims=True)
    cosang = np.abs(np.sum(u1 * u2, axis=1))
    angles = np.arccos(np.clip(cosang, 0.0, 1.0))
    if np.any(angles < 1e-6):
        bad = int(np.argmin(angles))
        raise DegenerateRays(f"rays for point {bad} are {angles[bad]:.2e} rad apart")

    # closest-approach parameters: minimize |s*d1 - (c2 + u*d2)|
    a = np.sum(d1 * d1, axis=1)
    b = np.sum(d1 * d2, axis=1)
    c = np.sum(d2 * d2, axis=1)
    rhs1 = d1 @ c2
    rhs2 = d2 @ c2
    denom = a * c - b * b
    s = (c * rhs1 - b * rhs2) / denom
    u = (b * rhs1 - a * rhs2) / denom
    p1 = s[:, None] * d1
    p2 = c2 + u[:, None] * d2
    mid = 0.5 * (p1 + p2)  # left-camera frame
    return left_abs.inverse().transform(mid)
