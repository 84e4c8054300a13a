"""Board-pose planning: where to hold the target next.

The planner scores a hypothetical board placement by the trace of the
relative-pose covariance that the existing views plus that placement would
produce, and searches for the placement minimizing it.  Because the
information blocks depend only on geometry, no synthetic detections are
needed to score a candidate.

Also here: the uniform random baseline a careful operator would follow
(visibility, tilt, and coverage constraints), used for comparison studies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from matplotlib.path import Path

from .errors import (
    ConstraintUnsatisfiable,
    InsufficientViews,
    InvalidConfig,
    NoFeasibleCandidate,
)
from .geometry import (
    BoardSpec,
    Pose,
    StereoRig,
    backproject,
    board_center,
    board_corners,
    board_outline,
    pixels_from_camera_points,
    rotation_from_axis_angle,
)
from .jacobians import _pose_jacobian, _residual_point_jacobian, pose_blocks


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for :func:`next_optimal_pose`.

    The translation box bounds the board *center* in the left camera frame;
    when None it is derived from the stereo overlap at the working depth
    scaled by ``depth_range``.  ``mode="grid"`` swaps the random sampler for
    an exhaustive lattice of ``grid_points`` per axis at a fixed
    ``grid_rotation``, ignoring the iteration cap and tolerance; it exists
    for verification against brute force.
    """

    max_iterations: int = 500
    rel_tol: float = 1e-6
    rotation_range: float = float(np.deg2rad(45.0))
    depth_range: tuple[float, float] = (0.5, 1.5)
    translation_box: tuple | None = None  # ((x,y,z) min, (x,y,z) max)
    margin_px: float = 5.0
    seed: int = 0
    mode: str = "random"
    grid_points: int = 5
    grid_rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise InvalidConfig(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.rel_tol > 0.0:
            raise InvalidConfig(f"rel_tol must be positive, got {self.rel_tol}")
        if self.rotation_range < 0.0:
            raise InvalidConfig(f"rotation_range must be >= 0, got {self.rotation_range}")
        lo, hi = self.depth_range
        if not 0.0 < lo <= hi:
            raise InvalidConfig(f"depth_range must satisfy 0 < lo <= hi, got {self.depth_range}")
        if self.mode not in ("random", "grid"):
            raise InvalidConfig(f"mode must be 'random' or 'grid', got {self.mode!r}")
        if self.grid_points < 1:
            raise InvalidConfig(f"grid_points must be >= 1, got {self.grid_points}")

    def to_dict(self) -> dict:
        d = {
            "max_iterations": self.max_iterations,
            "rel_tol": self.rel_tol,
            "rotation_range": self.rotation_range,
            "depth_range": list(self.depth_range),
            "margin_px": self.margin_px,
            "seed": self.seed,
            "mode": self.mode,
            "grid_points": self.grid_points,
            "grid_rotation": list(self.grid_rotation),
        }
        if self.translation_box is not None:
            d["translation_box"] = [list(self.translation_box[0]), list(self.translation_box[1])]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SearchConfig:
        kw = dict(d)
        if "depth_range" in kw:
            kw["depth_range"] = tuple(kw["depth_range"])
        if "grid_rotation" in kw:
            kw["grid_rotation"] = tuple(kw["grid_rotation"])
        if kw.get("translation_box") is not None:
            box = kw["translation_box"]
            kw["translation_box"] = (tuple(box[0]), tuple(box[1]))
        return cls(**kw)


@dataclass(frozen=True)
class RandomPoseConstraints:
    """What the uniform baseline demands of a placement before keeping it."""

    rotation_range: float = float(np.deg2rad(30.0))
    coverage_target: float = 0.9
    normal_min_angle: float = float(np.deg2rad(5.0))
    depth_range: tuple[float, float] = (0.5, 1.5)
    margin_px: float = 5.0
    max_attempts: int = 10_000

    def __post_init__(self) -> None:
        if not 0.0 <= self.coverage_target <= 1.0:
            raise InvalidConfig(f"coverage_target must be in [0, 1], got {self.coverage_target}")
        if self.max_attempts < 1:
            raise InvalidConfig(f"max_attempts must be >= 1, got {self.max_attempts}")
        lo, hi = self.depth_range
        if not 0.0 < lo <= hi:
            raise InvalidConfig(f"depth_range must satisfy 0 < lo <= hi, got {self.depth_range}")

    def to_dict(self) -> dict:
        return {
            "rotation_range": self.rotation_range,
            "coverage_target": self.coverage_target,
            "normal_min_angle": self.normal_min_angle,
            "depth_range": list(self.depth_range),
            "margin_px": self.margin_px,
            "max_attempts": self.max_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RandomPoseConstraints:
        kw = dict(d)
        if "depth_range" in kw:
            kw["depth_range"] = tuple(kw["depth_range"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class CandidatePose:
    """A scored board placement: predicted covariance trace after capturing it."""

    pose: Pose
    trace: float
    visible: bool

    def to_dict(self) -> dict:
        return {"pose": self.pose.to_dict(), "trace": self.trace, "visible": self.visible}

    @classmethod
    def from_dict(cls, d: dict) -> CandidatePose:
        return cls(pose=Pose.from_dict(d["pose"]), trace=float(d["trace"]), visible=bool(d["visible"]))


def _inside(pix: np.ndarray, model, margin: float) -> bool:
    return bool(
        np.all(pix[:, 0] >= margin)
        and np.all(pix[:, 0] <= model.width - 1 - margin)
        and np.all(pix[:, 1] >= margin)
        and np.all(pix[:, 1] <= model.height - 1 - margin)
    )


def is_visible(pose: Pose, rig: StereoRig, board: BoardSpec, margin_px: float = 5.0) -> bool:
    """True when every corner projects inside both images with the margin.

    Corners behind either camera make the pose invisible rather than raising.
    """
    pts = board_corners(board)
    Ql = pose.transform(pts)
    if Ql[:, 2].min() <= 0.0:
        return False
    if not _inside(pixels_from_camera_points(rig.left, Ql), rig.left, margin_px):
        return False
    Qr = Ql @ rig.relative.rotation().T + rig.relative.tvec
    if Qr[:, 2].min() <= 0.0:
        return False
    return _inside(pixels_from_camera_points(rig.right, Qr), rig.right, margin_px)


def convergence_depth(rig: StereoRig) -> float:
    """Working depth where the two optical axes pass closest, left frame.

    Falls back to twice the baseline length for near-parallel axes.
    """
    R = rig.relative.rotation()
    d1 = np.array([0.0, 0.0, 1.0])
    d2 = R.T @ d1
    c2 = -R.T @ rig.relative.tvec
    b = float(d1 @ d2)
    denom = 1.0 - b * b
    fallback = 2.0 * float(np.linalg.norm(rig.relative.tvec))
    if denom < 1e-12:
        return fallback if fallback > 0.0 else 1000.0
    s = float((d1 - b * d2) @ c2) / denom
    if s <= 0.0:
        return fallback if fallback > 0.0 else 1000.0
    return s


def _overlap_box(
    rig: StereoRig, depths: np.ndarray, margin_px: float, grid: int = 16
) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box (left frame) of points seen by both cameras.

    Sweeps a pixel lattice of the left image across the given depths and
    keeps the back-projected points that also land inside the right image.
    """
    m = rig.left
    us = np.linspace(margin_px, m.width - 1 - margin_px, grid)
    vs = np.linspace(margin_px, m.height - 1 - margin_px, grid)
    uu, vv = np.meshgrid(us, vs)
    pix = np.stack([uu.reshape(-1), vv.reshape(-1)], axis=-1)
    R = rig.relative.rotation()
    kept = []
    for z in depths:
        Q = backproject(m, pix, float(z))
        Qr = Q @ R.T + rig.relative.tvec
        ok = Qr[:, 2] > 0.0
        pr = pixels_from_camera_points(rig.right, Qr[ok])
        rm = rig.right
        inside = (
            (pr[:, 0] >= margin_px)
            & (pr[:, 0] <= rm.width - 1 - margin_px)
            & (pr[:, 1] >= margin_px)
            & (pr[:, 1] <= rm.height - 1 - margin_px)
        )
        kept.append(Q[ok][inside])
    pts = np.concatenate(kept, axis=0)
    if pts.shape[0] == 0:
        # no stereo overlap at these depths; fall back to the left frustum
        pts = np.concatenate([backproject(m, pix, float(z)) for z in depths], axis=0)
    return pts.min(axis=0), pts.max(axis=0)


def _reference_depth(views, rig: StereoRig) -> float:
    """Mean board-center depth of the given views, or the rig's convergence depth."""
    depths = []
    for view in views:
        if view.left_abs is None:
            continue
        z = float(view.left_abs.transform(board_center(view.board))[2])
        if z > 0.0:
            depths.append(z)
    if depths:
        return float(np.mean(depths))
    return convergence_depth(rig)


def _center_box(rig: StereoRig, z_ref: float, cfg_depth_range, margin_px: float):
    zs = z_ref * np.linspace(cfg_depth_range[0], cfg_depth_range[1], 3)
    return _overlap_box(rig, zs, margin_px)


def _candidate_traces(
    base_a: np.ndarray,
    base_s: np.ndarray,
    rig: StereoRig,
    pts: np.ndarray,
    R_all: np.ndarray,
    t_all: np.ndarray,
    margin_px: float,
) -> np.ndarray:
    """Covariance trace after hypothetically adding each candidate pose.

    ``R_all``/``t_all`` stack the candidates ((n, 3, 3) and (n, 3)); the
    return value holds one trace per candidate, with ``inf`` marking poses
    that leave the board outside either frustum or whose augmented system
    is not positive definite.  All candidates are scored in one vectorized
    pass — the board is small enough that the whole stack fits comfortably.
    """
    n, m = R_all.shape[0], pts.shape[0]
    traces = np.full(n, np.inf)
    Ql = np.matmul(pts[None, :, :], R_all.transpose(0, 2, 1)) + t_all[:, None, :]
    Qr = Ql @ rig.relative.rotation().T + rig.relative.tvec
    idx = np.flatnonzero((Ql[..., 2].min(axis=1) > 0.0) & (Qr[..., 2].min(axis=1) > 0.0))
    if idx.size == 0:
        return traces
    Ql, Qr = Ql[idx], Qr[idx]

    def inside(pix, model):
        return (
            (pix[..., 0] >= margin_px)
            & (pix[..., 0] <= model.width - 1 - margin_px)
            & (pix[..., 1] >= margin_px)
            & (pix[..., 1] <= model.height - 1 - margin_px)
        ).all(axis=1)

    ok = inside(pixels_from_camera_points(rig.left, Ql), rig.left) & inside(
        pixels_from_camera_points(rig.right, Qr), rig.right
    )
    idx = idx[ok]
    if idx.size == 0:
        return traces
    Ql, Qr = Ql[ok], Qr[ok]
    k = idx.size
    flat_r = Qr.reshape(-1, 3)
    flat_l = Ql.reshape(-1, 3)
    U = _pose_jacobian(_residual_point_jacobian(rig.right, flat_r), flat_r).reshape(k, 2 * m, 6)
    V = _pose_jacobian(_residual_point_jacobian(rig.left, flat_l), flat_l).reshape(k, 2 * m, 6)
    Ut, Vt = U.transpose(0, 2, 1), V.transpose(0, 2, 1)
    b = Vt @ V
    c = Ut @ V
    try:
        solved = np.linalg.solve(b, c.transpose(0, 2, 1))
    except np.linalg.LinAlgError:
        # a degenerate candidate poisons the stacked solve; fall back to
        # slice-at-a-time so only the bad ones score as infeasible
        solved = np.empty_like(c.transpose(0, 2, 1))
        keep = np.ones(k, dtype=bool)
        for j in range(k):
            try:
                solved[j] = np.linalg.solve(b[j], c[j].T)
            except np.linalg.LinAlgError:
                keep[j] = False
        idx, solved, U, V, Ut, c = idx[keep], solved[keep], U[keep], V[keep], Ut[keep], c[keep]
        if idx.size == 0:
            return traces
    S = base_a + Ut @ U - base_s - c @ solved
    w = np.linalg.eigvalsh(0.5 * (S + S.transpose(0, 2, 1)))
    good = w[:, 0] > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        traces[idx] = np.where(good, np.sum(1.0 / np.abs(w), axis=1), np.inf)
    return traces


def next_optimal_pose(views, rig: StereoRig, board: BoardSpec, cfg: SearchConfig) -> CandidatePose:
    """Search for the visible board placement minimizing the predicted trace.

    ``views`` are the captures so far (at least one, with pose estimates);
    ``rig`` carries the current relative estimate, which the scoring treats
    as truth.  Random mode draws candidates from the configured bounds until
    the iteration cap or until an accepted improvement is relatively smaller
    than ``rel_tol``; grid mode scores the full lattice.  Ties keep the
    earlier candidate, so a fixed seed yields a fixed result.
    """
    views = list(views)
    if not views:
        raise InsufficientViews("pose search needs at least one captured view")

    base_a = np.zeros((6, 6))
    base_s = np.zeros((6, 6))
    for view in views:
        if view.left_abs is None:
            raise InvalidConfig("every view needs a pose estimate before planning")
        U, V = pose_blocks(view.board, view.left_abs, rig)
        base_a += U.T @ U
        b = V.T @ V
        c = U.T @ V
        base_s += c @ np.linalg.solve(b, c.T)

    pts = board_corners(board)
    bc = board_center(board)
    z_ref = _reference_depth(views, rig)
    if cfg.translation_box is not None:
        lo = np.asarray(cfg.translation_box[0], dtype=np.float64)
        hi = np.asarray(cfg.translation_box[1], dtype=np.float64)
    else:
        lo, hi = _center_box(rig, z_ref, cfg.depth_range, cfg.margin_px)

    if cfg.mode == "grid":
        axes = [np.linspace(lo[k], hi[k], cfg.grid_points) for k in range(3)]
        rvec = np.asarray(cfg.grid_rotation, dtype=np.float64)
        centers = np.array(list(itertools.product(*axes)))
        rvecs = np.broadcast_to(rvec, (centers.shape[0], 3))
        R_all = np.broadcast_to(rotation_from_axis_angle(rvec), (centers.shape[0], 3, 3))
    else:
        rng = np.random.default_rng(cfg.seed)
        rvecs = np.empty((cfg.max_iterations, 3))
        centers = np.empty((cfg.max_iterations, 3))
        for i in range(cfg.max_iterations):
            rvecs[i] = rng.uniform(-cfg.rotation_range, cfg.rotation_range, 3)
            centers[i] = rng.uniform(lo, hi)
        R_all = np.stack([rotation_from_axis_angle(rv) for rv in rvecs])

    t_all = centers - np.matmul(R_all, bc[:, None])[:, :, 0]
    traces = _candidate_traces(base_a, base_s, rig, pts, R_all, t_all, cfg.margin_px)

    best_pose: Pose | None = None
    best_trace = np.inf
    for i, tr in enumerate(traces):
        if tr >= best_trace:
            continue
        gain = (best_trace - tr) / best_trace if np.isfinite(best_trace) else np.inf
        best_pose = Pose(rvecs[i], t_all[i])
        best_trace = float(tr)
        if cfg.mode == "random" and gain <= cfg.rel_tol:
            break

    if best_pose is None:
        raise NoFeasibleCandidate(
            f"no visible, well-conditioned candidate in {len(traces)} iterations"
        )
    return CandidatePose(pose=best_pose, trace=best_trace, visible=True)


def _coverage_state(history, rig: StereoRig, board: BoardSpec, grid: int):
    """Occupancy of the stereo-overlap region of the left image.

    Returns (covered, overlap, centers_px, cell_size) where the masks are
    flat boolean arrays over the grid cells and ``centers_px`` their pixel
    centers.  The overlap region is evaluated at the mean board depth of the
    history (convergence depth when empty).
    """
    m = rig.left
    cw = m.width / grid
    ch = m.height / grid
    cu = (np.arange(grid) + 0.5) * cw
    cv = (np.arange(grid) + 0.5) * ch
    uu, vv = np.meshgrid(cu, cv)
    centers = np.stack([uu.reshape(-1), vv.reshape(-1)], axis=-1)

    poses = [p for p in history]
    depths = []
    bc = board_center(board)
    for pose in poses:
        z = float(pose.transform(bc)[2])
        if z > 0.0:
            depths.append(z)
    z_ref = float(np.mean(depths)) if depths else convergence_depth(rig)

    Q = backproject(m, centers, z_ref)
    Qr = Q @ rig.relative.rotation().T + rig.relative.tvec
    rm = rig.right
    with np.errstate(invalid="ignore", divide="ignore"):
        pr = pixels_from_camera_points(rm, Qr)
    overlap = (
        (Qr[:, 2] > 0.0)
        & (pr[:, 0] >= 0.0)
        & (pr[:, 0] <= rm.width - 1)
        & (pr[:, 1] >= 0.0)
        & (pr[:, 1] <= rm.height - 1)
    )

    covered = np.zeros(centers.shape[0], dtype=bool)
    outline = board_outline(board)
    pts = board_corners(board)
    for pose in poses:
        Ql = pose.transform(pts)
        if Ql[:, 2].min() <= 0.0:
            continue
        poly = pixels_from_camera_points(m, Ql[outline])
        covered |= Path(poly).contains_points(centers)
    return covered, overlap, centers, (cw, ch)


def coverage_fraction(history, rig: StereoRig, board: BoardSpec, grid: int = 32) -> float:
    """Fraction of the stereo-overlap cells touched by any board footprint.

    Empty history or an empty overlap region scores 0.  Monotone under
    appending to the history.
    """
    if not list(history):
        return 0.0
    covered, overlap, _, _ = _coverage_state(history, rig, board, grid)
    total = int(overlap.sum())
    if total == 0:
        return 0.0
    return float((covered & overlap).sum() / total)


def random_pose(
    constraints: RandomPoseConstraints,
    rig: StereoRig,
    board: BoardSpec,
    history,
    rng: np.random.Generator,
) -> Pose:
    """One placement from the plain random capture protocol.

    Per-axis rotations are uniform within the range and the board center
    lands uniformly in the stereo-overlap box; a candidate must keep all
    corners visible in both images and its plane tilted at least
    ``normal_min_angle`` away from both image planes.  Coverage of the
    overlap region is a property of the whole capture sequence, measured
    by :func:`coverage_fraction` — the sampler itself stays memoryless so
    the baseline is genuinely random placement, with ``history`` informing
    only the depth of the sampling box.
    Raises :class:`ConstraintUnsatisfiable` after ``max_attempts`` draws.
    """
    history = list(history)
    z_ref = _reference_depth_from_poses(history, rig, board)
    lo, hi = _center_box(rig, z_ref, constraints.depth_range, constraints.margin_px)
    bc = board_center(board)
    R_rel = rig.relative.rotation()

    for attempt in range(constraints.max_attempts):
        rvec = rng.uniform(-constraints.rotation_range, constraints.rotation_range, 3)
        R = rotation_from_axis_angle(rvec)

        normal = R[:, 2]
        if np.arccos(min(abs(float(normal[2])), 1.0)) < constraints.normal_min_angle:
            continue
        nr = R_rel @ normal
        if np.arccos(min(abs(float(nr[2])), 1.0)) < constraints.normal_min_angle:
            continue

        center = rng.uniform(lo, hi)
        pose = Pose(rvec, center - R @ bc)
        if is_visible(pose, rig, board, constraints.margin_px):
            return pose
    raise ConstraintUnsatisfiable(
        f"no placement met the constraints in {constraints.max_attempts} attempts"
    )


def _reference_depth_from_poses(poses, rig: StereoRig, board: BoardSpec) -> float:
    bc = board_center(board)
    depths = [float(p.transform(bc)[2]) for p in poses]
    depths = [z for z in depths if z > 0.0]
    if depths:
        return float(np.mean(depths))
    return convergence_depth(rig)
