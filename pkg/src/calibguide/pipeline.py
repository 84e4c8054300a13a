"""End-to-end extrinsic calibration from detected corners.

The chain is: per-view planar pose (homography decomposition plus dense
refinement), relative-pose initialization from any view pair, then joint
bundle adjustment over the relative pose and every view pose with the
per-view blocks eliminated by a Schur complement.  Error metrics against a
reference rig and against the board geometry live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceReport, relative_covariance
from .errors import (
    DegenerateConfiguration,
    DivergedOptimization,
    InsufficientPoints,
    InsufficientViews,
    InvalidConfig,
    SingularInformation,
    UndefinedMetric,
)
from .errors import BehindCamera
from .geometry import (
    BoardSpec,
    CameraModel,
    Pose,
    StereoRig,
    axis_angle_from_quaternion,
    board_center,
    board_corners,
    perturb_pose,
    pixels_from_camera_points,
    quaternion_from_rotation,
    rotation_from_axis_angle,
    triangulate,
    undistort_normalized,
)
from .jacobians import (
    ViewPair,
    _pose_jacobian,
    _residual_point_jacobian,
    assemble_info,
    jac_cross,
    pose_blocks,
    residuals,
)


@dataclass(frozen=True)
class RobustKernel:
    """Per-corner loss on the residual distance."""

    name: str
    delta: float = 0.0

    def weights(self, norms: np.ndarray) -> np.ndarray:
        if self.name == "identity":
            return np.ones_like(norms)
        safe = np.maximum(norms, 1e-300)
        return np.where(norms <= self.delta, 1.0, self.delta / safe)

    def cost(self, norms: np.ndarray) -> float:
        if self.name == "identity":
            return float(0.5 * np.sum(norms * norms))
        quad = 0.5 * norms * norms
        lin = self.delta * (norms - 0.5 * self.delta)
        return float(np.sum(np.where(norms <= self.delta, quad, lin)))


def parse_kernel(spec) -> RobustKernel:
    """Accepts "identity" or "huber:<delta px>"."""
    if isinstance(spec, RobustKernel):
        return spec
    if spec == "identity":
        return RobustKernel("identity")
    if isinstance(spec, str) and spec.startswith("huber:"):
        try:
            delta = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise InvalidConfig(f"bad kernel spec {spec!r}") from exc
        if delta <= 0.0:
            raise InvalidConfig(f"huber delta must be positive, got {delta}")
        return RobustKernel("huber", delta)
    raise InvalidConfig(f"unknown kernel {spec!r}")


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    """Corner detections for a rig whose relative transform is unknown."""

    left: CameraModel
    right: CameraModel
    board: BoardSpec
    views: tuple[ViewPair, ...]

    def __post_init__(self) -> None:
        views = tuple(self.views)
        if not views:
            raise InvalidConfig("dataset needs at least one view")
        for i, view in enumerate(views):
            if view.board != self.board:
                raise InvalidConfig(f"view {i} was detected on a different board")
        object.__setattr__(self, "views", views)

    def to_dict(self) -> dict:
        views = []
        for view in self.views:
            d = {
                "left_pixels": view.left_pixels.tolist(),
                "right_pixels": view.right_pixels.tolist(),
            }
            if view.left_abs is not None:
                d["left_abs"] = view.left_abs.to_dict()
            views.append(d)
        return {
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "board": self.board.to_dict(),
            "views": views,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationDataset:
        board = BoardSpec.from_dict(d["board"])
        views = tuple(
            ViewPair(
                left_pixels=np.asarray(v["left_pixels"]),
                right_pixels=np.asarray(v["right_pixels"]),
                board=board,
                left_abs=Pose.from_dict(v["left_abs"]) if "left_abs" in v else None,
            )
            for v in d["views"]
        )
        return cls(
            left=CameraModel.from_dict(d["left"]),
            right=CameraModel.from_dict(d["right"]),
            board=board,
            views=views,
        )


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Estimated rig extrinsics plus fit diagnostics."""

    relative: Pose
    per_view_left_abs: tuple[Pose, ...]
    rms_reproj: float
    covariance: CovarianceReport | None
    iterations: int = 0
    converged: bool = True

    @classmethod
    def initial(cls, relative: Pose, per_view_left_abs) -> CalibrationResult:
        return cls(
            relative=relative,
            per_view_left_abs=tuple(per_view_left_abs),
            rms_reproj=float("nan"),
            covariance=None,
            converged=False,
        )

    def to_dict(self) -> dict:
        return {
            "relative": self.relative.to_dict(),
            "per_view_left_abs": [p.to_dict() for p in self.per_view_left_abs],
            "rms_reproj": self.rms_reproj,
            "covariance": None if self.covariance is None else self.covariance.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _collinear(xy: np.ndarray) -> bool:
    centered = xy - xy.mean(axis=0)
    w = np.linalg.eigvalsh(centered.T @ centered)
    return bool(w[0] <= 1e-9 * max(w[-1], 1.0))


def _normalize_2d(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform taking the points to mean 0, RMS distance sqrt(2)."""
    mean = pts.mean(axis=0)
    d = np.linalg.norm(pts - mean, axis=1).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])
    h = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    return (h @ T.T)[:, :2], T


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT with normalization on both sides; maps src (board XY) to dst."""
    sn, Ts = _normalize_2d(src)
    dn, Td = _normalize_2d(dst)
    n = src.shape[0]
    A = np.zeros((2 * n, 9))
    X, Y = sn[:, 0], sn[:, 1]
    x, y = dn[:, 0], dn[:, 1]
    A[0::2, 0] = -X
    A[0::2, 1] = -Y
    A[0::2, 2] = -1.0
    A[0::2, 6] = x * X
    A[0::2, 7] = x * Y
    A[0::2, 8] = x
    A[1::2, 3] = -X
    A[1::2, 4] = -Y
    A[1::2, 5] = -1.0
    A[1::2, 6] = y * X
    A[1::2, 7] = y * Y
    A[1::2, 8] = y
    _, _, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    return np.linalg.inv(Td) @ Hn @ Ts


def _refine_pose(
    model: CameraModel,
    obj: np.ndarray,
    pixels: np.ndarray,
    pose: Pose,
    max_iterations: int = 50,
) -> Pose:
    """Dense LM over one pose, minimizing monocular reprojection."""

    def cost_of(p: Pose) -> float:
        Q = p.transform(obj)
        if Q[:, 2].min() <= 0.0:
            return np.inf
        r = pixels - pixels_from_camera_points(model, Q)
        return float(0.5 * np.sum(r * r))

    lam = 1e-3
    cost = cost_of(pose)
    for _ in range(max_iterations):
        Q = pose.transform(obj)
        r = (pixels - pixels_from_camera_points(model, Q)).reshape(-1)
        J = _pose_jacobian(_residual_point_jacobian(model, Q), Q)
        H = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(10):
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-12 * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = perturb_pose(pose, delta)
            c = cost_of(cand)
            if c < cost:
                rel_drop = (cost - c) / max(cost, 1e-300)
                pose, cost = cand, c
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop < 1e-12 or np.max(np.abs(delta)) < 1e-14:
                    return pose
                break
            lam *= 10.0
        if not accepted:
            return pose
    return pose


def _refine_pose_stereo(
    board: BoardSpec,
    view: ViewPair,
    rig: StereoRig,
    pose: Pose,
    max_iterations: int = 50,
    rel_tol: float = 1e-12,
) -> tuple[Pose, float]:
    """Dense LM over one view pose with the relative transform held fixed.

    Two cameras pin down board depth and tilt far better than one, so this
    lands a freshly added view near its joint optimum before bundle
    adjustment instead of leaving the refinement to crawl there.  Returns
    the pose together with its stereo cost so callers can compare branches;
    callers that only rank branches pass a loose ``rel_tol`` to stop as
    soon as the cost plateaus instead of polishing the last digits.
    """

    pts = board_corners(board)
    R_rel = rig.relative.rotation()
    t_rel = rig.relative.tvec

    def evaluate(p: Pose):
        Ql = p.transform(pts)
        Qr = Ql @ R_rel.T + t_rel
        if min(float(Ql[:, 2].min()), float(Qr[:, 2].min())) <= 0.0:
            return np.inf, None, None, None, None
        rl = (view.left_pixels - pixels_from_camera_points(rig.left, Ql)).reshape(-1)
        rr = (view.right_pixels - pixels_from_camera_points(rig.right, Qr)).reshape(-1)
        return float(0.5 * (rl @ rl + rr @ rr)), rl, rr, Ql, Qr

    cost, rl, rr, Ql, Qr = evaluate(pose)
    if not np.isfinite(cost):
        return pose, cost
    lam = 1e-3
    for _ in range(max_iterations):
        V = _pose_jacobian(_residual_point_jacobian(rig.left, Ql), Ql)
        W = _pose_jacobian(_residual_point_jacobian(rig.right, Qr) @ R_rel, Ql)
        H = V.T @ V + W.T @ W
        g = V.T @ rl + W.T @ rr
        accepted = False
        for _ in range(10):
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-12 * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = perturb_pose(pose, delta)
            c, c_rl, c_rr, c_Ql, c_Qr = evaluate(cand)
            if c < cost:
                rel_drop = (cost - c) / max(cost, 1e-300)
                pose, cost, rl, rr, Ql, Qr = cand, c, c_rl, c_rr, c_Ql, c_Qr
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop < rel_tol or np.max(np.abs(delta)) < 1e-14:
                    return pose, cost
                break
            lam *= 10.0
        if not accepted:
            return pose, cost
    return pose, cost


def _tilt_flipped(board: BoardSpec, pose: Pose) -> Pose | None:
    """The mirror interpretation of a nearly planar-ambiguous board pose.

    A small distant board projects almost identically when its plane is
    reflected about the line of sight, so a monocular solve picks one of
    two tilt branches at random.  This builds the other branch: the normal
    is mirrored about the direction to the board center while the center
    itself stays put.  Returns None when the board is face-on and the two
    branches coincide.
    """
    center_obj = board_center(board)
    center_cam = pose.transform(center_obj[None, :])[0]
    depth = float(np.linalg.norm(center_cam))
    if depth < 1e-9:
        return None
    sight = center_cam / depth
    R = pose.rotation()
    normal = R[:, 2]
    axis = np.cross(normal, sight)
    s = float(np.linalg.norm(axis))
    if s < 1e-6:
        return None
    alpha = float(np.arctan2(s, float(normal @ sight)))
    M = rotation_from_axis_angle(axis / s * (2.0 * alpha))
    R2 = M @ R
    t2 = center_cam - R2 @ center_obj
    return Pose.from_matrix(R2, t2)


def _stereo_pose(
    board: BoardSpec,
    view: ViewPair,
    rig: StereoRig,
    pose0: Pose,
    max_iterations: int = 50,
    rel_tol: float = 1e-12,
) -> tuple[Pose, float]:
    """Stereo-refine a pose, probing both tilt branches, keep the better fit."""
    best, cost = _refine_pose_stereo(board, view, rig, pose0, max_iterations, rel_tol)
    alt = _tilt_flipped(board, best)
    if alt is not None:
        pose2, cost2 = _refine_pose_stereo(board, view, rig, alt, max_iterations, rel_tol)
        if cost2 < cost:
            best, cost = pose2, cost2
    return best, cost


def _normalized_board_homography(board: BoardSpec, pixels, model: CameraModel):
    """Board-plane-to-normalized-image homography plus the undistorted points.

    The sign is fixed so mapped board points come out with positive third
    coordinate, i.e. in front of the camera.
    """
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    obj = board_corners(board)[: pix.shape[0]]
    xy = np.stack(
        [(pix[:, 0] - model.u0) / model.fu, (pix[:, 1] - model.v0) / model.fv], axis=-1
    )
    und = undistort_normalized(model, xy)
    H = _homography(obj[:, :2], und)
    w = np.column_stack([obj[:, :2], np.ones(len(obj))]) @ H.T
    if float(np.median(w[:, 2])) < 0.0:
        H = -H
    return H, und


def solve_pnp(board: BoardSpec, pixels, model: CameraModel) -> Pose:
    """Board-to-camera pose from one camera's corner detections.

    ``pixels`` pair up with the first ``len(pixels)`` board corners; the
    full grid is the normal case.  Needs at least four correspondences that
    are not collinear.  The homography route assumes the board is planar
    (it is, by construction) and the result is polished by dense LM, so the
    reprojection RMS lands at the noise floor.
    """
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    k = pix.shape[0]
    if k < 4:
        raise InsufficientPoints(f"planar pose needs >= 4 correspondences, got {k}")
    if k > board.corner_count:
        raise InvalidConfig(f"{k} pixels for a board with {board.corner_count} corners")
    obj = board_corners(board)[:k]
    if _collinear(obj[:, :2]):
        raise DegenerateConfiguration("correspondences are collinear")

    H, _ = _normalized_board_homography(board, pix, model)
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    r1, r2, t = lam * h1, lam * h2, lam * h3
    if t[2] < 0.0:
        r1, r2, t = -r1, -r2, -t
    M = np.stack([r1, r2, np.cross(r1, r2)], axis=1)
    U_, _, Vt = np.linalg.svd(M)
    R = U_ @ np.diag([1.0, 1.0, float(np.linalg.det(U_ @ Vt))]) @ Vt
    return _refine_pose(model, obj, pix, Pose.from_matrix(R, t))


def init_relative(left_abs: Pose, right_abs: Pose) -> Pose:
    """Left-to-right transform implied by one view's two absolute poses."""
    Rl, Rr = left_abs.rotation(), right_abs.rotation()
    R = Rr @ Rl.T
    return Pose.from_matrix(R, right_abs.tvec - R @ left_abs.tvec)


def _mean_pose(poses) -> Pose:
    """Quaternion-mean rotation (sign-aligned, renormalized) and mean translation."""
    quats = np.array([quaternion_from_rotation(p.rotation()) for p in poses])
    signs = np.where(quats @ quats[0] < 0.0, -1.0, 1.0)
    q = (quats * signs[:, None]).mean(axis=0)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise DegenerateConfiguration("rotations average to zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    t = np.mean([p.tvec for p in poses], axis=0)
    return Pose(axis_angle_from_quaternion(q), t)


def relative_from_monocular(pose_pairs) -> Pose:
    """Average the per-view relative transforms instead of jointly refining.

    Rotations are averaged as quaternions (sign-aligned to the first pair,
    arithmetic mean, renormalized); translations as the plain mean.  This is
    the weaker alternative to bundle adjustment and exists as the
    benchmarking baseline.
    """
    pairs = list(pose_pairs)
    if not pairs:
        raise InsufficientViews("need at least one pose pair to average")
    return _mean_pose([init_relative(l, r) for l, r in pairs])


def _pnp_branches(board: BoardSpec, pixels, model: CameraModel) -> list[Pose]:
    """Both tilt interpretations of a monocular planar pose, each refined.

    A small distant board gives the monocular solve no way to tell the two
    mirror tilts apart, so downstream consumers must treat them as equally
    plausible and disambiguate with more data.
    """
    first = solve_pnp(board, pixels, model)
    flipped = _tilt_flipped(board, first)
    if flipped is None:
        return [first]
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    obj = board_corners(board)[: pix.shape[0]]
    second = _refine_pose(model, obj, pix, flipped)
    if _rotation_gap(first, second) < 1e-6:
        return [first]
    return [first, second]


def _rotation_gap(a: Pose, b: Pose) -> float:
    c = (float(np.trace(a.rotation() @ b.rotation().T)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _mono_cost_per_residual(board: BoardSpec, pixels, model: CameraModel, poses) -> float:
    """Best monocular fit quality over candidate poses, cost per scalar residual."""
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    obj = board_corners(board)[: pix.shape[0]]
    best = np.inf
    for pose in poses:
        Q = pose.transform(obj)
        if Q[:, 2].min() <= 0.0:
            continue
        r = pix - pixels_from_camera_points(model, Q)
        best = min(best, float(0.5 * np.sum(r * r)) / r.size)
    return best


def _new_view_pose(
    board: BoardSpec, view: ViewPair, rig: StereoRig
) -> tuple[Pose, float]:
    """Initial pose for a view joining an existing relative estimate.

    The left camera's tilt branches are the natural seeds, but a strongly
    oblique board can strand the monocular solve with corners behind the
    camera, so the right camera's branches — carried into the left frame
    through the relative estimate — serve as backups.  Every seed is
    stereo-polished and the lowest finite cost wins; ties keep the earlier
    (left-camera) seed.

    Besides the pose, returns the strain ratio: the accepted stereo cost
    per residual over the best purely monocular cost per residual.  Near
    one, the view is consistent with the relative estimate; far above one,
    the view fits each camera alone but not the pair as modeled — the
    signature of a relative transform stuck in a mirror basin, whatever
    the (unknown) pixel noise level happens to be.
    """
    def strain_of(stereo_cost, mono_per_res):
        stereo_per_res = stereo_cost / (4.0 * view.corner_count)
        if stereo_per_res <= 1e-10 or not np.isfinite(mono_per_res) or mono_per_res <= 0.0:
            return 1.0
        return stereo_per_res / mono_per_res

    # fast path: one monocular solve, one stereo polish; only a pose that
    # comes back strained pays for the mirror probe, and only one still
    # strained after that pays for the full seed race
    first = solve_pnp(board, view.left_pixels, rig.left)
    best, best_cost = _refine_pose_stereo(board, view, rig, first, 30, 1e-6)
    mono = _mono_cost_per_residual(board, view.left_pixels, rig.left, [first])
    strain = strain_of(best_cost, mono)
    if np.isfinite(best_cost) and strain <= 4.0:
        return best, strain
    alt = _tilt_flipped(board, best if np.isfinite(best_cost) else first)
    if alt is not None:
        pose2, cost2 = _refine_pose_stereo(board, view, rig, alt, 30, 1e-6)
        if cost2 < best_cost:
            best, best_cost = pose2, cost2
            strain = strain_of(best_cost, mono)
            if strain <= 4.0:
                return best, strain

    # strained or infeasible: widen the race to every branch of both
    # cameras, right-camera branches carried into the left frame through
    # the relative estimate
    left_branches = _pnp_branches(board, view.left_pixels, rig.left)
    right_branches = _pnp_branches(board, view.right_pixels, rig.right)
    rel_inv = rig.relative.inverse()
    for seed in left_branches + [rel_inv.compose(p) for p in right_branches]:
        pose, cost = _stereo_pose(board, view, rig, seed, 30, 1e-6)
        if cost < best_cost:
            best, best_cost = pose, cost
    if best is None or not np.isfinite(best_cost):
        raise BehindCamera("no initialization keeps the new view in front of both cameras")
    mono = min(
        mono,
        _mono_cost_per_residual(board, view.left_pixels, rig.left, left_branches),
        _mono_cost_per_residual(board, view.right_pixels, rig.right, right_branches),
    )
    return best, strain_of(best_cost, mono)


# Strain ratios this far above one mark a view that fits each camera alone
# but not the modeled pair; healthy growth steps measure ~1-2 even at heavy
# noise, a mirror-basin relative measures 50+.
_STRAIN_LIMIT = 25.0


def _relative_audit(
    dataset: "CalibrationDataset", kernel, current: "CalibrationResult"
) -> "CalibrationResult":
    """Challenge the relative transform with every monocular branch pairing.

    A two-view bootstrap can land in the mirror basin of the relative
    transform and later views polished against it will reinforce rather
    than contradict it, so once a freshly added view reports strain the
    relative itself goes on trial: every distinct per-view branch pairing
    proposes its implied relative, the few most promising proposals are
    refined jointly (all view poses re-polished, then a capped joint
    refinement), and the lowest full-dataset cost wins.  The incumbent
    keeps the title on anything short of a strict win.
    """
    kern = parse_kernel(kernel)
    branch_sets: list[list[Pose]] = []
    proposals: list[Pose] = []
    for v in dataset.views:
        lb = _pnp_branches(dataset.board, v.left_pixels, dataset.left)
        rb = _pnp_branches(dataset.board, v.right_pixels, dataset.right)
        branch_sets.append(lb)
        proposals.extend(init_relative(l, r) for l in lb for r in rb)
    distinct: list[Pose] = []
    for c in proposals:
        if any(
            _rotation_gap(c, d) < 0.10 and translation_error(c.tvec, d.tvec) < 20.0
            for d in distinct
        ):
            continue
        distinct.append(c)

    # cheap screen: how well do a few spread-out views fit each proposal
    # with the relative held fixed?  The screen only has to rank basins,
    # so polish iterations are capped hard.
    k = len(dataset.views)
    subset = range(k) if k <= 4 else sorted({0, k // 3, (2 * k) // 3, k - 1})
    screened = []
    for c in distinct:
        rig0 = StereoRig(dataset.left, dataset.right, c)
        score = 0.0
        for j in subset:
            score += min(
                _stereo_pose(dataset.board, dataset.views[j], rig0, b, 8, 1e-4)[1]
                for b in branch_sets[j]
            )
        screened.append((score, c))
    screened.sort(key=lambda t: t[0])

    _, _, best_cost = _evaluate(dataset, current.relative, current.per_view_left_abs, kern)
    best = current
    for _, c in screened[:4]:
        if (
            _rotation_gap(c, current.relative) < 0.10
            and translation_error(c.tvec, current.relative.tvec) < 20.0
        ):
            # the incumbent's own basin; its converged fit already sets the bar
            continue
        rig0 = StereoRig(dataset.left, dataset.right, c)
        try:
            poses = [
                min(
                    (_stereo_pose(dataset.board, v, rig0, b, 12, 1e-5) for b in bs),
                    key=lambda t: t[1],
                )[0]
                for v, bs in zip(dataset.views, branch_sets)
            ]
            challenger = bundle_adjust(
                dataset,
                CalibrationResult.initial(c, poses),
                kernel=kernel,
                max_iterations=40,
            )
        except (BehindCamera, DivergedOptimization):
            continue
        _, _, cost = _evaluate(
            dataset, challenger.relative, challenger.per_view_left_abs, kern
        )
        if cost < best_cost:
            best, best_cost = challenger, cost
    return best


def _bootstrap_pair(dataset: "CalibrationDataset", kernel) -> "CalibrationResult":
    """Joint two-view solve, searched over all monocular tilt branches.

    Every pairing of per-view relative-pose candidates (left branch x right
    branch, both views) is scored by how well both views fit with the
    relative transform held fixed; the few best-scoring distinct candidates
    are then refined jointly to convergence and the lowest-cost fit wins.
    The search is what makes the first calibration land in the right basin:
    a single bad branch pick would otherwise drag the joint refinement into
    a mirror solution that later views cannot undo.
    """
    kern = parse_kernel(kernel)
    v0, v1 = dataset.views[0], dataset.views[1]
    left0 = _pnp_branches(dataset.board, v0.left_pixels, dataset.left)
    right0 = _pnp_branches(dataset.board, v0.right_pixels, dataset.right)
    left1 = _pnp_branches(dataset.board, v1.left_pixels, dataset.left)
    right1 = _pnp_branches(dataset.board, v1.right_pixels, dataset.right)
    cands0 = [(init_relative(l, r), l) for l in left0 for r in right0]
    cands1 = [(init_relative(l, r), l) for l in left1 for r in right1]

    # scoring only has to separate branches, which differ by orders of
    # magnitude in achievable cost, so near-duplicate pairings are folded
    # first and the per-pairing refinements run with a tight iteration cap
    # and a loose plateau tolerance
    pairings = []
    for rel_a, pose_a in cands0:
        for rel_b, pose_b in cands1:
            rel0 = _mean_pose([rel_a, rel_b])
            if any(
                _rotation_gap(rel0, seen) < 0.05
                and float(np.linalg.norm(rel0.tvec - seen.tvec)) < 10.0
                for seen, _, _ in pairings
            ):
                continue
            pairings.append((rel0, pose_a, pose_b))
    scored = []
    for rel0, pose_a, pose_b in pairings:
        rig0 = StereoRig(dataset.left, dataset.right, rel0)
        p0, c0 = _stereo_pose(dataset.board, v0, rig0, pose_a, 8, 1e-4)
        p1, c1 = _stereo_pose(dataset.board, v1, rig0, pose_b, 8, 1e-4)
        scored.append((c0 + c1, rel0, p0, p1))
    scored.sort(key=lambda item: item[0])

    best = None
    best_cost = np.inf
    tried: list[Pose] = []
    for score, rel0, p0, p1 in scored:
        if len(tried) == 3 or not np.isfinite(score):
            break
        if any(
            _rotation_gap(rel0, seen) < 1e-6
            and float(np.linalg.norm(rel0.tvec - seen.tvec)) < 1e-6
            for seen in tried
        ):
            continue
        tried.append(rel0)
        rig0 = StereoRig(dataset.left, dataset.right, rel0)
        p0, _ = _refine_pose_stereo(dataset.board, v0, rig0, p0, 20, 1e-6)
        p1, _ = _refine_pose_stereo(dataset.board, v1, rig0, p1, 20, 1e-6)
        try:
            result = bundle_adjust(
                dataset,
                CalibrationResult.initial(rel0, [p0, p1]),
                kernel=kernel,
                max_iterations=40,
            )
        except (DivergedOptimization, BehindCamera):
            continue
        _, _, cost = _evaluate(
            dataset, result.relative, result.per_view_left_abs, kern
        )
        if cost < best_cost:
            best, best_cost = result, cost
    if best is None:
        raise DivergedOptimization("no tilt-branch pairing yields a convergent two-view fit")
    return best


def _unweighted_rms(norms: np.ndarray) -> float:
    return float(np.sqrt(np.mean(norms * norms)))


def _evaluate(dataset: CalibrationDataset, rel: Pose, poses, kernel: RobustKernel):
    """Residual norms per view and the robust cost; inf when a corner dips behind."""
    rig = StereoRig(dataset.left, dataset.right, rel)
    all_norms = []
    per_view = []
    for view, pose in zip(dataset.views, poses):
        try:
            res = residuals(view.with_pose(pose), rig)
        except BehindCamera:
            return None, None, np.inf
        per_view.append(res)
        all_norms.append(res.norms())
    norms = np.concatenate(all_norms)
    return per_view, norms, kernel.cost(norms)


def _pose_jacobian_batch(M: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Per-view stack of pose Jacobians: (V, n, 2, 3) x (V, n, 3) -> (V, 2n, 6).

    Same fold as :func:`calibguide.jacobians._pose_jacobian`, broadcast over
    a leading view axis.
    """
    qx, qy, qz = Q[..., 0, None], Q[..., 1, None], Q[..., 2, None]
    J = np.empty(M.shape[:3] + (6,))
    J[..., 0] = qy * M[..., 2] - qz * M[..., 1]
    J[..., 1] = qz * M[..., 0] - qx * M[..., 2]
    J[..., 2] = qx * M[..., 1] - qy * M[..., 0]
    J[..., 3:] = M
    return J.reshape(M.shape[0], -1, 6)


def _rodrigues_batch(rvecs: np.ndarray) -> np.ndarray:
    """Rotation matrices for a stack of axis-angle vectors, (V, 3) -> (V, 3, 3)."""
    theta = np.linalg.norm(rvecs, axis=1)
    axes = np.where(
        theta[:, None] > 1e-12, rvecs / np.maximum(theta, 1e-300)[:, None], 0.0
    )
    K = np.zeros((rvecs.shape[0], 3, 3))
    K[:, 0, 1] = -axes[:, 2]
    K[:, 0, 2] = axes[:, 1]
    K[:, 1, 0] = axes[:, 2]
    K[:, 1, 2] = -axes[:, 0]
    K[:, 2, 0] = -axes[:, 1]
    K[:, 2, 1] = axes[:, 0]
    s = np.sin(theta)[:, None, None]
    c = (1.0 - np.cos(theta))[:, None, None]
    return np.eye(3) + s * K + c * (K @ K)


def bundle_adjust(
    dataset: CalibrationDataset,
    init: CalibrationResult,
    kernel="identity",
    max_iterations: int = 100,
    cost_tol: float = 1e-10,
) -> CalibrationResult:
    """Jointly refine the relative pose and every view pose.

    Levenberg-Marquardt on the full stereo residual with the view-pose
    blocks Schur-eliminated each step, so the linear solve never exceeds
    6x6 regardless of view count.  Robust kernels enter as iteratively
    reweighted least squares on the per-corner residual distances; with the
    identity kernel the raw cost itself is guaranteed non-increasing.

    Raises :class:`DivergedOptimization` when ten successive damping
    increases all fail to reduce the cost away from a plateau.
    """
    if len(dataset.views) < 2:
        raise InsufficientViews(f"joint refinement needs >= 2 views, got {len(dataset.views)}")
    if len(init.per_view_left_abs) != len(dataset.views):
        raise InvalidConfig("init must carry one pose per view")
    kern = parse_kernel(kernel)

    # all views share one board, so the whole problem batches into stacks:
    # poses live as rotation-matrix/translation arrays until the very end
    n = dataset.board.corner_count
    n_views = len(dataset.views)
    pts = board_corners(dataset.board)
    lp = np.stack([v.left_pixels for v in dataset.views])
    rp = np.stack([v.right_pixels for v in dataset.views])
    left, right = dataset.left, dataset.right

    Rs = np.stack([p.rotation() for p in init.per_view_left_abs])
    ts = np.stack([p.tvec for p in init.per_view_left_abs])
    R_rel = init.relative.rotation()
    t_rel = init.relative.tvec

    def evaluate(R_rel_, t_rel_, Rs_, ts_):
        """Project everything, or None when a corner dips behind a camera."""
        Ql = np.einsum("vij,nj->vni", Rs_, pts) + ts_[:, None, :]
        Qr = Ql @ R_rel_.T + t_rel_
        if min(float(Ql[..., 2].min()), float(Qr[..., 2].min())) <= 0.0:
            return None
        pl = pixels_from_camera_points(left, Ql.reshape(-1, 3)).reshape(n_views, n, 2)
        pr = pixels_from_camera_points(right, Qr.reshape(-1, 3)).reshape(n_views, n, 2)
        res_l = lp - pl
        res_r = rp - pr
        norms = np.concatenate(
            [np.linalg.norm(res_l, axis=2), np.linalg.norm(res_r, axis=2)], axis=1
        ).reshape(-1)
        return (
            Ql,
            Qr,
            res_l.reshape(n_views, 2 * n),
            res_r.reshape(n_views, 2 * n),
            norms,
            kern.cost(norms),
        )

    state = evaluate(R_rel, t_rel, Rs, ts)
    if state is None:
        raise BehindCamera("initial estimate puts the board behind a camera")
    Ql, Qr, rl, rr, norms, cost = state

    lam = 1e-3
    nu = 2.0
    iterations = 0
    # below this the residual is numerical dust (RMS < 1e-10 px); treat as solved
    floor = 1e-20 * (2.0 * n * n_views)
    converged = cost <= floor
    eye6 = np.eye(6)
    block_idx = np.arange(6)
    while not converged and iterations < max_iterations:
        iterations += 1
        w = kern.weights(norms).reshape(n_views, 2 * n)
        wl = np.repeat(w[:, :n], 2, axis=1)
        wr = np.repeat(w[:, n:], 2, axis=1)

        Ml = _residual_point_jacobian(left, Ql.reshape(-1, 3)).reshape(n_views, n, 2, 3)
        Mr = _residual_point_jacobian(right, Qr.reshape(-1, 3)).reshape(n_views, n, 2, 3)
        U = _pose_jacobian_batch(Mr, Qr)
        Vb = _pose_jacobian_batch(Ml, Ql)
        Wb = _pose_jacobian_batch(np.einsum("vnij,jk->vnik", Mr, R_rel), Ql)
        Uw = U * wr[..., None]
        Vw = Vb * wl[..., None]
        Ww = Wb * wr[..., None]

        H_rel = np.einsum("vki,vkj->ij", U, Uw)
        g_rel = np.einsum("vki,vk->i", Uw, rr)
        H_pose = np.einsum("vki,vkj->vij", Vb, Vw) + np.einsum("vki,vkj->vij", Wb, Ww)
        H_cross = np.einsum("vki,vkj->vij", U, Ww)
        g_pose = np.einsum("vki,vk->vi", Vw, rl) + np.einsum("vki,vk->vi", Ww, rr)

        diag_rel = np.diag(np.diag(H_rel))
        diag_pose = np.zeros_like(H_pose)
        diag_pose[:, block_idx, block_idx] = H_pose[:, block_idx, block_idx]

        accepted = False
        best_attempt = np.inf
        for _ in range(10):
            try:
                Hp_d = H_pose + lam * diag_pose + 1e-12 * eye6
                X = np.linalg.solve(Hp_d, np.transpose(H_cross, (0, 2, 1)))
                y = np.linalg.solve(Hp_d, g_pose[..., None])[..., 0]
                S = (
                    H_rel
                    + lam * diag_rel
                    + 1e-12 * eye6
                    - np.einsum("vij,vjk->ik", H_cross, X)
                )
                rhs = -g_rel + np.einsum("vij,vj->i", H_cross, y)
                d_rel = np.linalg.solve(S, rhs)
            except np.linalg.LinAlgError:
                lam *= nu
                nu *= 2.0
                continue

            d_poses = -y - np.einsum("vij,j->vi", X, d_rel)
            dR = rotation_from_axis_angle(d_rel[:3])
            cand_R_rel = dR @ R_rel
            cand_t_rel = dR @ t_rel + d_rel[3:]
            dRs = _rodrigues_batch(d_poses[:, :3])
            cand_Rs = dRs @ Rs
            cand_ts = np.einsum("vij,vj->vi", dRs, ts) + d_poses[:, 3:]
            cand = evaluate(cand_R_rel, cand_t_rel, cand_Rs, cand_ts)
            cand_cost = np.inf if cand is None else cand[5]
            best_attempt = min(best_attempt, cand_cost)
            # gain ratio: actual reduction over the quadratic model's prediction
            predicted = 0.5 * float(lam * d_rel @ diag_rel @ d_rel - g_rel @ d_rel)
            predicted += 0.5 * float(
                lam * np.einsum("vi,vij,vj->", d_poses, diag_pose, d_poses)
                - np.einsum("vi,vi->", g_pose, d_poses)
            )
            if cand_cost < cost and predicted > 0.0:
                rho = (cost - cand_cost) / predicted
                rel_drop = (cost - cand_cost) / max(cost, 1e-300)
                step = max(float(np.max(np.abs(d_rel))), float(np.max(np.abs(d_poses))))
                R_rel, t_rel, Rs, ts = cand_R_rel, cand_t_rel, cand_Rs, cand_ts
                Ql, Qr, rl, rr, norms, cost = cand
                lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3), 1e-12)
                nu = 2.0
                accepted = True
                if rel_drop < cost_tol or step < 1e-14 or cost <= floor:
                    converged = True
                break
            lam *= nu
            nu *= 2.0
        if not accepted:
            if cost <= floor or best_attempt <= cost * (1.0 + 1e-12):
                converged = True
            else:
                raise DivergedOptimization(
                    f"no cost-reducing step after 10 damping increases at cost {cost:.6e}"
                )

    rel = Pose.from_matrix(R_rel, t_rel)
    poses = [Pose.from_matrix(R, t) for R, t in zip(Rs, ts)]
    rms = _unweighted_rms(norms)
    rig = StereoRig(dataset.left, dataset.right, rel)
    try:
        cov = relative_covariance(assemble_info([v.with_pose(p) for v, p in zip(dataset.views, poses)], rig))
    except SingularInformation:
        cov = None
    return CalibrationResult(
        relative=rel,
        per_view_left_abs=tuple(poses),
        rms_reproj=rms,
        covariance=cov,
        iterations=iterations,
        converged=converged,
    )


def calibrate(
    dataset: CalibrationDataset,
    kernel="identity",
    init: CalibrationResult | None = None,
) -> CalibrationResult:
    """PnP initialization for every view, averaged relative, then refinement.

    Passing ``init`` skips PnP for the views it covers, which keeps
    incremental recalibration cheap: only newly appended views are solved
    from scratch.  A warm start is a hint, not a contract: when carrying it
    forward strands the refinement (a board behind a camera, a dead
    plateau), the whole dataset is recalibrated from scratch instead of
    surfacing the failure.
    """
    if len(dataset.views) < 2:
        raise InsufficientViews(f"calibration needs >= 2 views, got {len(dataset.views)}")
    if init is not None and len(init.per_view_left_abs) > len(dataset.views):
        raise InvalidConfig("init has more poses than the dataset has views")
    if init is not None and len(init.per_view_left_abs) >= 2:
        try:
            return _calibrate_impl(dataset, kernel, init)
        except (BehindCamera, DivergedOptimization):
            pass
    return _calibrate_impl(dataset, kernel, None)


def _calibrate_impl(
    dataset: CalibrationDataset,
    kernel,
    init: CalibrationResult | None,
) -> CalibrationResult:
    if init is not None:
        result = init
        covered = len(init.per_view_left_abs)
    else:
        pair = CalibrationDataset(
            dataset.left, dataset.right, dataset.board, dataset.views[:2]
        )
        result = _bootstrap_pair(pair, kernel)
        covered = 2
    # vetted poses only stay trustworthy while the relative transform they
    # were checked against holds still; remember where this call started
    entry_rel = result.relative
    vetted = covered

    # grow one view at a time: each fresh pose is solved monocularly, then
    # polished against both cameras (probing the mirror-tilt branch, which a
    # lone camera cannot resolve for a small distant board) before the joint
    # refinement sees it
    for k in range(covered, len(dataset.views)):
        view = dataset.views[k]
        rig_now = StereoRig(dataset.left, dataset.right, result.relative)
        pose0, strain = _new_view_pose(dataset.board, view, rig_now)
        sub = CalibrationDataset(
            dataset.left, dataset.right, dataset.board, dataset.views[: k + 1]
        )
        result = bundle_adjust(
            sub,
            CalibrationResult.initial(
                result.relative, list(result.per_view_left_abs) + [pose0]
            ),
            kernel=kernel,
        )
        if strain > _STRAIN_LIMIT:
            audited = _relative_audit(sub, kernel, result)
            if audited is not result:
                # the relative moved basins; nothing vetted earlier survives
                result = audited
                entry_rel = result.relative
                vetted = 0
    if covered == len(dataset.views) and init is not None:
        result = bundle_adjust(dataset, init, kernel=kernel)

    # a view can still sit in the wrong tilt branch if the estimate it was
    # refined against was rough; probe each view's mirror branch under the
    # converged relative and refine again when any view prefers its mirror.
    # The current pose is already at the joint optimum, so its stereo cost
    # is read off directly and only the mirror probe needs an LM polish.
    # Views vetted by an earlier call keep their branch decision as long as
    # the relative transform barely moved, so the sweep covers them only
    # when it did (a branch choice depends on nothing else).
    probe_all = (
        _rotation_gap(entry_rel, result.relative) > 2e-3
        or float(np.linalg.norm(entry_rel.tvec - result.relative.tvec)) > 5.0
    )
    for _ in range(2):
        rig1 = StereoRig(dataset.left, dataset.right, result.relative)
        poses = list(result.per_view_left_abs)
        targets = range(len(poses)) if probe_all else range(vetted, len(poses))
        changed = False
        for i in targets:
            view = dataset.views[i]
            alt = _tilt_flipped(dataset.board, poses[i])
            if alt is None:
                continue
            try:
                res = residuals(view.with_pose(poses[i]), rig1)
            except BehindCamera:
                continue
            cur_cost = float(0.5 * (np.sum(res.left**2) + np.sum(res.right**2)))
            flipped, flip_cost = _refine_pose_stereo(
                dataset.board, view, rig1, alt, max_iterations=12, rel_tol=1e-5
            )
            if flip_cost < cur_cost * (1.0 - 1e-9):
                poses[i] = flipped
                changed = True
        if not changed:
            break
        result = bundle_adjust(
            dataset, CalibrationResult.initial(result.relative, poses), kernel=kernel
        )
        # a flip reshaped the joint fit; the second round re-checks everything
        probe_all = True
    return result


def rotation_error(ref: Pose, cal: Pose) -> float:
    """Geodesic angle between two rotations, degrees."""
    c = (float(np.trace(ref.rotation() @ cal.rotation().T)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def translation_error(ref, cal) -> float:
    """Symmetric relative translation difference, percent.

    ``200 * |ref - cal| / (|ref| + |cal|)``; equals 200 for opposite vectors
    and is undefined (raises) when both are zero.
    """
    rv = ref.tvec if isinstance(ref, Pose) else np.asarray(ref, dtype=np.float64).reshape(3)
    cv = cal.tvec if isinstance(cal, Pose) else np.asarray(cal, dtype=np.float64).reshape(3)
    denom = float(np.linalg.norm(rv) + np.linalg.norm(cv))
    if denom == 0.0:
        raise UndefinedMetric("translation error undefined for two zero vectors")
    return float(200.0 * np.linalg.norm(rv - cv) / denom)


def reprojection_error_stats(dataset: CalibrationDataset, result: CalibrationResult) -> tuple[float, float]:
    """(RMS, mean) of per-corner pixel distances under the estimated rig."""
    rig = StereoRig(dataset.left, dataset.right, result.relative)
    norms = np.concatenate(
        [
            residuals(view.with_pose(pose), rig).norms()
            for view, pose in zip(dataset.views, result.per_view_left_abs)
        ]
    )
    return _unweighted_rms(norms), float(norms.mean())


def triangulation_error_stats(dataset: CalibrationDataset, result: CalibrationResult) -> float:
    """Mean distance (mm) between triangulated corners and the board geometry.

    Each view's pixel pairs are triangulated through the estimated rig and
    compared against the known grid in the board frame.
    """
    rig = StereoRig(dataset.left, dataset.right, result.relative)
    ref = board_corners(dataset.board)
    errs = []
    for view, pose in zip(dataset.views, result.per_view_left_abs):
        world = triangulate(rig, pose, view.left_pixels, view.right_pixels)
        errs.append(np.linalg.norm(world - ref, axis=1))
    return float(np.concatenate(errs).mean())
