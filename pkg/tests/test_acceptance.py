"""End-to-end acceptance checks, one per headline guarantee of the package.

Each test prints a single ``[PASS]``/``[FAIL]`` verdict line (with output
capture momentarily disabled so the lines always reach the terminal) carrying
the measured numbers next to the allowed budget, then asserts.  Checks with a stated runtime
budget time themselves with a monotonic clock.  Everything here runs the
public surface only — library calls and the installed command-line tool —
with oracles built independently of the code under test (finite differences,
dense inverses, exhaustive enumeration, reference hand-computations).
"""

from __future__ import annotations

import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import make_poses

from calibguide.covariance import relative_covariance
from calibguide.geometry import (
    BoardSpec,
    CameraModel,
    Pose,
    StereoRig,
    board_center,
    board_corners,
    pixels_from_camera_points,
    rotation_from_axis_angle,
)
from calibguide.jacobians import assemble_info, pose_blocks
from calibguide.geometry import perturb_pose
from calibguide.pipeline import (
    CalibrationDataset,
    CalibrationResult,
    calibrate,
    relative_from_monocular,
    rotation_error,
    solve_pnp,
    translation_error,
    triangulation_error_stats,
)
from calibguide.planner import (
    RandomPoseConstraints,
    SearchConfig,
    is_visible,
    next_optimal_pose,
    random_pose,
)
from calibguide.simulate import (
    ExperimentConfig,
    benchtop_board,
    benchtop_config,
    benchtop_rig,
    compare_strategies,
    run_convergence,
    synthesize_view,
)


_CAPTURE = None


@pytest.fixture(autouse=True)
def _verdicts_reach_terminal(capfd):
    """Let verdict lines bypass output capture for the duration of a test."""
    global _CAPTURE
    _CAPTURE = capfd
    yield
    _CAPTURE = None


def _verdict(ok: bool, name: str, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name} — {detail}\n"
    if _CAPTURE is not None:
        with _CAPTURE.disabled():
            sys.stdout.write(line)
            sys.stdout.flush()
    else:
        sys.stdout.write(line)
        sys.stdout.flush()


def _wide_rig() -> StereoRig:
    cam = CameraModel(700.0, 700.0, 320.0, 240.0, -0.12, 0.03, 1e-4, -2e-4)
    return StereoRig(
        cam, cam, Pose(np.array([0.01, 0.18, 0.004]), np.array([-150.0, 2.0, 8.0]))
    )


class TestJacobianBlocks:
    def test_pose_block_jacobians_match_finite_differences(self):
        """Analytic residual Jacobian blocks vs central finite differences.

        100 random camera/pose/rig configurations; both 6-column blocks
        (right-camera residuals vs the relative pose, left-camera residuals
        vs the view pose) must match a central difference of the actual
        residual to a relative error below 1e-5.
        """
        t0 = time.monotonic()
        rng = np.random.default_rng(2024)
        board = BoardSpec(4, 3, 25.0)
        pts = board_corners(board)
        eps = 1e-6
        worst = 0.0
        configs = 0
        while configs < 100:
            fu, fv = rng.uniform(400.0, 1200.0, 2)
            u0, v0 = rng.uniform(250.0, 350.0), rng.uniform(200.0, 280.0)
            k1 = rng.uniform(-0.3, 0.3)
            k2 = rng.uniform(-0.15, 0.15)
            p1, p2 = rng.uniform(-0.01, 0.01, 2)
            cam_l = CameraModel(fu, fv, u0, v0, k1, k2, p1, p2)
            cam_r = CameraModel(fv, fu, v0 + 60.0, u0 - 40.0, k2, k1, p2, p1)
            relative = Pose(rng.uniform(-0.25, 0.25, 3), rng.uniform(-1, 1, 3) * (250.0, 40.0, 40.0))
            pose = Pose(
                rng.uniform(-0.5, 0.5, 3),
                np.array([rng.uniform(-80, 80), rng.uniform(-60, 60), rng.uniform(400, 800)]),
            )
            rig = StereoRig(cam_l, cam_r, relative)
            Ql = pose.transform(pts)
            Qr = Ql @ relative.rotation().T + relative.tvec
            if Ql[:, 2].min() <= 1.0 or Qr[:, 2].min() <= 1.0:
                continue
            configs += 1

            U, V = pose_blocks(board, pose, rig)
            obs_l = pixels_from_camera_points(cam_l, Ql)
            obs_r = pixels_from_camera_points(cam_r, Qr)

            def right_residual(rel: Pose) -> np.ndarray:
                Q = pose.transform(pts) @ rel.rotation().T + rel.tvec
                return (obs_r - pixels_from_camera_points(cam_r, Q)).reshape(-1)

            def left_residual(p: Pose) -> np.ndarray:
                return (obs_l - pixels_from_camera_points(cam_l, p.transform(pts))).reshape(-1)

            fd_U = np.empty_like(U)
            fd_V = np.empty_like(V)
            for j in range(6):
                d = np.zeros(6)
                d[j] = eps
                fd_U[:, j] = (
                    right_residual(perturb_pose(relative, d))
                    - right_residual(perturb_pose(relative, -d))
                ) / (2 * eps)
                fd_V[:, j] = (
                    left_residual(perturb_pose(pose, d))
                    - left_residual(perturb_pose(pose, -d))
                ) / (2 * eps)
            for analytic, fd in ((U, fd_U), (V, fd_V)):
                scale = max(float(np.abs(fd).max()), 1e-12)
                worst = max(worst, float(np.abs(analytic - fd).max()) / scale)
        elapsed = time.monotonic() - t0
        ok = worst < 1e-5 and elapsed < 10.0
        _verdict(
            ok,
            "jacobian-finite-difference",
            f"max rel err {worst:.3e} (limit 1e-5) over 100 configs in {elapsed:.1f}s (budget 10s)",
        )
        assert worst < 1e-5
        assert elapsed < 10.0


class TestCovarianceReduction:
    def test_relative_covariance_matches_dense_inverse(self):
        """Block-eliminated covariance vs brute-force dense inversion.

        On small instances the full information matrix fits in memory, so
        the top-left 6x6 of its plain inverse is an exact oracle for the
        reduced computation; agreement must be entrywise below 1e-8.
        """
        t0 = time.monotonic()
        rig = _wide_rig()
        small = BoardSpec(3, 3, 60.0)

        def posed(rvec, center) -> Pose:
            rv = np.asarray(rvec, dtype=np.float64)
            R = rotation_from_axis_angle(rv)
            return Pose(rv, np.asarray(center, dtype=np.float64) - R @ board_center(small))

        a = posed([0.15, 0.30, 0.02], [0.0, -10.0, 430.0])
        b = posed([-0.25, 0.18, -0.05], [35.0, 20.0, 500.0])
        c = posed([0.05, -0.30, 0.10], [-30.0, 5.0, 470.0])
        rng = np.random.default_rng(5)

        def view_at(pose: Pose):
            return synthesize_view(rig, small, pose, 0.0, rng).with_pose(pose)

        worst = 0.0
        for poses in ((a, b), (a, b, c), (b, c)):
            views = [view_at(p) for p in poses]
            info = assemble_info(views, rig)
            sigma = relative_covariance(info).sigma
            dense = np.linalg.inv(info.dense())[:6, :6]
            worst = max(worst, float(np.max(np.abs(sigma - dense) / np.abs(dense))))
        elapsed = time.monotonic() - t0
        ok = worst < 1e-8 and elapsed < 5.0
        _verdict(
            ok,
            "covariance-dense-equivalence",
            f"max entrywise rel err {worst:.3e} (limit 1e-8) in {elapsed:.1f}s (budget 5s)",
        )
        assert worst < 1e-8
        assert elapsed < 5.0


class TestPlannerOptimality:
    def test_grid_search_returns_exhaustive_argmin(self):
        """Grid-mode pose search vs brute-force enumeration of the lattice.

        The 5x5x5 translation lattice at a fixed rotation is scored by an
        independent oracle (information assembly + covariance trace per
        candidate); the search must return exactly the lattice argmin.
        """
        t0 = time.monotonic()
        rig = _wide_rig()
        board = BoardSpec(7, 5, 30.0)
        poses, raw = make_poses(rig, board, 2, seed=61)
        views = [v.with_pose(p) for p, v in zip(poses, raw)]
        lo = np.array([-60.0, -40.0, 480.0])
        hi = np.array([60.0, 40.0, 900.0])
        rvec = np.array([0.08, 0.22, 0.03])
        cfg = SearchConfig(
            mode="grid", grid_points=5, translation_box=(lo, hi), grid_rotation=tuple(rvec)
        )
        got = next_optimal_pose(views, rig, board, cfg)

        R = rotation_from_axis_angle(rvec)
        bc = board_center(board)
        best_trace, best_pose = np.inf, None
        for x, y, z in itertools.product(*[np.linspace(lo[k], hi[k], 5) for k in range(3)]):
            pose = Pose(rvec, np.array([x, y, z]) - R @ bc)
            if not is_visible(pose, rig, board, cfg.margin_px):
                continue
            hypothetical = views[0].with_pose(pose)
            trace = relative_covariance(assemble_info(views + [hypothetical], rig)).trace
            if trace < best_trace:
                best_trace, best_pose = trace, pose
        elapsed = time.monotonic() - t0
        pose_gap = float(np.max(np.abs(got.pose.tvec - best_pose.tvec)))
        trace_gap = abs(got.trace - best_trace) / best_trace
        ok = pose_gap < 1e-9 and trace_gap < 1e-6 and elapsed < 30.0
        _verdict(
            ok,
            "planner-exhaustive-argmin",
            f"argmin tvec gap {pose_gap:.1e} mm, trace rel gap {trace_gap:.1e} "
            f"over 125 candidates in {elapsed:.1f}s (budget 30s)",
        )
        assert pose_gap < 1e-9
        assert trace_gap < 1e-6
        assert elapsed < 30.0


class TestCovarianceMonotonicity:
    def test_covariance_trace_never_increases_with_views(self):
        """Adding any view must not inflate the relative-pose covariance.

        100 random augmentations of a growing view set; each step's trace
        may fall or hold but never rise beyond numerical dust (1e-9).
        """
        rig = _wide_rig()
        board = BoardSpec(7, 5, 30.0)
        rng = np.random.default_rng(123)
        constraints = RandomPoseConstraints(depth_range=(0.55, 1.1))
        poses: list[Pose] = []
        views = []
        for _ in range(102):
            p = random_pose(constraints, rig, board, poses, rng)
            poses.append(p)
            views.append(synthesize_view(rig, board, p, 0.0, rng).with_pose(p))
        worst = -np.inf
        prev = None
        for k in range(2, 103):
            trace = relative_covariance(assemble_info(views[:k], rig)).trace
            if prev is not None:
                worst = max(worst, trace - prev)
            prev = trace
        ok = worst <= 1e-9
        _verdict(
            ok,
            "covariance-monotonicity",
            f"worst trace increase {worst:.3e} (limit 1e-9) over 100 augmentations",
        )
        assert worst <= 1e-9


class TestConvergenceStudy:
    def test_guided_capture_beats_random_capture_in_convergence(self):
        """Full benchtop study: guided placement vs random placement.

        100 trials per noise level (0.5, 1, 2 px).  At ten images the guided
        strategy's mean rotation and translation errors must not exceed the
        random strategy's, and both strategies must improve from four images
        to twenty.  The whole study must finish inside fifteen minutes.
        """
        t0 = time.monotonic()
        cfg = benchtop_config(n_random_images=18, n_optimal_images=18)
        report = run_convergence(cfg)
        elapsed = time.monotonic() - t0
        rows = {(r.strategy, r.sigma, r.count): r for r in report.rows}
        problems = []
        for sigma in cfg.noise_sigmas:
            g10 = rows[("guided", sigma, 10)]
            r10 = rows[("random", sigma, 10)]
            if g10.rot_mean > r10.rot_mean:
                problems.append(f"s={sigma} rot@10 {g10.rot_mean:.4f} > {r10.rot_mean:.4f}")
            if g10.trans_mean > r10.trans_mean:
                problems.append(f"s={sigma} trans@10 {g10.trans_mean:.4f} > {r10.trans_mean:.4f}")
            for strat in ("guided", "random"):
                first, last = rows[(strat, sigma, 4)], rows[(strat, sigma, 20)]
                if not (last.rot_mean < first.rot_mean and last.trans_mean < first.trans_mean):
                    problems.append(f"s={sigma} {strat} no 4→20 improvement")
        summary = "; ".join(
            f"s={s}: rot {rows[('guided', s, 10)].rot_mean:.3f}/{rows[('random', s, 10)].rot_mean:.3f} "
            f"trans {rows[('guided', s, 10)].trans_mean:.3f}/{rows[('random', s, 10)].trans_mean:.3f}"
            for s in cfg.noise_sigmas
        )
        ok = not problems and elapsed < 900.0
        _verdict(
            ok,
            "guided-vs-random-convergence",
            f"guided/random at 10 images — {summary}; {elapsed:.0f}s (budget 900s)"
            + (f"; problems: {problems}" if problems else ""),
        )
        assert not problems, problems
        assert elapsed < 900.0


class TestNoiselessRecovery:
    def test_noiseless_pipeline_recovers_exact_rig(self):
        """With exact detections the pipeline must return the exact rig."""
        t0 = time.monotonic()
        rig, board = benchtop_rig(), benchtop_board()
        rng = np.random.default_rng(7)
        constraints = RandomPoseConstraints(depth_range=(0.55, 1.1))
        poses: list[Pose] = []
        views = []
        for _ in range(6):
            p = random_pose(constraints, rig, board, poses, rng)
            poses.append(p)
            views.append(synthesize_view(rig, board, p, 0.0, rng))
        result = calibrate(
            CalibrationDataset(rig.left, rig.right, board, tuple(views))
        )
        rot = rotation_error(rig.relative, result.relative)
        trans = translation_error(rig.relative.tvec, result.relative.tvec)
        elapsed = time.monotonic() - t0
        ok = rot < 1e-6 and trans < 1e-6 and elapsed < 10.0
        _verdict(
            ok,
            "noiseless-recovery",
            f"rotation {rot:.2e} deg, translation {trans:.2e} % (limits 1e-6) "
            f"in {elapsed:.1f}s (budget 10s)",
        )
        assert rot < 1e-6
        assert trans < 1e-6
        assert elapsed < 10.0


class TestCaptureEfficiency:
    def test_short_guided_schemes_match_longer_random_schemes(self):
        """Few guided captures vs many random captures, paired seeds.

        Mean triangulation error of "2-random + 6-optimal" must stay within
        1.1x of "20-random", and "2-random + 4-optimal" must beat
        "10-random" outright, over 50 paired trials at 1 px noise.
        """
        cfg = benchtop_config(noise_sigmas=(1.0,), trials=50)
        schemes = ("10-random", "20-random", "2-random + 4-optimal", "2-random + 6-optimal")
        report = compare_strategies(cfg, schemes)
        te = {s: report.row(1.0, s).triang_mean for s in schemes}
        ratio_6 = te["2-random + 6-optimal"] / te["20-random"]
        ratio_4 = te["2-random + 4-optimal"] / te["10-random"]
        ok = ratio_6 <= 1.1 and ratio_4 <= 1.0
        _verdict(
            ok,
            "guided-capture-efficiency",
            f"TE mm {', '.join(f'{s}={te[s]:.2f}' for s in schemes)}; "
            f"8-img guided / 20-img random = {ratio_6:.3f} (limit 1.1), "
            f"6-img guided / 10-img random = {ratio_4:.3f} (limit 1.0)",
        )
        assert ratio_6 <= 1.1
        assert ratio_4 <= 1.0


class TestJointVsMonocular:
    def test_joint_refinement_beats_monocular_averaging(self):
        """Jointly refined rig vs averaging per-view monocular relatives.

        Over 50 noisy datasets the averaged-monocular route must show a
        strictly higher mean triangulation error than the joint solve.
        """
        rig, board = benchtop_rig(), benchtop_board()
        joint_te, mono_te = [], []
        for seed in range(50):
            rng = np.random.default_rng([99, seed])
            poses: list[Pose] = []
            views = []
            for _ in range(10):
                p = random_pose(RandomPoseConstraints(), rig, board, poses, rng)
                poses.append(p)
                views.append(synthesize_view(rig, board, p, 1.0, rng))
            dataset = CalibrationDataset(rig.left, rig.right, board, tuple(views))
            joint = calibrate(dataset)
            pairs = [
                (
                    solve_pnp(board, v.left_pixels, rig.left),
                    solve_pnp(board, v.right_pixels, rig.right),
                )
                for v in views
            ]
            mono = CalibrationResult.initial(
                relative_from_monocular(pairs), [left for left, _ in pairs]
            )
            joint_te.append(triangulation_error_stats(dataset, joint))
            mono_te.append(triangulation_error_stats(dataset, mono))
        jm, mm = float(np.mean(joint_te)), float(np.mean(mono_te))
        ok = mm > jm
        _verdict(
            ok,
            "joint-vs-monocular-averaging",
            f"mean TE joint {jm:.2f} mm vs monocular-averaged {mm:.2f} mm over 50 seeds",
        )
        assert mm > jm


class TestErrorMetrics:
    def test_error_metric_reference_values(self):
        """Hand-computed reference values for the two error metrics."""
        ref = Pose(np.zeros(3), np.array([10.0, 0.0, 0.0]))
        ten_deg = Pose(np.array([np.deg2rad(10.0), 0.0, 0.0]), np.zeros(3))
        rot = rotation_error(Pose(np.zeros(3), np.zeros(3)), ten_deg)
        doubled = translation_error(ref.tvec, 2.0 * ref.tvec)
        opposite = translation_error(ref.tvec, -ref.tvec)
        err_rot = abs(rot - 10.0)
        err_double = abs(doubled - 200.0 / 3.0)
        err_opp = abs(opposite - 200.0)
        ok = err_rot <= 1e-9 and err_double <= 1e-9 and err_opp <= 1e-9
        _verdict(
            ok,
            "error-metric-reference-values",
            f"10° rotation → {rot:.12f} deg; doubled translation → {doubled:.9f}% "
            f"(expect 66.666666667); opposite translation → {opposite:.1f}% (expect 200)",
        )
        assert err_rot <= 1e-9
        assert err_double <= 1e-9
        assert err_opp <= 1e-9


class TestCliDeterminism:
    def _run(self, args, cwd):
        proc = subprocess.run(
            ["calibguide", *args], cwd=cwd, capture_output=True, text=True, timeout=300
        )
        assert proc.returncode == 0, proc.stderr
        return proc

    def test_cli_outputs_are_deterministic(self, tmp_path):
        """Identical seeds through the installed CLI give identical bytes."""
        rig = _wide_rig()
        board = BoardSpec(7, 5, 30.0)
        cfg = ExperimentConfig(
            rig=rig,
            board=board,
            noise_sigmas=(0.5,),
            trials=2,
            n_random_images=2,
            n_optimal_images=2,
            seed=17,
            search=SearchConfig(max_iterations=50, depth_range=(0.55, 1.1)),
            constraints=RandomPoseConstraints(depth_range=(0.55, 1.1)),
        )
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg.to_dict()))
        for name in ("a.csv", "b.csv"):
            self._run(
                ["simulate", "--config", str(cfg_path), "--out", str(tmp_path / name)],
                tmp_path,
            )
        sim_equal = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

        poses, views = make_poses(rig, board, 3, seed=104, sigma=0.3)
        snapshot = {
            "rig": rig.to_dict(),
            "board": board.to_dict(),
            "search": {"max_iterations": 80, "seed": 3, "depth_range": [0.55, 1.1]},
            "views": [
                {
                    "left_pixels": v.left_pixels.tolist(),
                    "right_pixels": v.right_pixels.tolist(),
                    "left_abs": p.to_dict(),
                }
                for p, v in zip(poses, views)
            ],
        }
        spath = tmp_path / "session.json"
        spath.write_text(json.dumps(snapshot))
        for name in ("a.json", "b.json"):
            self._run(
                ["next-pose", "--session", str(spath), "--out", str(tmp_path / name)],
                tmp_path,
            )
        pose_equal = (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        ok = sim_equal and pose_equal
        _verdict(
            ok,
            "cli-determinism",
            f"simulate reruns byte-identical: {sim_equal}; "
            f"next-pose reruns byte-identical: {pose_equal}",
        )
        assert sim_equal
        assert pose_equal
