"""Synthetic detections, the convergence study, and the scheme comparison.

Studies run here on deliberately tiny configurations; the statistical
claims at full scale live in the acceptance tests.  The noise model gets a
distributional check, and a near-noiseless single trial must drive the
estimate to the truth within a handful of images.
"""

from __future__ import annotations

import numpy as np
import pytest

from calibguide.errors import InvalidConfig
from calibguide.pipeline import rotation_error, translation_error
from calibguide.planner import RandomPoseConstraints, SearchConfig
from calibguide.simulate import (
    ExperimentConfig,
    benchtop_board,
    benchtop_config,
    benchtop_rig,
    compare_strategies,
    run_convergence,
    synthesize_view,
)

from conftest import make_poses


def tiny_config(wide_rig, wide_board, **overrides):
    base = dict(
        rig=wide_rig,
        board=wide_board,
        noise_sigmas=(0.5,),
        trials=2,
        n_random_images=3,
        n_optimal_images=3,
        seed=11,
        search=SearchConfig(max_iterations=60, seed=2, depth_range=(0.55, 1.1)),
        constraints=RandomPoseConstraints(depth_range=(0.55, 1.1)),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSynthesizeView:
    def test_zero_sigma_gives_exact_projections(self, wide_rig, wide_board):
        poses, _ = make_poses(wide_rig, wide_board, 1, seed=90)
        from calibguide.geometry import board_corners, project

        view = synthesize_view(wide_rig, wide_board, poses[0], 0.0, np.random.default_rng(1))
        np.testing.assert_allclose(
            view.left_pixels, project(wide_rig.left, poses[0], board_corners(wide_board)), atol=0
        )
        assert view.left_abs is None

    def test_deterministic_under_same_rng_state(self, wide_rig, wide_board):
        poses, _ = make_poses(wide_rig, wide_board, 1, seed=91)
        a = synthesize_view(wide_rig, wide_board, poses[0], 1.0, np.random.default_rng(42))
        b = synthesize_view(wide_rig, wide_board, poses[0], 1.0, np.random.default_rng(42))
        np.testing.assert_allclose(a.left_pixels, b.left_pixels, atol=0)
        np.testing.assert_allclose(a.right_pixels, b.right_pixels, atol=0)

    def test_noise_magnitude_matches_sigma(self, wide_rig, wide_board):
        from calibguide.geometry import board_corners, project

        poses, _ = make_poses(wide_rig, wide_board, 1, seed=92)
        clean = project(wide_rig.left, poses[0], board_corners(wide_board))
        rng = np.random.default_rng(7)
        sigma = 2.0
        deltas = []
        for _ in range(60):
            view = synthesize_view(wide_rig, wide_board, poses[0], sigma, rng)
            deltas.append(view.left_pixels - clean)
        sd = float(np.std(np.concatenate(deltas)))
        assert abs(sd - sigma) < 0.1 * sigma


class TestExperimentConfig:
    def test_benchtop_defaults(self):
        cfg = benchtop_config()
        assert cfg.board == benchtop_board()
        assert cfg.rig.left == benchtop_rig().left
        assert cfg.noise_sigmas == (0.5, 1.0, 2.0)
        assert cfg.trials == 100

    def test_overrides(self):
        cfg = benchtop_config(trials=7, noise_sigmas=(1.0,))
        assert cfg.trials == 7 and cfg.noise_sigmas == (1.0,)

    def test_round_trip(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_from_dict_requires_rig_and_board(self):
        with pytest.raises(KeyError):
            ExperimentConfig.from_dict({"trials": 3})

    def test_validation(self, wide_rig, wide_board):
        with pytest.raises(InvalidConfig):
            tiny_config(wide_rig, wide_board, noise_sigmas=(0.0,))
        with pytest.raises(InvalidConfig):
            tiny_config(wide_rig, wide_board, trials=0)
        with pytest.raises(InvalidConfig):
            tiny_config(wide_rig, wide_board, n_random_images=-1)


class TestRunConvergence:
    def test_structure_and_counts(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        report = run_convergence(cfg)
        assert report.sigmas == (0.5,)
        assert report.trials == 2
        assert report.counts("random") == (2, 3, 4, 5)
        assert report.counts("guided") == (2, 3, 4, 5)
        for row in report.rows:
            assert row.rot_mean >= 0.0 and row.trans_mean >= 0.0
            assert row.rot_std >= 0.0

    def test_series_accessor(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        report = run_convergence(cfg)
        series = report.series("guided", 0.5, "rot_mean")
        assert series.shape == (4,)
        np.testing.assert_allclose(
            series[0],
            [r.rot_mean for r in report.rows if r.strategy == "guided" and r.count == 2][0],
            atol=0,
        )
        assert report.series("guided", 9.9, "rot_mean").size == 0

    def test_deterministic(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        a = run_convergence(cfg)
        b = run_convergence(cfg)
        assert a.to_dict() == b.to_dict()

    def test_both_strategies_share_the_warmup(self, wide_rig, wide_board):
        report = run_convergence(tiny_config(wide_rig, wide_board))
        two_r = report.series("random", 0.5, "rot_mean")[0]
        two_g = report.series("guided", 0.5, "rot_mean")[0]
        assert two_r == two_g

    def test_near_noiseless_trial_converges_fast(self):
        cfg = benchtop_config(
            noise_sigmas=(1e-6,),
            trials=1,
            n_random_images=3,
            n_optimal_images=3,
            seed=5,
        )
        report = run_convergence(cfg)
        assert report.series("random", 1e-6, "rot_mean")[-1] < 1e-3
        assert report.series("guided", 1e-6, "rot_mean")[-1] < 1e-3
        assert report.series("guided", 1e-6, "trans_mean")[-1] < 1e-3

    def test_csv_output(self, wide_rig, wide_board):
        import io

        report = run_convergence(tiny_config(wide_rig, wide_board))
        buf = io.StringIO()
        report.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        header = lines[0].split(",")
        assert "strategy" in header and "count" in header
        assert len(lines) == 1 + len(report.rows)


class TestCompareStrategies:
    def test_tiny_comparison(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board, trials=2)
        schemes = ("2-random", "3-random", "2-random + 2-optimal")
        report = compare_strategies(cfg, schemes=schemes)
        assert report.schemes == schemes
        for sigma in report.sigmas:
            for scheme in schemes:
                row = report.row(sigma, scheme)
                assert row.reproj_rms > 0.0
                assert row.triang_mean > 0.0
        r2 = report.row(0.5, "2-random")
        assert r2.images == 2
        mixed = report.row(0.5, "2-random + 2-optimal")
        assert mixed.images == 4
        with pytest.raises(KeyError):
            report.row(0.5, "99-random")

    def test_reference_matches_rig(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        report = compare_strategies(cfg, schemes=("2-random",))
        np.testing.assert_allclose(
            report.reference_rot_deg, np.degrees(wide_rig.relative.rvec), atol=1e-12
        )
        np.testing.assert_allclose(
            report.reference_trans_mm, wide_rig.relative.tvec, atol=1e-12
        )

    def test_scheme_parsing_errors(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        with pytest.raises(InvalidConfig):
            compare_strategies(cfg, schemes=("optimal-only",))
        with pytest.raises(InvalidConfig):
            compare_strategies(cfg, schemes=("1-random",))

    def test_deterministic(self, wide_rig, wide_board):
        cfg = tiny_config(wide_rig, wide_board)
        schemes = ("2-random", "2-random + 2-optimal")
        a = compare_strategies(cfg, schemes=schemes)
        b = compare_strategies(cfg, schemes=schemes)
        assert a.to_dict() == b.to_dict()
