"""Synthetic stereo experiments: convergence studies and strategy comparison.

Everything here runs against a known ground-truth rig, so estimator output
can be scored exactly.  Trials are reproducible: every random draw flows
from a `numpy` seed sequence built as (seed, sigma index, trial, stream),
which keeps strategies paired (both start from the same two warm-up views)
and makes reports byte-identical across runs.
"""

from __future__ import annotations

import csv
import re
import sys
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidConfig, NoFeasibleCandidate, SingularInformation
from .geometry import (
    BoardSpec,
    CameraModel,
    Pose,
    StereoRig,
    board_corners,
    project,
)
from .jacobians import ViewPair
from .pipeline import (
    CalibrationDataset,
    CalibrationResult,
    calibrate,
    reprojection_error_stats,
    rotation_error,
    translation_error,
    triangulation_error_stats,
)
from .planner import (
    RandomPoseConstraints,
    SearchConfig,
    is_visible,
    next_optimal_pose,
    random_pose,
)

STRATEGIES = ("random", "guided")

DEFAULT_SCHEMES = (
    "2-random",
    "10-random",
    "20-random",
    "2-random + 2-optimal",
    "2-random + 4-optimal",
    "2-random + 6-optimal",
)


def benchtop_rig() -> StereoRig:
    """The simulated wide-baseline benchtop rig used throughout the tests."""
    intr = dict(fu=800.0, fv=800.0, u0=320.0, v0=240.0, k1=0.01, k2=0.1, width=640, height=480)
    return StereoRig(
        left=CameraModel(**intr),
        right=CameraModel(**intr),
        relative=Pose(
            np.array([-0.003, -0.303, -0.017]), np.array([440.3, -6.2, 25.1])
        ),
    )


def benchtop_board() -> BoardSpec:
    return BoardSpec(rows=9, cols=6, spacing_mm=5.0)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Full recipe for a simulated study."""

    rig: StereoRig
    board: BoardSpec
    noise_sigmas: tuple[float, ...] = (0.5, 1.0, 2.0)
    trials: int = 100
    n_random_images: int = 28
    n_optimal_images: int = 18
    seed: int = 0
    search: SearchConfig = SearchConfig()
    constraints: RandomPoseConstraints = RandomPoseConstraints()
    kernel: str = "identity"

    def __post_init__(self) -> None:
        sigmas = tuple(float(s) for s in self.noise_sigmas)
        if not sigmas or any(s <= 0.0 for s in sigmas):
            raise InvalidConfig(f"noise sigmas must be positive, got {sigmas}")
        object.__setattr__(self, "noise_sigmas", sigmas)
        if self.trials < 1:
            raise InvalidConfig(f"trials must be >= 1, got {self.trials}")
        if self.n_random_images < 0 or self.n_optimal_images < 0:
            raise InvalidConfig("image counts must be >= 0")

    def to_dict(self) -> dict:
        return {
            "rig": self.rig.to_dict(),
            "board": self.board.to_dict(),
            "noise_sigmas": list(self.noise_sigmas),
            "trials": self.trials,
            "n_random_images": self.n_random_images,
            "n_optimal_images": self.n_optimal_images,
            "seed": self.seed,
            "search": self.search.to_dict(),
            "constraints": self.constraints.to_dict(),
            "kernel": self.kernel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        kw = dict(d)
        kw["rig"] = StereoRig.from_dict(kw["rig"])
        kw["board"] = BoardSpec.from_dict(kw["board"])
        if "noise_sigmas" in kw:
            kw["noise_sigmas"] = tuple(kw["noise_sigmas"])
        if "search" in kw:
            kw["search"] = SearchConfig.from_dict(kw["search"])
        if "constraints" in kw:
            kw["constraints"] = RandomPoseConstraints.from_dict(kw["constraints"])
        return cls(**kw)


def benchtop_config(**overrides) -> ExperimentConfig:
    """The standard study configuration; keyword overrides replace fields."""
    base = ExperimentConfig(rig=benchtop_rig(), board=benchtop_board())
    return replace(base, **overrides) if overrides else base


def synthesize_view(
    rig: StereoRig, board: BoardSpec, pose: Pose, sigma: float, rng: np.random.Generator
) -> ViewPair:
    """Exact projections of the board through both cameras plus pixel noise.

    Noise is drawn left camera first, then right, so streams are stable.
    ``sigma=0`` yields exact detections.  The returned view carries no pose
    estimate; the generating pose stays with the caller.
    """
    pts = board_corners(board)
    left = project(rig.left, pose, pts)
    right = project(rig.right, rig.right_pose(pose), pts)
    left = left + rng.normal(0.0, sigma, left.shape)
    right = right + rng.normal(0.0, sigma, right.shape)
    return ViewPair(left_pixels=left, right_pixels=right, board=board)


@dataclass(frozen=True)
class ConvergenceRow:
    strategy: str
    sigma: float
    count: int
    rot_mean: float  # degrees vs truth
    rot_std: float
    trans_mean: float  # percent vs truth
    trans_std: float


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Mean/stddev calibration error versus image count, per strategy and noise level."""

    sigmas: tuple[float, ...]
    trials: int
    rows: tuple[ConvergenceRow, ...]

    def counts(self, strategy: str) -> tuple[int, ...]:
        return tuple(sorted({r.count for r in self.rows if r.strategy == strategy}))

    def series(self, strategy: str, sigma: float, field: str) -> np.ndarray:
        rows = sorted(
            (r for r in self.rows if r.strategy == strategy and r.sigma == sigma),
            key=lambda r: r.count,
        )
        return np.array([getattr(r, field) for r in rows])

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(
            ["strategy", "sigma", "count", "rot_mean_deg", "rot_std_deg", "trans_mean_pct", "trans_std_pct"]
        )
        for r in self.rows:
            writer.writerow(
                [r.strategy, repr(r.sigma), r.count, repr(r.rot_mean), repr(r.rot_std), repr(r.trans_mean), repr(r.trans_std)]
            )

    def to_dict(self) -> dict:
        return {
            "sigmas": list(self.sigmas),
            "trials": self.trials,
            "rows": [vars(r) for r in self.rows],
        }


def _rng(cfg: ExperimentConfig, sig_idx: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, sig_idx, trial, stream])


def _initial_views(cfg: ExperimentConfig, sigma: float, rng: np.random.Generator):
    poses: list[Pose] = []
    views: list[ViewPair] = []
    for _ in range(2):
        pose = random_pose(cfg.constraints, cfg.rig, cfg.board, poses, rng)
        views.append(synthesize_view(cfg.rig, cfg.board, pose, sigma, rng))
        poses.append(pose)
    dataset = CalibrationDataset(cfg.rig.left, cfg.rig.right, cfg.board, tuple(views))
    return poses, views, calibrate(dataset, kernel=cfg.kernel)


def _grow(
    cfg: ExperimentConfig,
    sigma: float,
    strategy: str,
    poses: list[Pose],
    views: list[ViewPair],
    result: CalibrationResult,
    n_add: int,
    rng: np.random.Generator,
):
    """Append views one at a time, recalibrating after each; yields snapshots."""
    for _ in range(n_add):
        if strategy == "guided":
            est_rig = StereoRig(cfg.rig.left, cfg.rig.right, result.relative)
            planner_views = [
                v.with_pose(p) for v, p in zip(views, result.per_view_left_abs)
            ]
            search = replace(cfg.search, seed=int(rng.integers(2**63)))
            try:
                pose = next_optimal_pose(planner_views, est_rig, cfg.board, search).pose
                # the planner trusted the estimate; re-check against reality
                if not is_visible(pose, cfg.rig, cfg.board, 0.0):
                    raise NoFeasibleCandidate("suggested pose not actually visible")
            except (NoFeasibleCandidate, SingularInformation):
                pose = random_pose(cfg.constraints, cfg.rig, cfg.board, poses, rng)
        else:
            pose = random_pose(cfg.constraints, cfg.rig, cfg.board, poses, rng)
        views.append(synthesize_view(cfg.rig, cfg.board, pose, sigma, rng))
        poses.append(pose)
        dataset = CalibrationDataset(cfg.rig.left, cfg.rig.right, cfg.board, tuple(views))
        result = calibrate(dataset, kernel=cfg.kernel, init=result)
        yield len(views), dataset, result


def run_convergence(cfg: ExperimentConfig, progress: bool = False) -> ConvergenceReport:
    """Error-versus-count study for both strategies over all noise levels.

    Each trial draws two shared warm-up views, then grows a random-placement
    branch and a guided branch independently, recalibrating after every
    addition and scoring the relative estimate against the known rig.
    """
    acc: dict[tuple[str, float, int], list[tuple[float, float]]] = {}
    truth = cfg.rig.relative
    for sig_idx, sigma in enumerate(cfg.noise_sigmas):
        for trial in range(cfg.trials):
            if progress and trial % 10 == 0:
                print(f"sigma={sigma} trial {trial}/{cfg.trials}", file=sys.stderr, flush=True)
            poses0, views0, result0 = _initial_views(cfg, sigma, _rng(cfg, sig_idx, trial, 0))
            base_err = (
                rotation_error(truth, result0.relative),
                translation_error(truth.tvec, result0.relative.tvec),
            )
            for strat_idx, (strategy, n_add) in enumerate(
                zip(STRATEGIES, (cfg.n_random_images, cfg.n_optimal_images))
            ):
                acc.setdefault((strategy, sigma, 2), []).append(base_err)
                rng = _rng(cfg, sig_idx, trial, 1 + strat_idx)
                grown = _grow(
                    cfg, sigma, strategy, list(poses0), list(views0), result0, n_add, rng
                )
                for count, _, result in grown:
                    err = (
                        rotation_error(truth, result.relative),
                        translation_error(truth.tvec, result.relative.tvec),
                    )
                    acc.setdefault((strategy, sigma, count), []).append(err)

    rows = []
    for strategy in STRATEGIES:
        for sigma in cfg.noise_sigmas:
            counts = sorted(c for (s, sg, c) in acc if s == strategy and sg == sigma)
            for count in counts:
                errs = np.array(acc[(strategy, sigma, count)])
                rows.append(
                    ConvergenceRow(
                        strategy=strategy,
                        sigma=sigma,
                        count=count,
                        rot_mean=float(errs[:, 0].mean()),
                        rot_std=float(errs[:, 0].std(ddof=1)) if len(errs) > 1 else 0.0,
                        trans_mean=float(errs[:, 1].mean()),
                        trans_std=float(errs[:, 1].std(ddof=1)) if len(errs) > 1 else 0.0,
                    )
                )
    return ConvergenceReport(sigmas=cfg.noise_sigmas, trials=cfg.trials, rows=tuple(rows))


_SCHEME_RANDOM = re.compile(r"^(\d+)-random$")
_SCHEME_MIXED = re.compile(r"^(\d+)-random \+ (\d+)-optimal$")


def _parse_scheme(scheme: str) -> tuple[int, int]:
    """Returns (random count, guided count)."""
    m = _SCHEME_RANDOM.match(scheme)
    if m:
        n = int(m.group(1))
        if n < 2:
            raise InvalidConfig(f"scheme {scheme!r} needs at least 2 images")
        return n, 0
    m = _SCHEME_MIXED.match(scheme)
    if m:
        base, opt = int(m.group(1)), int(m.group(2))
        if base < 2:
            raise InvalidConfig(f"scheme {scheme!r} needs at least 2 random images")
        return base, opt
    raise InvalidConfig(f"cannot parse scheme {scheme!r}")


@dataclass(frozen=True)
class SchemeRow:
    sigma: float
    scheme: str
    images: int
    rot_deg: tuple[float, float, float]  # mean estimated rotation vector
    trans_mm: tuple[float, float, float]
    reproj_rms: float
    triang_mean: float


@dataclass(frozen=True, eq=False)
class CompareReport:
    """Mean estimates and residual metrics per capture scheme and noise level."""

    sigmas: tuple[float, ...]
    schemes: tuple[str, ...]
    trials: int
    reference_rot_deg: tuple[float, float, float]
    reference_trans_mm: tuple[float, float, float]
    rows: tuple[SchemeRow, ...]

    def row(self, sigma: float, scheme: str) -> SchemeRow:
        for r in self.rows:
            if r.sigma == sigma and r.scheme == scheme:
                return r
        raise KeyError((sigma, scheme))

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(
            [
                "sigma",
                "scheme",
                "images",
                "rot_x_deg",
                "rot_y_deg",
                "rot_z_deg",
                "t_x_mm",
                "t_y_mm",
                "t_z_mm",
                "reproj_rms_px",
                "triang_mean_mm",
            ]
        )
        ref = ["", "reference", ""]
        ref += [repr(v) for v in self.reference_rot_deg]
        ref += [repr(v) for v in self.reference_trans_mm]
        ref += ["", ""]
        writer.writerow(ref)
        for r in self.rows:
            row = [repr(r.sigma), r.scheme, r.images]
            row += [repr(v) for v in r.rot_deg]
            row += [repr(v) for v in r.trans_mm]
            row += [repr(r.reproj_rms), repr(r.triang_mean)]
            writer.writerow(row)

    def to_dict(self) -> dict:
        return {
            "sigmas": list(self.sigmas),
            "schemes": list(self.schemes),
            "trials": self.trials,
            "reference_rot_deg": list(self.reference_rot_deg),
            "reference_trans_mm": list(self.reference_trans_mm),
            "rows": [
                {
                    "sigma": r.sigma,
                    "scheme": r.scheme,
                    "images": r.images,
                    "rot_deg": list(r.rot_deg),
                    "trans_mm": list(r.trans_mm),
                    "reproj_rms": r.reproj_rms,
                    "triang_mean": r.triang_mean,
                }
                for r in self.rows
            ],
        }


def compare_strategies(
    cfg: ExperimentConfig, schemes: tuple[str, ...] = DEFAULT_SCHEMES, progress: bool = False
) -> CompareReport:
    """Score a set of capture schemes on identical warm-up draws.

    A scheme is "<n>-random" or "<base>-random + <m>-optimal".  All schemes
    in one trial share the warm-up views, so differences reflect placement
    strategy, not luck.  Rotation columns are the mean estimated rotation
    vector in degrees; translation columns the mean estimated vector in mm.
    """
    parsed = [_parse_scheme(s) for s in schemes]
    max_random = max(p[0] for p in parsed)
    guided_bases = sorted({p[0] for p in parsed if p[1] > 0})
    guided_max: dict[int, int] = {}
    for base, opt in parsed:
        if opt > 0:
            guided_max[base] = max(guided_max.get(base, 0), opt)

    acc: dict[tuple[float, str], list[list[float]]] = {
        (sigma, scheme): [] for sigma in cfg.noise_sigmas for scheme in schemes
    }
    for sig_idx, sigma in enumerate(cfg.noise_sigmas):
        for trial in range(cfg.trials):
            if progress and trial % 10 == 0:
                print(f"sigma={sigma} trial {trial}/{cfg.trials}", file=sys.stderr, flush=True)
            poses0, views0, result0 = _initial_views(cfg, sigma, _rng(cfg, sig_idx, trial, 0))
            snapshots: dict[tuple[str, int], tuple[CalibrationDataset, CalibrationResult]] = {}
            base_dataset = CalibrationDataset(
                cfg.rig.left, cfg.rig.right, cfg.board, tuple(views0)
            )
            snapshots[("random", 2)] = (base_dataset, result0)
            random_state: dict[int, tuple[list[Pose], list[ViewPair], CalibrationResult]] = {
                2: (list(poses0), list(views0), result0)
            }

            rng_rand = _rng(cfg, sig_idx, trial, 1)
            poses, views, result = list(poses0), list(views0), result0
            for count, dataset, result in _grow(
                cfg, sigma, "random", poses, views, result, max_random - 2, rng_rand
            ):
                snapshots[("random", count)] = (dataset, result)
                if count in guided_max:
                    random_state[count] = (list(poses), list(views), result)

            for base in guided_bases:
                bposes, bviews, bresult = random_state[base]
                rng_opt = _rng(cfg, sig_idx, trial, 100 + base)
                for count, dataset, result in _grow(
                    cfg, sigma, "guided", list(bposes), list(bviews), bresult,
                    guided_max[base], rng_opt,
                ):
                    snapshots[(f"guided-{base}", count)] = (dataset, result)

            for scheme, (n_rand, n_opt) in zip(schemes, parsed):
                if n_opt == 0:
                    dataset, result = snapshots[("random", n_rand)]
                else:
                    dataset, result = snapshots[(f"guided-{n_rand}", n_rand + n_opt)]
                rms, _ = reprojection_error_stats(dataset, result)
                te = triangulation_error_stats(dataset, result)
                acc[(sigma, scheme)].append(
                    list(np.degrees(result.relative.rvec))
                    + list(result.relative.tvec)
                    + [rms, te]
                )

    truth = cfg.rig.relative
    rows = []
    for sigma in cfg.noise_sigmas:
        for scheme, (n_rand, n_opt) in zip(schemes, parsed):
            data = np.array(acc[(sigma, scheme)])
            mean = data.mean(axis=0)
            rows.append(
                SchemeRow(
                    sigma=sigma,
                    scheme=scheme,
                    images=n_rand + n_opt,
                    rot_deg=tuple(float(v) for v in mean[0:3]),
                    trans_mm=tuple(float(v) for v in mean[3:6]),
                    reproj_rms=float(mean[6]),
                    triang_mean=float(mean[7]),
                )
            )
    return CompareReport(
        sigmas=cfg.noise_sigmas,
        schemes=tuple(schemes),
        trials=cfg.trials,
        reference_rot_deg=tuple(float(v) for v in np.degrees(truth.rvec)),
        reference_trans_mm=tuple(float(v) for v in truth.tvec),
        rows=tuple(rows),
    )
