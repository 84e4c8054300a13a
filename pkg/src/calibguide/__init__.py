"""Covariance-guided pose planning for stereo extrinsic calibration.

Given two intrinsically calibrated cameras and a planar target, this
package estimates the fixed left-to-right transform, predicts how certain
that estimate is, and tells the operator where to hold the board next so
the uncertainty shrinks fastest.
"""

from .covariance import CovarianceReport, relative_covariance, schur_information, trace_objective
from .errors import (
    BehindCamera,
    CalibrationError,
    ConstraintUnsatisfiable,
    DegenerateConfiguration,
    DegenerateRays,
    DivergedOptimization,
    InsufficientPoints,
    InsufficientViews,
    InvalidConfig,
    NoFeasibleCandidate,
    NotVisible,
    SessionNotFound,
    SingularInformation,
    UndefinedMetric,
)
from .geometry import (
    BoardSpec,
    CameraModel,
    Pose,
    StereoRig,
    axis_angle_from_rotation,
    backproject,
    board_center,
    board_corners,
    board_outline,
    compose_right_extrinsics,
    distort_normalized,
    perturb_pose,
    project,
    rotation_from_axis_angle,
    triangulate,
    undistort_normalized,
)
from .jacobians import (
    InfoBlocks,
    ResidualVector,
    ViewPair,
    assemble_info,
    jac_cross,
    jac_relative,
    jac_view_pose,
    pose_blocks,
    residuals,
)
from .pipeline import (
    CalibrationDataset,
    CalibrationResult,
    bundle_adjust,
    calibrate,
    init_relative,
    parse_kernel,
    relative_from_monocular,
    reprojection_error_stats,
    rotation_error,
    solve_pnp,
    translation_error,
    triangulation_error_stats,
)
from .planner import (
    CandidatePose,
    RandomPoseConstraints,
    SearchConfig,
    coverage_fraction,
    is_visible,
    next_optimal_pose,
    random_pose,
)
from .session import SessionState
from .simulate import (
    CompareReport,
    ConvergenceReport,
    ExperimentConfig,
    benchtop_board,
    benchtop_config,
    benchtop_rig,
    compare_strategies,
    run_convergence,
    synthesize_view,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
