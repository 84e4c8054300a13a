"""Exception types shared across the package.

Every failure a caller can reasonably branch on gets its own class; anything
else surfaces as a plain ValueError from the offending call.
"""

from __future__ import annotations


class CalibrationError(Exception):
    """Base class for all calibration failures."""


class InvalidConfig(CalibrationError, ValueError):
    """A configuration value is out of its documented range."""


class BehindCamera(CalibrationError):
    """A point to be projected has non-positive depth in the camera frame."""


class DegenerateRays(CalibrationError):
    """Triangulation rays are too close to parallel to intersect."""


class InsufficientPoints(CalibrationError):
    """Fewer correspondences than the solver needs."""


class DegenerateConfiguration(CalibrationError):
    """Correspondences exist but their geometry admits no unique solution."""


class InsufficientViews(CalibrationError):
    """The operation needs more captured views than the session holds."""


class SingularInformation(CalibrationError):
    """The information matrix is rank-deficient or too ill-conditioned to invert."""


class NoFeasibleCandidate(CalibrationError):
    """Pose search exhausted its iteration budget without a visible candidate."""


class ConstraintUnsatisfiable(CalibrationError):
    """Rejection sampling hit its attempt cap without meeting the constraints."""


class DivergedOptimization(CalibrationError):
    """The optimizer could not find a cost-decreasing step."""


class UndefinedMetric(CalibrationError):
    """The requested error metric is undefined for these inputs."""


class NotVisible(CalibrationError):
    """A requested board pose does not keep all corners inside both images."""


class SessionNotFound(CalibrationError):
    """No session with the given id exists."""
