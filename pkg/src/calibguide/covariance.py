"""Relative-pose covariance from the block information matrix.

Eliminating every per-view pose block from the stacked normal equations
leaves a 6x6 reduced information matrix for the relative pose,

    S = a - sum_i c_i b_i^{-1} c_i^T,

whose inverse is the covariance this package plans against.  The blocks are
unweighted (pure J^T J); multiply by the pixel-noise variance for absolute
units.  Only the ordering of traces matters for pose planning, so the scale
factor is deliberately left out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, SingularInformation
from .jacobians import InfoBlocks

_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class CovarianceReport:
    """Covariance of the relative pose: rotation (rad) then translation (mm)."""

    sigma: np.ndarray  # (6, 6)
    trace: float
    condition: float

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "trace": self.trace,
            "condition": self.condition,
        }


def _solve_spd(block: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve block @ X = rhs for a symmetric PD block, with conditioning check."""
    w = np.linalg.eigvalsh(0.5 * (block + block.T))
    if w[0] <= 0.0 or w[-1] / w[0] > _COND_LIMIT:
        raise SingularInformation(
            f"{what} has eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}]"
        )
    return np.linalg.solve(block, rhs)


def schur_information(info: InfoBlocks) -> np.ndarray:
    """Reduced 6x6 information for the relative pose."""
    S = info.a.copy()
    for i, (b, c) in enumerate(zip(info.b_blocks, info.c_blocks)):
        S -= c @ _solve_spd(b, c.T, f"view block {i}")
    return 0.5 * (S + S.T)


def relative_covariance(info: InfoBlocks) -> CovarianceReport:
    """Invert the reduced information; raises on rank deficiency.

    At least two views are required for the relative pose to be observable
    alongside the per-view poses; with fewer the reduced matrix is singular
    and :class:`SingularInformation` is raised rather than returning a
    misleadingly finite covariance.
    """
    S = schur_information(info)
    w = np.linalg.eigvalsh(S)
    if w[0] <= 0.0 or w[-1] / w[0] > _COND_LIMIT:
        raise SingularInformation(
            f"reduced information has eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}]"
        )
    sigma = np.linalg.inv(S)
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceReport(
        sigma=sigma, trace=float(np.trace(sigma)), condition=float(w[-1] / w[0])
    )


def trace_objective(report: CovarianceReport, weights=None) -> float:
    """Scalar planning objective: weighted trace of the covariance.

    ``weights`` is an optional 6-vector scaling the diagonal before summing,
    useful because rotation (rad^2) and translation (mm^2) live on different
    scales.  Defaults to the plain trace.
    """
    if weights is None:
        return report.trace
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (6,):
        raise InvalidConfig(f"weights must be a 6-vector, got shape {w.shape}")
    if np.any(w < 0.0):
        raise InvalidConfig("weights must be non-negative")
    return float(np.sum(w * np.diag(report.sigma)))
