"""Per-trajectory shape descriptors and the rule-based classifier.

Descriptors for one trajectory (ordered ground-plane points):

    n_points  -- number of points
    d_fit     -- RMS orthogonal deviation from the best-fit line (total
                 least squares, so no axis bias), or from a higher-degree
                 polynomial when `fit_degree` > 1
    dist      -- travelled path length
    c_rect    -- perimeter of the axis-aligned bounding box
    c_main    -- extent of the points across the principal axis (width of
                 the oriented bounding box perpendicular to the dominant
                 direction)

A straight door-to-door crossing gives d_fit = c_main = 0 and a
tortuosity (dist over endpoint distance) of 1; writing or scribbling
inflates all three, which is what the rule classifier keys on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TooFewPoints(Exception):
    """Descriptors need at least two trajectory points."""


@dataclass(frozen=True)
class FeatureVector:
    n_points: int
    d_fit: float
    dist: float
    c_rect: float
    c_main: float


@dataclass(frozen=True)
class RuleThresholds:
    d_fit: float = 0.5        # m
    tortuosity: float = 3.0   # dist / endpoint distance
    c_main: float = 2.0       # m


def _scatter_eigen(xy: np.ndarray):
    """Closed-form eigensolution of the centered 2x2 scatter matrix.

    The analytic form beats a generic eigensolver here: for exactly
    collinear input the minor eigenvalue and the minor-axis projections
    cancel to exact zeros instead of leaving 1e-17 residue.
    """
    centered = xy - xy.mean(axis=0)
    sxx = float(centered[:, 0] @ centered[:, 0])
    syy = float(centered[:, 1] @ centered[:, 1])
    sxy = float(centered[:, 0] @ centered[:, 1])
    half_trace = 0.5 * (sxx + syy)
    disc = math.sqrt(max((0.5 * (sxx - syy)) ** 2 + sxy * sxy, 0.0))
    lam_min = max(half_trace - disc, 0.0)
    lam_max = half_trace + disc
    if sxy != 0.0:
        major = np.array([sxy, lam_max - sxx])
    elif sxx >= syy:
        major = np.array([1.0, 0.0])
    else:
        major = np.array([0.0, 1.0])
    norm = math.hypot(major[0], major[1])
    major = major / norm
    minor = np.array([-major[1], major[0]])
    return centered, major, minor, lam_min


def _polynomial_residual_rms(xy: np.ndarray, degree: int) -> float:
    """RMS residual of a degree-k fit in the principal-axis frame."""
    centered, major, minor, lam_min = _scatter_eigen(xy)
    if degree == 1:
        # TLS identity: orthogonal SSE to the best line = minor eigenvalue.
        return math.sqrt(lam_min / len(xy))
    s = centered @ major
    d = centered @ minor
    coeffs = np.polyfit(s, d, degree)
    resid = d - np.polyval(coeffs, s)
    return float(np.sqrt(np.mean(resid * resid)))


def compute_features(traj, fit_degree: int = 1) -> FeatureVector:
    """Descriptors for a trajectory given as (t, x, y) tuples or an (n, 2)
    point array."""
    arr = np.asarray(traj, dtype=float)
    if arr.ndim != 2 or len(arr) < 2:
        raise TooFewPoints("need at least 2 trajectory points")
    xy = arr[:, -2:]  # accept (t, x, y) rows or bare (x, y) rows

    diffs = np.diff(xy, axis=0)
    dist = float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())

    span = xy.max(axis=0) - xy.min(axis=0)
    c_rect = float(2.0 * (span[0] + span[1]))

    centered, _, minor, _ = _scatter_eigen(xy)
    # Elementwise, not matmul: BLAS may contract with FMA, which breaks
    # the exact zero on collinear input.
    proj = centered[:, 0] * minor[0] + centered[:, 1] * minor[1]
    c_main = float(proj.max() - proj.min())

    d_fit = _polynomial_residual_rms(xy, fit_degree)

    return FeatureVector(
        n_points=len(xy), d_fit=d_fit, dist=dist, c_rect=c_rect, c_main=c_main
    )


def tortuosity(traj) -> float:
    """Path length over endpoint distance; large for closed or wandering
    trajectories (capped via a small endpoint floor)."""
    arr = np.asarray(traj, dtype=float)
    if len(arr) < 2:
        raise TooFewPoints("need at least 2 trajectory points")
    xy = arr[:, -2:]
    diffs = np.diff(xy, axis=0)
    dist = float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())
    endpoint = float(math.hypot(*(xy[-1] - xy[0])))
    return dist / max(endpoint, 1e-9)


def classify_rules(
    features: FeatureVector,
    traj_tortuosity: float,
    thresholds: RuleThresholds | None = None,
) -> str:
    """'atypical' if any descriptor exceeds its threshold, else 'normal'."""
    th = thresholds or RuleThresholds()
    atypical = (
        features.d_fit > th.d_fit
        or traj_tortuosity > th.tortuosity
        or features.c_main > th.c_main
    )
    return "atypical" if atypical else "normal"


def classify_trajectory(traj, thresholds: RuleThresholds | None = None) -> str:
    """Convenience: descriptors plus rule classification in one call."""
    return classify_rules(compute_features(traj), tortuosity(traj), thresholds)
