"""Camera-to-ground-plane mapping.

Two stages take an image observation to scene coordinates:

1. Lens correction with the classic polynomial distortion model
   (three radial terms k1..k3, two tangential terms p1/p2, principal
   point cx/cy, focal lengths fx/fy).  Coefficients act on normalized
   coordinates u = (x - cx) / fx, v = (y - cy) / fy so they are
   resolution independent.
2. A planar homography from undistorted pixels to ground-plane meters.

Conventions:
    Image frame:  origin top-left, x right, y down, units pixels.
    Ground frame: meters, x/y in the floor plane.

The forward distortion is

    r^2 = u^2 + v^2
    u' = u * (1 + k1 r^2 + k2 r^4 + k3 r^6) + 2 p1 u v + p2 (r^2 + 2 u^2)
    v' = v * (1 + k1 r^2 + k2 r^4 + k3 r^6) + p1 (r^2 + 2 v^2) + 2 p2 u v

and undistortion inverts it by fixed-point iteration (the model has no
closed-form inverse).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(Exception):
    """Base class for geometry failures."""


class NonConvergence(GeometryError):
    """Undistortion iteration did not converge (point outside the
    invertible region of the lens model)."""


class PointAtInfinity(GeometryError):
    """Homogeneous denominator vanished during projection."""


class DegenerateConfiguration(GeometryError):
    """Point correspondences do not determine a homography."""


UNDISTORT_MAX_ITER = 50
UNDISTORT_STEP_TOL = 1e-10
W_EPS = 1e-12


@dataclass(frozen=True)
class BrownModel:
    """Polynomial lens distortion parameters (normalized-coordinate form)."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        for name in ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class Homography:
    """3x3 projective map from undistorted image pixels to ground meters.

    Stored normalized so that h[2, 2] == 1.
    """

    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.h, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValueError("homography must be invertible")
        if abs(m[2, 2]) <= 1e-12:
            raise ValueError("h[2][2] must be nonzero for normalization")
        m = m / m[2, 2]
        m.setflags(write=False)
        object.__setattr__(self, "h", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def _distort_normalized(model: BrownModel, u: float, v: float) -> tuple[float, float]:
    r2 = u * u + v * v
    radial = 1.0 + r2 * (model.k1 + r2 * (model.k2 + r2 * model.k3))
    du = 2.0 * model.p1 * u * v + model.p2 * (r2 + 2.0 * u * u)
    dv = model.p1 * (r2 + 2.0 * v * v) + 2.0 * model.p2 * u * v
    return u * radial + du, v * radial + dv


def distort(model: BrownModel, ideal: tuple[float, float]) -> tuple[float, float]:
    """Apply the forward lens model to an ideal (undistorted) pixel."""
    u = (ideal[0] - model.cx) / model.fx
    v = (ideal[1] - model.cy) / model.fy
    ud, vd = _distort_normalized(model, u, v)
    return ud * model.fx + model.cx, vd * model.fy + model.cy


def undistort(model: BrownModel, observed: tuple[float, float]) -> tuple[float, float]:
    """Invert the lens model by fixed-point iteration.

    Starts at the observed point, iterates until the normalized step is
    below 1e-10, and verifies the round trip to < 1e-6 px.  Raises
    NonConvergence when the point lies outside the invertible region.
    """
    ud = (observed[0] - model.cx) / model.fx
    vd = (observed[1] - model.cy) / model.fy
    u, v = ud, vd
    for _ in range(UNDISTORT_MAX_ITER):
        r2 = u * u + v * v
        radial = 1.0 + r2 * (model.k1 + r2 * (model.k2 + r2 * model.k3))
        du = 2.0 * model.p1 * u * v + model.p2 * (r2 + 2.0 * u * u)
        dv = model.p1 * (r2 + 2.0 * v * v) + 2.0 * model.p2 * u * v
        u_next = (ud - du) / radial
        v_next = (vd - dv) / radial
        step = math.hypot(u_next - u, v_next - v)
        u, v = u_next, v_next
        if step < UNDISTORT_STEP_TOL:
            break
    ideal = (u * model.fx + model.cx, v * model.fy + model.cy)
    check = distort(model, ideal)
    residual = math.hypot(check[0] - observed[0], check[1] - observed[1])
    if residual >= 1e-6:
        raise NonConvergence(
            f"undistortion did not converge at {observed} (residual {residual:.3g} px)"
        )
    return ideal


def project(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    """Map an undistorted image point to ground-plane meters."""
    vec = h.h @ (p[0], p[1], 1.0)
    w = vec[2]
    if abs(w) <= W_EPS:
        raise PointAtInfinity(f"point {p} maps to infinity (|w| = {abs(w):.3g})")
    return float(vec[0] / w), float(vec[1] / w)


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity transform bringing points to centroid 0, mean radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.hypot(*(pts - centroid).T))
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _has_collinear_triple(pts: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(pts)
    scale = max(1.0, float(np.abs(pts).max()))
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = pts[i], pts[j], pts[k]
                cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if abs(cross) <= tol * scale * scale:
                    return True
    return False


def estimate_homography(
    pairs: list[tuple[tuple[float, float], tuple[float, float]]],
) -> tuple[Homography, float]:
    """Least-squares DLT from >= 4 (image, ground) correspondences.

    Input points are Hartley-normalized for conditioning.  Returns the
    homography and the reprojection RMS in ground units.
    """
    if len(pairs) < 4:
        raise DegenerateConfiguration("need at least 4 point pairs")
    src = np.array([p[0] for p in pairs], dtype=float)
    dst = np.array([p[1] for p in pairs], dtype=float)
    if _has_collinear_triple(src):
        raise DegenerateConfiguration("3 collinear source points")

    t_src = _hartley_normalization(src)
    t_dst = _hartley_normalization(dst)
    src_n = (t_src @ np.column_stack([src, np.ones(len(src))]).T).T
    dst_n = (t_dst @ np.column_stack([dst, np.ones(len(dst))]).T).T

    rows = []
    for (x, y, _), (xp, yp, _) in zip(src_n, dst_n):
        rows.append([-x, -y, -1, 0, 0, 0, x * xp, y * xp, xp])
        rows.append([0, 0, 0, -x, -y, -1, x * yp, y * yp, yp])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("correspondences are rank deficient")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    homography = Homography(h)

    residuals = []
    for (u, v), (gx, gy) in pairs:
        px, py = project(homography, (u, v))
        residuals.append((px - gx) ** 2 + (py - gy) ** 2)
    rms = math.sqrt(float(np.mean(residuals)))
    return homography, rms


# ---------------------------------------------------------------------------
# Calibration file: flat `key = value` text with fx..p2 and h00..h22.

CALIBRATION_KEYS = ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2")


def load_calibration(path) -> tuple[BrownModel, Homography]:
    values: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`")
            key, _, raw = line.partition("=")
            try:
                values[key.strip()] = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad number {raw.strip()!r}") from None
    missing = [k for k in CALIBRATION_KEYS if k not in values]
    missing += [f"h{i}{j}" for i in range(3) for j in range(3) if f"h{i}{j}" not in values]
    if missing:
        raise ValueError(f"{path}: missing keys {', '.join(missing)}")
    model = BrownModel(**{k: values[k] for k in CALIBRATION_KEYS})
    h = np.array([[values[f"h{i}{j}"] for j in range(3)] for i in range(3)])
    return model, Homography(h)


def write_calibration(path, model: BrownModel, homography: Homography) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in CALIBRATION_KEYS:
            fh.write(f"{key} = {float(getattr(model, key))!r}\n")
        for i in range(3):
            for j in range(3):
                fh.write(f"h{i}{j} = {float(homography.h[i, j])!r}\n")


def default_calibration() -> tuple[BrownModel, Homography]:
    """Synthetic profile for a 1920x1200 overhead camera onto a 20x20 m floor.

    The coefficients are plausible but invented; no real calibration data
    ships with the repository.
    """
    model = BrownModel(
        fx=1400.0, fy=1400.0, cx=960.0, cy=600.0,
        k1=-0.12, k2=0.04, k3=-0.004, p1=2e-4, p2=-1.5e-4,
    )
    h = np.array(
        [
            [20.0 / 1920.0, 0.0, 0.0],
            [0.0, -20.0 / 1200.0, 20.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return model, Homography(h)
