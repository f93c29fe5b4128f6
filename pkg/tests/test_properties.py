"""Randomized property tests over the numeric invariants."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from atrium.features import compute_features
from atrium.geometry import default_calibration, distort, undistort
from atrium.normality import GridTransform, TrajectoryStep, kernel
from atrium.render import fade_alpha

finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0.0, 20.0),
    y=st.floats(0.0, 20.0),
    vx=st.floats(-2.5, 2.5),
    vy=st.floats(-2.5, 2.5),
)
def test_grid_transform_round_trip(x, y, vx, vy):
    transform = GridTransform(0.0, 20.0, 0.0, 20.0, 2.5)
    s = TrajectoryStep(x=x, y=y, vx=vx, vy=vy, t=0.0)
    back = transform.from_grid(transform.to_grid(s))
    assert math.isclose(back.x, x, abs_tol=1e-12)
    assert math.isclose(back.y, y, abs_tol=1e-12)
    assert math.isclose(back.vx, vx, abs_tol=1e-12)
    assert math.isclose(back.vy, vy, abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    radius=st.floats(0.0, 0.85),
    angle=st.floats(0.0, 2.0 * math.pi),
)
def test_lens_round_trip_in_domain(radius, angle):
    model, _ = default_calibration()
    r_px = radius * math.hypot(model.cx, model.cy)
    p = (model.cx + r_px * math.cos(angle), model.cy + r_px * math.sin(angle))
    q = distort(model, undistort(model, p))
    assert math.hypot(q[0] - p[0], q[1] - p[1]) < 1e-6


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    scale=st.floats(0.01, 100.0),
)
def test_feature_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    xy = np.cumsum(rng.normal(0, 0.5, size=(20, 2)), axis=0)
    f0 = compute_features(xy)
    f1 = compute_features(xy * scale)
    assert math.isclose(f1.dist, scale * f0.dist, rel_tol=1e-9)
    assert math.isclose(f1.c_rect, scale * f0.c_rect, rel_tol=1e-9)
    assert math.isclose(f1.c_main, scale * f0.c_main, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(f1.d_fit, scale * f0.d_fit, rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    t=st.tuples(*(st.floats(-5.0, 15.0) for _ in range(4))),
    p=st.tuples(*(st.integers(0, 9) for _ in range(4))),
)
def test_kernel_bounded_and_symmetric_per_axis(t, p):
    value = kernel(t, p)
    assert 0.0 <= value <= 1.0
    mirrored = tuple(2 * p[d] - t[d] for d in range(4))
    assert math.isclose(kernel(mirrored, p), value, rel_tol=1e-12, abs_tol=1e-300)


@settings(max_examples=200, deadline=None)
@given(age=st.floats(0.0, 1e6), delta=st.floats(1e-6, 1e6))
def test_fade_monotone(age, delta):
    assert fade_alpha(age + delta) < fade_alpha(age) or fade_alpha(age) == 0.0
