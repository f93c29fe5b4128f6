"""Normality model tests.

Independent oracles:
  * kernel values recomputed term by term from the exponent sum,
  * deposits compared against an untruncated full-grid evaluation,
  * step scoring compared against a literal 16-corner evaluation of the
    reciprocal-distance average (pure Python, no shared code path),
  * ring behavior compared against rebuilding the array from scratch
    out of the surviving trajectories.
"""

import itertools
import math

import numpy as np
import pytest

import atrium.normality as nz
from atrium.normality import (
    EmptyBins,
    EmptySteps,
    GridTransform,
    NormalityArray,
    NormalityModel,
    TooFewPoints,
    TooFewValues,
    TrainingRing,
    TrajectoryStep,
    UnknownRecord,
    detect_threshold,
    kernel,
    resample,
    split_on_gaps,
    velocity_weight,
)

TRANSFORM = GridTransform(0.0, 20.0, 0.0, 20.0, 2.5)


def step(x=10.0, y=10.0, vx=2.0, vy=0.0, t=0.25):
    return TrajectoryStep(x=x, y=y, vx=vx, vy=vy, t=t)


def full_grid_deposit_oracle(transform, sigma, s):
    """Untruncated kernel sum over the whole grid."""
    center = transform.to_grid(s)
    w = velocity_weight(s)
    values = np.zeros(transform.dims)
    for p in itertools.product(*(range(n) for n in transform.dims)):
        exponent = sum((center[d] - p[d]) ** 2 / sigma[d] ** 2 for d in range(4))
        values[p] += w * math.exp(-exponent)
    return values


def literal_score_oracle(values, point):
    """Equation evaluated symbol by symbol: mean over surviving corners of
    value / distance, distance floored at 1e-6."""
    base = [math.floor(point[d]) for d in range(4)]
    terms = []
    for offsets in itertools.product((0, 1), repeat=4):
        p = [base[d] + offsets[d] for d in range(4)]
        if any(not (0 <= p[d] < values.shape[d]) for d in range(4)):
            continue
        dist = math.sqrt(sum((point[d] - p[d]) ** 2 for d in range(4)))
        terms.append(values[tuple(p)] / max(dist, 1e-6))
    return sum(terms) / len(terms) if terms else 0.0


class TestKernel:
    def test_unity_at_center(self):
        assert kernel((1.2, 3.4, 2.0, 1.5), (1.2, 3.4, 2.0, 1.5)) == 1.0

    def test_unit_offset_position_axis(self):
        assert kernel((1.0, 0.0, 0.0, 0.0), (0, 0, 0, 0)) == pytest.approx(
            math.exp(-1), abs=1e-15
        )

    def test_half_offset_velocity_axis(self):
        # (0.5 / 0.5)^2 = 1 with the default sigma on velocity axes.
        assert kernel((0.0, 0.0, 0.5, 0.0), (0, 0, 0, 0)) == pytest.approx(
            math.exp(-1), abs=1e-15
        )

    def test_bounds(self):
        # Offsets stay inside the float64-representable regime (the
        # exponential underflows to exactly 0 beyond ~27 sigma).
        rng = np.random.default_rng(8)
        for _ in range(200):
            p = rng.integers(0, 10, 4)
            t = p + rng.uniform(-5, 5, 4)
            k = kernel(t, p)
            assert 0.0 < k <= 1.0
            assert (k == 1.0) == bool(np.all(t == p))


class TestGridTransform:
    def test_position_boundaries(self):
        g = TRANSFORM.to_grid(step(x=0.0, y=0.0))
        assert g[0] == -0.5 and g[1] == -0.5
        g = TRANSFORM.to_grid(step(x=20.0, y=20.0))
        assert g[0] == 9.5 and g[1] == 9.5

    def test_zero_velocity_hits_center_cell(self):
        g = TRANSFORM.to_grid(step(vx=0.0, vy=0.0))
        assert g[2] == 2.0 and g[3] == 2.0

    def test_velocity_clamped(self):
        g = TRANSFORM.to_grid(step(vx=99.0, vy=-99.0))
        assert g[2] == 4.0 and g[3] == 0.0

    def test_round_trip_unclamped(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            s = step(
                x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5),
            )
            back = TRANSFORM.from_grid(TRANSFORM.to_grid(s))
            assert abs(back.x - s.x) < 1e-12
            assert abs(back.y - s.y) < 1e-12
            assert abs(back.vx - s.vx) < 1e-12
            assert abs(back.vy - s.vy) < 1e-12

    def test_default_cell_count(self):
        arr = NormalityArray(TRANSFORM)
        assert arr.cell_count == 2500


class TestDeposit:
    def test_zero_velocity_is_noop(self):
        arr = NormalityArray(TRANSFORM)
        rec = arr.deposit(step(vx=0.0, vy=0.0))
        assert rec.weight == 0.0
        assert arr.values.sum() == 0.0

    def test_full_weight_cell_center_gains_one(self):
        arr = NormalityArray(TRANSFORM)
        # Grid x index 3 has cell center at x = (3 + 0.5) * 2 = 7 m; zero
        # velocity maps to grid 2.0 exactly but carries weight 0, so use
        # a fast step whose velocity also lands on a cell center: grid
        # v index k at v = -2.5 + k * 1.25.
        s = step(x=7.0, y=7.0, vx=1.25 * 3 - 2.5, vy=0.0)  # vx = 1.25 m/s
        assert velocity_weight(s) < 1.0
        s_fast = step(x=7.0, y=7.0, vx=2.5, vy=0.0)  # v_max: grid 4.0, w = 1
        center = TRANSFORM.to_grid(s_fast)
        assert np.allclose(center, np.round(center))
        rec = arr.deposit(s_fast)
        assert rec.weight == 1.0
        idx = tuple(int(round(c)) for c in center)
        assert arr.values[idx] == pytest.approx(1.0, abs=1e-15)

    def test_truncated_mass_matches_full_grid_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            arr = NormalityArray(TRANSFORM)
            s = step(
                x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(0.4, 2.5),
            )
            arr.deposit(s)
            oracle = full_grid_deposit_oracle(TRANSFORM, arr.sigma, s)
            assert abs(arr.values.sum() - oracle.sum()) <= 1e-4 * oracle.sum()

    def test_weight_formula(self):
        # 0.5 s of travel at 1 m/s is half the 1 m reference length.
        assert velocity_weight(step(vx=1.0, vy=0.0)) == pytest.approx(0.5)
        assert velocity_weight(step(vx=4.0, vy=3.0)) == 1.0  # capped


class TestWithdraw:
    def test_deposit_withdraw_cancels(self):
        arr = NormalityArray(TRANSFORM)
        rec = arr.deposit(step())
        arr.withdraw(rec)
        assert np.abs(arr.values).max() < 1e-12

    def test_zero_weight_withdraw_is_noop(self):
        arr = NormalityArray(TRANSFORM)
        arr.deposit(step())
        before = arr.values.copy()
        rec = arr.deposit(step(vx=0.0, vy=0.0))
        arr.withdraw(rec)
        np.testing.assert_array_equal(arr.values, before)

    def test_foreign_record_rejected(self):
        a = NormalityArray(TRANSFORM)
        b = NormalityArray(TRANSFORM)
        rec = a.deposit(step())
        with pytest.raises(UnknownRecord):
            b.withdraw(rec)

    def test_interleaved_matches_rebuild(self):
        rng = np.random.default_rng(12)
        arr = NormalityArray(TRANSFORM)
        alive = {}
        serial = 0
        for _ in range(1000):
            if alive and rng.random() < 0.45:
                key = list(alive)[rng.integers(len(alive))]
                s, rec = alive.pop(key)
                arr.withdraw(rec)
            else:
                s = step(
                    x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                    vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5),
                )
                alive[serial] = (s, arr.deposit(s))
                serial += 1
        rebuilt = NormalityArray(TRANSFORM)
        for s, _ in alive.values():
            rebuilt.deposit(s)
        assert np.abs(arr.values - rebuilt.values).max() < 1e-9


class TestStepNormality:
    def test_empty_array_scores_zero(self):
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(1)
        for _ in range(20):
            s = step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                     vx=rng.uniform(-3, 3), vy=rng.uniform(-3, 3))
            assert arr.step_normality(s) == 0.0

    def test_single_mass_half_cell_offset(self):
        arr = NormalityArray(TRANSFORM)
        arr.values[3, 4, 2, 2] = 1.0
        # Query half a cell off along x only: grid point (3.5, 4, 2, 2).
        s = TRANSFORM.from_grid([3.5, 4.0, 2.0, 2.0])
        expected = literal_score_oracle(arr.values, [3.5, 4.0, 2.0, 2.0])
        assert arr.step_normality(s) == pytest.approx(expected, rel=1e-12)
        # By hand: 16 corners, two carry distance 0.5 but only one has
        # mass; its term is 1 / 0.5 = 2, averaged over 16 corners.
        assert expected == pytest.approx(2.0 / 16.0)

    def test_query_on_lattice_point_with_mass(self):
        arr = NormalityArray(TRANSFORM)
        arr.values[5, 5, 2, 2] = 3.0
        point = [5.0, 5.0, 2.0, 2.0]
        s = TRANSFORM.from_grid(point)
        expected = literal_score_oracle(arr.values, point)
        assert arr.step_normality(s) == pytest.approx(expected, rel=1e-12)
        # Capped singularity: 3 / 1e-6 on one corner out of 16.
        assert expected == pytest.approx(3.0 / 1e-6 / 16.0)

    def test_edge_clipping_matches_oracle(self):
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(33)
        arr.values[...] = rng.uniform(0, 2, size=arr.values.shape)
        # Corners, edges, and out-of-box queries.
        for g in (
            [-0.5, -0.5, 0.0, 0.0],
            [9.5, 9.5, 4.0, 4.0],
            [-0.2, 5.3, 3.7, 0.1],
            [9.9, -0.4, 0.0, 4.0],
            [4.2, 7.8, 2.1, 3.9],
        ):
            s = TRANSFORM.from_grid(g)
            got = arr.step_normality(s)
            assert got == pytest.approx(literal_score_oracle(arr.values, g), rel=1e-12)

    def test_random_queries_match_oracle(self):
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(77)
        arr.values[...] = rng.uniform(0, 5, size=arr.values.shape)
        for _ in range(300):
            s = step(
                x=rng.uniform(-2, 22), y=rng.uniform(-2, 22),
                vx=rng.uniform(-4, 4), vy=rng.uniform(-4, 4),
            )
            g = TRANSFORM.to_grid(s)
            assert arr.step_normality(s) == pytest.approx(
                literal_score_oracle(arr.values, g), rel=1e-12
            )

    def test_normalized_mode_bounded_by_local_mass(self):
        # With weights summing to 1, the value is a convex combination of
        # the corner entries, so it cannot exceed their maximum.
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(5)
        arr.values[...] = rng.uniform(0, 3, size=arr.values.shape)
        for _ in range(100):
            s = step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                     vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5))
            value = arr.step_normality(s, normalized=True)
            assert 0.0 <= value <= arr.values.max() + 1e-12

    def test_normalized_mode_is_off_by_default(self):
        arr = NormalityArray(TRANSFORM)
        arr.values[3, 4, 2, 2] = 1.0
        s = TRANSFORM.from_grid([3.5, 4.0, 2.0, 2.0])
        plain = arr.step_normality(s)
        normalized = arr.step_normality(s, normalized=True)
        assert plain != normalized
        # Plain: (1/0.5)/16. Normalized: (1/0.5) / (sum of corner weights).
        assert plain == pytest.approx(2.0 / 16.0)
        assert normalized < 1.0

    def test_bitwise_determinism_same_order(self):
        rng = np.random.default_rng(13)
        steps = [
            step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                 vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5))
            for _ in range(50)
        ]
        queries = steps[::5]
        a = NormalityArray(TRANSFORM)
        b = NormalityArray(TRANSFORM)
        for s in steps:
            a.deposit(s)
            b.deposit(s)
        np.testing.assert_array_equal(a.values, b.values)
        for q in queries:
            assert a.step_normality(q) == b.step_normality(q)  # bit-for-bit

    def test_monotone_in_deposits(self):
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(3)
        queries = [
            step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                 vx=rng.uniform(-2, 2), vy=rng.uniform(-2, 2))
            for _ in range(25)
        ]
        previous = [arr.step_normality(q) for q in queries]
        for _ in range(20):
            arr.deposit(step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                             vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5)))
            current = [arr.step_normality(q) for q in queries]
            assert all(c >= p - 1e-15 for c, p in zip(current, previous))
            previous = current


class TestTrajectoryNormality:
    def test_identical_steps_equal_single(self):
        arr = NormalityArray(TRANSFORM)
        arr.deposit(step(x=8.0, y=9.0))
        s = step(x=8.2, y=9.1, vx=1.5)
        assert arr.trajectory_normality([s, s, s]) == pytest.approx(
            arr.step_normality(s)
        )

    def test_empty_raises(self):
        arr = NormalityArray(TRANSFORM)
        with pytest.raises(EmptySteps):
            arr.trajectory_normality([])

    def test_concatenation_identity(self):
        arr = NormalityArray(TRANSFORM)
        rng = np.random.default_rng(10)
        arr.values[...] = rng.uniform(0, 1, size=arr.values.shape)
        a = [step(x=rng.uniform(0, 20), y=rng.uniform(0, 20)) for _ in range(7)]
        b = [step(x=rng.uniform(0, 20), y=rng.uniform(0, 20)) for _ in range(13)]
        combined = arr.trajectory_normality(a + b)
        weighted = (
            7 * arr.trajectory_normality(a) + 13 * arr.trajectory_normality(b)
        ) / 20
        assert combined == pytest.approx(weighted, rel=1e-12)

    def test_corridor_training_separates_corridors(self):
        # Trained on corridor A only, a corridor-A walk outscores the
        # same-speed walk along untrained corridor B.
        arr = NormalityArray(TRANSFORM)

        def corridor_steps(y):
            return [
                step(x=2.0 + 0.75 * i, y=y, vx=1.5, vy=0.0, t=0.25 + 0.5 * i)
                for i in range(22)
            ]

        for _ in range(10):
            for s in corridor_steps(5.0):
                arr.deposit(s)
        score_a = arr.trajectory_normality(corridor_steps(5.0))
        score_b = arr.trajectory_normality(corridor_steps(15.0))
        assert score_a > score_b


class TestResample:
    def test_linear_walk_15fps(self):
        # 5 s at 15 fps, constant (1, 0) m/s: 10 steps, velocities exact.
        pts = [(i / 15.0, i / 15.0, 2.0) for i in range(75)]
        steps = resample(pts)
        assert len(steps) == 10
        for s in steps:
            assert abs(s.vx - 1.0) < 1e-6
            assert abs(s.vy) < 1e-6
        deltas = np.diff([s.t for s in steps])
        assert np.allclose(deltas, 0.5, atol=1e-12)

    def test_stationary(self):
        pts = [(i * 0.1, 3.0, 4.0) for i in range(40)]
        for s in resample(pts):
            assert s.vx == 0.0 and s.vy == 0.0
            assert s.x == 3.0 and s.y == 4.0

    def test_samples_on_bin_boundaries_pass_through(self):
        pts = [(0.5 * i, float(i), float(2 * i)) for i in range(8)]
        steps = resample(pts)
        assert len(steps) == 8
        for i, s in enumerate(steps):
            assert s.x == float(i) and s.y == float(2 * i)

    def test_first_velocity_copies_second(self):
        pts = [(i / 10.0, (i / 10.0) ** 2, 0.0) for i in range(30)]
        steps = resample(pts)
        assert steps[0].vx == steps[1].vx
        assert steps[0].vy == steps[1].vy

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            resample([(0.0, 1.0, 1.0)])

    def test_large_gap_raises(self):
        pts = [(0.0, 0.0, 0.0), (0.3, 0.3, 0.0), (3.0, 3.0, 0.0)]
        with pytest.raises(EmptyBins):
            resample(pts)

    def test_split_on_gaps(self):
        pts = [(0.0, 0.0, 0.0), (0.3, 0.3, 0.0), (3.0, 3.0, 0.0), (3.2, 3.2, 0.0)]
        segments = split_on_gaps(pts)
        assert [len(s) for s in segments] == [2, 2]

    def test_small_gap_interpolated(self):
        # 1.4 s dropout (< 2 s): bins 1 and 2 are empty and get linearly
        # interpolated between the surrounding bin centroids.
        pts = [(0.0, 0.0, 0.0), (0.2, 0.2, 0.0), (0.4, 0.4, 0.0),
               (1.8, 1.8, 0.0), (2.0, 2.0, 0.0), (2.2, 2.2, 0.0)]
        steps = resample(pts)
        assert len(steps) == 5
        assert np.allclose(np.diff([s.t for s in steps]), 0.5)
        c0 = (0.0 + 0.2 + 0.4) / 3  # bin 0 centroid
        c3 = 1.8  # bin 3 centroid
        assert steps[1].x == pytest.approx(c0 + (c3 - c0) / 3)
        assert steps[2].x == pytest.approx(c0 + 2 * (c3 - c0) / 3)


class TestThreshold:
    def test_obvious_gap(self):
        values = [0.05] * 10 + [0.5] * 90
        theta = detect_threshold(values)
        assert 0.05 < theta < 0.5
        assert np.mean(np.asarray(values) < theta) == pytest.approx(0.10)

    def test_gapless_uniform_falls_back_to_quantile(self):
        values = np.linspace(0.0, 1.0, 200)
        theta = detect_threshold(values)
        assert theta == pytest.approx(float(np.quantile(values, 0.10)))

    def test_bimodal_with_gap_at_014(self):
        # Low cluster below 0.10, main mass from 0.18 up: the empty band
        # is centered near 0.14.
        rng = np.random.default_rng(140)
        low = rng.uniform(0.02, 0.10, size=10)
        high = rng.uniform(0.18, 0.92, size=90)
        theta = detect_threshold(np.concatenate([low, high]))
        assert 0.12 <= theta <= 0.16

    def test_too_few_values(self):
        with pytest.raises(TooFewValues):
            detect_threshold([0.1] * 9)

    def test_all_zero_values(self):
        assert detect_threshold([0.0] * 20) == 0.0


class TestTrainingRing:
    @staticmethod
    def _random_steps(rng, n=8):
        return [
            step(x=rng.uniform(0, 20), y=rng.uniform(0, 20),
                 vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5))
            for _ in range(n)
        ]

    def test_capacity_one_evicts(self):
        rng = np.random.default_rng(6)
        a, b = self._random_steps(rng), self._random_steps(rng)
        arr = NormalityArray(TRANSFORM)
        ring = TrainingRing(capacity=1)
        ring.insert(arr, a)
        ring.insert(arr, b)
        only_b = NormalityArray(TRANSFORM)
        for s in b:
            only_b.deposit(s)
        assert np.abs(arr.values - only_b.values).max() < 1e-9

    def test_capacity_n_no_eviction(self):
        rng = np.random.default_rng(7)
        arr = NormalityArray(TRANSFORM)
        ring = TrainingRing(capacity=5)
        for _ in range(5):
            ring.insert(arr, self._random_steps(rng))
        assert len(ring) == 5

    def test_random_sequence_matches_rebuild(self):
        rng = np.random.default_rng(8)
        arr = NormalityArray(TRANSFORM)
        ring = TrainingRing(capacity=8)
        history = []
        for _ in range(30):
            steps = self._random_steps(rng, n=int(rng.integers(2, 12)))
            ring.insert(arr, steps)
            history.append(steps)
        rebuilt = NormalityArray(TRANSFORM)
        for steps in history[-8:]:
            for s in steps:
                rebuilt.deposit(s)
        assert np.abs(arr.values - rebuilt.values).max() < 1e-9


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        model = NormalityModel.create(TRANSFORM, ring_capacity=4)
        for _ in range(6):
            model.train(TestTrainingRing._random_steps(rng))
        path = tmp_path / "model.atrm"
        model.save(path)
        loaded = NormalityModel.load(path)
        np.testing.assert_array_equal(loaded.array.values, model.array.values)
        assert loaded.ring.capacity == model.ring.capacity
        assert len(loaded.ring) == len(model.ring)
        s = step(x=4.0, y=16.0, vx=1.0, vy=-0.5)
        assert loaded.array.step_normality(s) == model.array.step_normality(s)

    def test_loaded_ring_keeps_evicting(self, tmp_path):
        rng = np.random.default_rng(10)
        model = NormalityModel.create(TRANSFORM, ring_capacity=2)
        t1, t2, t3 = (TestTrainingRing._random_steps(rng) for _ in range(3))
        model.train(t1)
        model.train(t2)
        path = tmp_path / "model.atrm"
        model.save(path)
        loaded = NormalityModel.load(path)
        loaded.train(t3)  # must evict t1 via the records from the file
        rebuilt = NormalityModel.create(TRANSFORM, ring_capacity=2)
        rebuilt.train(t2)
        rebuilt.train(t3)
        assert np.abs(loaded.array.values - rebuilt.array.values).max() < 1e-6

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.atrm"
        path.write_bytes(b"NOPE!" + b"\x00" * 100)
        with pytest.raises(nz.SnapshotError):
            NormalityModel.load(path)

    def test_truncated(self, tmp_path):
        model = NormalityModel.create(TRANSFORM)
        data = model.dumps()
        path = tmp_path / "model.atrm"
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(nz.SnapshotError):
            NormalityModel.load(path)

    def test_magic_matches_format_version(self):
        model = NormalityModel.create(TRANSFORM)
        assert model.dumps()[:5] == b"ATRM1"
