"""The 4-D normality model: grid transform, kernel deposits, scoring,
ring-buffer training set, and threshold detection.

A trajectory is reduced to *steps*: 0.5 s aggregates carrying position
and velocity (x, y, vx, vy).  Each step deposits a truncated Gaussian
kernel

    K_t(p) = exp(-sum_d (t_d - p_d)^2 / sigma_d^2)

into a dense accumulator grid (default 10 x 10 x 5 x 5 = 2500 cells),
scaled by a velocity weight so that slow movement, which produces many
steps per meter, does not dominate the statistics.  The normality of a
step is the reciprocal-distance-weighted average of the accumulator
entries at the corners of the grid cell containing it:

    n(t) = (1 / |P_t|) * sum_{p in P_t} N(p) / ||t - p||

with P_t the (up to 16) integer corners of the enclosing cell, clipped
at the grid edges.  The weights deliberately do not sum to 1; this is an
accumulation measure, not an interpolation (a normalized variant exists
for experiments, off by default).

Training is a ring buffer of trajectories: inserting into a full ring
first subtracts the oldest trajectory's kernels, so the array always
equals the sum of exactly the ring's contents and the model adapts to
the scene within a bounded window.
"""

from __future__ import annotations

import io
import math
import struct
import uuid
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _dispatch

SNAPSHOT_MAGIC = b"ATRM1"
STEP_SECONDS = 0.5
MAX_GAP_SECONDS = 2.0
DEFAULT_DIMS = (10, 10, 5, 5)
DEFAULT_SIGMA = (1.0, 1.0, 0.5, 0.5)
DEFAULT_TRUNCATION_RADIUS = 3.0  # grid cells per axis
REFERENCE_STEP_LENGTH = 1.0  # m travelled per step at full weight
DEFAULT_RING_CAPACITY = 500


class TooFewPoints(Exception):
    """Resampling needs at least two raw points spanning two bins."""


class EmptyBins(Exception):
    """A gap above MAX_GAP_SECONDS; split the trajectory first."""


class EmptySteps(Exception):
    """Trajectory normality over zero steps is undefined."""


class TooFewValues(Exception):
    """Threshold detection needs at least 10 values."""


class UnknownRecord(Exception):
    """Withdrawal record does not belong to this array."""


@dataclass(frozen=True)
class TrajectoryStep:
    """One 0.5 s aggregate: position, velocity, bin midpoint time."""

    x: float
    y: float
    vx: float
    vy: float
    t: float

    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class GridTransform:
    """Affine map between trajectory space and grid space.

    Positions map the scene box onto cell coordinates with cell centers
    at the integers 0..N-1 (so x_min lands at -0.5 and x_max at N-0.5);
    velocities are clamped to +-v_max and mapped linearly onto the outer
    cell centers 0..Nv-1.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    v_max: float
    dims: tuple[int, int, int, int] = DEFAULT_DIMS

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("position box must have positive extent")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if any(n < 2 for n in self.dims):
            raise ValueError("all grid dimensions must be >= 2")

    def to_grid(self, step: TrajectoryStep) -> np.ndarray:
        nx, ny, nvx, nvy = self.dims
        gx = (step.x - self.x_min) / (self.x_max - self.x_min) * nx - 0.5
        gy = (step.y - self.y_min) / (self.y_max - self.y_min) * ny - 0.5
        vx = min(max(step.vx, -self.v_max), self.v_max)
        vy = min(max(step.vy, -self.v_max), self.v_max)
        gvx = (vx + self.v_max) / (2.0 * self.v_max) * (nvx - 1)
        gvy = (vy + self.v_max) / (2.0 * self.v_max) * (nvy - 1)
        return np.array([gx, gy, gvx, gvy])

    def from_grid(self, g) -> TrajectoryStep:
        """Inverse of to_grid (velocities only invert inside the clamp)."""
        nx, ny, nvx, nvy = self.dims
        x = (g[0] + 0.5) / nx * (self.x_max - self.x_min) + self.x_min
        y = (g[1] + 0.5) / ny * (self.y_max - self.y_min) + self.y_min
        vx = g[2] / (nvx - 1) * 2.0 * self.v_max - self.v_max
        vy = g[3] / (nvy - 1) * 2.0 * self.v_max - self.v_max
        return TrajectoryStep(x=x, y=y, vx=vx, vy=vy, t=0.0)


def kernel(t_grid, p, sigma=DEFAULT_SIGMA) -> float:
    """Gaussian kernel between a grid-space point and an integer grid
    position: exp(-sum((t - p)^2 / sigma^2)), no factor 2."""
    exponent = sum((float(t_grid[d]) - float(p[d])) ** 2 / sigma[d] ** 2 for d in range(4))
    return math.exp(-exponent)


def velocity_weight(step: TrajectoryStep) -> float:
    """Deposit weight from the step's velocity: displacement per step over
    the 1 m reference, capped at 1.  Slow movers deposit less so standing
    around does not accumulate into apparent normality."""
    return min(step.speed() * STEP_SECONDS / REFERENCE_STEP_LENGTH, 1.0)


@dataclass(frozen=True)
class DepositRecord:
    """Everything needed to subtract a deposit exactly later."""

    center: tuple[float, float, float, float]
    weight: float
    array_token: str


class NormalityArray:
    """Dense 4-D accumulator plus its coordinate transform."""

    def __init__(
        self,
        transform: GridTransform,
        sigma=DEFAULT_SIGMA,
        truncation_radius: float = DEFAULT_TRUNCATION_RADIUS,
        backend: str = "auto",
    ):
        self.transform = transform
        self.sigma = tuple(float(s) for s in sigma)
        self.truncation_radius = float(truncation_radius)
        self.values = np.zeros(transform.dims, dtype=np.float64)
        self._sigma_arr = np.asarray(self.sigma, dtype=np.float64)
        self._kernels = _dispatch.get_backend(backend)
        self._token = uuid.uuid4().hex

    @property
    def cell_count(self) -> int:
        return int(self.values.size)

    @property
    def backend(self) -> str:
        return self._kernels.BACKEND

    def deposit(self, step: TrajectoryStep) -> DepositRecord:
        """Add the step's weighted kernel over the truncation window."""
        center = self.transform.to_grid(step)
        weight = velocity_weight(step)
        if weight > 0.0:
            self._kernels.splat(
                self.values, center, self._sigma_arr, weight, self.truncation_radius
            )
        return DepositRecord(tuple(float(c) for c in center), weight, self._token)

    def withdraw(self, record: DepositRecord) -> None:
        """Subtract a previous deposit by recomputing its kernel terms."""
        if record.array_token != self._token:
            raise UnknownRecord("record was not produced by this array")
        if record.weight == 0.0:
            return
        center = np.asarray(record.center, dtype=np.float64)
        self._kernels.splat(
            self.values, center, self._sigma_arr, -record.weight, self.truncation_radius
        )
        # Roundoff can leave ~-1e-16 residue in cancelled cells.
        np.clip(self.values, 0.0, None, out=self.values)

    def step_normality(self, step: TrajectoryStep, normalized: bool = False) -> float:
        """Reciprocal-distance-weighted corner average at the step.

        The default divides by the corner count, so the weights do not
        sum to 1 and the value scales with the local accumulated mass
        (an accumulation measure, not an interpolation).  The normalized
        variant divides by the summed weights instead; it exists for
        experiments and is off everywhere by default.
        """
        point = self.transform.to_grid(step)
        if not normalized:
            return float(self._kernels.score_step(self.values, point))
        base = [math.floor(point[d]) for d in range(4)]
        total = 0.0
        weight_sum = 0.0
        for m in range(16):
            p = [base[d] + ((m >> d) & 1) for d in range(4)]
            if any(p[d] < 0 or p[d] >= self.values.shape[d] for d in range(4)):
                continue
            w = 1.0 / max(math.sqrt(sum((point[d] - p[d]) ** 2 for d in range(4))), 1e-6)
            total += w * float(self.values[p[0], p[1], p[2], p[3]])
            weight_sum += w
        return total / weight_sum if weight_sum > 0.0 else 0.0

    def trajectory_normality(self, steps, normalized: bool = False) -> float:
        """Arithmetic mean of the step normalities."""
        steps = list(steps)
        if not steps:
            raise EmptySteps("trajectory has no steps")
        return float(np.mean([self.step_normality(s, normalized) for s in steps]))

    def adopt_records(self, records) -> list[DepositRecord]:
        """Re-bind records loaded from a snapshot to this array."""
        return [
            DepositRecord(rec.center, rec.weight, self._token) for rec in records
        ]


class TrainingRing:
    """Fixed-capacity store of per-trajectory deposit records.

    The paired array always equals the sum of exactly the ring slots:
    inserting into a full ring withdraws the oldest slot first.
    """

    def __init__(self, capacity: int = DEFAULT_RING_CAPACITY):
        if capacity < 1:
            raise ValueError("ring capacity must be >= 1")
        self.capacity = capacity
        self.slots: deque[list[DepositRecord]] = deque()

    def __len__(self) -> int:
        return len(self.slots)

    def insert(self, array: NormalityArray, steps) -> list[DepositRecord]:
        """Deposit a trajectory's steps, evicting the oldest slot if full."""
        if len(self.slots) >= self.capacity:
            for record in self.slots.popleft():
                array.withdraw(record)
        records = [array.deposit(step) for step in steps]
        self.slots.append(records)
        return records


def ring_update(ring: TrainingRing, array: NormalityArray, steps) -> None:
    ring.insert(array, steps)


# ---------------------------------------------------------------------------
# Resampling raw trajectories into steps.


def split_on_gaps(points, max_gap: float = MAX_GAP_SECONDS):
    """Split a raw (t, x, y) sequence wherever consecutive samples are
    more than max_gap apart."""
    points = list(points)
    if not points:
        return []
    segments = [[points[0]]]
    for prev, cur in zip(points, points[1:]):
        if cur[0] - prev[0] > max_gap:
            segments.append([cur])
        else:
            segments[-1].append(cur)
    return segments


def resample(points) -> list[TrajectoryStep]:
    """Aggregate raw (t, x, y) samples into steps on an exact 0.5 s grid.

    Positions are averaged within each half-second bin; interior bins
    left empty by short dropouts (raw gap <= 2 s) are filled by linear
    interpolation between neighboring bin centroids.  Velocities are
    finite differences of consecutive centroids over 0.5 s, the first
    step copying the second.  Raw gaps above 2 s raise EmptyBins: split
    with split_on_gaps first.
    """
    pts = [(float(t), float(x), float(y)) for t, x, y in points]
    if len(pts) < 2:
        raise TooFewPoints("need at least 2 raw points")
    for prev, cur in zip(pts, pts[1:]):
        if cur[0] <= prev[0]:
            raise ValueError("raw timestamps must be strictly increasing")
        if cur[0] - prev[0] > MAX_GAP_SECONDS:
            raise EmptyBins(
                f"gap of {cur[0] - prev[0]:.2f} s at t={prev[0]:.2f}; "
                "split the trajectory first"
            )

    t0 = pts[0][0]
    n_bins = int(math.floor((pts[-1][0] - t0) / STEP_SECONDS)) + 1
    sums = np.zeros((n_bins, 2))
    counts = np.zeros(n_bins, dtype=int)
    for t, x, y in pts:
        k = min(int(math.floor((t - t0) / STEP_SECONDS)), n_bins - 1)
        sums[k] += (x, y)
        counts[k] += 1

    centroids = np.full((n_bins, 2), np.nan)
    filled = counts > 0
    centroids[filled] = sums[filled] / counts[filled, None]

    # Interpolate interior empty bins (gap <= 2 s guaranteed above).
    if not filled.all():
        idx = np.arange(n_bins)
        for axis in range(2):
            centroids[~filled, axis] = np.interp(
                idx[~filled], idx[filled], centroids[filled, axis]
            )

    if n_bins < 2:
        raise TooFewPoints("trajectory spans fewer than 2 bins")

    velocities = np.empty_like(centroids)
    velocities[1:] = (centroids[1:] - centroids[:-1]) / STEP_SECONDS
    velocities[0] = velocities[1]

    return [
        TrajectoryStep(
            x=float(centroids[k, 0]),
            y=float(centroids[k, 1]),
            vx=float(velocities[k, 0]),
            vy=float(velocities[k, 1]),
            t=t0 + STEP_SECONDS * k + STEP_SECONDS / 2.0,
        )
        for k in range(n_bins)
    ]


def resample_trajectory(points) -> list[TrajectoryStep]:
    """Gap-tolerant resampling: split on >2 s gaps, resample each segment,
    skip segments too short to carry velocity."""
    steps: list[TrajectoryStep] = []
    for segment in split_on_gaps(points):
        try:
            steps.extend(resample(segment))
        except TooFewPoints:
            continue
    return steps


# ---------------------------------------------------------------------------
# Threshold detection.

HISTOGRAM_BINS = 50
TARGET_WIDTH = 0.05  # std of the target-fraction preference


def detect_threshold(values, target_fraction: float = 0.10) -> float:
    """Classification cutoff from the normality-value histogram.

    Builds a 50-bin histogram over [0, max].  Candidate thresholds are
    the centers of maximal runs of empty bins; each is scored by
    gap_width * exp(-(q - target)^2 / (2 * 0.05^2)) where q is the
    fraction of values below the candidate.  Without any gap, falls back
    to the target-fraction quantile.
    """
    vals = np.asarray(list(values), dtype=float)
    if len(vals) < 10:
        raise TooFewValues("need at least 10 values")
    vmax = float(vals.max())
    if vmax <= 0.0:
        return float(np.quantile(vals, target_fraction))
    counts, edges = np.histogram(vals, bins=HISTOGRAM_BINS, range=(0.0, vmax))

    candidates = []
    run_start = None
    for i, c in enumerate(list(counts) + [1]):  # sentinel closes a trailing run
        if c == 0 and run_start is None:
            run_start = i
        elif c != 0 and run_start is not None:
            lo, hi = edges[run_start], edges[i]
            candidates.append(((lo + hi) / 2.0, hi - lo))
            run_start = None

    if not candidates:
        return float(np.quantile(vals, target_fraction))

    def score(candidate):
        theta, width = candidate
        q = float(np.mean(vals < theta))
        return width * math.exp(-((q - target_fraction) ** 2) / (2.0 * TARGET_WIDTH**2))

    best, _ = max(candidates, key=score)
    return float(best)


# ---------------------------------------------------------------------------
# Snapshot serialization: magic "ATRM1", little-endian, dense values plus
# ring records so training can resume exactly where it stopped.


class SnapshotError(Exception):
    """Snapshot file malformed or of an unknown version."""


@dataclass
class NormalityModel:
    """Array plus its training ring; the unit of persistence."""

    array: NormalityArray
    ring: TrainingRing = field(default_factory=TrainingRing)

    @classmethod
    def create(
        cls,
        transform: GridTransform,
        sigma=DEFAULT_SIGMA,
        truncation_radius: float = DEFAULT_TRUNCATION_RADIUS,
        ring_capacity: int = DEFAULT_RING_CAPACITY,
        backend: str = "auto",
    ) -> "NormalityModel":
        return cls(
            array=NormalityArray(transform, sigma, truncation_radius, backend),
            ring=TrainingRing(ring_capacity),
        )

    def train(self, steps) -> None:
        self.ring.insert(self.array, steps)

    def score(self, steps) -> float:
        return self.array.trajectory_normality(steps)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    def dumps(self) -> bytes:
        arr = self.array
        tr = arr.transform
        buf = io.BytesIO()
        buf.write(SNAPSHOT_MAGIC)
        buf.write(struct.pack("<4I", *tr.dims))
        buf.write(
            struct.pack(
                "<5d", tr.x_min, tr.x_max, tr.y_min, tr.y_max, tr.v_max
            )
        )
        buf.write(struct.pack("<4d", *arr.sigma))
        buf.write(struct.pack("<d", arr.truncation_radius))
        buf.write(struct.pack("<2I", self.ring.capacity, len(self.ring.slots)))
        buf.write(np.ascontiguousarray(arr.values, dtype="<f8").tobytes())
        for slot in self.ring.slots:
            buf.write(struct.pack("<I", len(slot)))
            for rec in slot:
                buf.write(struct.pack("<5d", *rec.center, rec.weight))
        return buf.getvalue()

    @classmethod
    def load(cls, path, backend: str = "auto") -> "NormalityModel":
        with open(path, "rb") as fh:
            return cls.loads(fh.read(), backend=backend)

    @classmethod
    def loads(cls, data: bytes, backend: str = "auto") -> "NormalityModel":
        buf = io.BytesIO(data)

        def read(fmt):
            size = struct.calcsize(fmt)
            raw = buf.read(size)
            if len(raw) != size:
                raise SnapshotError("truncated snapshot")
            return struct.unpack(fmt, raw)

        magic = buf.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError(f"bad magic {magic!r}; expected {SNAPSHOT_MAGIC!r}")
        dims = read("<4I")
        x_min, x_max, y_min, y_max, v_max = read("<5d")
        sigma = read("<4d")
        (truncation_radius,) = read("<d")
        capacity, n_slots = read("<2I")

        transform = GridTransform(x_min, x_max, y_min, y_max, v_max, dims)
        array = NormalityArray(transform, sigma, truncation_radius, backend)
        n_values = int(np.prod(dims))
        raw = buf.read(8 * n_values)
        if len(raw) != 8 * n_values:
            raise SnapshotError("truncated snapshot (values)")
        array.values[...] = np.frombuffer(raw, dtype="<f8").reshape(dims)

        ring = TrainingRing(capacity)
        for _ in range(n_slots):
            (n_records,) = read("<I")
            slot = []
            for _ in range(n_records):
                *center, weight = read("<5d")
                slot.append(DepositRecord(tuple(center), weight, array._token))
            ring.slots.append(slot)
        return cls(array=array, ring=ring)
