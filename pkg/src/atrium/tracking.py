"""Frame-by-frame multi-target tracking on ground-plane detections.

Per frame the tracker:
  1. filters detections (exclusion masks, scene bounds, blob size),
  2. predicts every live track twice -- a constant-velocity Kalman time
     update and a two-point kinematic extrapolation -- and prices each
     track/detection pair at the smaller of the two distances,
  3. solves the gated assignment problem globally (Hungarian),
  4. rejects matches that would imply an implausible speed,
  5. updates matched filters, ages unmatched tracks toward termination,
     and either reconnects leftover detections to recently terminated
     tracks or seeds new tentative ones.

Tracks confirm after `init_hits` consecutive matches and terminate after
`max_misses` consecutive misses.  A terminated track is kept around for
`reconnect_window` seconds; a new detection inside `reconnect_radius` of
its last point resumes it with its full history.  Only after that grace
window does the tracker emit the definitive `finished` event consumed by
downstream scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

# Cost used for gated-out entries; dominates any reachable sum of real costs.
BIG_COST = 1e9


class NonMonotonicTime(Exception):
    """step() was called with a timestamp not after the previous frame."""


@dataclass(frozen=True)
class Detection:
    """One observed object position on the ground plane."""

    t: float
    x: float
    y: float
    size: float = 0.0  # blob extent, m^2
    tag: object = None  # opaque source marker, ignored by the tracker

    def __post_init__(self):
        if not (np.isfinite(self.t) and np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("detection fields must be finite")
        if self.size < 0:
            raise ValueError("detection size must be >= 0")


@dataclass
class TrackerConfig:
    init_hits: int = 4          # consecutive matches to confirm a track
    max_misses: int = 15        # consecutive misses before termination
    v_max: float = 5.0          # m/s, plausibility bound on jumps
    jump_slack: float = 0.5     # m of measurement-noise headroom on the jump gate
    gate_radius: float = 1.5    # m, max prediction-to-detection distance
    reconnect_radius: float = 1.0   # m
    reconnect_window: float = 2.0   # s
    process_noise: float = 2.0      # (m/s^2)^2 white-acceleration scale
    measurement_noise: float = 0.05  # m^2
    bounds: tuple[float, float, float, float] | None = None  # x0, y0, x1, y1
    mask: list[list[tuple[float, float]]] = field(default_factory=list)
    min_size: float = 0.0
    max_size: float = float("inf")


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    TERMINATED = "terminated"


class KalmanFilter:
    """Constant-velocity filter on state (x, y, vx, vy).

    Process noise is the white-acceleration model; the measurement is the
    (x, y) position.  The velocity is initialized by two-point
    differencing of the first two measurements (predictions from a
    guessed velocity are unusable in the initiation stage).  Updates use
    the Joseph form so the covariance stays symmetric PSD under roundoff.
    """

    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])

    def __init__(self, x: float, y: float, q: float, r: float):
        self.state = np.array([x, y, 0.0, 0.0])
        # Position pinned near measurement accuracy, velocity unknown.
        self.cov = np.diag([r, r, 25.0, 25.0])
        self.q = q
        self.r = r
        self._updates = 1
        self._dt_since_update = 0.0

    @staticmethod
    def _f(dt: float) -> np.ndarray:
        f = np.eye(4)
        f[0, 2] = dt
        f[1, 3] = dt
        return f

    def _q(self, dt: float) -> np.ndarray:
        dt2, dt3, dt4 = dt * dt, dt**3, dt**4
        block = np.array([[dt4 / 4.0, dt3 / 2.0], [dt3 / 2.0, dt2]]) * self.q
        q = np.zeros((4, 4))
        q[np.ix_([0, 2], [0, 2])] = block
        q[np.ix_([1, 3], [1, 3])] = block
        return q

    def peek(self, dt: float) -> np.ndarray:
        """Predicted state after dt without committing the time update."""
        return self._f(dt) @ self.state

    def advance(self, dt: float) -> None:
        f = self._f(dt)
        self.state = f @ self.state
        self.cov = f @ self.cov @ f.T + self._q(dt)
        self.cov = 0.5 * (self.cov + self.cov.T)
        self._dt_since_update += dt

    def correct(self, x: float, y: float) -> None:
        z = np.array([x, y])
        if self._updates == 1 and self._dt_since_update > 0:
            self._two_point_init(z, self._dt_since_update)
        else:
            s = self.H @ self.cov @ self.H.T + self.r * np.eye(2)
            k = self.cov @ self.H.T @ np.linalg.inv(s)
            self.state = self.state + k @ (z - self.H @ self.state)
            ikh = np.eye(4) - k @ self.H
            self.cov = ikh @ self.cov @ ikh.T + k @ (self.r * np.eye(2)) @ k.T
            self.cov = 0.5 * (self.cov + self.cov.T)
        self._updates += 1
        self._dt_since_update = 0.0

    def _two_point_init(self, z: np.ndarray, dt: float) -> None:
        """Second measurement: set the velocity by finite differencing.

        The state was advanced with zero velocity, so state[:2] still
        holds the first measured position.  Covariance is the textbook
        two-point differencing form."""
        vel = (z - self.state[:2]) / dt
        self.state = np.array([z[0], z[1], vel[0], vel[1]])
        r, rdt, rdt2 = self.r, self.r / dt, 2.0 * self.r / (dt * dt)
        self.cov = np.array(
            [
                [r, 0.0, rdt, 0.0],
                [0.0, r, 0.0, rdt],
                [rdt, 0.0, rdt2, 0.0],
                [0.0, rdt, 0.0, rdt2],
            ]
        )


@dataclass
class Track:
    id: int
    kalman: KalmanFilter
    points: list[tuple[float, float, float]]  # (t, x, y), filter posteriors
    raw_tail: list[tuple[float, float, float]]  # last two raw detections
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    misses: int = 0
    terminated_at: float | None = None
    was_confirmed: bool = False
    tag: object = None  # tag of the detection that last updated the track

    @property
    def last_point(self) -> tuple[float, float, float]:
        return self.points[-1]

    def kinematic_velocity(self) -> tuple[float, float]:
        """Finite-difference velocity of the last two raw detections."""
        if len(self.raw_tail) < 2:
            return 0.0, 0.0
        (t0, x0, y0), (t1, x1, y1) = self.raw_tail[-2], self.raw_tail[-1]
        dt = t1 - t0
        if dt <= 0:
            return 0.0, 0.0
        return (x1 - x0) / dt, (y1 - y0) / dt


@dataclass(frozen=True)
class TrackEvent:
    kind: str  # started | confirmed | terminated | reconnected | finished
    track: Track
    t: float


@dataclass(frozen=True)
class Assignment:
    pairs: list[tuple[int, int]]  # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_dets: list[int]


def point_in_polygon(x: float, y: float, polygon) -> bool:
    """Even-odd rule; points exactly on an edge count as inside-ish
    (whichever side the crossing parity lands on)."""
    inside = False
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < x_cross:
                inside = not inside
    return inside


def filter_detections(dets: list[Detection], cfg: TrackerConfig) -> list[Detection]:
    """Drop detections in exclusion masks, outside the scene bounds, or of
    implausible blob size."""
    out = []
    for det in dets:
        if not (cfg.min_size <= det.size <= cfg.max_size):
            continue
        if cfg.bounds is not None:
            x0, y0, x1, y1 = cfg.bounds
            if not (x0 <= det.x <= x1 and y0 <= det.y <= y1):
                continue
        if any(point_in_polygon(det.x, det.y, poly) for poly in cfg.mask):
            continue
        out.append(det)
    return out


def predict(track: Track, dt: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Both per-track predictions at now + dt.

    The Kalman prediction is the filter time update; the kinematic one
    extrapolates the last accepted point with the raw two-point velocity
    (zero velocity for single-point tracks).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ks = track.kalman.peek(dt)
    kalman_pred = (float(ks[0]), float(ks[1]))
    _, lx, ly = track.raw_tail[-1]
    vx, vy = track.kinematic_velocity()
    return kalman_pred, (lx + dt * vx, ly + dt * vy)


def solve_gated_assignment(cost: np.ndarray, feasible: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment with forbidden entries.

    Infeasible cells are priced at BIG_COST, so the solver first maximizes
    the number of feasible pairs, then minimizes their total cost; pairs
    landing on forbidden cells are stripped from the result.
    """
    if cost.size == 0:
        return []
    priced = np.where(feasible, cost, BIG_COST)
    rows, cols = linear_sum_assignment(priced)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if feasible[i, j]]


def associate(
    tracks: list[Track], dets: list[Detection], cfg: TrackerConfig, dt: float
) -> Assignment:
    """Globally optimal gated matching on min(kalman, kinematic) distance."""
    if not tracks or not dets:
        return Assignment([], list(range(len(tracks))), list(range(len(dets))))
    cost = np.zeros((len(tracks), len(dets)))
    for i, track in enumerate(tracks):
        (kx, ky), (ex, ey) = predict(track, dt)
        for j, det in enumerate(dets):
            d_kalman = np.hypot(det.x - kx, det.y - ky)
            d_kinematic = np.hypot(det.x - ex, det.y - ey)
            cost[i, j] = min(d_kalman, d_kinematic)
    feasible = cost <= cfg.gate_radius
    pairs = solve_gated_assignment(cost, feasible)
    matched_tracks = {i for i, _ in pairs}
    matched_dets = {j for _, j in pairs}
    return Assignment(
        pairs,
        [i for i in range(len(tracks)) if i not in matched_tracks],
        [j for j in range(len(dets)) if j not in matched_dets],
    )


class Tracker:
    """Mutable tracking state; `step` requires exclusive access."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.live: list[Track] = []
        self.terminated: list[Track] = []  # within the reconnection window
        self.last_t: float | None = None
        self._next_id = 1

    def _new_track(self, det: Detection) -> Track:
        kf = KalmanFilter(det.x, det.y, self.cfg.process_noise, self.cfg.measurement_noise)
        track = Track(
            id=self._next_id,
            kalman=kf,
            points=[(det.t, det.x, det.y)],
            raw_tail=[(det.t, det.x, det.y)],
            tag=det.tag,
        )
        self._next_id += 1
        return track

    def _speed_ok(self, track: Track, det: Detection) -> bool:
        """Jump plausibility: the travelled distance may not exceed what
        v_max allows plus a fixed measurement-noise headroom."""
        t_last, x_last, y_last = track.last_point
        dt = det.t - t_last
        if dt <= 0:
            return False
        dist = np.hypot(det.x - x_last, det.y - y_last)
        return dist <= self.cfg.v_max * dt + self.cfg.jump_slack

    def _append_point(self, track: Track, t: float) -> None:
        """Publish the filter posterior, clamped so the stored trajectory
        never implies a speed above v_max (transients right after the
        two-point init and merge artifacts can overshoot briefly)."""
        x, y = float(track.kalman.state[0]), float(track.kalman.state[1])
        t_prev, x_prev, y_prev = track.points[-1]
        dt = t - t_prev
        if dt > 0:
            dist = np.hypot(x - x_prev, y - y_prev)
            limit = self.cfg.v_max * dt * (1.0 - 1e-9)
            if dist > limit:
                scale = limit / dist
                x = x_prev + (x - x_prev) * scale
                y = y_prev + (y - y_prev) * scale
        track.points.append((t, x, y))

    def step(self, dets: list[Detection], t: float) -> list[TrackEvent]:
        """Run one full frame update; returns lifecycle events."""
        if self.last_t is not None and t <= self.last_t:
            raise NonMonotonicTime(f"frame time {t} not after {self.last_t}")
        dt = t - self.last_t if self.last_t is not None else None
        events: list[TrackEvent] = []

        dets = filter_detections(dets, self.cfg)

        if dt is None:
            # First frame: nothing to associate against.
            assignment = Assignment([], [], list(range(len(dets))))
        else:
            assignment = associate(self.live, dets, self.cfg, dt)

        matched: dict[int, Detection] = {}
        unmatched_dets = [dets[j] for j in assignment.unmatched_dets]
        for i, j in assignment.pairs:
            # Plausibility: reject associations implying too large a jump.
            if self._speed_ok(self.live[i], dets[j]):
                matched[i] = dets[j]
            else:
                unmatched_dets.append(dets[j])

        survivors: list[Track] = []
        for i, track in enumerate(self.live):
            if dt is not None:
                track.kalman.advance(dt)
            if i in matched:
                det = matched[i]
                track.kalman.correct(det.x, det.y)
                self._append_point(track, det.t)
                track.raw_tail = track.raw_tail[-1:] + [(det.t, det.x, det.y)]
                track.hits += 1
                track.misses = 0
                track.tag = det.tag if det.tag is not None else track.tag
                if track.status is TrackStatus.TENTATIVE and track.hits >= self.cfg.init_hits:
                    track.status = TrackStatus.ACTIVE
                    track.was_confirmed = True
                    events.append(TrackEvent("confirmed", track, t))
                survivors.append(track)
            else:
                track.misses += 1
                track.hits = 0
                if track.misses >= self.cfg.max_misses:
                    track.status = TrackStatus.TERMINATED
                    track.terminated_at = t
                    events.append(TrackEvent("terminated", track, t))
                    if track.was_confirmed:
                        self.terminated.append(track)
                else:
                    survivors.append(track)
        self.live = survivors

        for det in unmatched_dets:
            resumed = self._try_reconnect(det, t)
            if resumed is not None:
                events.append(TrackEvent("reconnected", resumed, t))
            else:
                track = self._new_track(det)
                self.live.append(track)
                events.append(TrackEvent("started", track, t))

        events.extend(self._expire_terminated(t))
        self.last_t = t
        return events

    def _try_reconnect(self, det: Detection, t: float) -> Track | None:
        """Resume the newest nearby recently-terminated track, if any."""
        for track in sorted(self.terminated, key=lambda tr: tr.terminated_at, reverse=True):
            if t - track.terminated_at > self.cfg.reconnect_window:
                continue
            _, lx, ly = track.last_point
            if np.hypot(det.x - lx, det.y - ly) > self.cfg.reconnect_radius:
                continue
            if not self._speed_ok(track, det):
                continue
            self.terminated.remove(track)
            gap = det.t - track.last_point[0]
            track.kalman.advance(gap)
            track.kalman.correct(det.x, det.y)
            self._append_point(track, det.t)
            track.raw_tail = track.raw_tail[-1:] + [(det.t, det.x, det.y)]
            track.status = TrackStatus.ACTIVE
            track.hits = 1
            track.misses = 0
            track.terminated_at = None
            track.tag = det.tag if det.tag is not None else track.tag
            self.live.append(track)
            return track
        return None

    def _expire_terminated(self, t: float) -> list[TrackEvent]:
        """Emit `finished` once a terminated track leaves the reconnection
        window and can no longer be resumed."""
        events = []
        still_waiting = []
        for track in self.terminated:
            if t - track.terminated_at > self.cfg.reconnect_window:
                events.append(TrackEvent("finished", track, t))
            else:
                still_waiting.append(track)
        self.terminated = still_waiting
        return events

    def flush(self, t: float | None = None) -> list[TrackEvent]:
        """Terminate and finish everything; call at end of stream."""
        if t is None:
            t = self.last_t if self.last_t is not None else 0.0
        events = []
        for track in self.live:
            track.status = TrackStatus.TERMINATED
            track.terminated_at = t
            events.append(TrackEvent("terminated", track, t))
            if track.was_confirmed:
                events.append(TrackEvent("finished", track, t))
        self.live = []
        for track in self.terminated:
            events.append(TrackEvent("finished", track, t))
        self.terminated = []
        return events

    def snapshot(self) -> list[Track]:
        """Read-only copies of the live tracks for rendering/serving."""
        return [
            replace(track, points=list(track.points), kalman=track.kalman)
            for track in self.live
        ]
