"""End-to-end engine: detections in, scored trajectories and sessions out.

Frame loop contract: frames arrive in timestamp order and are pushed
through the tracker; when a track is definitively finished (terminated
and past the reconnection grace window) it is

  1. described (shape features + rule label),
  2. resampled into 0.5 s steps,
  3. scored against the normality array as it stands -- before the
     trajectory itself is trained in, so nothing certifies itself as
     normal,
  4. deposited into the ring-buffer training set (unless training is
     frozen), and
  5. appended to the day's session.

After a batch run the collected scores drive automatic threshold
detection and, when ground truth is available, a confusion matrix.
For live use the engine also re-scores running tracks every few seconds;
those numbers are provisional by construction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import normality
from .features import (
    FeatureVector,
    RuleThresholds,
    TooFewPoints,
    classify_rules,
    compute_features,
    tortuosity,
)
from .normality import GridTransform, NormalityModel, resample_trajectory
from .simulator import GroundTruth
from .storage import SessionManager, TrackRecord
from .tracking import Detection, Track, Tracker, TrackerConfig

log = logging.getLogger(__name__)

LABEL_NORMAL = "normal"
LABEL_ATYPICAL = "atypical"

PROVISIONAL_INTERVAL = 5.0  # seconds between live re-scores


class ConfigError(Exception):
    """Engine configuration rejected."""


@dataclass
class PipelineConfig:
    scene_bounds: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    grid_dims: tuple[int, int, int, int] = normality.DEFAULT_DIMS
    grid_v_max: float = 2.5
    sigma: tuple[float, float, float, float] = normality.DEFAULT_SIGMA
    truncation_radius: float = normality.DEFAULT_TRUNCATION_RADIUS
    ring_capacity: int = normality.DEFAULT_RING_CAPACITY
    target_fraction: float = 0.10
    rule_thresholds: RuleThresholds = field(default_factory=RuleThresholds)
    train: bool = True
    backend: str = "auto"
    provisional_interval: float = PROVISIONAL_INTERVAL  # live re-score cadence, s

    def __post_init__(self):
        x0, y0, x1, y1 = self.scene_bounds
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("scene bounds must have positive extent")
        if not 0.0 < self.target_fraction < 1.0:
            raise ConfigError("target_fraction must be in (0, 1)")

    def grid_transform(self) -> GridTransform:
        x0, y0, x1, y1 = self.scene_bounds
        return GridTransform(x0, x1, y0, y1, self.grid_v_max, self.grid_dims)

    def make_model(self) -> NormalityModel:
        return NormalityModel.create(
            self.grid_transform(),
            sigma=self.sigma,
            truncation_radius=self.truncation_radius,
            ring_capacity=self.ring_capacity,
            backend=self.backend,
        )


@dataclass
class TrajectoryRecord:
    track_id: int
    start_t: float
    end_t: float
    n_raw_points: int
    features: FeatureVector | None
    rule_label: str | None
    normality: float | None
    n_steps: int
    truth_agent: int | None = None
    truth_label: str | None = None
    label: str | None = None  # thresholded classification, set at finalize

    @property
    def scoreable(self) -> bool:
        return self.normality is not None


@dataclass
class RunReport:
    records: list[TrajectoryRecord]
    threshold: float | None
    frames: int
    wall_seconds: float
    confusion: dict[str, int] | None = None
    agent_outcomes: dict[int, tuple[str, str]] | None = None  # truth label, predicted

    @property
    def fps(self) -> float:
        return self.frames / self.wall_seconds if self.wall_seconds > 0 else float("inf")

    def summary(self) -> str:
        lines = [
            f"frames processed      : {self.frames}",
            f"wall time             : {self.wall_seconds:.2f} s "
            f"({self.fps:.1f} fps)",
            f"trajectories          : {len(self.records)}",
            f"scoreable             : {sum(1 for r in self.records if r.scoreable)}",
            f"threshold             : "
            + (f"{self.threshold:.6f}" if self.threshold is not None else "n/a"),
        ]
        n_atypical = sum(1 for r in self.records if r.label == LABEL_ATYPICAL)
        lines.append(f"classified atypical   : {n_atypical}")
        if self.confusion is not None:
            c = self.confusion
            lines.append(
                "confusion (per agent, atypical = positive): "
                f"tp={c['tp']} fp={c['fp']} tn={c['tn']} fn={c['fn']}"
            )
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "track_id", "start_t", "end_t", "n_points", "n_steps",
                    "d_fit", "dist", "c_rect", "c_main", "rule_label",
                    "normality", "label", "truth_agent", "truth_label",
                ]
            )
            for r in self.records:
                f = r.features
                writer.writerow(
                    [
                        r.track_id,
                        f"{r.start_t:.3f}",
                        f"{r.end_t:.3f}",
                        r.n_raw_points,
                        r.n_steps,
                        f"{f.d_fit:.4f}" if f else "",
                        f"{f.dist:.4f}" if f else "",
                        f"{f.c_rect:.4f}" if f else "",
                        f"{f.c_main:.4f}" if f else "",
                        r.rule_label or "",
                        f"{r.normality:.9f}" if r.normality is not None else "",
                        r.label or "",
                        r.truth_agent if r.truth_agent is not None else "",
                        r.truth_label or "",
                    ]
                )


class Engine:
    """Single-writer frame loop; snapshots for readers are plain data."""

    def __init__(
        self,
        config: PipelineConfig | None = None,
        model: NormalityModel | None = None,
        session_manager: SessionManager | None = None,
    ):
        self.config = config or PipelineConfig()
        tracker_cfg = self.config.tracker
        if tracker_cfg.bounds is None:
            tracker_cfg = replace(tracker_cfg, bounds=self.config.scene_bounds)
        self.tracker = Tracker(tracker_cfg)
        self.model = model if model is not None else self.config.make_model()
        self.sessions = session_manager
        self.records: list[TrajectoryRecord] = []
        self.finished_tracks: dict[int, list[tuple[float, float, float]]] = {}
        self.threshold: float | None = None
        self._provisional: dict[int, float] = {}
        self._last_provisional_t: float | None = None
        self.frames = 0

    # -- frame loop ---------------------------------------------------------

    def process_frame(self, t: float, dets: list[Detection]) -> None:
        events = self.tracker.step(dets, t)
        for event in events:
            if event.kind == "finished":
                self._finish(event.track)
        if (
            self._last_provisional_t is None
            or t - self._last_provisional_t >= self.config.provisional_interval
        ):
            self._rescore_live()
            self._last_provisional_t = t
        self.frames += 1
        if self.sessions is not None:
            self.sessions.maybe_snapshot(time.monotonic())

    def finish_stream(self) -> None:
        """Flush every live track through the finishing path."""
        for event in self.tracker.flush():
            if event.kind == "finished":
                self._finish(event.track)

    def _finish(self, track: Track) -> None:
        points = track.points
        features = rule_label = None
        try:
            features = compute_features(points)
            rule_label = classify_rules(
                features, tortuosity(points), self.config.rule_thresholds
            )
        except TooFewPoints:
            pass

        steps = resample_trajectory(points)
        score = None
        if steps:
            score = self.model.score(steps)  # against the pre-deposit array
            if self.config.train:
                self.model.train(steps)
        self.records.append(
            TrajectoryRecord(
                track_id=track.id,
                start_t=points[0][0],
                end_t=points[-1][0],
                n_raw_points=len(points),
                features=features,
                rule_label=rule_label,
                normality=score,
                n_steps=len(steps),
            )
        )
        self._provisional.pop(track.id, None)
        self.finished_tracks[track.id] = list(points)
        if self.sessions is not None:
            self.sessions.add_track(TrackRecord(track.id, list(points)))

    def _rescore_live(self) -> None:
        scores = {}
        for track in self.tracker.live:
            if not track.was_confirmed:
                continue
            steps = resample_trajectory(track.points)
            if steps:
                scores[track.id] = self.model.score(steps)
        self._provisional = scores

    # -- read-side snapshots --------------------------------------------------

    def provisional_scores(self) -> dict[int, float]:
        return dict(self._provisional)

    def live_snapshot(self) -> list[Track]:
        return self.tracker.snapshot()

    # -- batch finalization ---------------------------------------------------

    def finalize(self) -> float | None:
        """Detect the classification threshold and label every record."""
        self.finish_stream()
        scores = [r.normality for r in self.records if r.normality is not None]
        try:
            self.threshold = normality.detect_threshold(
                scores, self.config.target_fraction
            )
        except normality.TooFewValues:
            self.threshold = None
        for record in self.records:
            if record.normality is None or self.threshold is None:
                record.label = None
            elif record.normality < self.threshold:
                record.label = LABEL_ATYPICAL
            else:
                record.label = LABEL_NORMAL
        return self.threshold


def link_truth(records: list[TrajectoryRecord], truths: list[GroundTruth],
               max_mean_distance: float = 1.0, tracks_by_id=None) -> None:
    """Attach each record to the ground-truth agent it overlaps best.

    A record links to the agent minimizing the mean distance between the
    record's track points and the agent's position at those times
    (linear interpolation); links worse than `max_mean_distance` m are
    refused.  `tracks_by_id` maps record track ids to their point lists.
    """
    if tracks_by_id is None:
        raise ValueError("tracks_by_id is required")
    truth_arrays = []
    for truth in truths:
        arr = np.asarray(truth.points, dtype=float)
        truth_arrays.append((truth, arr[:, 0], arr[:, 1], arr[:, 2]))

    for record in records:
        points = tracks_by_id.get(record.track_id)
        if not points:
            continue
        pts = np.asarray(points, dtype=float)
        best, best_dist = None, float("inf")
        for truth, tt, tx, ty in truth_arrays:
            lo = max(pts[0, 0], tt[0])
            hi = min(pts[-1, 0], tt[-1])
            if hi <= lo:
                continue
            sel = (pts[:, 0] >= lo) & (pts[:, 0] <= hi)
            if not sel.any():
                continue
            ix = np.interp(pts[sel, 0], tt, tx)
            iy = np.interp(pts[sel, 0], tt, ty)
            d = float(np.mean(np.hypot(pts[sel, 1] - ix, pts[sel, 2] - iy)))
            if d < best_dist:
                best, best_dist = truth, d
        if best is not None and best_dist <= max_mean_distance:
            record.truth_agent = best.agent_id
            record.truth_label = best.label


def evaluate_against_truth(
    records: list[TrajectoryRecord], truths: list[GroundTruth]
) -> tuple[dict[str, int], dict[int, tuple[str, str]]]:
    """Per-agent confusion matrix (atypical = positive class).

    A fragmented agent is judged by its dominant fragment (the linked
    record with the most raw points).  Agents with no classified linked
    record are skipped.
    """
    dominant: dict[int, TrajectoryRecord] = {}
    for record in records:
        if record.truth_agent is None or record.label is None:
            continue
        cur = dominant.get(record.truth_agent)
        if cur is None or record.n_raw_points > cur.n_raw_points:
            dominant[record.truth_agent] = record

    confusion = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    outcomes: dict[int, tuple[str, str]] = {}
    by_id = {truth.agent_id: truth for truth in truths}
    for agent_id, record in dominant.items():
        truth = by_id[agent_id]
        outcomes[agent_id] = (truth.label, record.label)
        if truth.label == LABEL_ATYPICAL:
            if record.label == LABEL_ATYPICAL:
                confusion["tp"] += 1
            else:
                confusion["fn"] += 1
        else:
            if record.label == LABEL_ATYPICAL:
                confusion["fp"] += 1
            else:
                confusion["tn"] += 1
    return confusion, outcomes


def run(
    frames,
    config: PipelineConfig | None = None,
    truths: list[GroundTruth] | None = None,
    model: NormalityModel | None = None,
    session_manager: SessionManager | None = None,
) -> RunReport:
    """Process a full detection stream and produce the run report."""
    engine = Engine(config, model=model, session_manager=session_manager)

    t_start = time.perf_counter()
    n_frames = 0
    for t, dets in frames:
        engine.process_frame(t, dets)
        n_frames += 1
    engine.finalize()
    wall = time.perf_counter() - t_start

    report = RunReport(
        records=engine.records,
        threshold=engine.threshold,
        frames=n_frames,
        wall_seconds=wall,
    )
    if truths:
        link_truth(report.records, truths, tracks_by_id=engine.finished_tracks)
        confusion, outcomes = evaluate_against_truth(report.records, truths)
        report.confusion = confusion
        report.agent_outcomes = outcomes
    return report
