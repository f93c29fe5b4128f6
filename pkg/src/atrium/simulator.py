"""Synthetic scene generator with labeled ground truth.

Agents move on the ground plane of a rectangular hall and are observed as
noisy blob detections at a fixed frame rate.  Walkers head door-to-door
in straight lines (the normal population); scribblers trace text with a
built-in single-stroke font, loiterers dwell around a spot, and runners
sprint -- the atypical population.

Observation model per frame:
  * true position = scripted path + sinusoidal lateral sway (2 Hz,
    0.1 m amplitude by default -- overhead views of walking people
    oscillate; the sway is part of the true motion and shows up in
    ground truth),
  * detection = true position + isotropic Gaussian noise,
  * agents closer than `merge_distance` fuse into a single detection at
    their midpoint with doubled blob size,
  * each detection is dropped independently with `dropout_prob`.

Everything is driven by one seeded generator: identical configuration
gives bit-identical frames and truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from .tracking import Detection


class UnsupportedGlyph(Exception):
    """Character missing from the single-stroke font."""


class AgentKind(Enum):
    WALKER = "walker"
    SCRIBBLER = "scribbler"
    LOITERER = "loiterer"
    RUNNER = "runner"


LABEL_NORMAL = "normal"
LABEL_ATYPICAL = "atypical"

SWAY_FREQUENCY_HZ = 2.0


@dataclass
class SceneConfig:
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0)
    doors: list[tuple[float, float]] = field(
        default_factory=lambda: [(0.5, 10.0), (19.5, 10.0), (10.0, 0.5), (10.0, 19.5)]
    )
    frame_rate: float = 15.0
    detection_noise_sigma: float = 0.12
    dropout_prob: float = 0.0
    merge_distance: float = 0.35
    sway_amplitude: float = 0.1
    blob_size: float = 0.25  # m^2 for a single person
    seed: int = 0

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.detection_noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")


@dataclass
class AgentScript:
    kind: AgentKind
    spawn_time: float = 0.0
    speed: float = 1.4  # m/s along the path
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    text: str = ""  # scribbler message
    origin: tuple[float, float] = (10.0, 10.0)
    scale: float = 1.0
    dwell: float = 10.0  # loiterer duration, s
    sway: bool = True

    @property
    def label(self) -> str:
        return LABEL_NORMAL if self.kind is AgentKind.WALKER else LABEL_ATYPICAL


@dataclass
class GroundTruth:
    agent_id: int
    kind: AgentKind
    label: str
    points: list[tuple[float, float, float]]  # (t, x, y)


# ---------------------------------------------------------------------------
# Single-stroke font: each glyph is one polyline in a 1 x 2 em box (width x
# height), drawable without lifting the pen; retraced segments count toward
# the stroke length.  Advance between glyph origins is 1.4 em.

GLYPH_ADVANCE = 1.4

FONT: dict[str, list[tuple[float, float]]] = {
    "A": [(0.0, 0.0), (0.5, 2.0), (1.0, 0.0), (0.75, 1.0), (0.25, 1.0)],
    "C": [(1.0, 1.8), (0.5, 2.0), (0.0, 1.5), (0.0, 0.5), (0.5, 0.0), (1.0, 0.2)],
    "E": [(1.0, 2.0), (0.0, 2.0), (0.0, 1.0), (0.7, 1.0), (0.0, 1.0), (0.0, 0.0), (1.0, 0.0)],
    "H": [(0.0, 2.0), (0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (1.0, 0.0)],
    "I": [(0.5, 2.0), (0.5, 0.0)],
    "L": [(0.0, 2.0), (0.0, 0.0), (1.0, 0.0)],
    "M": [(0.0, 0.0), (0.0, 2.0), (0.5, 1.0), (1.0, 2.0), (1.0, 0.0)],
    "N": [(0.0, 0.0), (0.0, 2.0), (1.0, 0.0), (1.0, 2.0)],
    "O": [(0.5, 2.0), (0.0, 1.5), (0.0, 0.5), (0.5, 0.0), (1.0, 0.5), (1.0, 1.5), (0.5, 2.0)],
    "S": [(1.0, 1.8), (0.5, 2.0), (0.0, 1.6), (1.0, 0.4), (0.5, 0.0), (0.0, 0.2)],
    "T": [(0.0, 2.0), (1.0, 2.0), (0.5, 2.0), (0.5, 0.0)],
    "U": [(0.0, 2.0), (0.0, 0.3), (0.5, 0.0), (1.0, 0.3), (1.0, 2.0)],
    "V": [(0.0, 2.0), (0.5, 0.0), (1.0, 2.0)],
    "W": [(0.0, 2.0), (0.25, 0.0), (0.5, 1.0), (0.75, 0.0), (1.0, 2.0)],
    "X": [(0.0, 2.0), (1.0, 0.0), (0.5, 1.0), (0.0, 0.0), (1.0, 2.0)],
    "Z": [(0.0, 2.0), (1.0, 2.0), (0.0, 0.0), (1.0, 0.0)],
}


def scribble_path(text: str, origin=(0.0, 0.0), scale: float = 1.0) -> list[tuple[float, float]]:
    """Waypoints tracing the text with the single-stroke font.

    The pen never lifts: consecutive glyphs are joined by a straight
    bridge from the previous glyph's last point to the next one's first.
    Spaces advance the cursor without drawing.
    """
    if not text:
        raise ValueError("text must be non-empty")
    waypoints: list[tuple[float, float]] = []
    cursor = 0.0
    for ch in text.upper():
        if ch == " ":
            cursor += GLYPH_ADVANCE * scale
            continue
        if ch not in FONT:
            raise UnsupportedGlyph(f"no glyph for {ch!r}")
        for gx, gy in FONT[ch]:
            waypoints.append((origin[0] + cursor + gx * scale, origin[1] + gy * scale))
        cursor += GLYPH_ADVANCE * scale
    if len(waypoints) < 2:
        raise ValueError("text produced no drawable strokes")
    return waypoints


def _polyline_arclength(waypoints) -> np.ndarray:
    pts = np.asarray(waypoints, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


class _Agent:
    """Evaluates one script as a continuous trajectory p(t)."""

    def __init__(self, agent_id: int, script: AgentScript, rng: np.random.Generator,
                 scene: SceneConfig):
        self.id = agent_id
        self.script = script
        self.sway_phase = rng.uniform(0.0, 2.0 * math.pi)
        if script.kind is AgentKind.SCRIBBLER:
            waypoints = scribble_path(script.text, script.origin, script.scale)
        elif script.kind is AgentKind.LOITERER:
            waypoints = self._loiter_loop(script, rng)
        else:
            waypoints = list(script.waypoints)
        if len(waypoints) < 2:
            raise ValueError(f"agent {agent_id}: need at least 2 waypoints")
        self.waypoints = np.asarray(waypoints, dtype=float)
        self.arclength = _polyline_arclength(self.waypoints)
        self.duration = float(self.arclength[-1] / script.speed)
        self.sway = scene.sway_amplitude if script.sway else 0.0

    @staticmethod
    def _loiter_loop(script: AgentScript, rng: np.random.Generator):
        """Small meandering loop around the origin, long enough to fill
        the dwell time at the scripted speed."""
        cx, cy = script.origin
        total = script.speed * script.dwell
        radius = 0.8
        points = [(cx + radius, cy)]
        angle = 0.0
        length = 0.0
        while length < total:
            angle += rng.uniform(0.8, 1.6)
            r = radius * rng.uniform(0.5, 1.25)
            nxt = (cx + r * math.cos(angle), cy + r * math.sin(angle))
            length += math.hypot(nxt[0] - points[-1][0], nxt[1] - points[-1][1])
            points.append(nxt)
        return points

    def active_at(self, t: float) -> bool:
        local = t - self.script.spawn_time
        return 0.0 <= local <= self.duration

    def position(self, t: float) -> tuple[float, float]:
        """True position at time t (includes lateral sway)."""
        local = t - self.script.spawn_time
        s = np.clip(local * self.script.speed, 0.0, self.arclength[-1])
        k = int(np.searchsorted(self.arclength, s, side="right") - 1)
        k = min(k, len(self.waypoints) - 2)
        seg_len = self.arclength[k + 1] - self.arclength[k]
        frac = (s - self.arclength[k]) / seg_len if seg_len > 0 else 0.0
        p = self.waypoints[k] + frac * (self.waypoints[k + 1] - self.waypoints[k])
        if self.sway > 0.0:
            direction = self.waypoints[k + 1] - self.waypoints[k]
            norm = math.hypot(*direction)
            if norm > 0:
                lateral = np.array([-direction[1], direction[0]]) / norm
                offset = self.sway * math.sin(
                    2.0 * math.pi * SWAY_FREQUENCY_HZ * local + self.sway_phase
                )
                p = p + offset * lateral
        return float(p[0]), float(p[1])


def generate(
    scene: SceneConfig, agents: list[AgentScript], duration: float
) -> tuple[list[tuple[float, list[Detection]]], list[GroundTruth]]:
    """Simulate `duration` seconds; returns per-frame detections and the
    labeled ground truth (one trajectory per agent, sway included, noise
    and merging excluded)."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(scene.seed)
    live = [_Agent(i, script, rng, scene) for i, script in enumerate(agents)]
    truths = [GroundTruth(a.id, a.script.kind, a.script.label, []) for a in live]

    n_frames = int(round(duration * scene.frame_rate))
    frames: list[tuple[float, list[Detection]]] = []
    for frame in range(n_frames):
        t = frame / scene.frame_rate
        positions: list[tuple[int, float, float]] = []
        for agent, truth in zip(live, truths):
            if not agent.active_at(t):
                continue
            x, y = agent.position(t)
            truth.points.append((t, x, y))
            positions.append((agent.id, x, y))

        detections = _observe(positions, scene, t, rng)
        frames.append((t, detections))
    return frames, [tr for tr in truths if tr.points]


def _observe(positions, scene: SceneConfig, t: float, rng: np.random.Generator):
    """Noise, pairwise merging, and dropout for one frame."""
    merged: list[tuple[float, float, float]] = []  # (x, y, size)
    used = [False] * len(positions)
    for i in range(len(positions)):
        if used[i]:
            continue
        _, xi, yi = positions[i]
        partner = None
        for j in range(i + 1, len(positions)):
            if used[j]:
                continue
            _, xj, yj = positions[j]
            if math.hypot(xi - xj, yi - yj) < scene.merge_distance:
                partner = j
                break
        if partner is None:
            merged.append((xi, yi, scene.blob_size))
        else:
            _, xj, yj = positions[partner]
            used[partner] = True
            merged.append(((xi + xj) / 2.0, (yi + yj) / 2.0, 2.0 * scene.blob_size))
        used[i] = True

    detections = []
    for x, y, size in merged:
        noise = rng.normal(0.0, scene.detection_noise_sigma, size=2)
        dropped = rng.random() < scene.dropout_prob
        if dropped:
            continue
        detections.append(Detection(t=t, x=x + noise[0], y=y + noise[1], size=size))
    return detections


# ---------------------------------------------------------------------------
# Scenario files: JSON with a scene block and a list of agent scripts.


def scenario_to_json(scene: SceneConfig, agents: list[AgentScript], duration: float) -> str:
    payload = {
        "scene": asdict(scene),
        "duration": duration,
        "agents": [
            {**asdict(a), "kind": a.kind.value}
            for a in agents
        ],
    }
    return json.dumps(payload, indent=2)


def scenario_from_json(text: str) -> tuple[SceneConfig, list[AgentScript], float]:
    payload = json.loads(text)
    scene_raw = dict(payload["scene"])
    scene_raw["bounds"] = tuple(scene_raw["bounds"])
    scene_raw["doors"] = [tuple(d) for d in scene_raw.get("doors", [])]
    scene = SceneConfig(**scene_raw)
    agents = []
    for raw in payload["agents"]:
        raw = dict(raw)
        raw["kind"] = AgentKind(raw["kind"])
        raw["waypoints"] = [tuple(w) for w in raw.get("waypoints", [])]
        raw["origin"] = tuple(raw.get("origin", (10.0, 10.0)))
        agents.append(AgentScript(**raw))
    return scene, agents, float(payload["duration"])


def make_crowd_scenario(
    n_walkers: int = 90,
    n_scribblers: int = 10,
    seed: int = 7,
    spread: float = 600.0,
    words: tuple[str, ...] = ("HI", "SOS", "HELLO", "NO", "WOW", "ZEN"),
) -> tuple[SceneConfig, list[AgentScript], float]:
    """Reference mixed-population scenario.

    Walkers commute along the hall's main corridor (between the west and
    east doors, each keeping a personal lane offset like real pedestrian
    traffic), spawning one by one over `spread` seconds so no two share a
    door at the same moment.  Scribblers write words in the open floor
    north and south of the corridor, starting only after a quarter of the
    spread so the normality model has seen normal traffic first.
    """
    rng = np.random.default_rng(seed)
    scene = SceneConfig(seed=seed)
    west, east = (1.0, 10.0), (19.0, 10.0)
    agents: list[AgentScript] = []
    for i in range(n_walkers):
        frac = i / max(n_walkers - 1, 1)
        lane = float(rng.uniform(-0.8, 0.8))
        src, dst = (west, east) if i % 2 == 0 else (east, west)
        agents.append(
            AgentScript(
                kind=AgentKind.WALKER,
                spawn_time=float(spread * frac + rng.uniform(0.0, 2.0)),
                speed=float(rng.uniform(1.1, 1.7)),
                waypoints=[(src[0], src[1] + lane), (dst[0], dst[1] + lane)],
            )
        )
    # Scribblers take evenly spaced slots alternating between the south
    # and north bands, with starting positions cycling across the hall,
    # so two messages rarely overlap in space within the training window.
    slot = spread * 0.65 / max(n_scribblers, 1)
    for i in range(n_scribblers):
        word = words[i % len(words)]
        scale = float(rng.uniform(1.2, 1.8))
        width = len(word) * GLYPH_ADVANCE * scale
        x0 = min(1.5 + ((i // 2) % 3) * 5.5 + float(rng.uniform(0.0, 1.5)),
                 max(18.5 - width, 2.0))
        y0 = float(rng.uniform(2.5, 5.0) if i % 2 == 0 else rng.uniform(13.5, 16.0))
        agents.append(
            AgentScript(
                kind=AgentKind.SCRIBBLER,
                spawn_time=float(spread * 0.25 + i * slot + rng.uniform(0.0, 10.0)),
                speed=float(rng.uniform(0.5, 0.8)),
                text=word,
                origin=(x0, y0),
                scale=scale,
            )
        )
    duration = spread + 120.0
    return scene, agents, duration
