"""Artistic raster renderer for accumulated tracks.

Tracks are polylines with round joints and caps in the day's foreground
color, composited oldest-first over the day's background.  The line
width is the session's day-of-week width scaled from the 1080p
reference, and every track fades exponentially with age:

    alpha(age) = exp(-age / FADE_TAU)

so recent activity stands out while the day's history sinks into the
background.  With a normality model attached, tracks scoring below the
threshold are tinted with the alert color instead of the palette color.

The output is a plain raster (PNG via Pillow); rendering is a pure
function of its inputs, so identical calls produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from PIL import Image, ImageDraw

from .storage import DaySession, TrackRecord

FADE_TAU = 30.0 * 60.0  # seconds
REFERENCE_HEIGHT = 1080
ALERT_COLOR = "#D62828"


def fade_alpha(age: float) -> float:
    """Exponential track fade; clamped to [0, 1], age below 0 counts as 0."""
    return math.exp(-max(age, 0.0) / FADE_TAU)


def parse_color(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


@dataclass(frozen=True)
class CanvasMap:
    """Affine ground-to-canvas mapping (y axis flipped)."""

    bounds: tuple[float, float, float, float]
    size: tuple[int, int]

    def to_canvas(self, x: float, y: float) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        w, h = self.size
        return ((x - x0) / (x1 - x0) * w, (1.0 - (y - y0) / (y1 - y0)) * h)


def _draw_track(
    base: Image.Image,
    canvas: CanvasMap,
    points,
    color: tuple[int, int, int],
    width: int,
    alpha: float,
) -> None:
    level = round(alpha * 255)
    if level <= 0 or len(points) < 1:
        return
    overlay = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(overlay)
    px = [canvas.to_canvas(x, y) for _, x, y in points]
    rgba = (*color, level)
    if len(px) == 1:
        x, y = px[0]
        r = width / 2.0
        draw.ellipse([x - r, y - r, x + r, y + r], fill=rgba)
    else:
        draw.line(px, fill=rgba, width=width, joint="curve")
        for x, y in (px[0], px[-1]):  # round caps
            r = width / 2.0
            draw.ellipse([x - r, y - r, x + r, y + r], fill=rgba)
    base.alpha_composite(overlay)


def render_frame(
    session: DaySession,
    live_tracks: list[TrackRecord],
    now: float,
    canvas_size: tuple[int, int],
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0),
    normality_by_id: dict[int, float] | None = None,
    threshold: float | None = None,
) -> Image.Image:
    """Compose the day's picture at time `now` (seconds of day).

    Finished session tracks come first in start-time order, then the live
    ones; each fades by the age of its newest point.  When both a
    normality map and a threshold are given, atypical tracks switch to
    the alert color.
    """
    w, h = canvas_size
    if w <= 0 or h <= 0:
        raise ValueError("canvas size must be positive")
    canvas = CanvasMap(bounds, canvas_size)
    base = Image.new("RGBA", canvas_size, (*parse_color(session.background), 255))

    width = max(1, round(session.line_width * h / REFERENCE_HEIGHT))
    fg = parse_color(session.foreground)
    alert = parse_color(ALERT_COLOR)

    def start_time(record: TrackRecord) -> float:
        return record.points[0][0] if record.points else 0.0

    finished = sorted(session.tracks, key=start_time)
    for record in finished + list(live_tracks):
        if not record.points:
            continue
        age = now - record.points[-1][0]
        color = fg
        if normality_by_id is not None and threshold is not None:
            score = normality_by_id.get(record.id)
            if score is not None and score < threshold:
                color = alert
        _draw_track(base, canvas, record.points, color, width, fade_alpha(age))
    return base.convert("RGB")


def render_png(path, *args, **kwargs) -> None:
    render_frame(*args, **kwargs).save(path, format="PNG")
