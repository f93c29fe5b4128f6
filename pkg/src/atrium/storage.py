"""Daily-session persistence and the palette rules.

Each calendar day owns one session: its finished tracks, a foreground
color for new strokes, the background color, and the line width for the
day of week.  The rules, applied at every midnight rollover:

  * the finished day's foreground becomes the new day's background,
  * a new deterministic palette (one color per weekday) is drawn at the
    start of each ISO week from the week number and the configured seed,
  * line width grows with the day of week, thin Mondays to thick Sundays.

Sessions serialize to a versioned XML file (schema "1"), canonically
formatted so that write(read(write(s))) is byte-identical, and to a flat
CSV (track_id, t, x, y).  The manager rewrites the session file at most
once per minute via write-to-temp-then-rename so a crash loses at most
the last minute.
"""

from __future__ import annotations

import colorsys
import csv
import datetime as dt
import math
import os
import random
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = "1"
SNAPSHOT_INTERVAL = 60.0  # seconds
_COLOR_RE = re.compile(r"^#[0-9A-Fa-f]{6}$")


class MalformedFile(Exception):
    """Session file unreadable; message carries element diagnostics."""


class SchemaVersionMismatch(Exception):
    """Session file written by an incompatible schema."""


def line_width_for_day(weekday: int) -> int:
    """Line width in px at 1080p reference scale; Monday(0) thinnest."""
    if not 0 <= weekday <= 6:
        raise ValueError("weekday must be 0..6")
    return 2 + 2 * weekday


def weekly_palette(date: dt.date, seed: int = 0) -> list[str]:
    """Seven colors for the ISO week containing `date`, deterministic in
    (ISO year, ISO week, seed)."""
    iso_year, iso_week, _ = date.isocalendar()
    rng = random.Random(f"{iso_year}-{iso_week}-{seed}")
    base_hue = rng.random()
    colors = []
    for day in range(7):
        hue = (base_hue + day / 7.0 + rng.uniform(-0.03, 0.03)) % 1.0
        sat = rng.uniform(0.55, 0.95)
        val = rng.uniform(0.65, 0.95)
        r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
        colors.append(f"#{round(r * 255):02X}{round(g * 255):02X}{round(b * 255):02X}")
    return colors


def palette_for_day(date: dt.date, seed: int = 0) -> str:
    return weekly_palette(date, seed)[date.weekday()]


def _validate_track_points(track_id: int, points, strict: bool = True) -> None:
    """Timestamps must be finite, non-negative and increasing (strictly on
    write; reads tolerate equal neighbors that the 1e-4 quantization can
    produce).  By convention t counts seconds within the session's day;
    the bound itself is not enforced so replayed streams with arbitrary
    offsets still persist."""
    prev = None
    for t, x, y in points:
        if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"track {track_id}: non-finite point ({t}, {x}, {y})")
        if t < 0:
            raise ValueError(f"track {track_id}: negative timestamp {t}")
        if prev is not None and (t < prev or (strict and t == prev)):
            raise ValueError(f"track {track_id}: timestamps not increasing at {t}")
        prev = t


@dataclass
class TrackRecord:
    id: int
    points: list[tuple[float, float, float]]  # (t, x, y), t = seconds of day


@dataclass
class DaySession:
    date: dt.date
    foreground: str
    background: str
    line_width: int
    tracks: list[TrackRecord] = field(default_factory=list)

    def __post_init__(self):
        for name in ("foreground", "background"):
            if not _COLOR_RE.match(getattr(self, name)):
                raise ValueError(f"{name} must be #RRGGBB, got {getattr(self, name)!r}")

    @classmethod
    def for_date(cls, date: dt.date, seed: int = 0) -> "DaySession":
        """Fresh session with the palette chain evaluated for `date` (the
        background is what yesterday's foreground would have been)."""
        return cls(
            date=date,
            foreground=palette_for_day(date, seed),
            background=palette_for_day(date - dt.timedelta(days=1), seed),
            line_width=line_width_for_day(date.weekday()),
        )


# ---------------------------------------------------------------------------
# XML serialization.  Canonical text layout; coordinates at 1e-4 m.


def session_to_xml(session: DaySession) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<session schema="{SCHEMA_VERSION}" date="{session.date.isoformat()}" '
        f'foreground="{session.foreground}" background="{session.background}" '
        f'line_width="{session.line_width}">',
    ]
    for track in session.tracks:
        _validate_track_points(track.id, track.points)
        lines.append(f'  <track id="{track.id}">')
        for t, x, y in track.points:
            lines.append(f'    <point t="{t:.4f}" x="{x:.4f}" y="{y:.4f}"/>')
        lines.append("  </track>")
    lines.append("</session>")
    return "\n".join(lines) + "\n"


def write_session(path, session: DaySession) -> None:
    Path(path).write_text(session_to_xml(session), encoding="utf-8")


def read_session(path) -> DaySession:
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    except OSError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    if root.tag != "session":
        raise MalformedFile(f"{path}: root element is <{root.tag}>, expected <session>")
    schema = root.get("schema")
    if schema != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: schema {schema!r}, expected {SCHEMA_VERSION!r}")
    try:
        session = DaySession(
            date=dt.date.fromisoformat(root.attrib["date"]),
            foreground=root.attrib["foreground"],
            background=root.attrib["background"],
            line_width=int(root.attrib["line_width"]),
        )
    except (KeyError, ValueError) as exc:
        raise MalformedFile(f"{path}: bad <session> attributes: {exc}") from exc
    for el in root:
        if el.tag != "track":
            raise MalformedFile(f"{path}: unexpected element <{el.tag}> under <session>")
        try:
            track = TrackRecord(id=int(el.attrib["id"]), points=[])
            for pt in el:
                if pt.tag != "point":
                    raise MalformedFile(f"{path}: unexpected element <{pt.tag}> under <track>")
                track.points.append(
                    (float(pt.attrib["t"]), float(pt.attrib["x"]), float(pt.attrib["y"]))
                )
        except (KeyError, ValueError) as exc:
            raise MalformedFile(f"{path}: bad track element: {exc}") from exc
        try:
            _validate_track_points(track.id, track.points, strict=False)
        except ValueError as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        session.tracks.append(track)
    return session


def export_csv(path, session: DaySession) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["track_id", "t", "x", "y"])
        for track in session.tracks:
            for t, x, y in track.points:
                writer.writerow([track.id, f"{t:.4f}", f"{x:.4f}", f"{y:.4f}"])


def read_points_csv(path) -> list[TrackRecord]:
    """Inverse of export_csv; rows grouped by track id, order preserved."""
    tracks: dict[int, TrackRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            tid = int(row["track_id"])
            tracks.setdefault(tid, TrackRecord(tid, [])).points.append(
                (float(row["t"]), float(row["x"]), float(row["y"]))
            )
    return list(tracks.values())


# ---------------------------------------------------------------------------
# The session manager: daily reset plus periodic snapshots.


class SessionManager:
    """Owns the current day's session and applies the rollover rules.

    One writer (the engine loop) calls `add_track`/`roll`/`maybe_snapshot`;
    readers consume the last snapshot file.
    """

    def __init__(self, data_dir, start: dt.datetime, seed: int = 0):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.session = DaySession.for_date(start.date(), seed)
        self._last_snapshot: float | None = None

    def session_path(self, date: dt.date | None = None) -> Path:
        date = date or self.session.date
        return self.data_dir / f"session-{date.isoformat()}.xml"

    def add_track(self, record: TrackRecord) -> None:
        self.session.tracks.append(record)

    def roll(self, now: dt.datetime) -> list[DaySession]:
        """Advance to now's date, finishing one session per elapsed day.

        Each finished day's foreground becomes the next day's background;
        Mondays draw a fresh weekly palette.  Returns finished sessions.
        """
        finished = []
        while self.session.date < now.date():
            self.flush()
            finished.append(self.session)
            next_date = self.session.date + dt.timedelta(days=1)
            self.session = DaySession(
                date=next_date,
                foreground=palette_for_day(next_date, self.seed),
                background=self.session.foreground,
                line_width=line_width_for_day(next_date.weekday()),
            )
            self._last_snapshot = None
        return finished

    def flush(self) -> Path:
        """Write the current session atomically (temp file then rename)."""
        path = self.session_path()
        tmp = path.with_suffix(".xml.tmp")
        write_session(tmp, self.session)
        os.replace(tmp, path)
        return path

    def maybe_snapshot(self, monotonic_now: float) -> bool:
        """Flush if at least SNAPSHOT_INTERVAL has passed since last time."""
        if (
            self._last_snapshot is not None
            and monotonic_now - self._last_snapshot < SNAPSHOT_INTERVAL
        ):
            return False
        self.flush()
        self._last_snapshot = monotonic_now
        return True
