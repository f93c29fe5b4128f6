"""Command-line entry point.

One executable, one subcommand per capability:

    simulate    scenario -> detections + labeled truth
    track       detections -> daily session XML
    features    session -> per-trajectory descriptor CSV
    train       session(s) -> normality model snapshot
    score       session/points -> per-trajectory normality CSV
    threshold   score values -> classification cutoff
    render      session -> PNG still
    serve       live HTTP/WebSocket service for the drawing UI
    replay      scenario -> full pipeline run with report

Exit codes: 1 usage, 2 bad input, 3 runtime failure.  Configuration
comes from JSON files via --config with flags winning on conflict; the
ATRIUM_DATA_DIR environment variable sets the default session location.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_RUNTIME = 3


class InputError(Exception):
    """Bad input file or value; exits with code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def data_dir() -> Path:
    return Path(os.environ.get("ATRIUM_DATA_DIR", "./atrium-data"))


# ---------------------------------------------------------------------------
# Shared IO helpers.


def read_detections_csv(path):
    from .tracking import Detection

    frames: dict[float, list[Detection]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                t = float(row["t"])
                frames.setdefault(t, []).append(
                    Detection(
                        t=t,
                        x=float(row["x"]),
                        y=float(row["y"]),
                        size=float(row.get("size", 0.0) or 0.0),
                    )
                )
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return [(t, frames[t]) for t in sorted(frames)]


def write_detections_csv(path, frames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "size"])
        for t, dets in frames:
            for det in dets:
                writer.writerow([f"{t:.6f}", f"{det.x:.6f}", f"{det.y:.6f}", f"{det.size:.6f}"])


def write_truth_csv(path, truths):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "kind", "label", "t", "x", "y"])
        for truth in truths:
            for t, x, y in truth.points:
                writer.writerow(
                    [truth.agent_id, truth.kind.value, truth.label,
                     f"{t:.6f}", f"{x:.6f}", f"{y:.6f}"]
                )


def read_truth_csv(path):
    from .simulator import AgentKind, GroundTruth

    by_agent: dict[int, GroundTruth] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                aid = int(row["agent_id"])
                truth = by_agent.setdefault(
                    aid,
                    GroundTruth(aid, AgentKind(row["kind"]), row["label"], []),
                )
                truth.points.append((float(row["t"]), float(row["x"]), float(row["y"])))
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return list(by_agent.values())


def load_pipeline_config(path, overrides=None, soft_defaults=None):
    from .features import RuleThresholds
    from .pipeline import ConfigError, PipelineConfig
    from .tracking import TrackerConfig

    raw = dict(soft_defaults or {})  # config file and flags both win
    if path:
        try:
            raw.update(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: {exc}") from exc
    raw.update(overrides or {})
    tracker_raw = raw.pop("tracker", {})
    rules_raw = raw.pop("rule_thresholds", {})
    try:
        tracker = TrackerConfig(**{
            **tracker_raw,
            "mask": [[tuple(p) for p in poly] for poly in tracker_raw.get("mask", [])],
        })
        cfg = PipelineConfig(
            tracker=tracker,
            rule_thresholds=RuleThresholds(**rules_raw),
            **{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()},
        )
    except (TypeError, ConfigError) as exc:
        raise InputError(f"bad pipeline config: {exc}") from exc
    return cfg


def _session_from_args(args):
    from .storage import read_session

    try:
        return read_session(args.session)
    except Exception as exc:
        raise InputError(str(exc)) from exc


def _resolve_format(args, allowed: tuple[str, ...], default: str) -> str:
    fmt = getattr(args, "format", None) or default
    if fmt not in allowed:
        raise InputError(
            f"unsupported --format {fmt!r} here (allowed: {', '.join(allowed)})"
        )
    return fmt


# ---------------------------------------------------------------------------
# Subcommand implementations.


def cmd_simulate(args) -> int:
    from . import simulator

    if args.scenario:
        try:
            scene, agents, duration = simulator.scenario_from_json(
                Path(args.scenario).read_text(encoding="utf-8")
            )
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"{args.scenario}: {exc}") from exc
    else:
        kwargs = {}
        if args.duration is not None:
            kwargs["spread"] = max(args.duration - 30.0, args.duration * 0.5)
        scene, agents, duration = simulator.make_crowd_scenario(
            n_walkers=args.walkers, n_scribblers=args.scribblers,
            seed=args.seed if args.seed is not None else 7, **kwargs,
        )
    if args.seed is not None:
        scene.seed = args.seed
    if args.duration is not None:
        duration = args.duration

    frames, truths = simulator.generate(scene, agents, duration)
    out = Path(args.out or "simulation")
    out.mkdir(parents=True, exist_ok=True)
    write_detections_csv(out / "detections.csv", frames)
    write_truth_csv(out / "truth.csv", truths)
    (out / "scenario.json").write_text(
        simulator.scenario_to_json(scene, agents, duration), encoding="utf-8"
    )
    n_dets = sum(len(d) for _, d in frames)
    print(f"wrote {len(frames)} frames, {n_dets} detections, "
          f"{len(truths)} truth trajectories to {out}/")
    return 0


def _ground_frames(args, frames):
    """Optionally lift image-space detections onto the ground plane."""
    if not args.calibration:
        return frames
    from .geometry import load_calibration, project, undistort
    from .tracking import Detection

    try:
        model, homography = load_calibration(args.calibration)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    grounded = []
    for t, dets in frames:
        row = []
        for det in dets:
            u, v = undistort(model, (det.x, det.y))
            x, y = project(homography, (u, v))
            row.append(Detection(t=det.t, x=x, y=y, size=det.size))
        grounded.append((t, row))
    return grounded


def cmd_track(args) -> int:
    import datetime as _dt

    from .pipeline import Engine
    from .storage import SessionManager

    fmt = _resolve_format(args, ("xml", "csv"), "xml")
    frames = read_detections_csv(args.detections)
    frames = _ground_frames(args, frames)
    cfg = load_pipeline_config(args.config)
    date = _dt.date.fromisoformat(args.date) if args.date else _dt.date.today()
    manager = SessionManager(
        data_dir(), _dt.datetime.combine(date, _dt.time()), seed=args.seed or 0
    )
    engine = Engine(cfg, session_manager=manager)
    for t, dets in frames:
        engine.process_frame(t, dets)
    engine.finish_stream()

    from .storage import export_csv, write_session

    if fmt == "csv":
        out = Path(args.out or "tracks.csv")
        export_csv(out, manager.session)
    else:
        out = Path(args.out or manager.session_path())
        write_session(out, manager.session)
    print(f"wrote {len(manager.session.tracks)} tracks to {out}")
    return 0


def cmd_features(args) -> int:
    from .features import RuleThresholds, TooFewPoints, classify_rules, compute_features, tortuosity

    _resolve_format(args, ("csv",), "csv")
    session = _session_from_args(args)
    thresholds = RuleThresholds(
        d_fit=args.theta_dfit, tortuosity=args.theta_tortuosity, c_main=args.theta_cmain
    )
    out = Path(args.out or "features.csv")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "nPoints", "dFit", "dist", "cRect", "cMain", "label"])
        for track in session.tracks:
            try:
                f = compute_features(track.points)
                label = classify_rules(f, tortuosity(track.points), thresholds)
            except TooFewPoints:
                continue
            writer.writerow(
                [track.id, f.n_points, f"{f.d_fit:.4f}", f"{f.dist:.4f}",
                 f"{f.c_rect:.4f}", f"{f.c_main:.4f}", label]
            )
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    from .normality import NormalityModel, resample_trajectory

    cfg = load_pipeline_config(args.config)
    if args.resume:
        try:
            model = NormalityModel.load(args.resume)
        except Exception as exc:
            raise InputError(f"{args.resume}: {exc}") from exc
    else:
        model = cfg.make_model()

    trained = 0
    for session_path in args.session:
        from .storage import read_session

        try:
            session = read_session(session_path)
        except Exception as exc:
            raise InputError(str(exc)) from exc
        for track in session.tracks:
            steps = resample_trajectory(track.points)
            if steps:
                model.train(steps)
                trained += 1
    model.save(args.model)
    print(f"trained {trained} trajectories; snapshot -> {args.model}")
    return 0


def cmd_score(args) -> int:
    from .normality import NormalityModel, resample_trajectory
    from .storage import read_points_csv, read_session

    _resolve_format(args, ("csv",), "csv")
    try:
        model = NormalityModel.load(args.model)
    except Exception as exc:
        raise InputError(f"{args.model}: {exc}") from exc

    if args.session:
        try:
            tracks = read_session(args.session).tracks
        except Exception as exc:
            raise InputError(str(exc)) from exc
    else:
        tracks = read_points_csv(args.points)

    rows = []
    for track in tracks:
        steps = resample_trajectory(track.points)
        if not steps:
            rows.append((track.id, None))
            continue
        rows.append((track.id, model.score(steps)))

    out_fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out_fh)
        writer.writerow(["track_id", "normality"])
        for tid, score in rows:
            writer.writerow([tid, f"{score:.12f}" if score is not None else ""])
    finally:
        if args.out:
            out_fh.close()
    return 0


def cmd_threshold(args) -> int:
    from .normality import TooFewValues, detect_threshold

    values = []
    try:
        with open(args.scores, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                raw = row.get("normality", "")
                if raw:
                    values.append(float(raw))
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"{args.scores}: {exc}") from exc
    try:
        theta = detect_threshold(values, args.target)
    except TooFewValues as exc:
        raise InputError(str(exc)) from exc
    print(f"{theta:.6f}")
    return 0


def cmd_render(args) -> int:
    from .render import render_frame

    _resolve_format(args, ("png",), "png")
    session = _session_from_args(args)
    try:
        width, height = (int(v) for v in args.size.split("x"))
    except ValueError:
        raise InputError(f"bad --size {args.size!r}; expected WIDTHxHEIGHT") from None

    normality_by_id = None
    if args.scores:
        normality_by_id = {}
        try:
            with open(args.scores, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    if row.get("normality"):
                        normality_by_id[int(row["track_id"])] = float(row["normality"])
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"{args.scores}: {exc}") from exc

    now = args.now
    if now is None:
        now = max((tr.points[-1][0] for tr in session.tracks if tr.points), default=0.0)
    image = render_frame(
        session,
        [],
        now,
        (width, height),
        bounds=tuple(args.bounds),
        normality_by_id=normality_by_id,
        threshold=args.threshold,
    )
    out = args.out or "session.png"
    image.save(out, format="PNG")
    print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_service

    # Live drawing wants quick score feedback; a config file still wins.
    cfg = load_pipeline_config(args.config, soft_defaults={"provisional_interval": 1.0})
    app = build_service(cfg, model_path=args.model, freeze=args.freeze)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    import datetime as _dt

    from . import simulator
    from .pipeline import run
    from .render import render_frame
    from .storage import SessionManager, write_session

    if args.scenario:
        try:
            scene, agents, duration = simulator.scenario_from_json(
                Path(args.scenario).read_text(encoding="utf-8")
            )
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"{args.scenario}: {exc}") from exc
    else:
        scene, agents, duration = simulator.make_crowd_scenario(
            seed=args.seed if args.seed is not None else 7
        )
    if args.seed is not None:
        scene.seed = args.seed

    frames, truths = simulator.generate(scene, agents, duration)
    cfg = load_pipeline_config(args.config, {"scene_bounds": scene.bounds})

    out = Path(args.out or "replay")
    out.mkdir(parents=True, exist_ok=True)
    date = _dt.date.fromisoformat(args.date) if args.date else _dt.date.today()
    manager = SessionManager(
        out, _dt.datetime.combine(date, _dt.time()), seed=scene.seed
    )
    report = run(frames, cfg, truths=truths, session_manager=manager)

    report.to_csv(out / "report.csv")
    (out / "summary.txt").write_text(report.summary() + "\n", encoding="utf-8")
    write_session(out / "session.xml", manager.session)
    scores = {
        r.track_id: r.normality for r in report.records if r.normality is not None
    }
    image = render_frame(
        manager.session,
        [],
        max((t for t, _ in frames), default=0.0),
        (960, 960),
        bounds=scene.bounds,
        normality_by_id=scores,
        threshold=report.threshold,
    )
    image.save(out / "final.png", format="PNG")
    print(report.summary())
    print(f"artifacts in {out}/")
    return 0


# ---------------------------------------------------------------------------
# Argument wiring.


def build_parser() -> _Parser:
    parser = _Parser(prog="atrium", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--config", default=None, help="pipeline config JSON")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--format", choices=("csv", "xml", "png"), default=None,
                       help="output format where the subcommand supports a choice")

    p = sub.add_parser("simulate", help="generate a synthetic detection stream")
    common(p)
    p.add_argument("--scenario", default=None, help="scenario JSON file")
    p.add_argument("--walkers", type=int, default=90)
    p.add_argument("--scribblers", type=int, default=10)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracker over a detections CSV")
    common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--calibration", default=None,
                   help="calibration file; detections are then image pixels")
    p.add_argument("--date", default=None, help="session date YYYY-MM-DD")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("features", help="descriptor CSV for a session")
    common(p)
    p.add_argument("--session", required=True)
    p.add_argument("--theta-dfit", type=float, default=0.5)
    p.add_argument("--theta-tortuosity", type=float, default=3.0)
    p.add_argument("--theta-cmain", type=float, default=2.0)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="build or update a model snapshot")
    common(p)
    p.add_argument("--session", action="append", required=True)
    p.add_argument("--model", required=True, help="snapshot output path")
    p.add_argument("--resume", default=None, help="existing snapshot to update")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score trajectories against a snapshot")
    common(p)
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--session", default=None)
    group.add_argument("--points", default=None, help="CSV track_id,t,x,y")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("threshold", help="detect the classification cutoff")
    common(p)
    p.add_argument("--scores", required=True, help="CSV with a normality column")
    p.add_argument("--target", type=float, default=0.10)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("render", help="render a session to PNG")
    common(p)
    p.add_argument("--session", required=True)
    p.add_argument("--size", default="960x960")
    p.add_argument("--now", type=float, default=None, help="render time, seconds of day")
    p.add_argument("--bounds", type=float, nargs=4, default=(0.0, 0.0, 20.0, 20.0))
    p.add_argument("--scores", default=None, help="normality CSV for the alert tint")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="start the live service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--model", default=None, help="normality snapshot to serve")
    p.add_argument("--freeze", action="store_true", help="disable online training")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="full pipeline over a scenario")
    common(p)
    p.add_argument("--scenario", default=None, help="scenario JSON (default: crowd preset)")
    p.add_argument("--date", default=None, help="session date YYYY-MM-DD")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help or usage error
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"atrium: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failures map to exit 3
        print(f"atrium: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
