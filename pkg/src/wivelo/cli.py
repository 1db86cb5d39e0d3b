"""Command-line front end: ``simulate``, ``track``, ``eval`` and ``report``.

Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
4 tracker failure.  Relative ``--out`` paths are resolved under
``$WIVELO_OUT_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import formats as F
from .channel_sim import ConfigError, synthesize
from .evaluation import DEFAULT_DTW_WINDOW, DEFAULT_SAMPLES, EvalError, summarize, trajectory_error
from .geometry import GeometryError
from .pipeline import TrackingError, Tracker

log = logging.getLogger("wivelo")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_TRACK = 0, 2, 3, 4
OUT_DIR_ENV = "WIVELO_OUT_DIR"
TRUTH_SUFFIX = ".truth.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def out_path(p) -> Path:
    p = Path(p)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def truth_path(trace_path) -> Path:
    return Path(str(trace_path) + TRUTH_SUFFIX)


def _noise_name(out: Path, sigma: float) -> Path:
    return out.with_name(f"{out.stem}-sigma{sigma:g}{out.suffix}")


def _load(path, what: str) -> dict:
    try:
        return F.read_document(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{what}: cannot read {path}: {exc.strerror or exc}") from exc


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    layout_doc = _load(args.layout, "layout")
    path_doc = _load(args.path, "path")
    scene_doc = _load(args.config, "config") if args.config else {}
    layout = F.layout_from_doc(layout_doc)
    path = F.path_from_doc(path_doc, layout)
    labels = F.path_labels(path_doc)
    scene, rate = F.scene_from_doc(scene_doc, layout)
    sigmas = args.noise if args.noise else [scene.noise_sigma]
    out = out_path(args.out)
    for sigma in sigmas:
        if sigma < 0:
            raise CliError(EXIT_CONFIG, f"--noise: sigma must be >= 0, got {sigma}")
        target = out if len(sigmas) == 1 else _noise_name(out, sigma)
        sc = type(scene)(**{**scene.__dict__, "noise_sigma": float(sigma)})
        trace = synthesize(sc, path, rate=rate, seed=args.seed)
        F.write_trace(trace, target)
        config = {"layout": F.layout_to_doc(layout), "path": path_doc, "scene": scene_doc,
                  "noise_sigma": float(sigma), "rate": rate}
        manifest = F.RunManifest.create(
            "simulate", config, args.seed, {"layout": args.layout, "path": args.path},
            (target, truth_path(target)), {"duration_s": trace.duration, "packets": trace.n_packets},
        )
        doc = F.trajectory_from_path(path, {**labels, "noise_sigma": f"{sigma:g}"}, manifest.to_doc())
        F.write_document(doc.to_doc(), truth_path(target))
        log.info("wrote %s (%d packets, sigma=%g)", target, trace.n_packets, sigma)
    return EXIT_OK


def cmd_track(args) -> int:
    layout = F.layout_from_doc(_load(args.layout, "layout"))
    cfg_doc = _load(args.config, "config") if args.config else {}
    try:
        trace = F.read_trace(args.trace)
    except OSError as exc:
        raise CliError(EXIT_IO, f"trace: cannot read {args.trace}: {exc.strerror or exc}") from exc
    initial, labels = None, {}
    sidecar = truth_path(args.trace)
    if sidecar.exists():
        truth = F.TrajectoryDoc.from_doc(_load(sidecar, "truth"), "truth")
        initial, labels = tuple(truth.points[0]), truth.labels
    cfg = F.tracker_from_doc(cfg_doc, layout, initial)
    if trace.n_antennas != len(layout.antennas):
        raise CliError(EXIT_CONFIG, f"trace: {trace.n_antennas} antennas, layout has {len(layout.antennas)}")
    result = Tracker(cfg).run(trace)
    out = out_path(args.out)
    inputs = {"layout": args.layout, "trace": args.trace}
    if args.config:
        inputs["config"] = args.config
    manifest = F.RunManifest.create(
        "track", {"tracker": F.tracker_to_doc(cfg)}, None, inputs, (out,),
        {"duration_s": trace.duration, "windows": len(result.steps)},
    )
    F.write_document(F.trajectory_from_run(result, labels, manifest.to_doc()).to_doc(), out)
    counts = Counter(result.statuses)
    log.info("wrote %s: %d windows (%s)", out, len(result.steps),
             ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def _trajectory(path, what):
    return F.TrajectoryDoc.from_doc(_load(path, what), what)


def cmd_eval(args) -> int:
    pred, truth = _trajectory(args.pred, "pred"), _trajectory(args.truth, "truth")
    err = trajectory_error(pred.points, truth.points, args.samples, args.window)
    config = {"samples": args.samples, "window": args.window}
    out = out_path(args.out) if args.out else None
    manifest = F.RunManifest.create("eval", config, None, {"pred": args.pred, "truth": args.truth},
                                    (out,) if out else (), {})
    doc = {"format": "wivelo-metrics", "version": F.VERSION, "dtw_m": err,
           "labels": {**truth.labels, **pred.labels}, "manifest": manifest.to_doc()}
    if out:
        F.write_document(doc, out)
    print(f"{err:.6f}")
    return EXIT_OK


def _read_metrics(path):
    doc = _load(path, "metrics")
    if doc.get("format") != "wivelo-metrics" or "dtw_m" not in doc:
        raise CliError(EXIT_CONFIG, f"metrics: {path} is not a metrics document")
    return doc


def cmd_report(args) -> int:
    files = sorted({f for pattern in args.patterns for f in glob.glob(pattern)})
    if not files:
        raise CliError(EXIT_CONFIG, f"report: no metrics files match {' '.join(args.patterns)}")
    with ThreadPoolExecutor() as pool:
        docs = list(pool.map(_read_metrics, files))
    errors = [float(d["dtw_m"]) for d in docs]
    keys = [k for k in (args.group_by or "").split(",") if k]
    groups = {k: [d.get("labels", {}).get(k, "") for d in docs] for k in keys}
    rep = summarize(errors, groups or None)
    sys.stdout.write(rep.table())
    if args.out:
        out = out_path(args.out)
        manifest = F.RunManifest.create("report", {"group_by": keys}, None,
                                        {f"metrics[{i}]": f for i, f in enumerate(files)}, (out,),
                                        {"files": len(files)})
        F.write_document({
            "format": "wivelo-report", "version": F.VERSION, "count": len(errors),
            "median_m": rep.median, "p90_m": rep.p90, "groups": rep.groups,
            "cdf": rep.cdf.tolist(), "manifest": manifest.to_doc(),
        }, out)
    return EXIT_OK


# -------------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wivelo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize a CSI trace and its ground truth")
    s.add_argument("--layout", required=True)
    s.add_argument("--path", required=True)
    s.add_argument("--config", help="scene override document")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, nargs="+", help="one trace per noise sigma")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="recover a trajectory from a trace")
    t.add_argument("--layout", required=True)
    t.add_argument("--trace", required=True)
    t.add_argument("--config", help="tracker configuration document")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="DTW error between two trajectory documents")
    e.add_argument("pred")
    e.add_argument("truth")
    e.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    e.add_argument("--window", type=int, default=DEFAULT_DTW_WINDOW)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="aggregate metrics documents")
    r.add_argument("patterns", nargs="+", help="glob(s) of metrics documents")
    r.add_argument("--group-by", default="", help="comma-separated label names")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (F.DocumentError, ConfigError, GeometryError, EvalError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except F.FormatError as exc:
        log.error("format error: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except TrackingError as exc:
        log.error("tracking failed at %s", exc)
        return EXIT_TRACK


if __name__ == "__main__":
    sys.exit(main())
