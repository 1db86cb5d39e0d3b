"""File formats: CSI traces, JSON documents and the run manifest.

Binary traces (``.wvlo``) are little-endian::

    magic "WVLO" | u16 version | u32 rate | u8 antennas | u8 subcarriers
    | f64 frequency * subcarriers
    then per packet and antenna:
    u64 timestamp_ns | u8 antenna | (f32 real, f32 imag) * subcarriers

The text variant (``.csv`` / ``.txt``) carries the same fields, comma
separated, one header line followed by one line per record.

Every other document is JSON with a fixed set of named fields; unknown
fields are rejected so that typos fail loudly.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, fields, is_dataclass
from pathlib import Path

import numpy as np

from .channel_sim import CsiTrace, GroundTruthPath, HumanAmplitude, Scene, make_path
from .direction import VoterConfig
from .dsp import RangeSsdConfig, SgfConfig
from .geometry import AntennaLayout, GeometryError, Point2

MAGIC = b"WVLO"
VERSION = 1
TEXT_SUFFIXES = (".csv", ".txt")
_HEADER = struct.Struct("<4sHIBB")


class FormatError(ValueError):
    """Malformed document or trace; ``offset`` locates the problem in bytes when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class DocumentError(ValueError):
    """A configuration document failed validation; the message names the field."""


# --------------------------------------------------------------------- traces

def _timestamps_ns(trace: CsiTrace) -> np.ndarray:
    return np.round((trace.start_time + np.arange(trace.n_packets) / trace.rate) * 1e9).astype(np.uint64)


def _check_writable(trace: CsiTrace):
    if trace.n_packets == 0:
        raise FormatError("trace has no packets")
    if trace.rate != int(trace.rate) or not 0 < trace.rate < 2**32:
        raise FormatError(f"rate {trace.rate} is not a u32 packet rate")
    if trace.n_antennas > 255 or len(trace.frequencies) > 255:
        raise FormatError("antenna and subcarrier counts must fit in u8")
    if trace.start_time < 0:
        raise FormatError("start time must be non-negative")


def encode_binary(trace: CsiTrace) -> bytes:
    _check_writable(trace)
    A, S = trace.n_antennas, len(trace.frequencies)
    head = _HEADER.pack(MAGIC, VERSION, int(trace.rate), A, S) + np.asarray(trace.frequencies, "<f8").tobytes()
    rec = np.dtype([("ts", "<u8"), ("ant", "u1"), ("iq", "<f4", (S, 2))])
    body = np.empty(trace.n_packets * A, dtype=rec)
    body["ts"] = np.repeat(_timestamps_ns(trace), A)
    body["ant"] = np.tile(np.arange(A, dtype=np.uint8), trace.n_packets)
    frames = np.asarray(trace.frames).reshape(-1, S)
    body["iq"][..., 0] = frames.real
    body["iq"][..., 1] = frames.imag
    return head + body.tobytes()


def decode_binary(data: bytes) -> CsiTrace:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, version, rate, A, S = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = _HEADER.size
    if len(data) < pos + 8 * S:
        raise FormatError("truncated frequency table", len(data))
    freqs = np.frombuffer(data, "<f8", S, pos).astype(float)
    pos += 8 * S
    rec = np.dtype([("ts", "<u8"), ("ant", "u1"), ("iq", "<f4", (S, 2))])
    size = len(data) - pos
    if A == 0 or S == 0:
        raise FormatError("header declares no antennas or subcarriers", _HEADER.size - 2)
    if size % rec.itemsize:
        n_full = size // rec.itemsize
        raise FormatError(f"truncated record {n_full}", pos + n_full * rec.itemsize)
    body = np.frombuffer(data, rec, offset=pos)
    return _assemble(body["ts"], body["ant"], body["iq"], rate, A, freqs,
                     lambda i: pos + i * rec.itemsize)


def _assemble(ts, ant, iq, rate, A, freqs, where) -> CsiTrace:
    n_rec = len(ts)
    if n_rec == 0:
        raise FormatError("no records after header", where(0))
    if n_rec % A:
        raise FormatError(f"{n_rec} records do not fill whole packets of {A} antennas", where(n_rec - n_rec % A))
    expected = np.tile(np.arange(A), n_rec // A)
    bad = np.nonzero(ant != expected)[0]
    if bad.size:
        raise FormatError(f"record {bad[0]} has antenna {ant[bad[0]]}, expected {expected[bad[0]]}", where(bad[0]))
    ts = np.asarray(ts, dtype=np.uint64).reshape(-1, A)
    if np.any(ts != ts[:, :1]):
        i = int(np.nonzero((ts != ts[:, :1]).ravel())[0][0])
        raise FormatError(f"record {i} timestamp differs from its packet", where(i))
    if rate <= 0:
        raise FormatError("rate must be positive", 6)
    frames = (iq[..., 0].astype(np.float32) + 1j * iq[..., 1].astype(np.float32)).astype(np.complex64)
    frames = frames.reshape(-1, A, len(freqs))
    start = float(ts[0, 0]) / 1e9
    return CsiTrace(rate=float(rate), frequencies=freqs, frames=frames, start_time=start)


def encode_text(trace: CsiTrace) -> bytes:
    _check_writable(trace)
    A, S = trace.n_antennas, len(trace.frequencies)
    head = ",".join(["WVLO", str(VERSION), str(int(trace.rate)), str(A), str(S)]
                    + [repr(float(f)) for f in trace.frequencies])
    ts = np.repeat(_timestamps_ns(trace), A).tolist()
    ant = np.tile(np.arange(A), trace.n_packets).tolist()
    # complex64 viewed as float32 is the interleaved (re, im) record layout;
    # nine significant digits round-trip every float32 exactly.
    iq = np.ascontiguousarray(trace.frames, dtype=np.complex64).view(np.float32).reshape(-1, 2 * S).tolist()
    fmt = ",".join(["%d", "%d"] + ["%.9g"] * (2 * S))
    lines = [head] + [fmt % (t, a, *row) for t, a, row in zip(ts, ant, iq)]
    return ("\n".join(lines) + "\n").encode("ascii")


def decode_text(data: bytes) -> CsiTrace:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("text trace is not ASCII", exc.start) from exc
    lines = text.split("\n")
    if not lines or not lines[0]:
        raise FormatError("missing header line", 0)
    head = lines[0].split(",")
    if head[0] != "WVLO":
        raise FormatError(f"bad magic {head[0]!r}", 0)
    try:
        version, rate, A, S = (int(v) for v in head[1:5])
        freqs = np.array([float(v) for v in head[5:]])
    except ValueError as exc:
        raise FormatError(f"unparseable header: {exc}", 0) from exc
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 5)
    if len(freqs) != S:
        raise FormatError(f"header lists {len(freqs)} frequencies for {S} subcarriers", 0)
    if A < 1 or S < 1:
        raise FormatError("header declares no antennas or subcarriers", 0)
    offsets = np.cumsum([0] + [len(line) + 1 for line in lines])
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    elif body:
        raise FormatError("truncated record (missing final newline)", int(offsets[len(lines) - 1]))
    ts = np.empty(len(body), dtype=np.uint64)
    ant = np.empty(len(body), dtype=np.int64)
    iq = np.empty((len(body), S, 2), dtype=np.float32)
    for i, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != 2 + 2 * S:
            raise FormatError(f"record {i} has {len(parts)} fields, expected {2 + 2 * S}", int(offsets[i + 1]))
        try:
            ts[i] = int(parts[0])
            ant[i] = int(parts[1])
            iq[i] = np.array(parts[2:], dtype=np.float32).reshape(S, 2)
        except ValueError as exc:
            raise FormatError(f"record {i}: {exc}", int(offsets[i + 1])) from exc
    return _assemble(ts, ant, iq, rate, A, freqs, lambda i: int(offsets[i + 1]))


def is_text_path(path) -> bool:
    return Path(path).suffix.lower() in TEXT_SUFFIXES


def write_trace(trace: CsiTrace, path) -> None:
    data = encode_text(trace) if is_text_path(path) else encode_binary(trace)
    Path(path).write_bytes(data)


def read_trace(path) -> CsiTrace:
    data = Path(path).read_bytes()
    return decode_text(data) if is_text_path(path) else decode_binary(data)


# ------------------------------------------------------------------ documents

def dumps(doc) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _plain(x):
    if is_dataclass(x) and not isinstance(x, type):
        return _plain(asdict(x))
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        raise DocumentError(f"non-finite value {x} cannot be written")
    return x


def write_document(doc, path) -> None:
    Path(path).write_text(dumps(doc))


def read_document(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: top level must be an object")
    return doc


def _fields(doc, allowed, where: str, required=()) -> dict:
    if not isinstance(doc, dict):
        raise DocumentError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise DocumentError(f"{where}.{unknown[0]}: unknown field")
    for key in required:
        if key not in doc:
            raise DocumentError(f"{where}.{key}: required field missing")
    return doc


def _point(v, where: str) -> Point2:
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v)):
        raise DocumentError(f"{where}: expected [x, y]")
    return Point2(float(v[0]), float(v[1]))


def _number(v, where: str, integer: bool = False):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        raise DocumentError(f"{where}: expected {'an integer' if integer else 'a number'}")
    return int(v) if integer else float(v)


def _simple(cls, doc, where: str):
    """Flat dataclass of numbers from ``doc``; missing fields keep defaults."""
    names = {f.name: f for f in fields(cls)}
    _fields(doc, names, where)
    kw = {k: _number(v, f"{where}.{k}", names[k].type in ("int", int)) for k, v in doc.items()}
    try:
        return cls(**kw)
    except ValueError as exc:
        raise DocumentError(f"{where}: {exc}") from exc


def layout_from_doc(doc, where: str = "layout") -> AntennaLayout:
    _fields(doc, ("ref_distance", "tx", "receivers", "monitor_side", "spacing"), where)
    spacing = _number(doc.get("spacing", 0.20), f"{where}.spacing")
    side = _number(doc.get("monitor_side", 1), f"{where}.monitor_side", integer=True)
    try:
        if "ref_distance" in doc:
            if "tx" in doc or "receivers" in doc:
                raise DocumentError(f"{where}.ref_distance: give either ref_distance or tx/receivers")
            return AntennaLayout.symmetric(_number(doc["ref_distance"], f"{where}.ref_distance"), spacing, side)
        _fields(doc, doc.keys(), where, required=("tx", "receivers"))
        recs = doc["receivers"]
        if not isinstance(recs, list):
            raise DocumentError(f"{where}.receivers: expected a list")
        receivers = tuple(
            tuple(_point(p, f"{where}.receivers[{r}][{i}]") for i, p in enumerate(rec))
            for r, rec in enumerate(recs)
        )
        return AntennaLayout(_point(doc["tx"], f"{where}.tx"), receivers, side, spacing)
    except GeometryError as exc:
        raise DocumentError(f"{where}.{exc}") from exc


def layout_to_doc(layout: AntennaLayout) -> dict:
    return {"tx": list(layout.tx), "receivers": [[list(p) for p in rec] for rec in layout.receivers],
            "monitor_side": layout.monitor_side, "spacing": layout.spacing}


def path_from_doc(doc, layout: AntennaLayout | None = None, where: str = "path") -> GroundTruthPath:
    _fields(doc, ("kind", "bbox", "speed", "waypoints", "pause_before", "pause_after", "labels"), where,
            required=("speed",))
    speed = _number(doc["speed"], f"{where}.speed")
    try:
        if "waypoints" in doc:
            if "bbox" in doc:
                raise DocumentError(f"{where}.bbox: not allowed together with waypoints")
            pts = np.array([_point(p, f"{where}.waypoints[{i}]") for i, p in enumerate(doc["waypoints"])])
            if len(pts) < 2 or not speed > 0:
                raise DocumentError(f"{where}.waypoints: need two points and a positive speed")
            seg = np.hypot(*np.diff(pts, axis=0).T)
            times = np.concatenate([[0.0], np.cumsum(seg) / speed])
            path = GroundTruthPath(tuple(times), tuple(map(tuple, pts)), doc.get("kind", "waypoints"))
        else:
            _fields(doc, doc.keys(), where, required=("kind", "bbox"))
            bbox = doc["bbox"]
            if not (isinstance(bbox, list) and len(bbox) == 4):
                raise DocumentError(f"{where}.bbox: expected [xmin, ymin, xmax, ymax]")
            path = make_path(doc["kind"], [_number(v, f"{where}.bbox") for v in bbox], speed, layout)
        before = _number(doc.get("pause_before", 0.0), f"{where}.pause_before")
        after = _number(doc.get("pause_after", 0.0), f"{where}.pause_after")
        return path.with_pauses(before, after) if before or after else path
    except DocumentError:
        raise
    except ValueError as exc:
        raise DocumentError(f"{where}.{exc}") from exc


def path_labels(doc) -> dict:
    labels = doc.get("labels", {})
    if not isinstance(labels, dict) or not all(isinstance(v, str) for v in labels.values()):
        raise DocumentError("path.labels: expected an object of strings")
    return dict(labels)


SCENE_FIELDS = ("noise_sigma", "los_amplitude", "human_amplitude", "scatterers", "scatterer_jitter",
                "carrier", "constant_phase", "rate", "scatterer_seed", "scatterer_amplitude")


def scene_from_doc(doc, layout: AntennaLayout, where: str = "scene"):
    """``(Scene, rate)`` from a scene override document."""
    _fields(doc, SCENE_FIELDS, where)
    kw = {}
    for key in ("noise_sigma", "los_amplitude", "scatterer_jitter", "carrier", "constant_phase"):
        if key in doc:
            kw[key] = _number(doc[key], f"{where}.{key}")
    if "human_amplitude" in doc:
        h = _fields(doc["human_amplitude"], ("kind", "coefficient"), f"{where}.human_amplitude")
        kw["human_amplitude"] = HumanAmplitude(h.get("kind", "inverse_square"),
                                               _number(h.get("coefficient", 3.0), f"{where}.human_amplitude.coefficient"))
    rate = _number(doc.get("rate", 1000), f"{where}.rate", integer=True)
    scat = doc.get("scatterers", 5)
    try:
        if isinstance(scat, int) and not isinstance(scat, bool):
            seed = _number(doc.get("scatterer_seed", 0), f"{where}.scatterer_seed", integer=True)
            amp = _number(doc.get("scatterer_amplitude", 0.1), f"{where}.scatterer_amplitude")
            return Scene.with_default_scatterers(layout, seed=seed, count=scat, relative_amplitude=amp, **kw), rate
        if not isinstance(scat, list):
            raise DocumentError(f"{where}.scatterers: expected a count or a list")
        items = []
        for i, s in enumerate(scat):
            s = _fields(s, ("position", "amplitude", "phase"), f"{where}.scatterers[{i}]", ("position", "amplitude"))
            items.append((_point(s["position"], f"{where}.scatterers[{i}].position"),
                          _number(s["amplitude"], f"{where}.scatterers[{i}].amplitude"),
                          _number(s.get("phase", 0.0), f"{where}.scatterers[{i}].phase")))
        return Scene(layout=layout, scatterers=tuple(items), **kw), rate
    except DocumentError:
        raise
    except ValueError as exc:
        raise DocumentError(f"{where}: {exc}") from exc


TRACKER_FIELDS = ("initial", "voters", "sgf", "pair_separation", "max_lag", "search_step", "weight",
                  "max_speed", "search_horizon", "area", "range_ssd", "velocity_model")


def tracker_from_doc(doc, layout: AntennaLayout, initial=None, where: str = "config"):
    """:class:`~wivelo.pipeline.TrackerConfig` from a config document.

    ``initial`` fills in the start position when the document has none.
    """
    from .pipeline import TrackerConfig

    _fields(doc, TRACKER_FIELDS, where)
    kw = {}
    if "voters" in doc:
        kw["voters"] = _simple(VoterConfig, doc["voters"], f"{where}.voters")
    if "sgf" in doc:
        kw["sgf"] = _simple(SgfConfig, doc["sgf"], f"{where}.sgf")
    if "range_ssd" in doc:
        kw["range_ssd"] = _simple(RangeSsdConfig, doc["range_ssd"], f"{where}.range_ssd")
    for key in ("pair_separation", "max_lag"):
        if key in doc:
            kw[key] = _number(doc[key], f"{where}.{key}", integer=True)
    for key in ("search_step", "weight", "max_speed", "search_horizon"):
        if key in doc:
            kw[key] = _number(doc[key], f"{where}.{key}")
    if doc.get("area") is not None:
        area = doc["area"]
        if not (isinstance(area, list) and len(area) == 4):
            raise DocumentError(f"{where}.area: expected [xmin, ymin, xmax, ymax]")
        kw["area"] = tuple(_number(v, f"{where}.area") for v in area)
    if "velocity_model" in doc:
        if not isinstance(doc["velocity_model"], str):
            raise DocumentError(f"{where}.velocity_model: expected a string")
        kw["velocity_model"] = doc["velocity_model"]
    start = _point(doc["initial"], f"{where}.initial") if "initial" in doc else initial
    if start is None:
        raise DocumentError(f"{where}.initial: required (no ground-truth sidecar to take it from)")
    try:
        return TrackerConfig(layout, start, **kw)
    except ValueError as exc:
        raise DocumentError(f"{where}.{exc}") from exc


def tracker_to_doc(cfg) -> dict:
    return {
        "initial": list(cfg.initial), "voters": asdict(cfg.voters), "sgf": asdict(cfg.sgf),
        "pair_separation": cfg.pair_separation, "max_lag": cfg.max_lag, "search_step": cfg.search_step,
        "weight": cfg.weight, "max_speed": cfg.max_speed, "search_horizon": cfg.search_horizon,
        "area": None if cfg.area is None else list(cfg.area), "range_ssd": asdict(cfg.range_ssd),
        "velocity_model": cfg.velocity_model,
    }


# --------------------------------------------------------------- trajectories

TRAJECTORY_FORMAT = "wivelo-trajectory"


@dataclass(frozen=True)
class TrajectoryDoc:
    """Vertices ``(t, x, y, speed, direction)`` plus per-step metadata."""

    vertices: tuple
    steps: tuple = ()
    labels: dict = None
    manifest: dict = None

    @property
    def points(self) -> np.ndarray:
        return np.array([[v[1], v[2]] for v in self.vertices], dtype=float).reshape(-1, 2)

    def to_doc(self) -> dict:
        return {
            "format": TRAJECTORY_FORMAT, "version": VERSION,
            "labels": self.labels or {}, "manifest": self.manifest or {},
            "vertices": [{"t": v[0], "x": v[1], "y": v[2], "speed": v[3], "direction": v[4]} for v in self.vertices],
            "steps": list(self.steps),
        }

    @classmethod
    def from_doc(cls, doc, where: str = "trajectory") -> "TrajectoryDoc":
        _fields(doc, ("format", "version", "labels", "manifest", "vertices", "steps"), where,
                required=("format", "vertices"))
        if doc["format"] != TRAJECTORY_FORMAT:
            raise DocumentError(f"{where}.format: expected {TRAJECTORY_FORMAT!r}")
        verts = []
        for i, v in enumerate(doc["vertices"]):
            v = _fields(v, ("t", "x", "y", "speed", "direction"), f"{where}.vertices[{i}]", ("t", "x", "y"))
            verts.append((_number(v["t"], f"{where}.vertices[{i}].t"), _number(v["x"], f"{where}.vertices[{i}].x"),
                          _number(v["y"], f"{where}.vertices[{i}].y"),
                          _number(v.get("speed", 0.0), f"{where}.vertices[{i}].speed"), v.get("direction")))
        if not verts:
            raise DocumentError(f"{where}.vertices: empty")
        return cls(tuple(verts), tuple(doc.get("steps", ())), dict(doc.get("labels", {})), doc.get("manifest"))


def trajectory_from_path(path: GroundTruthPath, labels=None, manifest=None) -> TrajectoryDoc:
    sp = np.r_[path.speeds, 0.0]
    verts = tuple((float(t), float(p[0]), float(p[1]), float(s), None)
                  for t, p, s in zip(path.times, path.points, sp))
    return TrajectoryDoc(verts, (), labels or {}, manifest)


def trajectory_from_run(result, labels=None, manifest=None) -> TrajectoryDoc:
    traj = result.trajectory
    dirs = (None,) + tuple(s.direction.label() for s in result.steps)
    verts = tuple((float(t), float(p[0]), float(p[1]), float(s), d)
                  for t, p, s, d in zip(traj.times, traj.points, traj.speeds, dirs))
    steps = []
    for s, dt in zip(result.steps, result.intervals):
        steps.append({
            "index": s.index, "start": s.start, "status": s.status, "direction": s.direction.label(),
            "statistics": [r.statistic for r in s.direction.receivers],
            "interval": s.interval,
            "receiver_intervals": [None if a is None else a.arrival for a in s.receiver_searches],
            "refined_intervals": [float(v) for v in dt],
            "landmark": None if not isinstance(s.landmark, Point2) else list(s.landmark),
            "low_confidence": bool(s.search is not None and s.search.low_confidence),
        })
    return TrajectoryDoc(verts, tuple(steps), labels or {}, manifest)


# ------------------------------------------------------------------- manifest

@dataclass(frozen=True)
class RunManifest:
    """Provenance of one output document.

    ``digest`` hashes the command, configuration, seed, tool version and
    input contents.  ``timing`` holds trace-derived durations only, so
    identical inputs always yield byte-identical documents.
    """

    command: str
    config: dict
    seed: int | None
    version: str
    inputs: dict
    outputs: tuple
    timing: dict
    digest: str = ""

    @classmethod
    def create(cls, command, config, seed, inputs=None, outputs=(), timing=None) -> "RunManifest":
        from . import __version__

        inputs = {k: {"name": Path(p).name, "sha256": file_digest(p)} for k, p in (inputs or {}).items()}
        body = {"command": command, "config": _plain(config), "seed": seed, "version": __version__,
                "inputs": {k: v["sha256"] for k, v in inputs.items()}}
        digest = hashlib.sha256(dumps(body).encode()).hexdigest()
        return cls(command, _plain(config), seed, __version__, inputs,
                   tuple(Path(p).name for p in outputs), _plain(timing or {}), digest)

    def to_doc(self) -> dict:
        return _plain(self)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
