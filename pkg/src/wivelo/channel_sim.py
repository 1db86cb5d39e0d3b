"""Synthetic packet-rate CSI from a walking target and an antenna layout.

Each frame is the multipath channel frequency response

    H = a0 exp(-j 2 pi f d0 / c)
      + ah(t) exp(-j 2 pi f dh(t) / c + j phi0)
      + sum_l al exp(-j 2 pi f dl / c + j phil)
      + noise

with every delay carried as a path length ``d = c * tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AntennaLayout, GeometryError, Point2, as_point

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER = 5.825e9
DEFAULT_BANDWIDTH = 40e6
DEFAULT_SUBCARRIERS = 30
DEFAULT_RATE = 1000.0
MAX_WALK_SPEED = 3.0

PATH_KINDS = ("straight", "L", "U", "S", "M", "Z", "arc")


class ConfigError(ValueError):
    pass


def default_subcarriers(carrier: float = DEFAULT_CARRIER, count: int = DEFAULT_SUBCARRIERS,
                        bandwidth: float = DEFAULT_BANDWIDTH) -> np.ndarray:
    """``count`` evenly spaced subcarrier frequencies spanning ``carrier +/- bandwidth/2``."""
    return np.linspace(carrier - bandwidth / 2, carrier + bandwidth / 2, count)


@dataclass(frozen=True)
class Scatterer:
    position: Point2
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class HumanAmplitude:
    """Reflection amplitude of the walking target.

    ``kind`` is ``"constant"`` (``coefficient``), ``"inverse"``
    (``coefficient / dh``) or ``"inverse_square"`` (``coefficient / dh**2``).
    """

    kind: str = "inverse_square"
    coefficient: float = 3.0

    def __post_init__(self):
        if self.kind not in ("constant", "inverse", "inverse_square"):
            raise ConfigError(f"human_amplitude.kind: unknown model {self.kind!r}")
        if self.coefficient < 0:
            raise ConfigError("human_amplitude.coefficient: must be >= 0")

    def __call__(self, dh: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(dh, self.coefficient)
        if self.kind == "inverse":
            return self.coefficient / dh
        return self.coefficient / dh**2


@dataclass(frozen=True)
class Scene:
    layout: AntennaLayout
    los_amplitude: float = 1.0
    human_amplitude: HumanAmplitude = field(default_factory=HumanAmplitude)
    scatterers: tuple = ()
    noise_sigma: float = 0.0
    scatterer_jitter: float = 0.0
    carrier: float = DEFAULT_CARRIER
    subcarriers: tuple = ()
    constant_phase: float = 0.0

    def __post_init__(self):
        if not self.subcarriers:
            object.__setattr__(self, "subcarriers", tuple(default_subcarriers(self.carrier)))
        f = np.asarray(self.subcarriers, dtype=float)
        if f.ndim != 1 or f.size < 1 or np.any(np.diff(f) <= 0):
            raise ConfigError("subcarriers: frequencies must be strictly increasing")
        if self.los_amplitude < 0:
            raise ConfigError("los_amplitude: must be >= 0")
        if self.noise_sigma < 0 or self.scatterer_jitter < 0:
            raise ConfigError("noise_sigma/scatterer_jitter: must be >= 0")
        scat = []
        for s in self.scatterers:
            if not isinstance(s, Scatterer):
                s = Scatterer(as_point(s[0]), float(s[1]), float(s[2]) if len(s) > 2 else 0.0)
            if s.amplitude < 0:
                raise ConfigError("scatterers: amplitudes must be >= 0")
            scat.append(s)
        object.__setattr__(self, "scatterers", tuple(scat))

    @property
    def frequencies(self) -> np.ndarray:
        return np.asarray(self.subcarriers, dtype=float)

    @classmethod
    def with_default_scatterers(cls, layout: AntennaLayout, seed: int = 0, count: int = 5,
                                relative_amplitude: float = 0.1, extent: float = 4.0, **kw):
        """Scene with ``count`` random static scatterers on the monitored side."""
        rng = np.random.default_rng(seed)
        side = layout.monitor_half_plane
        u = layout.line_direction
        los = kw.get("los_amplitude", 1.0)
        scat = []
        for _ in range(count):
            along = rng.uniform(-extent, extent)
            depth = rng.uniform(0.5, extent)
            p = Point2(side.origin.x + along * u.x + depth * side.normal.x,
                       side.origin.y + along * u.y + depth * side.normal.y)
            scat.append(Scatterer(p, relative_amplitude * los, float(rng.uniform(0, 2 * math.pi))))
        return cls(layout=layout, scatterers=tuple(scat), **kw)


@dataclass(frozen=True)
class GroundTruthPath:
    """Timestamped waypoints joined by constant-speed straight segments."""

    times: tuple
    points: tuple
    kind: str = "custom"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.points) or len(t) < 1:
            raise ConfigError("path: times and points must be equally long and non-empty")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("path: timestamps must be strictly increasing")
        object.__setattr__(self, "times", tuple(map(float, t)))
        object.__setattr__(self, "points", tuple(as_point(p) for p in self.points))
        speeds = self.speeds
        if speeds.size and (speeds.max() > MAX_WALK_SPEED + 1e-9):
            raise ConfigError(f"path: segment speed {speeds.max():.3g} m/s exceeds {MAX_WALK_SPEED}")

    @property
    def speeds(self) -> np.ndarray:
        p = np.asarray(self.points)
        return np.hypot(*np.diff(p, axis=0).T) / np.diff(self.times)

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def end(self) -> float:
        return self.times[-1]

    def position(self, t) -> np.ndarray:
        """Positions at times ``t`` (clamped to the end points), shape ``(len(t), 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        p = np.asarray(self.points)
        if len(self.times) == 1:
            return np.repeat(p, len(t), axis=0)
        return np.column_stack([np.interp(t, self.times, p[:, 0]), np.interp(t, self.times, p[:, 1])])

    def length(self) -> float:
        p = np.asarray(self.points)
        return float(np.hypot(*np.diff(p, axis=0).T).sum()) if len(p) > 1 else 0.0

    def turning_points(self, min_angle_deg: float = 10.0) -> int:
        p = np.asarray(self.points)
        seg = np.diff(p, axis=0)
        seg = seg[np.hypot(*seg.T) > 1e-9]
        count = 0
        for a, b in zip(seg[:-1], seg[1:]):
            ang = math.degrees(abs(math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)))
            count += ang >= min_angle_deg
        return int(count)

    def with_pauses(self, before: float, after: float) -> "GroundTruthPath":
        """Prepend/append stationary intervals at the end points."""
        times = list(self.times)
        points = list(self.points)
        if before > 0:
            times = [times[0] - before] + times
            points = [points[0]] + points
        if after > 0:
            times = times + [times[-1] + after]
            points = points + [points[-1]]
        shift = times[0]
        return GroundTruthPath(tuple(t - shift for t in times), tuple(points), self.kind)


@dataclass(frozen=True)
class CsiTrace:
    """Complex CFR frames, shape ``(packets, antennas, subcarriers)``."""

    rate: float
    frequencies: np.ndarray
    frames: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise ConfigError("frames: expected (packets, antennas, subcarriers)")
        if frames.shape[2] != len(self.frequencies):
            raise ConfigError("frames: subcarrier count does not match header")
        if self.rate <= 0:
            raise ConfigError("rate: must be positive")

    @property
    def n_packets(self) -> int:
        return self.frames.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.n_packets / self.rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_packets) / self.rate


def synthesize(scene: Scene, path: GroundTruthPath | None, rate: float = DEFAULT_RATE,
               duration: float | None = None, seed: int | None = None) -> CsiTrace:
    """Render ``duration`` seconds of CSI at ``rate`` packets per second.

    ``path=None`` removes the target entirely.  Noise and scatterer jitter
    are drawn from ``numpy.random.default_rng(seed)``.
    """
    if rate <= 0:
        raise ConfigError("rate: must be positive")
    if duration is None:
        if path is None:
            raise ConfigError("duration: required when no path is given")
        duration = path.end - path.start
    if duration <= 0:
        raise ConfigError("duration: must be positive")
    n = int(round(duration * rate))
    t0 = path.start if path is not None else 0.0
    t = t0 + np.arange(n) / rate
    layout = scene.layout
    freqs = scene.frequencies
    k = 2 * np.pi * freqs / SPEED_OF_LIGHT
    rng = np.random.default_rng(seed)

    pos = path.position(t) if path is not None else None
    if pos is not None and (scene.human_amplitude.coefficient > 0):
        d_tx = np.hypot(pos[:, 0] - layout.tx.x, pos[:, 1] - layout.tx.y)
    frames = np.empty((n, len(layout.antennas), len(freqs)), dtype=complex)

    jitter = None
    if scene.scatterers and scene.scatterer_jitter > 0:
        steps = rng.standard_normal((n, len(scene.scatterers))) * scene.scatterer_jitter / math.sqrt(rate)
        jitter = np.cumsum(steps, axis=0)

    for a, ant in enumerate(layout.antennas):
        d0 = math.hypot(ant.x - layout.tx.x, ant.y - layout.tx.y)
        static = scene.los_amplitude * np.exp(-1j * k * d0)
        h = np.broadcast_to(static, (n, len(freqs))).copy()
        for l, sc in enumerate(scene.scatterers):
            dl = math.hypot(sc.position.x - layout.tx.x, sc.position.y - layout.tx.y) + \
                math.hypot(sc.position.x - ant.x, sc.position.y - ant.y)
            term = sc.amplitude * np.exp(-1j * k * dl + 1j * sc.phase)
            if jitter is None:
                h += term
            else:
                h += term[None, :] * np.exp(1j * jitter[:, l])[:, None]
        if pos is not None and scene.human_amplitude.coefficient > 0:
            dh = d_tx + np.hypot(pos[:, 0] - ant.x, pos[:, 1] - ant.y)
            ah = scene.human_amplitude(dh)
            h += ah[:, None] * np.exp(-1j * np.outer(dh, k) + 1j * scene.constant_phase)
        frames[:, a, :] = h

    if scene.noise_sigma > 0:
        noise = rng.standard_normal((2,) + frames.shape) * (scene.noise_sigma / math.sqrt(2))
        frames += noise[0] + 1j * noise[1]
    return CsiTrace(rate=float(rate), frequencies=freqs.copy(), frames=frames, start_time=float(t0))


def cfr_power(trace_or_frames) -> np.ndarray:
    """Element-wise ``|H|**2``."""
    frames = trace_or_frames.frames if isinstance(trace_or_frames, CsiTrace) else np.asarray(trace_or_frames)
    return frames.real**2 + frames.imag**2


def make_path(kind: str, bbox, speed: float, layout: AntennaLayout | None = None) -> GroundTruthPath:
    """Constant-speed walk of a named shape inside ``bbox = (xmin, ymin, xmax, ymax)``.

    Shapes are laid out with x along the box width and y along its depth.
    """
    if kind not in PATH_KINDS:
        raise ConfigError(f"kind: unsupported path kind {kind!r}; expected one of {PATH_KINDS}")
    if not 0 < speed <= MAX_WALK_SPEED:
        raise ConfigError(f"speed: must be in (0, {MAX_WALK_SPEED}] m/s")
    x0, y0, x1, y1 = map(float, bbox)
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("bbox: expected (xmin, ymin, xmax, ymax) with positive extent")
    if layout is not None:
        side = layout.monitor_half_plane
        for corner in ((x0, y0), (x0, y1), (x1, y0), (x1, y1)):
            if not side.contains(corner):
                raise ConfigError(f"bbox: corner {corner} is outside the monitored half-plane")
    w, h = x1 - x0, y1 - y0
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    if kind == "straight":
        pts = [(x0, ym), (x1, ym)]
    elif kind == "L":
        pts = [(x0, y1), (x0, y0), (x1, y0)]
    elif kind == "U":
        pts = [(x0, y1), (x0, y0), (x1, y0), (x1, y1)]
    elif kind == "Z":
        pts = [(x0, y1), (x1, y1), (x0, y0), (x1, y0)]
    elif kind == "S":
        pts = [(x1, y1), (x0, y1), (x0, ym), (x1, ym), (x1, y0), (x0, y0)]
    elif kind == "M":
        pts = [(x0, y0), (x0, y1), (xm, ym), (x1, y1), (x1, y0), (xm, y0)]
    else:  # arc: half circle bulging away from the antenna line
        r = min(0.5 * w, h)
        ang = np.linspace(math.pi, 0.0, 13)
        pts = [(xm + r * math.cos(a), y0 + r * math.sin(a)) for a in ang]
    pts = np.asarray(pts, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    times = np.concatenate([[0.0], np.cumsum(seg) / speed])
    return GroundTruthPath(tuple(times), tuple(map(tuple, pts)), kind)
