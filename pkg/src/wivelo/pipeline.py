"""Per-period tracking loop and whole-trace refinement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel_sim import CsiTrace, cfr_power
from .direction import InsufficientPackets, VoterConfig, estimate_direction
from .dsp import DEFAULT_MAX_LAG, RangeSsdConfig, SgfConfig, default_pairs, range_ssd, sgf_smooth, smoothed_noise_std, ssd_series
from .geometry import STATIONARY, AntennaLayout, DegenerateMesh, MeshModel, Point2, Trend, as_point
from .speed import VelocityStep, search_arrival
from .trajectory import (
    RecoveredTrajectory,
    VELOCITY_MODELS,
    EmdMatrix,
    advance,
    clamp_to_area,
    mesh_at,
    nearest_buildable,
    recover,
    refine_arrivals,
)


class TrackingError(RuntimeError):
    def __init__(self, window: int, cause: Exception):
        super().__init__(f"window {window}: {cause}")
        self.window = window
        self.cause = cause


@dataclass(frozen=True)
class TrackerConfig:
    layout: AntennaLayout
    initial: tuple
    voters: VoterConfig = VoterConfig()
    sgf: SgfConfig = SgfConfig()
    pair_separation: int = 15
    max_lag: int = DEFAULT_MAX_LAG
    search_step: float = 1.0
    weight: float = 1.0
    max_speed: float = 3.0
    search_horizon: float = 1.0
    area: tuple | None = None
    velocity_model: str = "ellipse"
    range_ssd: RangeSsdConfig = RangeSsdConfig()

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(as_point(self.initial)))
        if self.search_step <= 0:
            raise ValueError("search_step: must be positive (ms)")
        if self.weight < 0:
            raise ValueError("weight: must be >= 0")
        if self.area is not None:
            area = tuple(float(v) for v in self.area)
            if len(area) != 4 or not (area[2] > area[0] and area[3] > area[1]):
                raise ValueError("area: expected (xmin, ymin, xmax, ymax) with positive extent")
            object.__setattr__(self, "area", area)
        if self.search_horizon < 1:
            raise ValueError("search_horizon: must be >= 1 period")
        if self.velocity_model not in VELOCITY_MODELS:
            raise ValueError(f"velocity_model: expected one of {VELOCITY_MODELS}")
        if self.max_speed <= 0:
            raise ValueError("max_speed: must be positive")
        if not self.layout.monitor_half_plane.contains(self.initial):
            raise ValueError("initial: position is not in the monitored half-plane")

    def pairs(self, n_subcarriers: int) -> tuple:
        return default_pairs(n_subcarriers, self.pair_separation)


@dataclass
class TraceFeatures:
    """Smoothed power and path-length SSDs of every antenna."""

    rate: float
    start_time: float
    power: np.ndarray
    ranges: np.ndarray
    pairs: tuple
    noise: np.ndarray | None = None
    lags: dict = field(default_factory=dict)

    @property
    def n_packets(self) -> int:
        return self.power.shape[0]

    @classmethod
    def from_trace(cls, trace: CsiTrace, cfg: TrackerConfig) -> "TraceFeatures":
        if trace.n_antennas != len(cfg.layout.antennas):
            raise ValueError(f"trace has {trace.n_antennas} antennas, layout has {len(cfg.layout.antennas)}")
        pairs = cfg.pairs(len(trace.frequencies))
        raw = cfr_power(trace)
        power = sgf_smooth(raw, cfg.sgf)
        noise = smoothed_noise_std(raw, cfg.sgf)
        ranges = np.stack([
            range_ssd(trace.frames[:, a, :], trace.frequencies, pairs, cfg.layout.los_length(a),
                      trace.rate, cfg.sgf, cfg.range_ssd, power[:, a, :])
            for a in range(trace.n_antennas)
        ], axis=1)
        _, window, _ = cfg.voters.packets(trace.rate)
        lags = {}
        for r in range(2):
            a = cfg.layout.reference_index(r)
            lags[a] = ssd_series(power[:, a, :], pairs, window, cfg.max_lag, noise[a])[0]
        return cls(trace.rate, trace.start_time, power, ranges, pairs, noise, lags)


@dataclass
class TrackerState:
    position: Point2
    mesh: MeshModel | None
    k: int = 0
    steps: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    receiver_rows: list = field(default_factory=list)

    @classmethod
    def initial(cls, cfg: TrackerConfig) -> "TrackerState":
        p = as_point(cfg.initial)
        return cls(p, _mesh_or_none(cfg.layout, p))


def _mesh_or_none(layout, p):
    try:
        return mesh_at(layout, p)
    except DegenerateMesh:
        return None


class Tracker:
    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg

    def periods(self, feats: TraceFeatures):
        period, _, _ = self.cfg.voters.packets(feats.rate)
        return period, feats.n_packets // period

    def candidate_offsets(self, rate: float) -> np.ndarray:
        period, _, _ = self.cfg.voters.packets(rate)
        step = max(1, int(round(self.cfg.search_step * rate / 1000.0)))
        return np.arange(step, int(round(period * self.cfg.search_horizon)) + 1, step)

    def step(self, state: TrackerState, feats: TraceFeatures):
        """Advance ``state`` by one period; returns ``(state', VelocityStep)``."""
        cfg = self.cfg
        period, _ = self.periods(feats)
        k = state.k
        i0 = k * period
        if i0 + period > feats.n_packets:
            raise TrackingError(k, InsufficientPackets("period runs past the end of the trace"))
        t_k = feats.start_time + i0 / feats.rate
        T = period / feats.rate
        offsets = self.candidate_offsets(feats.rate)
        grid = offsets / feats.rate
        try:
            direction = estimate_direction(feats.power, cfg.layout, cfg.voters, i0, feats.rate,
                                           feats.pairs, cfg.max_lag, noise_std=feats.noise,
                                           lags=feats.lags or None)
        except InsufficientPackets as exc:
            raise TrackingError(k, exc) from exc

        cur = state.position
        row = np.zeros(len(offsets))
        receiver_row = np.zeros((2, len(offsets)))
        search, per_receiver = None, [None, None]
        status = "ok"
        velocity, landmark, interval = (0.0, 0.0), STATIONARY, T
        mesh = state.mesh
        if mesh is None:
            status = "degenerate"
        else:
            trends = tuple(
                t if mesh.is_proper(r, int(t)) else Trend.ON for r, t in enumerate(direction.trends)
            )
            direction = direction.with_trends(trends)
            if direction.stationary:
                status = "stationary"
            else:
                # Only receivers that left their reference ellipse carry arrival evidence.
                moving = [r for r, t in enumerate(trends) if t != Trend.ON]
                rows_idx = np.minimum(i0 + offsets, feats.n_packets - 1)
                refs, streams = {}, {}
                for r in moving:
                    refs[r] = feats.ranges[i0, cfg.layout.reference_index(r)]
                    streams[r] = feats.ranges[rows_idx, mesh.aux_antenna[r][int(trends[r]) + 1]]
                    per_receiver[r] = search_arrival([refs[r]], [streams[r]], grid)
                    receiver_row[r] = per_receiver[r].emd_curve
                search = search_arrival([refs[r] for r in moving], [streams[r] for r in moving], grid)
                row = search.emd_curve
                interval = search.arrival
                if cfg.velocity_model == "ellipse":
                    arg = tuple(T if a is None else a.arrival for a in per_receiver)
                else:
                    arg = interval
                velocity, landmark, _ = advance(cfg.layout, cur, trends, arg, T, cfg.max_speed,
                                                cfg.velocity_model)
                if search.low_confidence:
                    status = "low-confidence"

        nxt = Point2(cur.x + velocity[0] * T, cur.y + velocity[1] * T)
        nxt = nearest_buildable(clamp_to_area(nxt, cfg.area), cfg.layout)
        vs = VelocityStep(k, t_k, direction, landmark, tuple(cur), interval, velocity, search, status,
                          tuple(per_receiver))
        new_state = TrackerState(
            nxt, mesh if nxt == cur else _mesh_or_none(cfg.layout, nxt), k + 1,
            state.steps + [vs], state.rows + [row], state.receiver_rows + [receiver_row],
        )
        return new_state, vs

    def run(self, trace: CsiTrace, feats: TraceFeatures | None = None) -> "RunResult":
        cfg = self.cfg
        feats = TraceFeatures.from_trace(trace, cfg) if feats is None else feats
        period, n_windows = self.periods(feats)
        if n_windows < 1:
            raise TrackingError(0, InsufficientPackets(f"trace shorter than one {period}-packet period"))
        state = TrackerState.initial(cfg)
        for _ in range(n_windows):
            state, _ = self.step(state, feats)
        T = period / feats.rate
        grid = self.candidate_offsets(feats.rate) / feats.rate
        matrix = EmdMatrix(np.array(state.rows), grid,
                           [s.search is not None and s.search.low_confidence for s in state.steps])
        if cfg.velocity_model == "landmark":
            choice = refine_arrivals(matrix.normalized(), cfg.weight, T)
            moving = np.array([s.moving for s in state.steps])
            intervals = np.where(moving, grid[choice], T)
            intervals = np.column_stack([intervals, intervals])
            arg = intervals[:, 0]
        else:
            # One refinement per receiver; rows where it did not move carry no evidence.
            rows = np.array(state.receiver_rows)
            intervals = np.empty((len(state.steps), 2))
            moving = np.array([[a is not None for a in s.receiver_searches] for s in state.steps])
            for r in range(2):
                choice = refine_arrivals(EmdMatrix(rows[:, r], grid).normalized(), cfg.weight, T)
                intervals[:, r] = np.where(moving[:, r], grid[choice], T)
            arg = intervals
        traj = recover(state.steps, cfg.initial, cfg.layout, T, arg, cfg.max_speed, feats.start_time,
                       area=cfg.area, model=cfg.velocity_model)
        return RunResult(traj, tuple(state.steps), matrix, intervals,
                         tuple(s.status for s in state.steps))


@dataclass(frozen=True)
class RunResult:
    """Output of :meth:`Tracker.run`; ``intervals`` is ``(K, 2)``, one refined
    arrival interval per receiver (both columns equal for the landmark model)."""

    trajectory: RecoveredTrajectory
    steps: tuple
    matrix: EmdMatrix
    intervals: np.ndarray
    statuses: tuple


def run(trace: CsiTrace, cfg: TrackerConfig) -> RunResult:
    return Tracker(cfg).run(trace)
