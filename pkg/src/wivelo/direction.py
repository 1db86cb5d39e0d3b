"""Per-window walking direction from virtual voters.

Each reference antenna answers one question per period: did the target
leave its reference ellipse, and if so, inward or outward?  The answer is
voted on by many pairs of time-offset SSD vectors taken ``delay`` packets
apart inside several short windows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import DEFAULT_MAX_LAG, SsdVector, default_pairs, sign_distance_batch, ssd_batch
from .geometry import Trend

# Majority SSD sign observed while the reflected path lengthens; see calibrate_sign().
OUTWARD_SIGN = 1


class InsufficientPackets(ValueError):
    pass


@dataclass(frozen=True)
class VoterConfig:
    """Voting geometry in milliseconds; converted to packets via the trace rate."""

    period: float = 128.0
    window: float = 32.0
    n_windows: int = 4
    delay: float = 5.0
    threshold: float = 4.5

    def __post_init__(self):
        if self.n_windows < 1:
            raise ValueError("voters.n_windows: must be >= 1")
        if not 0 < self.window <= self.period:
            raise ValueError("voters.window: must lie in (0, period]")
        if not 0 <= self.delay < self.window:
            raise ValueError("voters.delay: must lie in [0, window)")
        if not self.threshold > 0:
            raise ValueError("voters.threshold: must be positive")

    def packets(self, rate: float):
        """``(period, window, delay)`` in packets."""
        ms = rate / 1000.0
        return int(round(self.period * ms)), int(round(self.window * ms)), int(round(self.delay * ms))

    def window_offsets(self, rate: float) -> np.ndarray:
        period, window, _ = self.packets(rate)
        if self.n_windows == 1:
            return np.array([0])
        stride = (period - window) / (self.n_windows - 1)
        return np.round(np.arange(self.n_windows) * stride).astype(int)

    def voter_count(self, rate: float) -> int:
        _, window, delay = self.packets(rate)
        return self.n_windows * max(window - delay, 0)


@dataclass(frozen=True)
class Voters:
    """Voter pairs of one antenna, stored as two aligned element arrays."""

    first: np.ndarray
    second: np.ndarray
    antenna: int
    pairs: tuple
    times: np.ndarray

    def __len__(self):
        return self.first.shape[0]

    def __iter__(self):
        for a, b, t in zip(self.first, self.second, self.times):
            yield (SsdVector(a, self.antenna, t[0], self.pairs), SsdVector(b, self.antenna, t[1], self.pairs))

    def kappas(self) -> np.ndarray:
        return sign_distance_batch(self.first, self.second)


def build_voters(power, antenna: int, cfg: VoterConfig = VoterConfig(), start: int = 0,
                 rate: float = 1000.0, pairs=None, max_lag: int = DEFAULT_MAX_LAG,
                 noise_std=None, lags=None) -> Voters:
    """Voter pairs ``(S(i), S(i + delay))`` for every window of one period.

    ``power`` is the smoothed ``(samples, subcarriers)`` power of
    ``antenna``; the period starts at sample ``start``.  One SSD vector is
    taken per packet, each over its own ``window``-long analysis span.
    ``noise_std`` (per subcarrier) marks noise-only segments as flat.
    ``lags`` may hold precomputed SSD elements for every packet of the
    trace (see :func:`wivelo.dsp.ssd_series`).
    """
    P = np.asarray(power, dtype=float)
    period, window, delay = cfg.packets(rate)
    if delay >= window:
        raise InsufficientPackets(f"delay of {delay} packets leaves no voter in a {window}-packet window")
    if start < 0 or start + period > P.shape[0]:
        raise InsufficientPackets(
            f"period [{start}, {start + period}) is not covered by {P.shape[0]} packets"
        )
    pairs = default_pairs(P.shape[1]) if pairs is None else tuple(map(tuple, pairs))
    offsets = start + cfg.window_offsets(rate)
    times = (offsets[:, None] + np.arange(window)[None, :]).ravel()
    if lags is None:
        lags, _ = ssd_batch(P, times, pairs, window, max_lag, noise_std=noise_std)
    else:
        lags = np.asarray(lags)[times]
    lags = lags.reshape(len(offsets), window, -1)
    i = np.arange(window - delay)
    first = lags[:, i].reshape(-1, lags.shape[2])
    second = lags[:, i + delay].reshape(-1, lags.shape[2])
    t = times.reshape(len(offsets), window)
    stamps = np.stack([t[:, i].ravel(), t[:, i + delay].ravel()], axis=1) / rate
    return Voters(first, second, antenna, pairs, stamps)


def ellipse_departure_test(voters, cfg: VoterConfig = VoterConfig()):
    """``(departed, statistic)`` with ``statistic`` the summed sign distance."""
    if isinstance(voters, Voters):
        kappas = voters.kappas()
    else:
        voters = list(voters)
        if not voters:
            raise InsufficientPackets("no voters")
        kappas = sign_distance_batch(np.array([a.elements for a, _ in voters]),
                                     np.array([b.elements for _, b in voters]))
    if kappas.size == 0:
        raise InsufficientPackets("no voters")
    stat = float(np.sum(kappas))
    return stat > cfg.threshold, stat


def majority_sign(voters) -> int:
    if isinstance(voters, Voters):
        elems = np.concatenate([voters.first.ravel(), voters.second.ravel()])
    else:
        elems = np.concatenate([np.r_[a.elements, b.elements] for a, b in voters])
    return int(np.sign(np.sum(np.sign(elems))))


def trend_of(voters, departed: bool, outward_sign: int = OUTWARD_SIGN) -> Trend:
    if not departed:
        return Trend.ON
    s = majority_sign(voters)
    if s == 0:
        return Trend.ON
    return Trend.OUTWARD if s == outward_sign else Trend.INWARD


@dataclass(frozen=True)
class ReceiverVote:
    trend: Trend
    statistic: float
    voters: int
    majority: int


@dataclass(frozen=True)
class DirectionState:
    receivers: tuple

    @property
    def trends(self) -> tuple:
        return tuple(r.trend for r in self.receivers)

    @property
    def stationary(self) -> bool:
        return all(t == Trend.ON for t in self.trends)

    def label(self) -> str:
        names = {Trend.INWARD: "in", Trend.ON: "on", Trend.OUTWARD: "out"}
        return "/".join(names[t] for t in self.trends)

    @classmethod
    def from_trends(cls, t1, t2) -> "DirectionState":
        return cls(tuple(ReceiverVote(Trend(t), 0.0, 0, 0) for t in (t1, t2)))

    def with_trends(self, trends) -> "DirectionState":
        return DirectionState(tuple(
            ReceiverVote(Trend(t), r.statistic, r.voters, r.majority) for t, r in zip(trends, self.receivers)
        ))


def estimate_direction(power, layout, cfg: VoterConfig = VoterConfig(), start: int = 0,
                       rate: float = 1000.0, pairs=None, max_lag: int = DEFAULT_MAX_LAG,
                       outward_sign: int = OUTWARD_SIGN, noise_std=None, lags=None) -> DirectionState:
    """Trends of both reference antennas for the period starting at ``start``.

    ``power`` is the smoothed power of the whole trace, shaped
    ``(samples, antennas, subcarriers)``; ``noise_std`` is the matching
    ``(antennas, subcarriers)`` noise level, if known.  ``lags`` optionally
    maps each reference antenna index to its precomputed SSD series.
    """
    P = np.asarray(power)
    votes = []
    for r in range(2):
        a = layout.reference_index(r)
        if a >= P.shape[1]:
            raise InsufficientPackets(f"reference antenna {a} missing from trace")
        noise = None if noise_std is None else np.asarray(noise_std)[a]
        pre = None if lags is None else lags.get(a)
        v = build_voters(P[:, a, :], a, cfg, start, rate, pairs, max_lag, noise, pre)
        departed, stat = ellipse_departure_test(v, cfg)
        votes.append(ReceiverVote(trend_of(v, departed, outward_sign), stat, len(v), majority_sign(v)))
    return DirectionState(tuple(votes))


def calibrate_sign(rate: float = 1000.0, cfg: VoterConfig = VoterConfig()) -> int:
    """Majority voter sign observed on a simulated outward radial walk."""
    from .channel_sim import GroundTruthPath, Scene, synthesize
    from .dsp import sgf_smooth
    from .geometry import AntennaLayout

    layout = AntennaLayout.symmetric(2.1)
    path = GroundTruthPath((0.0, 1.0), ((0.0, 1.0), (0.0, 2.0)))
    trace = synthesize(Scene(layout), path, rate=rate)
    power = sgf_smooth(trace.frames.real**2 + trace.frames.imag**2)
    start = int(0.3 * rate)
    v = build_voters(power[:, layout.reference_index(0), :], layout.reference_index(0), cfg, start, rate)
    return majority_sign(v)
