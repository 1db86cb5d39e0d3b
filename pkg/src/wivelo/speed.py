"""Arrival-time search by EMD similarity and speed from landmark distance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import SsdVector
from .geometry import distance

LOW_CONFIDENCE_RANGE = 0.10


class SpeedError(ValueError):
    pass


class LengthMismatch(SpeedError):
    pass


class EmptyCandidates(SpeedError):
    pass


class NonpositiveInterval(SpeedError):
    pass


def _elements(v) -> np.ndarray:
    return v.elements if isinstance(v, SsdVector) else np.asarray(v)


def emd(u, v) -> float:
    """1-D earth mover's distance between two equal-size multisets."""
    a, b = _elements(u).ravel(), _elements(v).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"EMD needs equal element counts, got {a.size} and {b.size}")
    if a.size == 0:
        raise LengthMismatch("EMD of empty vectors")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def emd_rows(target, candidates) -> np.ndarray:
    """EMD between one target vector and every row of ``candidates``."""
    t = np.sort(np.asarray(target, dtype=float).ravel())
    c = np.sort(np.asarray(candidates, dtype=float), axis=1)
    if c.shape[1] != t.size:
        raise LengthMismatch(f"target has {t.size} elements, candidates have {c.shape[1]}")
    return np.mean(np.abs(c - t[None, :]), axis=1)


@dataclass(frozen=True)
class ArrivalSearch:
    candidates: np.ndarray
    emd_curve: np.ndarray
    chosen: int

    @property
    def arrival(self) -> float:
        return float(self.candidates[self.chosen])

    @property
    def low_confidence(self) -> bool:
        c = self.emd_curve
        mean = float(np.mean(c))
        return mean <= 0 or (float(np.max(c)) - float(np.min(c))) < LOW_CONFIDENCE_RANGE * mean


def search_arrival(ref_ssds, aux_streams, candidates) -> ArrivalSearch:
    """Candidate time whose auxiliary SSDs best match the reference SSDs.

    Parameters
    ----------
    ref_ssds : pair of SsdVector or arrays
        Reference-antenna SSDs of both receivers at the window start.
    aux_streams : pair of arrays, shape (n_candidates, n_pairs)
        SSDs of the two selected antennas at each candidate time.
    candidates : array_like
        Candidate arrival times (or intervals), one per stream row.

    The two vectors of each side are concatenated before the EMD.
    """
    cand = np.asarray(candidates, dtype=float)
    if cand.size == 0:
        raise EmptyCandidates("no arrival candidates")
    target = np.concatenate([_elements(s).ravel() for s in ref_ssds])
    streams = np.concatenate([np.asarray(s, dtype=float) for s in aux_streams], axis=1)
    if streams.shape[0] != cand.size:
        raise LengthMismatch(f"{streams.shape[0]} stream rows for {cand.size} candidates")
    curve = emd_rows(target, streams)
    return ArrivalSearch(cand, curve, int(np.argmin(curve)))


def speed_from(current, landmark, t_k: float, t_next: float) -> float:
    dt = t_next - t_k
    if not dt > 0:
        raise NonpositiveInterval(f"arrival {t_next} is not after window start {t_k}")
    return distance(current, landmark) / dt


@dataclass(frozen=True)
class VelocityStep:
    """Outcome of one estimation period.

    ``search`` matches both moving receivers jointly; ``receiver_searches``
    holds the per-receiver searches (``None`` for a receiver on its
    reference ellipse).
    """

    index: int
    start: float
    direction: object
    landmark: object
    current: tuple
    interval: float
    velocity: tuple
    search: ArrivalSearch | None = None
    status: str = "ok"
    receiver_searches: tuple = (None, None)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def arrival(self) -> float:
        return self.start + self.interval

    @property
    def moving(self) -> bool:
        return self.search is not None
