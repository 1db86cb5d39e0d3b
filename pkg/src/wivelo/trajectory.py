"""Global arrival-interval refinement and trajectory assembly."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    STATIONARY,
    DegenerateMesh,
    MIN_LINE_CLEARANCE,
    AntennaLayout,
    Point2,
    Trend,
    as_point,
    build_mesh,
    landmark_for,
)


class EmptyMatrix(ValueError):
    pass


@dataclass(frozen=True)
class EmdMatrix:
    """EMD curves of all periods on a shared grid of arrival intervals."""

    values: np.ndarray
    grid: np.ndarray
    low_confidence: np.ndarray = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        g = np.asarray(self.grid, dtype=float)
        if v.size == 0 or g.size == 0:
            raise EmptyMatrix("EMD matrix has no rows or no candidates")
        if v.shape[1] != g.size:
            raise ValueError(f"{v.shape[1]} columns for a grid of {g.size} intervals")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("EMD entries must be finite and non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "grid", g)
        flags = np.zeros(v.shape[0], bool) if self.low_confidence is None else np.asarray(self.low_confidence, bool)
        object.__setattr__(self, "low_confidence", flags)

    @property
    def shape(self):
        return self.values.shape

    def normalized(self) -> "EmdMatrix":
        """Each row divided by its mean; all-zero rows stay zero."""
        mean = self.values.mean(axis=1, keepdims=True)
        v = np.divide(self.values, mean, out=np.zeros_like(self.values), where=mean > 0)
        return EmdMatrix(v, self.grid, self.low_confidence)


def sequence_cost(values, grid, choice, weight: float, period: float) -> float:
    """Objective of one column choice per row."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    choice = np.asarray(choice, dtype=int)
    data = float(values[np.arange(len(choice)), choice].sum())
    if len(choice) < 2:
        return data
    return data + weight * float(np.abs(np.diff(grid[choice])).sum()) / period


def refine_arrivals(m: EmdMatrix, weight: float = 1.0, period: float | None = None) -> np.ndarray:
    """Column index per row minimizing EMD plus the interval-change penalty.

    The penalty between consecutive rows is ``weight * |g_next - g| / period``
    on the interval grid ``g``; ``period`` defaults to the largest interval.
    Ties prefer the smaller interval change, then the smaller index.
    """
    if not isinstance(m, EmdMatrix):
        raise TypeError("refine_arrivals expects an EmdMatrix")
    if weight < 0:
        raise ValueError("weight must be non-negative")
    v, g = m.values, m.grid
    period = float(np.max(np.abs(g))) if period is None else float(period)
    if not period > 0:
        raise ValueError("period must be positive")
    K, C = v.shape
    jump = np.abs(g[None, :] - g[:, None])  # [prev, next]
    pen = weight * jump / period
    cost = v[0].copy()
    back = np.zeros((K, C), dtype=int)
    idx = np.arange(C)
    for k in range(1, K):
        total = cost[:, None] + pen
        # lexsort: last key is primary -> cost, then jump, then index.
        order = np.lexsort((np.broadcast_to(idx[:, None], (C, C)), jump, total), axis=0)
        back[k] = order[0]
        cost = total[order[0], idx] + v[k]
    choice = np.empty(K, dtype=int)
    choice[-1] = int(np.argmin(cost))
    for k in range(K - 1, 0, -1):
        choice[k - 1] = back[k, choice[k]]
    return choice


def exhaustive_arrivals(m: EmdMatrix, weight: float, period: float):
    """Brute-force minimum over all ``C**K`` sequences (small instances only)."""
    K, C = m.values.shape
    best, best_cost = None, math.inf
    for seq in itertools.product(range(C), repeat=K):
        c = sequence_cost(m.values, m.grid, seq, weight, period)
        if c < best_cost:
            best, best_cost = seq, c
    return np.array(best), best_cost


@dataclass(frozen=True)
class RecoveredTrajectory:
    times: np.ndarray
    points: np.ndarray
    speeds: np.ndarray
    directions: tuple

    def __len__(self):
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


TRACK_CLEARANCE = MIN_LINE_CLEARANCE + 0.05


@functools.lru_cache(maxsize=4096)
def mesh_at(layout: AntennaLayout, p: Point2):
    """Memoized :func:`build_mesh`; failures are not cached."""
    return build_mesh(layout, p)


def clamp_to_side(p: Point2, layout: AntennaLayout, clearance: float = TRACK_CLEARANCE) -> Point2:
    """Push ``p`` back into the monitored half-plane, ``clearance`` off the antenna line."""
    side = layout.monitor_half_plane
    d = side.signed_distance(p)
    if d >= clearance:
        return p
    shift = clearance - d
    return Point2(p.x + shift * side.normal.x, p.y + shift * side.normal.y)


def clamp_to_area(p: Point2, area=None) -> Point2:
    """Clip ``p`` into the rectangle ``area = (xmin, ymin, xmax, ymax)``; ``None`` keeps it."""
    if area is None:
        return p
    x0, y0, x1, y1 = area
    return Point2(min(max(p.x, x0), x1), min(max(p.y, y0), y1))


def nearest_buildable(p: Point2, layout: AntennaLayout, clearance: float = TRACK_CLEARANCE,
                      step: float = 0.02, max_shift: float = 5.0) -> Point2:
    """``p`` moved along the half-plane normal until a mesh can be built there.

    Close to the segment between the transmitter and a receiver, the outer
    auxiliary ellipse of that receiver does not exist; positions there are
    pushed away from the antenna line in ``step`` increments.
    """
    p = clamp_to_side(p, layout, clearance)
    n = layout.monitor_half_plane.normal
    for i in range(int(max_shift / step) + 1):
        q = Point2(p.x + i * step * n.x, p.y + i * step * n.y)
        try:
            mesh_at(layout, q)
        except DegenerateMesh:
            continue
        return q
    raise DegenerateMesh(f"no buildable mesh within {max_shift} m of {tuple(p)}")


VELOCITY_MODELS = ("ellipse", "landmark")


def _path_gradient(p: Point2, tx: Point2, focus: Point2) -> np.ndarray:
    """Gradient of ``|p - tx| + |p - focus|`` with respect to ``p``."""
    a = np.array([p.x - tx.x, p.y - tx.y])
    b = np.array([p.x - focus.x, p.y - focus.y])
    return a / np.hypot(*a) + b / np.hypot(*b)


def ellipse_velocity(layout: AntennaLayout, mesh, current: Point2, trends, intervals) -> tuple:
    """Velocity that reaches each selected auxiliary ellipse after its own interval.

    A receiver with trend ``s != 0`` contributes the rate equation
    ``grad(L_aux) . v = enclosure / interval`` (its auxiliary path length
    closes the gap to the reference length); a receiver that stays on its
    reference ellipse contributes ``grad(L_ref) . v = 0``.  The 2x2 system
    is solved in the least-squares sense.
    """
    rows, rhs = [], []
    for r, t in enumerate(trends):
        s = int(t)
        focus = layout.antennas[mesh.aux_antenna[r][s + 1]]
        rows.append(_path_gradient(current, layout.tx, focus))
        if s == 0:
            rhs.append(0.0)
        else:
            dt = float(intervals[r])
            if not dt > 0:
                raise ValueError(f"receiver {r + 1}: arrival interval must be positive, got {dt}")
            rhs.append(mesh.enclosure[r][s + 1] / dt)
    v = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    return float(v[0]), float(v[1])


def advance(layout: AntennaLayout, current: Point2, trends, interval, period: float,
            max_speed: float = math.inf, model: str = "landmark"):
    """Velocity and end-of-period position for one step.

    Trends whose selected auxiliary ellipse does not lie on the expected
    side of the reference ellipse are demoted to ``ON``.  With
    ``model="landmark"`` the target heads for the selected mesh landmark and
    reaches it after the scalar ``interval``; with ``model="ellipse"``,
    ``interval`` holds one arrival interval per receiver and the velocity
    comes from :func:`ellipse_velocity`.  Returns ``(velocity, landmark,
    trends)``; ``landmark`` is ``STATIONARY`` when nothing moves.
    """
    if model not in VELOCITY_MODELS:
        raise ValueError(f"velocity model: expected one of {VELOCITY_MODELS}, got {model!r}")
    current = as_point(current)
    mesh = mesh_at(layout, current)
    trends = tuple(
        Trend(t) if mesh.is_proper(r, int(t)) else Trend.ON for r, t in enumerate(trends)
    )
    lm = landmark_for(mesh, trends)
    if lm is STATIONARY:
        return (0.0, 0.0), lm, trends
    if model == "ellipse":
        vx, vy = ellipse_velocity(layout, mesh, current, trends, interval)
    else:
        if not interval > 0:
            return (0.0, 0.0), lm, trends
        vx, vy = (lm.x - current.x) / interval, (lm.y - current.y) / interval
    sp = math.hypot(vx, vy)
    if sp > max_speed:
        vx, vy = vx * max_speed / sp, vy * max_speed / sp
    return (vx, vy), lm, trends


def recover(steps, initial, layout: AntennaLayout, period: float, intervals=None,
            max_speed: float = math.inf, start: float = 0.0,
            clearance: float = TRACK_CLEARANCE, on_degenerate: str = "project",
            area=None, model: str = "landmark") -> RecoveredTrajectory:
    """Chain per-period displacements into a trajectory.

    Each step's mesh is rebuilt at the position reached so far, the step's
    trends and arrival intervals give a velocity (see :func:`advance`), and
    the target moves with it for one full period.

    Parameters
    ----------
    steps : sequence
        Objects with ``.direction.trends`` (or plain trend pairs).
    intervals : array_like, optional
        Arrival interval per step in seconds, shaped ``(K,)`` for the
        landmark model and ``(K, 2)`` (one per receiver) for the ellipse
        model; defaults to ``step.interval``.
    on_degenerate : {"project", "hold", "raise"}
        What to do where no mesh can be built: move to the nearest position
        that has one (see :func:`nearest_buildable`), keep the position, or
        re-raise with the step index attached.
    model : {"landmark", "ellipse"}
        Velocity model passed to :func:`advance`.
    area : (xmin, ymin, xmax, ymax), optional
        Monitored rectangle; positions are clipped into it before the mesh
        check.
    """
    if on_degenerate not in ("project", "hold", "raise"):
        raise ValueError(f"on_degenerate: unknown policy {on_degenerate!r}")
    cur = as_point(initial)
    pts, times, speeds, dirs = [cur], [start], [0.0], []
    for k, st in enumerate(steps):
        trends = getattr(getattr(st, "direction", st), "trends", st)
        dt = intervals[k] if intervals is not None else st.interval
        try:
            vel, _, trends = advance(layout, cur, trends, dt, period, max_speed, model)
        except DegenerateMesh as exc:
            if on_degenerate == "raise":
                raise DegenerateMesh(f"step {k}: {exc}") from exc
            vel = (0.0, 0.0)
        cur = clamp_to_area(Point2(cur.x + vel[0] * period, cur.y + vel[1] * period), area)
        if on_degenerate == "project":
            cur = nearest_buildable(cur, layout, clearance)
        else:
            cur = clamp_to_side(cur, layout, clearance)
        pts.append(cur)
        times.append(start + (k + 1) * period)
        speeds.append(math.hypot(*vel))
        dirs.append(tuple(int(t) for t in trends))
    return RecoveredTrajectory(np.array(times), np.array(pts, dtype=float), np.array(speeds), tuple(dirs))
