"""Ellipse geometry for the two-receiver mesh model.

Every ellipse here has the transmitter as one focus and a receive antenna as
the other; a point lies on it when its reflection path length
``|p - tx| + |p - rx|`` equals the ellipse's defining length.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

EPS_GEOM = 1e-9
COLLINEAR_TOL = 1e-6
MIN_LINE_CLEARANCE = 0.1
N_ELLIPSE_SAMPLES = 2048
SECTOR_HALF_ANGLE_DEG = 22.5


class GeometryError(ValueError):
    pass


class NoIntersection(GeometryError):
    pass


class DegenerateMesh(GeometryError):
    pass


class LayoutError(GeometryError):
    pass


class Point2(NamedTuple):
    x: float
    y: float

    def __sub__(self, other):
        return Point2(self.x - other[0], self.y - other[1])

    def __add__(self, other):
        return Point2(self.x + other[0], self.y + other[1])

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def as_point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"non-finite coordinates {p!r}")
    return Point2(x, y)


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def path_length(p, tx, rx) -> float:
    """Reflection path length ``|p - tx| + |p - rx|`` in meters."""
    return distance(p, tx) + distance(p, rx)


@dataclass(frozen=True)
class Ellipse:
    focus_tx: Point2
    focus_rx: Point2
    path_length: float

    def __post_init__(self):
        object.__setattr__(self, "focus_tx", as_point(self.focus_tx))
        object.__setattr__(self, "focus_rx", as_point(self.focus_rx))
        if not self.path_length > distance(self.focus_tx, self.focus_rx) + EPS_GEOM:
            raise GeometryError(
                f"path length {self.path_length} does not exceed focal distance "
                f"{distance(self.focus_tx, self.focus_rx)}"
            )

    def residual(self, p) -> float:
        return path_length(p, self.focus_tx, self.focus_rx) - self.path_length

    def point_at(self, theta):
        """Boundary point(s) at eccentric angle ``theta`` (array friendly)."""
        cx = 0.5 * (self.focus_tx.x + self.focus_rx.x)
        cy = 0.5 * (self.focus_tx.y + self.focus_rx.y)
        fd = distance(self.focus_tx, self.focus_rx)
        a = 0.5 * self.path_length
        b = math.sqrt(max(a * a - 0.25 * fd * fd, 0.0))
        if fd > 0:
            ux = (self.focus_rx.x - self.focus_tx.x) / fd
            uy = (self.focus_rx.y - self.focus_tx.y) / fd
        else:
            ux, uy = 1.0, 0.0
        c, s = np.cos(theta), np.sin(theta)
        return cx + a * c * ux - b * s * uy, cy + a * c * uy + b * s * ux


@dataclass(frozen=True)
class HalfPlane:
    """Open half-plane ``{p : (p - origin) . normal > 0}``."""

    origin: Point2
    normal: Point2

    def __post_init__(self):
        n = as_point(self.normal)
        if n.norm() == 0:
            raise GeometryError("half-plane normal must be nonzero")
        object.__setattr__(self, "origin", as_point(self.origin))
        object.__setattr__(self, "normal", Point2(n.x / n.norm(), n.y / n.norm()))

    def signed_distance(self, p):
        return (p[0] - self.origin.x) * self.normal.x + (p[1] - self.origin.y) * self.normal.y

    def contains(self, p) -> bool:
        return self.signed_distance(p) > 0


def intersect_ellipses(e1: Ellipse, e2: Ellipse, side: HalfPlane, near=None) -> Point2:
    """Intersection of two ellipses inside ``side``.

    Samples ``e1`` by eccentric angle, brackets sign changes of the ``e2``
    residual and refines each bracket with Brent's method.  With several
    roots in the half-plane the one closest to ``near`` is returned (closest
    to ``side.origin`` when ``near`` is None).
    """
    theta, xs, ys = _boundary_samples(e1)
    n_full = theta.size
    res = (
        np.hypot(xs - e2.focus_tx.x, ys - e2.focus_tx.y)
        + np.hypot(xs - e2.focus_rx.x, ys - e2.focus_rx.y)
        - e2.path_length
    )
    inside = side.signed_distance((xs, ys)) > 0
    if not inside.any():
        raise NoIntersection("first ellipse does not enter the requested half-plane")
    if np.max(np.abs(res[inside])) < EPS_GEOM:
        raise NoIntersection("ellipses coincide in the requested half-plane")

    nxt = np.roll(np.arange(n_full), -1)
    brackets = np.nonzero((np.sign(res) != np.sign(res[nxt])) & (inside | inside[nxt]))[0]
    roots = []
    for k in brackets:
        lo, hi = theta[k], theta[k] + 2 * math.pi / n_full
        t = lo if res[k] == 0.0 else _refine_root(e1, e2, lo, hi)
        p = Point2(*map(float, e1.point_at(t)))
        if side.contains(p) and abs(e2.residual(p)) < 1e3 * EPS_GEOM:
            roots.append(p)
    if not roots:
        raise NoIntersection("no transversal crossing in the requested half-plane")
    ref = side.origin if near is None else as_point(near)
    return min(roots, key=lambda p: distance(p, ref))


@functools.lru_cache(maxsize=256)
def _boundary_samples(e: Ellipse):
    # Bracketing grid only; roots are refined to full precision afterwards.
    theta = np.linspace(0.0, 2 * math.pi, 2 * N_ELLIPSE_SAMPLES, endpoint=False)
    xs, ys = e.point_at(theta)
    return theta, xs, ys


def _refine_root(e1: Ellipse, e2: Ellipse, lo: float, hi: float) -> float:
    def f(t):
        return e2.residual(e1.point_at(t))

    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


class Trend(enum.IntEnum):
    """Per-receiver walking trend relative to its reference ellipse."""

    INWARD = -1
    ON = 0
    OUTWARD = 1


class _Stationary:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "STATIONARY"

    def __reduce__(self):
        return (_Stationary, ())


STATIONARY = _Stationary()


@dataclass(frozen=True)
class AntennaLayout:
    """One transmitter and two three-antenna receivers on a common line.

    ``receivers[r]`` is ordered ``(aux_a, reference, aux_b)``.
    """

    tx: Point2
    receivers: tuple
    monitor_side: int = 1
    spacing: float = 0.20

    def __post_init__(self):
        object.__setattr__(self, "tx", as_point(self.tx))
        recs = tuple(tuple(as_point(p) for p in rec) for rec in self.receivers)
        if len(recs) != 2 or any(len(r) != 3 for r in recs):
            raise LayoutError("receivers: need two receivers with three antennas each")
        object.__setattr__(self, "receivers", recs)
        if self.monitor_side not in (1, -1):
            raise LayoutError("monitor_side: must be +1 or -1")
        if not self.spacing > 0:
            raise LayoutError("spacing: must be positive")
        self._validate()

    def _validate(self):
        pts = np.array([self.tx, *self.antennas])
        d = pts - pts.mean(axis=0)
        _, s, vt = np.linalg.svd(d)
        direction = vt[0]
        off = np.abs(d @ np.array([-direction[1], direction[0]]))
        if off.max() > COLLINEAR_TOL:
            worst = int(np.argmax(off))
            name = "tx" if worst == 0 else f"receivers[{(worst - 1) // 3}][{(worst - 1) % 3}]"
            raise LayoutError(f"{name}: antenna is {off.max():.3g} m off the common line")
        for r, rec in enumerate(self.receivers):
            for i in range(2):
                gap = distance(rec[i], rec[i + 1])
                if abs(gap - self.spacing) > COLLINEAR_TOL:
                    raise LayoutError(
                        f"receivers[{r}]: antenna spacing {gap:.6g} m != configured {self.spacing} m"
                    )

    @classmethod
    def symmetric(cls, ref_distance: float, spacing: float = 0.20, monitor_side: int = 1):
        """Transmitter at the origin, receivers mirrored on the x axis.

        Receiver 1 sits at ``x = -ref_distance`` and receiver 2 at
        ``x = +ref_distance``; ``aux_a`` is the antenna nearer the transmitter.
        """
        R, s = ref_distance, spacing
        return cls(
            tx=Point2(0.0, 0.0),
            receivers=(
                (Point2(-R + s, 0.0), Point2(-R, 0.0), Point2(-R - s, 0.0)),
                (Point2(R - s, 0.0), Point2(R, 0.0), Point2(R + s, 0.0)),
            ),
            monitor_side=monitor_side,
            spacing=spacing,
        )

    @property
    def antennas(self) -> tuple:
        """All six receive antennas, receiver-major."""
        return self.receivers[0] + self.receivers[1]

    def reference_index(self, r: int) -> int:
        return 3 * r + 1

    @property
    def line_direction(self) -> Point2:
        a, b = self.receivers[0][0], self.receivers[1][2]
        d = b - a
        return Point2(d.x / d.norm(), d.y / d.norm())

    @property
    def monitor_half_plane(self) -> HalfPlane:
        u = self.line_direction
        normal = Point2(-u.y * self.monitor_side, u.x * self.monitor_side)
        return HalfPlane(self.tx, normal)

    def los_length(self, antenna: int) -> float:
        return distance(self.tx, self.antennas[antenna])

    def mirrored(self) -> "AntennaLayout":
        """Mirror across the perpendicular bisector of the two reference antennas.

        Receivers swap roles; antenna order within each receiver is kept so
        that ``aux_a`` stays the antenna nearer the transmitter.
        """
        u = self.line_direction
        mid = Point2(*(0.5 * (np.array(self.receivers[0][1]) + np.array(self.receivers[1][1]))))

        def mirror(p):
            t = (p.x - mid.x) * u.x + (p.y - mid.y) * u.y
            return Point2(p.x - 2 * t * u.x, p.y - 2 * t * u.y)

        return AntennaLayout(
            tx=mirror(self.tx),
            receivers=(
                tuple(mirror(p) for p in self.receivers[1]),
                tuple(mirror(p) for p in self.receivers[0]),
            ),
            monitor_side=self.monitor_side,
            spacing=self.spacing,
        )


@dataclass(frozen=True)
class MeshModel:
    """3x3 landmark grid around ``current``.

    ``landmarks[s1 + 1, s2 + 1]`` is the intersection of receiver 1's
    ellipse ``s1`` with receiver 2's ellipse ``s2``; ``s = 0`` is the
    reference ellipse, ``+1`` the auxiliary ellipse enclosing ``current``.
    ``aux_antenna[r][s + 1]`` is the global antenna index whose focus
    defines ellipse ``s`` of receiver ``r``; ``enclosure[r][s + 1]`` is
    ``ref_len - L_aux`` at ``current`` (positive when the ellipse encloses it).
    """

    landmarks: np.ndarray
    reference_lengths: tuple
    current: Point2
    aux_antenna: tuple
    enclosure: tuple

    def landmark(self, s1: int, s2: int) -> Point2:
        return Point2(*map(float, self.landmarks[s1 + 1, s2 + 1]))

    def ellipse(self, layout: AntennaLayout, r: int, s: int) -> Ellipse:
        return Ellipse(layout.tx, layout.antennas[self.aux_antenna[r][s + 1]], self.reference_lengths[r])

    def is_proper(self, r: int, s: int) -> bool:
        """True when ellipse ``s`` of receiver ``r`` really lies on side ``s``."""
        return s == 0 or np.sign(self.enclosure[r][s + 1]) == s


def build_mesh(layout: AntennaLayout, current) -> MeshModel:
    current = as_point(current)
    side = layout.monitor_half_plane
    clearance = side.signed_distance(current)
    if clearance < MIN_LINE_CLEARANCE:
        raise DegenerateMesh(
            f"position {tuple(current)} is {clearance:.3g} m from the antenna line "
            f"(minimum {MIN_LINE_CLEARANCE} m on the monitored side)"
        )
    ref_lengths = []
    aux_index = []
    enclosure = []
    for r, rec in enumerate(layout.receivers):
        ref_len = path_length(current, layout.tx, rec[1])
        gaps = [ref_len - path_length(current, layout.tx, rec[i]) for i in (0, 2)]
        # Larger gap -> encloses current more -> outward ellipse; ties keep label order.
        if gaps[1] > gaps[0]:
            inward, outward = 0, 2
        else:
            inward, outward = 2, 0
        if gaps[0] == gaps[1]:
            inward, outward = 0, 2
        base = 3 * r
        ref_lengths.append(ref_len)
        aux_index.append((base + inward, base + 1, base + outward))
        enclosure.append((gaps[inward // 2], 0.0, gaps[outward // 2]))
    for r in range(2):
        for a in aux_index[r]:
            if ref_lengths[r] <= distance(layout.tx, layout.antennas[a]) + EPS_GEOM:
                raise DegenerateMesh(
                    f"position {tuple(current)}: reference length of receiver {r + 1} does not "
                    f"exceed the focal distance of antenna {a}"
                )
    landmarks = np.empty((3, 3, 2))
    for s1 in (-1, 0, 1):
        e1 = Ellipse(layout.tx, layout.antennas[aux_index[0][s1 + 1]], ref_lengths[0])
        for s2 in (-1, 0, 1):
            if s1 == 0 and s2 == 0:
                landmarks[1, 1] = current
                continue
            e2 = Ellipse(layout.tx, layout.antennas[aux_index[1][s2 + 1]], ref_lengths[1])
            try:
                landmarks[s1 + 1, s2 + 1] = intersect_ellipses(e1, e2, side, near=current)
            except NoIntersection as exc:
                raise DegenerateMesh(f"landmark ({s1:+d},{s2:+d}) at {tuple(current)}: {exc}") from exc
    return MeshModel(
        landmarks=landmarks,
        reference_lengths=tuple(ref_lengths),
        current=current,
        aux_antenna=tuple(aux_index),
        enclosure=tuple(enclosure),
    )


def landmark_for(mesh: MeshModel, state) -> Point2 | _Stationary:
    """Landmark selected by a pair of receiver trends, or ``STATIONARY``."""
    t1, t2 = (Trend(t) for t in _trends(state))
    if t1 == Trend.ON and t2 == Trend.ON:
        return STATIONARY
    return mesh.landmark(int(t1), int(t2))


def _trends(state) -> Sequence:
    return getattr(state, "trends", state)


def direction_error_bound(mesh: MeshModel | None = None) -> tuple:
    """Worst-case heading error (degrees) and relative speed error of the mesh."""
    ratio = 1.0 / math.cos(math.radians(SECTOR_HALF_ANGLE_DEG)) - 1.0
    return SECTOR_HALF_ANGLE_DEG, ratio
