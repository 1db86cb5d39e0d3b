"""Synthetic evaluation corpus: 3 scenes x 3 users x 6 path kinds x 4 instances.

Scenes mirror three room sizes; each monitored area covers one side of the
antenna line.  A "user" fixes a base walking speed and the scatterer
layout seed; instances jitter the walking box and speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel_sim import CsiTrace, GroundTruthPath, Scene, make_path, synthesize
from .evaluation import trajectory_error
from .geometry import AntennaLayout
from .pipeline import TrackerConfig, TrackingError, run

DATASET_KINDS = ("straight", "L", "U", "S", "M", "Z")
USER_SPEEDS = (0.8, 1.0, 1.2)
PAUSE = 1.0


@dataclass(frozen=True)
class SceneSpec:
    name: str
    ref_distance: float
    area: tuple
    scatterers: int = 5


SCENES = (
    SceneSpec("classroom", 2.1, (-1.8, 0.0, 1.8, 3.6)),
    SceneSpec("corridor", 2.4, (-2.4, 0.0, 2.4, 4.2)),
    SceneSpec("office", 1.0, (-1.0, 0.0, 1.0, 3.0), scatterers=8),
)


def blind_depth(layout: AntennaLayout) -> float:
    """Depth of the band next to the antenna line where the mesh cannot be built.

    It is the semi-minor axis of the ellipse with foci at the transmitter
    and a reference antenna whose path length equals the distance to the
    outer auxiliary antenna of that receiver.
    """
    depth = 0.0
    for r in range(2):
        ref = layout.los_length(layout.reference_index(r))
        outer = max(layout.los_length(3 * r), layout.los_length(3 * r + 2))
        depth = max(depth, 0.5 * math.sqrt(outer * outer - ref * ref))
    return depth


@dataclass(frozen=True)
class Instance:
    scene: SceneSpec
    user: int
    kind: str
    index: int
    seed: int

    @property
    def labels(self) -> dict:
        return {"scene": self.scene.name, "user": str(self.user), "kind": self.kind,
                "instance": str(self.index)}

    @property
    def name(self) -> str:
        return f"{self.scene.name}-u{self.user}-{self.kind}-{self.index}"

    def layout(self) -> AntennaLayout:
        return AntennaLayout.symmetric(self.scene.ref_distance)

    def walk_box(self) -> tuple:
        rng = np.random.default_rng(self.seed)
        x0, _, x1, y1 = self.scene.area
        ymin = blind_depth(self.layout()) + 0.25
        xm, w = 0.5 * (x0 + x1), (x1 - x0) - 0.6
        h = (y1 - 0.3) - ymin
        sw, sh = rng.uniform(0.75, 1.0, 2)
        cx = xm + rng.uniform(-0.5, 0.5) * (1 - sw) * w
        cy = ymin + 0.5 * h + rng.uniform(-0.5, 0.5) * (1 - sh) * h
        return (cx - 0.5 * sw * w, cy - 0.5 * sh * h, cx + 0.5 * sw * w, cy + 0.5 * sh * h)

    def speed(self) -> float:
        rng = np.random.default_rng(self.seed + 1)
        return USER_SPEEDS[self.user] * rng.uniform(0.9, 1.1)

    def path(self) -> GroundTruthPath:
        return make_path(self.kind, self.walk_box(), self.speed(), self.layout()).with_pauses(PAUSE, PAUSE)

    def scene_model(self, noise_sigma: float = 0.0) -> Scene:
        return Scene.with_default_scatterers(self.layout(), seed=1000 * self.user + 7,
                                             count=self.scene.scatterers, noise_sigma=noise_sigma)

    def simulate(self, noise_sigma: float = 0.0) -> CsiTrace:
        return synthesize(self.scene_model(noise_sigma), self.path(), seed=self.seed)

    def tracker_config(self, **overrides) -> TrackerConfig:
        return TrackerConfig(self.layout(), self.path().points[0], area=self.scene.area, **overrides)


def instances(seed: int = 0, scenes=SCENES, users: int = 3, kinds=DATASET_KINDS, per_kind: int = 4):
    """The corpus in a fixed order; ``seed`` shifts every instance seed."""
    out = []
    for s, scene in enumerate(scenes):
        for u in range(users):
            for k, kind in enumerate(kinds):
                for i in range(per_kind):
                    key = ((s * users + u) * len(kinds) + k) * per_kind + i
                    out.append(Instance(scene, u, kind, i, seed * 100_003 + 17 * key + 1))
    return out


@dataclass(frozen=True)
class InstanceResult:
    instance: Instance
    error: float
    failed: bool = False


def evaluate(inst: Instance, noise_sigma: float = 0.0, **overrides) -> InstanceResult:
    """Simulate, track and score one instance.

    A tracker failure is scored as the DTW error of staying at the start.
    """
    path = inst.path()
    truth = np.asarray(path.points)
    try:
        res = run(inst.simulate(noise_sigma), inst.tracker_config(**overrides))
    except TrackingError:
        return InstanceResult(inst, trajectory_error(truth[:1], truth), failed=True)
    return InstanceResult(inst, trajectory_error(res.trajectory.points, truth))
