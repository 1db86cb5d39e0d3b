"""Simulate an L-shaped walk, track it and score the result.

Runs in a few seconds.  The per-window table shows the direction trend
of each reference receiver, the recovered speed and the arrival intervals.
"""
import numpy as np

from wivelo.channel_sim import Scene, make_path, synthesize
from wivelo.evaluation import trajectory_error
from wivelo.geometry import AntennaLayout
from wivelo.pipeline import TrackerConfig, run

layout = AntennaLayout.symmetric(2.1)
area = (-1.8, 0.0, 1.8, 3.6)
path = make_path("L", (-1.0, 1.2, 1.0, 3.0), speed=1.0, layout=layout).with_pauses(0.5, 0.5)
trace = synthesize(Scene(layout, noise_sigma=0.05), path, seed=7)
print(f"{trace.n_packets} packets over {path.times[-1] - path.times[0]:.2f} s (walk plus pauses)")

result = run(trace, TrackerConfig(layout, path.points[0], area=area))
traj = result.trajectory

print(f"\n{'k':>3} {'status':>15} {'speed':>6}  intervals (ms)")
for k, (status, speed, dt) in enumerate(zip(result.statuses, traj.speeds[1:], result.intervals)):
    print(f"{k:>3} {status:>15} {speed:6.2f}  {dt[0]*1e3:5.0f} {dt[1]*1e3:5.0f}")

err = trajectory_error(traj.points, path.points)
print(f"\nDTW trajectory error: {err:.3f} m")
print("start", np.round(traj.points[0], 2), "end", np.round(traj.points[-1], 2),
      "truth end", np.round(path.points[-1], 2))
