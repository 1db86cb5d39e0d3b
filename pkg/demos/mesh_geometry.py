"""Landmark meshes around a few positions in a 2.1 m layout.

Each mesh is the 3x3 grid of ellipse intersections the tracker steps
between.  The printout shows how the eight headings spread unevenly once
the target moves off the symmetry axis.
"""
import numpy as np

from wivelo.geometry import AntennaLayout, build_mesh

layout = AntennaLayout.symmetric(2.1)
print("antennas:", [tuple(round(c, 3) for c in a) for a in layout.antennas])

for pos in [(0.0, 1.8), (0.5, 2.0), (-0.8, 1.5), (1.0, 2.5)]:
    mesh = build_mesh(layout, pos)
    offsets = mesh.landmarks.reshape(-1, 2) - np.asarray(pos)
    offsets = np.delete(offsets, 4, axis=0)  # the centre cell is the position itself
    heading = np.sort(np.degrees(np.arctan2(offsets[:, 1], offsets[:, 0])) % 360)
    gaps = np.diff(np.r_[heading, heading[0] + 360])
    spacing = np.linalg.norm(offsets, axis=1)
    print(f"\nposition {pos}")
    print("  headings (deg):", np.round(heading, 1))
    print(f"  largest heading gap {gaps.max():.1f} deg, spacing {spacing.min()*100:.1f}-{spacing.max()*100:.1f} cm")
