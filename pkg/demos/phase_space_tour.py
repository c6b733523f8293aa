"""A tour of the mean-field phase space of the driven pendulum.

Locates the main elliptic island and the two period-3 cycles that make up
the six-island chain, traces the outermost invariant curve around each,
and reports the enclosed actions together with the number of quantum
states each island can host at a few particle numbers.
"""

from __future__ import annotations

import math

import numpy as np

from dimerlab.meanfield import (
    MeanFieldParams,
    chain_boundaries,
    find_periodic_orbit,
    orbit_points,
    outermost_curve,
    scan_periodic_orbits,
)


def capacity(action: float, n_particles: int) -> int:
    # tubes with (n + 1/2) 2 pi hbar_eff below the island action
    return max(0, int(action / (2 * math.pi * 2.0 / n_particles) - 0.5) + 1)


def main():
    mf = MeanFieldParams(alpha=0.92, drive_ratio=0.4, freq_ratio=1.9)
    main_orbit = find_periodic_orbit(mf, (0.5, 0.0), 1)
    print(f"main island center   p = {main_orbit.point.p:+.5f}, phi = {main_orbit.point.phi:+.1e}, "
          f"rotation angle {main_orbit.stability_angle:.4f}")
    boundary = outermost_curve(mf, main_orbit.point, 1)
    print(f"  boundary action {boundary.enclosed_action:.4f}")

    grid_p = np.linspace(-0.95, 0.95, 20)
    grid_phi = np.linspace(-math.pi, math.pi, 20, endpoint=False)
    cycles = scan_periodic_orbits(mf, 3, grid_p, grid_phi)
    print(f"\nelliptic period-3 cycles found: {len(cycles)}")
    for orb in cycles:
        pts = orbit_points(mf, orb.point, 3)
        start = pts[int(np.argmin(np.abs(pts[:, 0])))]
        actions = [c.enclosed_action for c in chain_boundaries(mf, start, 3)]
        members = ", ".join(f"({p:+.3f}, {phi:+.3f})" for p, phi in pts)
        print(f"  cycle {members}")
        print(f"    island actions {', '.join(f'{a:.4f}' for a in actions)}")

    print("\nstates per island (main / one chain island)")
    chain_action = chain_boundaries(mf, (-0.497, 0.0), 3)[0].enclosed_action
    for n in (500, 2000, 10000):
        print(f"  N = {n:5d}: {capacity(boundary.enclosed_action, n):5d} / {capacity(chain_action, n)}")


if __name__ == "__main__":
    main()
