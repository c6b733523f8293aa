"""Subharmonic clocking of a coherent state placed on the period-3 island chain.

A coherent state centered on one island of the six-island chain hops
island to island once per drive period and returns after three periods.
The script prints the return probability at integer periods; multiples
of three should stand out.

    python demos/period_three_clocking.py --particles 1000
"""

from __future__ import annotations

import argparse

import numpy as np

from dimerlab import DimerParams, coherent_state, find_periodic_orbit, return_probability_series


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--particles", type=int, default=1000)
    parser.add_argument("--periods", type=int, default=15)
    args = parser.parse_args()

    params = DimerParams.from_ratios(args.particles, alpha=0.92, drive_ratio=0.4, freq_ratio=1.9)
    orbit = find_periodic_orbit(params.meanfield(), (-0.497, 0.0), k=3)
    print(f"period-3 point of the mean-field map: p = {orbit.point.p:.5f}, phi = {orbit.point.phi:.1e}")

    psi0 = coherent_state(args.particles, orbit.point)
    times, prob = return_probability_series(params, psi0, args.periods, samples_per_period=1)
    print(f"\nN = {args.particles}, hbar_eff = {params.hbar_eff:.2e}")
    print(" t/T   P_r")
    for t, p in zip(times / params.period, prob):
        mark = "  <- 3T multiple" if round(t) % 3 == 0 and t > 0 else ""
        print(f"{t:4.0f}  {p:.3f}{mark}")
    on = prob[3::3]
    off = np.delete(prob[1:], np.arange(2, prob.size - 1, 3))
    print(f"\nmean at 3kT {on.mean():.3f}, mean elsewhere {off.mean():.3f}")


if __name__ == "__main__":
    main()
